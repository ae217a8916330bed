"""Core vocabulary: objects, transaction types, transactions, system configuration.

Types are stored as integer bitsets over the object indices 0..m-1, so a
collision test is a single ``&``.  The textual form of a type is an m-character
bitstring whose first character stands for object 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

QUEUE_FREE = "queue-free"
QUEUE_BASED = "queue-based"
MODELS = (QUEUE_FREE, QUEUE_BASED)


class InvalidInput(ValueError):
    """Raised when an operation receives arguments violating its preconditions."""


@dataclass(frozen=True, slots=True, order=True)
class TxType:
    """The set of objects a transaction may access, as a bitmask."""

    mask: int

    def __post_init__(self) -> None:
        if self.mask < 0:
            raise InvalidInput("type mask must be nonnegative")

    @classmethod
    def of(cls, *objects: int) -> "TxType":
        mask = 0
        for o in objects:
            if o < 0:
                raise InvalidInput(f"object index {o} is negative")
            mask |= 1 << o
        return cls(mask)

    @classmethod
    def from_objects(cls, objects: Iterable[int]) -> "TxType":
        return cls.of(*objects)

    @classmethod
    def from_bits(cls, bits: str) -> "TxType":
        if not bits or set(bits) - {"0", "1"}:
            raise InvalidInput(f"not a bitstring: {bits!r}")
        return cls(sum(1 << i for i, c in enumerate(bits) if c == "1"))

    @property
    def objects(self) -> frozenset[int]:
        out = []
        mask, i = self.mask, 0
        while mask:
            if mask & 1:
                out.append(i)
            mask >>= 1
            i += 1
        return frozenset(out)

    def bits(self, m: int) -> str:
        if self.mask >> m:
            raise InvalidInput(f"type uses objects outside [0, {m})")
        return "".join("1" if self.mask >> i & 1 else "0" for i in range(m))

    def __contains__(self, o: int) -> bool:
        return bool(self.mask >> o & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __repr__(self) -> str:
        return "TxType({%s})" % ",".join(f"o{o}" for o in sorted(self.objects))


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    ttype: TxType
    gen_round: int
    owner: Optional[int] = None

    @property
    def mask(self) -> int:
        return self.ttype.mask


@dataclass(frozen=True)
class SystemConfig:
    m: int
    k: int
    horizon: int
    n: int = 1
    seed: int = 0
    model: str = QUEUE_FREE

    def __post_init__(self) -> None:
        if self.m < 1:
            raise InvalidInput("m must be at least 1")
        if not 1 <= self.k <= self.m:
            raise InvalidInput(f"k must lie in [1, m]; got k={self.k}, m={self.m}")
        if self.n < 1:
            raise InvalidInput("n must be at least 1")
        if self.horizon < 1:
            raise InvalidInput("horizon must be at least 1")
        if self.model not in MODELS:
            raise InvalidInput(f"unknown autonomy model {self.model!r}")

    @property
    def queue_based(self) -> bool:
        return self.model == QUEUE_BASED

    def check_type(self, t: TxType) -> None:
        if t.mask == 0:
            raise InvalidInput("a transaction type must use at least one object")
        if t.mask >> self.m:
            raise InvalidInput(f"{t!r} uses objects outside [0, {self.m})")
        if len(t) > self.k:
            raise InvalidInput(f"{t!r} has weight {len(t)} > k={self.k}")


def weight(t: TxType) -> int:
    return len(t)


def collides(a: TxType, b: TxType) -> bool:
    return bool(a.mask & b.mask)


def conflict_free(types: Iterable[TxType]) -> bool:
    """True iff no two members of ``types`` share an object.

    A type listed twice collides with itself, matching the behaviour of two
    distinct transactions of the same type.
    """
    seen = 0
    for t in types:
        if seen & t.mask:
            return False
        seen |= t.mask
    return True
