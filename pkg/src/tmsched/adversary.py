"""Congestion-bounded transaction generators and an exact admissibility check.

An adversary of type (rho, b) may place, on every object (and, in the
queue-based model, on every processor), at most ``rho * t + b`` units of
congestion over any window of ``t`` consecutive rounds.  ``rho`` is kept as a
:class:`fractions.Fraction` and every comparison is done on integers scaled
by its denominator.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .combinatorics import build_set_family
from .model import MODELS, QUEUE_BASED, QUEUE_FREE, InvalidInput, TxType

Generation = tuple[TxType, Optional[int]]


@dataclass(frozen=True)
class AdversaryParams:
    rho: Fraction
    b: int
    model: str = QUEUE_FREE

    def __post_init__(self) -> None:
        rho = Fraction(self.rho)
        object.__setattr__(self, "rho", rho)
        if not 0 < rho <= 1:
            raise InvalidInput(f"rho must lie in (0, 1]; got {rho}")
        if self.b < 1 or int(self.b) != self.b:
            raise InvalidInput(f"b must be a positive integer; got {self.b}")
        if self.model not in MODELS:
            raise InvalidInput(f"unknown autonomy model {self.model!r}")

    @property
    def queue_based(self) -> bool:
        return self.model == QUEUE_BASED


@dataclass(frozen=True)
class Violation:
    entity: tuple[str, int]  # ("object", i) or ("processor", p)
    window: tuple[int, int]  # first and last round, inclusive
    congestion: int

    def __str__(self) -> str:
        kind, idx = self.entity
        return f"{kind} {idx}: congestion {self.congestion} over rounds {self.window[0]}..{self.window[1]}"


def congestion_series(generations: Sequence[Sequence[Generation]], queue_based: bool) -> dict[tuple[str, int], list[int]]:
    """Per-entity congestion, one entry per round."""
    T = len(generations)
    series: dict[tuple[str, int], list[int]] = {}
    for r, gens in enumerate(generations):
        for ttype, owner in gens:
            for o in ttype.objects:
                series.setdefault(("object", o), [0] * T)[r] += 1
            if queue_based:
                if owner is None:
                    raise InvalidInput(f"round {r + 1}: queue-based generation without an owner")
                series.setdefault(("processor", owner), [0] * T)[r] += 1
    return series


def _entity_order(e: tuple[str, int]) -> tuple[int, int]:
    return (0 if e[0] == "object" else 1, e[1])


def verify_admissibility(generations: Sequence[Sequence[Generation]], params: AdversaryParams) -> Optional[Violation]:
    """Return None when admissible, otherwise the first violation.

    "First" means the smallest window end; among entities violating at that
    end the object (then processor) with the smallest index; its window start
    is the one with the largest excess, earliest on ties.

    For each entity the check keeps the running minimum of
    ``q * prefix(s) - p * s`` so every window ending at ``e`` is tested at once.
    """
    p, q = params.rho.numerator, params.rho.denominator
    qb = q * params.b
    series = congestion_series(generations, params.queue_based)
    best: Optional[Violation] = None
    for ent in sorted(series, key=_entity_order):
        counts = series[ent]
        low, low_at = 0, 0  # min over s of q*S(s) - p*s, and its earliest argmin
        acc = 0
        for e, c in enumerate(counts, 1):
            acc += c
            val = q * acc - p * e
            if val - low > qb:
                if best is None or e < best.window[1]:
                    prefix_at_start = sum(counts[:low_at])
                    best = Violation(ent, (low_at + 1, e), acc - prefix_at_start)
                break
            if val < low:
                low, low_at = val, e
    return best


# Token-bucket generator ---------------------------------------------------


@dataclass(frozen=True)
class WorkloadShape:
    """How candidate transactions are drawn.

    kind:
      ``uniform``  weight uniform in [1, k] over objects that currently hold a token;
      ``singleton`` weight-1 types over objects that hold a token;
      ``fixed``    cycle through ``types`` in order.
    attempts: candidates drawn per round (default m).
    owner_policy: ``least-loaded`` (default) or ``round-robin``; queue-based only.
    """

    kind: str = "uniform"
    k: Optional[int] = None
    attempts: Optional[int] = None
    types: tuple[TxType, ...] = ()
    owner_policy: str = "least-loaded"


class TokenBucketGenerator:
    """Emits only what every touched bucket can pay for, so every prefix is admissible.

    Each entity's bucket fills by rho per round, holds at most rho + b and
    starts full; an emitted transaction costs one unit at each of its objects
    (and at its owner).  Token amounts are integers scaled by rho's denominator.
    """

    def __init__(self, params: AdversaryParams, m: int, shape: WorkloadShape = WorkloadShape(),
                 seed: int = 0, n: int = 1) -> None:
        if shape.kind not in ("uniform", "singleton", "fixed"):
            raise InvalidInput(f"unknown shape kind {shape.kind!r}")
        if shape.kind == "fixed":
            if not shape.types:
                raise InvalidInput("fixed shape needs at least one type")
            for t in shape.types:
                if t.mask == 0 or t.mask >> m:
                    raise InvalidInput(f"shape type {t!r} references objects outside [0, {m})")
        if shape.owner_policy not in ("least-loaded", "round-robin"):
            raise InvalidInput(f"unknown owner policy {shape.owner_policy!r}")
        self.params = params
        self.m = m
        self.n = n if params.queue_based else 0
        self.shape = shape
        self.k = shape.k or m
        self.attempts = shape.attempts or m
        self.rng = random.Random(seed)
        p, q = params.rho.numerator, params.rho.denominator
        self._fill, self._cost = p, q
        self._cap = p + q * params.b
        self._obj = [self._cap] * m
        self._proc = [self._cap] * self.n
        self._load = [0] * self.n
        self._cursor = 0
        self._rr = 0

    def _pick_owner(self) -> Optional[int]:
        cost = self._cost
        if self.shape.owner_policy == "round-robin":
            for i in range(self.n):
                p = (self._rr + i) % self.n
                if self._proc[p] >= cost:
                    self._rr = p + 1
                    return p
            return None
        best = None
        for p in range(self.n):
            if self._proc[p] >= cost and (best is None or self._load[p] < self._load[best]):
                best = p
        return best

    def _candidate(self, ready: list[int]) -> Optional[TxType]:
        kind = self.shape.kind
        if kind == "fixed":
            t = self.shape.types[self._cursor % len(self.shape.types)]
            self._cursor += 1
            return t
        if not ready:
            return None
        if kind == "singleton":
            return TxType(1 << self.rng.choice(ready))
        w = self.rng.randint(1, min(self.k, len(ready)))
        mask = 0
        for o in self.rng.sample(ready, w):
            mask |= 1 << o
        return TxType(mask)

    def generate(self, round_no: int) -> list[Generation]:
        fill, cap, cost = self._fill, self._cap, self._cost
        obj = self._obj
        for i in range(self.m):
            obj[i] = min(cap, obj[i] + fill)
        for i in range(self.n):
            self._proc[i] = min(cap, self._proc[i] + fill)
        out: list[Generation] = []
        for _ in range(self.attempts):
            ready = [i for i in range(self.m) if obj[i] >= cost]
            if not ready:
                break
            t = self._candidate(ready)
            if t is None or any(obj[o] < cost for o in t.objects):
                continue
            owner = None
            if self.n:
                owner = self._pick_owner()
                if owner is None:
                    break
                self._proc[owner] -= cost
                self._load[owner] += 1
            for o in t.objects:
                obj[o] -= cost
            out.append((t, owner))
        return out


def token_bucket_generator(params: AdversaryParams, m: int, shape: WorkloadShape = WorkloadShape(),
                           seed: int = 0, n: int = 1) -> TokenBucketGenerator:
    return TokenBucketGenerator(params, m, shape, seed, n)


# Lower-bound generator ----------------------------------------------------


def lower_bound_family_size(m: int, k: int) -> int:
    """k when k(k+1)/2 <= m, else the largest w with w(w+1)/2 <= m."""
    if k * (k + 1) // 2 <= m:
        return k
    w = 1
    while (w + 1) * (w + 2) // 2 <= m:
        w += 1
    return w


class LowerBoundGenerator:
    """Full-power cyclic emission of pairwise-colliding types.

    Types T_1..T_{w+1} come from the set family of size w, element j mapped to
    object j-1.  Round 1 emits exactly L_0..L_{b-1}; every later round emits
    the longest prefix of the remaining cyclic sequence keeping every object
    within its (rho, b) budget over all windows ending now.
    """

    def __init__(self, params: AdversaryParams, m: int, k: int) -> None:
        if params.queue_based:
            raise InvalidInput("the lower-bound adversary is queue-free")
        self.params = params
        self.w = lower_bound_family_size(m, k)
        family = build_set_family(self.w)
        self.types = tuple(TxType.of(*(j - 1 for j in sorted(a))) for a in family.sets)
        self._next = 0
        p, q = params.rho.numerator, params.rho.denominator
        self._p, self._q, self._qb = p, q, q * params.b
        s = self.w * (self.w + 1) // 2
        self._acc = [0] * s  # cumulative congestion per used object
        self._low = [0] * s  # min over s' < current round of q*S(s') - p*s'

    def generate(self, round_no: int) -> list[Generation]:
        p, q, qb = self._p, self._q, self._qb
        acc, low = self._acc, self._low
        prev = round_no - 1
        for o in range(len(acc)):
            v = q * acc[o] - p * prev
            if v < low[o]:
                low[o] = v
        out: list[Generation] = []
        while True:
            if round_no == 1 and len(out) == self.params.b:
                break
            t = self.types[self._next % len(self.types)]
            objs = t.objects
            if any(q * (acc[o] + 1) - p * round_no - low[o] > qb for o in objs):
                break
            for o in objs:
                acc[o] += 1
            out.append((t, None))
            self._next += 1
        return out


def lower_bound_generator(params: AdversaryParams, m: int, k: int) -> LowerBoundGenerator:
    return LowerBoundGenerator(params, m, k)


# Replay ---------------------------------------------------------------------


class ReplayGenerator:
    def __init__(self, generations: Sequence[Sequence[Generation]]) -> None:
        self._gens = generations

    def generate(self, round_no: int) -> list[Generation]:
        if round_no <= len(self._gens):
            return list(self._gens[round_no - 1])
        return []


class StreamFormatError(ValueError):
    def __init__(self, line: int, msg: str) -> None:
        super().__init__(f"line {line}: {msg}")
        self.line = line


def dump_stream(generations: Sequence[Sequence[Generation]], m: int) -> str:
    """CSV with header ``round,owner,type``; owner is blank in the queue-free model."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "owner", "type"])
    for r, gens in enumerate(generations, 1):
        for ttype, owner in gens:
            w.writerow([r, "" if owner is None else owner, ttype.bits(m)])
    return buf.getvalue()


def load_stream(text: str, horizon: Optional[int] = None) -> tuple[list[list[Generation]], int]:
    """Parse a generation stream; returns (per-round generations, m)."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "round,owner,type":
        raise StreamFormatError(1, "expected header 'round,owner,type'")
    rows: list[tuple[int, Optional[int], TxType]] = []
    m: Optional[int] = None
    last = 0
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise StreamFormatError(lineno, f"expected 3 fields, found {len(parts)}")
        r_s, owner_s, bits = (p.strip() for p in parts)
        try:
            r = int(r_s)
            owner = int(owner_s) if owner_s else None
        except ValueError:
            raise StreamFormatError(lineno, "round and owner must be integers") from None
        if r < 1 or r < last:
            raise StreamFormatError(lineno, f"round {r} out of order")
        if not bits or set(bits) - {"0", "1"}:
            raise StreamFormatError(lineno, f"bad type bitstring {bits!r}")
        if m is None:
            m = len(bits)
        elif len(bits) != m:
            raise StreamFormatError(lineno, f"bitstring length {len(bits)} differs from {m}")
        t = TxType.from_bits(bits)
        if t.mask == 0:
            raise StreamFormatError(lineno, "empty type")
        last = r
        rows.append((r, owner, t))
    T = max(horizon or 0, last)
    gens: list[list[Generation]] = [[] for _ in range(T)]
    for r, owner, t in rows:
        gens[r - 1].append((t, owner))
    return gens, (m or 1)
