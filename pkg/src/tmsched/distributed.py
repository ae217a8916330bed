"""Queue-based distributed scheduler with an abort-feedback bit channel.

Time is cut into epochs of three phases of ``L = (n-1)^2 n^2 m^2`` rounds:

* Phase 1: processors holding a large active block gossip the active types
  they know about.  A bit travels from sender ``s`` to receiver ``r`` through
  object ``o``: the receiver always invokes a transaction using ``o``; the
  sender invokes one only to send a 1, which makes both abort.
* Phase 2: every active processor runs the same greedy selection over the
  types it learned; selected processors drain their active type.
* Phase 3: each processor owns an exclusive slot of ``L/n`` rounds in which
  it runs its oldest transaction that never joined a large block.

Processors only read their own queue, the global round number and the
commit/abort bit of their own invocations.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .centralized import ceil_sqrt
from .model import InvalidInput, Transaction, TxType

SENDER = "sender"
RECEIVER = "receiver"


class ChannelStarvation(RuntimeError):
    """An active processor had to invoke a transaction of its active type but had none."""


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise InvalidInput(f"entropy argument {x} outside [0, 1]")
    if x in (0, 1):
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def block_size(n: int, m: int) -> int:
    return (n - 1) ** 2 * n ** 2 * m ** 2


@dataclass(frozen=True)
class DistributedBounds:
    P: int
    L: int
    C: int
    epoch_len: int
    interval_len: int
    bulk: int
    bulk_ok: bool
    rho_max: Fraction
    pending_bound: int
    latency_bound: int
    entropy_ok: Optional[bool] = None  # P <= 2^(H(k/m) m); None when k > m/2

    def stable_regime(self, rho: Fraction) -> bool:
        return Fraction(rho) < self.rho_max and self.bulk_ok


def distributed_bounds(n: int, m: int, k: int, b: int, rho: Fraction = Fraction(0)) -> DistributedBounds:
    if not 1 <= k <= m:
        raise InvalidInput("need 1 <= k <= m")
    rho = Fraction(rho)
    P = sum(math.comb(m, i) for i in range(1, k + 1))
    L = block_size(n, m)
    short = min(k, ceil_sqrt(m))
    bulk = n * L * P
    slack = 1 - 6 * rho * short
    # bulk >= 1 / slack, exactly
    bulk_ok = slack > 0 and bulk * slack >= 1
    entropy_ok = None
    if 2 * k <= m:
        entropy_ok = P <= 2 ** (binary_entropy(k / m) * m) + 1e-9
    return DistributedBounds(
        P=P,
        L=L,
        C=b * n * P,
        epoch_len=3 * L,
        interval_len=6 * b * n * L * P * short,
        bulk=bulk,
        bulk_ok=bulk_ok,
        rho_max=max(Fraction(1, 6 * k), Fraction(1, 6 * ceil_sqrt(m))),
        pending_bound=2 * b * n ** 5 * m ** 3 * P,
        latency_bound=12 * b * n ** 5 * m ** 2 * P * short,
        entropy_ok=entropy_ok,
    )


# Epoch layout ---------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSlot:
    """Where a Phase 1 round sits: segment (rep, sender, receiver, object), slot, bit."""

    segment: int
    rep: int
    sender: int
    receiver: int
    obj: int
    slot: int
    bit: int


class EpochSchedule:
    """Deterministic round roles inside an epoch, identical at every processor.

    Phase 1 holds (n-1) repetitions over ordered pairs (s, r), s != r, and
    objects o, row-major; each (rep, s, r, o) segment lasts n*m rounds: n slots
    (one per processor whose active type is relayed) of m bits.
    """

    def __init__(self, n: int, m: int) -> None:
        if n < 2:
            raise InvalidInput("an epoch schedule needs at least two processors")
        if m < 1:
            raise InvalidInput("m must be positive")
        self.n, self.m = n, m
        self.L = block_size(n, m)
        self.segment_len = n * m
        self.pairs = tuple((s, r) for s in range(n) for r in range(n) if s != r)
        self.segments = tuple(
            (rep, s, r, o) for rep in range(n - 1) for s, r in self.pairs for o in range(m)
        )
        self.slot3_len = self.L // n

    @property
    def epoch_len(self) -> int:
        return 3 * self.L

    def phase(self, pos: int) -> int:
        return pos // self.L + 1

    def channel_slot(self, pos: int) -> ChannelSlot:
        if not 0 <= pos < self.L:
            raise InvalidInput(f"position {pos} is not in Phase 1")
        seg, within = divmod(pos, self.segment_len)
        rep, s, r, o = self.segments[seg]
        slot, bit = divmod(within, self.m)
        return ChannelSlot(seg, rep, s, r, o, slot, bit)

    def phase3_owner(self, pos: int) -> int:
        if not 2 * self.L <= pos < 3 * self.L:
            raise InvalidInput(f"position {pos} is not in Phase 3")
        return (pos - 2 * self.L) // self.slot3_len


def epoch_schedule(n: int, m: int) -> EpochSchedule:
    return EpochSchedule(n, m)


def encode_type(t: Optional[TxType], m: int) -> str:
    return "0" * m if t is None else t.bits(m)


def decode_type(bits: str) -> Optional[TxType]:
    t = TxType.from_bits(bits)
    return t if t.mask else None


# Per-processor state ------------------------------------------------------


@dataclass
class ProcessorState:
    pid: int
    m: int
    L: int
    queues: dict[int, deque] = field(default_factory=dict)  # type mask -> FIFO of transactions
    flagged: dict[int, int] = field(default_factory=dict)  # block members sit at the head of each FIFO
    active: Optional[TxType] = None
    known: dict[int, TxType] = field(default_factory=dict)
    selected: bool = False
    inflight: Optional[tuple[Transaction, Optional[tuple[int, int, int]]]] = None
    heard: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    decoded: list[tuple[int, int, str]] = field(default_factory=list)  # (segment, slot, bits) this step

    def pending(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def ingest(self, txs: Sequence[Transaction]) -> None:
        for t in txs:
            self.queues.setdefault(t.ttype.mask, deque()).append(t)
        L = self.L
        for mask in {t.ttype.mask for t in txs}:
            q = self.queues[mask]
            f = self.flagged.get(mask, 0)
            while len(q) - f >= L:
                f += L
            self.flagged[mask] = f

    def block_count(self, t: TxType) -> int:
        return len(self.queues.get(t.mask, ())) // self.L

    def is_block_member(self, tx: Transaction) -> bool:
        q = self.queues.get(tx.ttype.mask, ())
        for i, x in enumerate(q):
            if x.id == tx.id:
                return i < self.flagged.get(tx.ttype.mask, 0)
        return False

    def remove(self, tx: Transaction) -> None:
        mask = tx.ttype.mask
        q = self.queues[mask]
        idx = next(i for i, x in enumerate(q) if x.id == tx.id)
        del q[idx]
        if idx < self.flagged.get(mask, 0):
            self.flagged[mask] -= 1
        if not q:
            del self.queues[mask]
            self.flagged.pop(mask, None)

    def apply_feedback(self, feedback: Mapping[int, bool]) -> None:
        self.decoded = []
        if self.inflight is None:
            return
        tx, listen = self.inflight
        self.inflight = None
        committed = feedback.get(tx.id)
        if committed is None:
            return
        if committed:
            self.remove(tx)
        if listen is not None:
            seg, slot, bit = listen
            bits = self.heard.setdefault((seg, slot), [])
            bits.append(0 if committed else 1)
            if bit == self.m - 1:
                text = "".join(map(str, bits))
                del self.heard[(seg, slot)]
                self.decoded.append((seg, slot, text))
                t = decode_type(text)
                if t is not None:
                    self.known[slot] = t

    def head_of_active(self) -> Optional[Transaction]:
        q = self.queues.get(self.active.mask) if self.active is not None else None
        return q[0] if q else None

    def oldest_unflagged(self, fallback: bool = False) -> Optional[Transaction]:
        best = None
        for mask, q in self.queues.items():
            f = self.flagged.get(mask, 0)
            if f < len(q):
                t = q[f]
                if best is None or (t.gen_round, t.id) < (best.gen_round, best.id):
                    best = t
        if best is None and fallback:
            for q in self.queues.values():
                t = q[0]
                if best is None or (t.gen_round, t.id) < (best.gen_round, best.id):
                    best = t
        return best


def select_active_block(state: ProcessorState) -> Optional[TxType]:
    """First large type, ordering by the generation round of its newest pending transaction, then by bitstring."""
    best_key, best = None, None
    for mask, q in state.queues.items():
        if len(q) >= state.L:
            t = TxType(mask)
            key = (q[-1].gen_round, t.bits(state.m))
            if best_key is None or key < best_key:
                best_key, best = key, t
    return best


def greedy_select_active_types(known: Sequence[tuple[int, TxType]]) -> set[int]:
    """Scan (processor, type) pairs by processor id, keeping each type disjoint from those kept."""
    used = 0
    chosen = set()
    for pid, t in sorted(known, key=lambda e: e[0]):
        if not used & t.mask:
            used |= t.mask
            chosen.add(pid)
    return chosen


def channel_round_action(role: str, bit: int, o: int, state: ProcessorState) -> Optional[Transaction]:
    """The transaction a channel participant invokes this round, or None to stay silent.

    A participant needs ``o`` in its active type.  The receiver always
    invokes; the sender invokes only to send a 1.
    """
    if role not in (SENDER, RECEIVER):
        raise InvalidInput(f"unknown channel role {role!r}")
    if state.active is None or o not in state.active:
        return None
    if role == SENDER and not bit:
        return None
    tx = state.head_of_active()
    if tx is None:
        raise ChannelStarvation(f"processor {state.pid} has no transaction of its active type {state.active!r}")
    return tx


def read_channel_bit(invoked: bool, committed: Optional[bool]) -> Optional[int]:
    """Receiver-side decoding: own abort reads 1, own commit reads 0, no invocation reads nothing."""
    if not invoked or committed is None:
        return None
    return 0 if committed else 1


@dataclass
class EpochRecord:
    epoch: int
    start_round: int
    actives: dict[int, TxType]
    known: Optional[dict[int, dict[int, TxType]]] = None  # set once Phase 2 begins
    selected: set[int] = field(default_factory=set)


class DistributedScheduler:
    """Runs one :class:`ProcessorState` per processor in lockstep.

    ``phase3_serves_blocks`` lets a processor whose queue holds only block
    members use its Phase 3 slot on the oldest of them instead of idling.
    """

    def __init__(self, n: int, m: int, phase3_serves_blocks: bool = False) -> None:
        self.n, self.m = n, m
        self.schedule = EpochSchedule(n, m) if n >= 2 else None
        self.L = self.schedule.L if self.schedule else 1
        self.epoch_len = 3 * self.L
        self.phase3_serves_blocks = phase3_serves_blocks
        self.procs = [ProcessorState(p, m, self.L) for p in range(n)]
        self.epochs: list[EpochRecord] = []
        self._note: dict = {}

    def step(self, round_no: int, new: Sequence[Transaction], feedback: Mapping[int, bool]) -> list[int]:
        pos = (round_no - 1) % self.epoch_len
        epoch = (round_no - 1) // self.epoch_len + 1
        by_owner: dict[int, list[Transaction]] = {}
        for t in new:
            by_owner.setdefault(t.owner, []).append(t)
        out = []
        for proc in self.procs:
            tx = distributed_processor_step(
                proc, round_no, by_owner.get(proc.pid, ()), feedback, self.schedule, self.epoch_len,
                self.phase3_serves_blocks,
            )
            if tx is not None:
                out.append(tx.id)
        self._record(round_no, pos, epoch)
        return out

    def _record(self, round_no: int, pos: int, epoch: int) -> None:
        L = self.L
        phase = pos // L + 1
        note: dict = {"epoch": epoch, "phase": phase}
        if pos == 0:
            self.epochs.append(EpochRecord(
                epoch, round_no, {p.pid: p.active for p in self.procs if p.active is not None}))
        if pos == L:
            rec = self.epochs[-1]
            rec.known = {p.pid: dict(p.known) for p in self.procs if p.active is not None}
            rec.selected = {p.pid for p in self.procs if p.selected}
            note["selected"] = sorted(rec.selected)
        if phase == 1 and self.schedule is not None:
            cs = self.schedule.channel_slot(pos)
            note["segment"] = (cs.rep, cs.sender, cs.receiver, cs.obj)
            note["slot"] = (cs.slot, cs.bit)
        decoded = [(p.pid, slot, bits) for p in self.procs for _, slot, bits in p.decoded]
        if decoded:
            note["decoded"] = decoded
        self._note = note

    def annotation(self, round_no: int) -> dict:
        return self._note


def distributed_processor_step(
    state: ProcessorState,
    round_no: int,
    new: Sequence[Transaction],
    feedback: Mapping[int, bool],
    schedule: Optional[EpochSchedule],
    epoch_len: int,
    phase3_serves_blocks: bool = False,
) -> Optional[Transaction]:
    """Advance one processor by one round; return the transaction it invokes, if any."""
    state.apply_feedback(feedback)
    state.ingest(new)
    L = epoch_len // 3
    pos = (round_no - 1) % epoch_len

    if pos == 0:
        state.active = select_active_block(state)
        state.known = {state.pid: state.active} if state.active is not None else {}
        state.selected = False
        state.heard.clear()
    if pos == L and state.active is not None:
        state.selected = state.pid in greedy_select_active_types(list(state.known.items()))

    tx: Optional[Transaction] = None
    listen = None
    if pos < L:
        if schedule is None:
            return None
        cs = schedule.channel_slot(pos)
        if state.pid == cs.sender:
            bit = int(encode_type(state.known.get(cs.slot), state.m)[cs.bit])
            tx = channel_round_action(SENDER, bit, cs.obj, state)
        elif state.pid == cs.receiver:
            tx = channel_round_action(RECEIVER, 0, cs.obj, state)
            if tx is not None:
                listen = (cs.segment, cs.slot, cs.bit)
    elif pos < 2 * L:
        if state.selected:
            tx = state.head_of_active()
    else:
        owner = schedule.phase3_owner(pos) if schedule is not None else state.pid
        if owner == state.pid:
            tx = state.oldest_unflagged(fallback=phase3_serves_blocks)

    if tx is not None:
        state.inflight = (tx, listen)
    return tx
