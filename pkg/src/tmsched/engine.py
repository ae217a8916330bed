"""Synchronous round loop, collision resolution and trace recording.

Each round ``r`` runs in four steps:

1. the adversary emits the transactions generated at ``r``;
2. the scheduler is shown the transactions generated at ``r - 1`` together
   with the commit/abort bit of every transaction it invoked at ``r - 1``,
   and names the transactions it invokes now;
3. invoked transactions sharing an object all abort, the others commit;
4. the outcome is recorded.

A transaction is therefore never invoked in its generation round and its
latency ``commit_round - gen_round`` is at least 1.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Optional, Protocol, Sequence

from .model import InvalidInput, SystemConfig, Transaction, TxType

_EMPTY: frozenset[int] = frozenset()


class ProtocolViolation(RuntimeError):
    """A scheduler invoked something it is not allowed to invoke."""

    def __init__(self, round_no: int, tx_id: int, reason: str) -> None:
        super().__init__(f"round {round_no}: transaction {tx_id}: {reason}")
        self.round = round_no
        self.tx_id = tx_id


class Scheduler(Protocol):
    def step(self, round_no: int, new: Sequence[Transaction], feedback: Mapping[int, bool]) -> Iterable[int]:
        """Return the ids to invoke at ``round_no``.

        ``feedback`` maps each id invoked in the previous round to True
        (committed) or False (aborted).
        """
        ...


class Adversary(Protocol):
    def generate(self, round_no: int) -> Sequence[tuple[TxType, Optional[int]]]:
        """Return the (type, owner) pairs generated at ``round_no``, in emission order."""
        ...


@dataclass(frozen=True, slots=True)
class RoundOutcome:
    round: int
    invoked: frozenset[int] = _EMPTY
    committed: frozenset[int] = _EMPTY
    aborted: frozenset[int] = _EMPTY


@dataclass(frozen=True, slots=True)
class RoundRecord:
    generated: tuple[Transaction, ...]
    outcome: RoundOutcome
    pending: int

    @property
    def round(self) -> int:
        return self.outcome.round


@dataclass
class Trace:
    config: SystemConfig
    rounds: list[RoundRecord] = field(default_factory=list)
    commit_round: dict[int, int] = field(default_factory=dict)
    annotations: Optional[list[Any]] = None

    def transactions(self) -> list[Transaction]:
        return [t for rec in self.rounds for t in rec.generated]

    def generations(self) -> list[list[tuple[TxType, Optional[int]]]]:
        return [[(t.ttype, t.owner) for t in rec.generated] for rec in self.rounds]

    def pending_series(self) -> list[int]:
        return [rec.pending for rec in self.rounds]

    def latencies(self) -> dict[int, int]:
        out = {}
        for rec in self.rounds:
            for t in rec.generated:
                c = self.commit_round.get(t.id)
                if c is not None:
                    out[t.id] = c - t.gen_round
        return out

    # serialization ---------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "generated", "invoked", "committed", "aborted", "pending"])
        for rec in self.rounds:
            o = rec.outcome
            w.writerow([o.round, len(rec.generated), len(o.invoked), len(o.committed), len(o.aborted), rec.pending])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        """Full-fidelity form: a header line with the configuration, then one line per round."""
        m = self.config.m
        lines = [json.dumps({"config": _config_dict(self.config)}, sort_keys=True)]
        for rec in self.rounds:
            o = rec.outcome
            lines.append(json.dumps({
                "round": o.round,
                "generated": [[t.id, t.owner, t.ttype.bits(m)] for t in rec.generated],
                "invoked": sorted(o.invoked),
                "committed": sorted(o.committed),
                "aborted": sorted(o.aborted),
                "pending": rec.pending,
            }, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = text.splitlines()
        if not lines:
            raise InvalidInput("empty trace")
        config = SystemConfig(**json.loads(lines[0])["config"])
        trace = cls(config)
        for line in lines[1:]:
            row = json.loads(line)
            r = row["round"]
            gen = tuple(Transaction(i, TxType.from_bits(bits), r, owner) for i, owner, bits in row["generated"])
            out = RoundOutcome(r, frozenset(row["invoked"]), frozenset(row["committed"]), frozenset(row["aborted"]))
            trace.rounds.append(RoundRecord(gen, out, row["pending"]))
            for c in out.committed:
                trace.commit_round[c] = r
        return trace


def _config_dict(c: SystemConfig) -> dict:
    return {"m": c.m, "k": c.k, "n": c.n, "horizon": c.horizon, "seed": c.seed, "model": c.model}


def resolve_round(invocations: Iterable[Transaction], round_no: int = 0) -> RoundOutcome:
    """Commit every invoked transaction that shares no object with another invoked one; abort the rest."""
    invs = list(invocations)
    if not invs:
        return RoundOutcome(round_no)
    seen = shared = 0
    ids = set()
    for t in invs:
        if t.id in ids:
            raise InvalidInput(f"transaction {t.id} invoked twice in round {round_no}")
        ids.add(t.id)
        mask = t.ttype.mask
        shared |= seen & mask
        seen |= mask
    if not shared:
        return RoundOutcome(round_no, frozenset(ids), frozenset(ids), _EMPTY)
    committed = frozenset(t.id for t in invs if not t.ttype.mask & shared)
    return RoundOutcome(round_no, frozenset(ids), committed, frozenset(ids - committed))


def run_simulation(
    config: SystemConfig,
    scheduler: Scheduler,
    adversary: Adversary,
    on_round: Optional[Callable[[RoundRecord], None]] = None,
) -> Trace:
    trace = Trace(config)
    annotate = getattr(scheduler, "annotation", None)
    if annotate is not None:
        trace.annotations = []
    pending: dict[int, Transaction] = {}
    visible: tuple[Transaction, ...] = ()
    feedback: dict[int, bool] = {}
    next_id = 1
    queue_based = config.queue_based
    m_limit, k, n = config.m, config.k, config.n

    for r in range(1, config.horizon + 1):
        fresh = []
        for ttype, owner in adversary.generate(r):
            mask = ttype.mask
            if not mask or mask >> m_limit or mask.bit_count() > k:
                config.check_type(ttype)
            if queue_based:
                if owner is None or not 0 <= owner < n:
                    raise InvalidInput(f"round {r}: queue-based transaction needs an owner in [0, {n})")
            elif owner is not None:
                raise InvalidInput(f"round {r}: queue-free transactions carry no owner")
            fresh.append(Transaction(next_id, ttype, r, owner))
            next_id += 1

        chosen = []
        owners_used = set()
        for tid in scheduler.step(r, visible, feedback):
            tx = pending.get(tid)
            if tx is None:
                if tid in trace.commit_round:
                    reason = "already committed"
                elif next_id - len(fresh) <= tid < next_id:
                    reason = "not yet visible to the scheduler"
                else:
                    reason = "not a pending transaction"
                raise ProtocolViolation(r, tid, reason)
            if queue_based:
                if tx.owner in owners_used:
                    raise ProtocolViolation(r, tid, f"processor {tx.owner} invoked twice in one round")
                owners_used.add(tx.owner)
            chosen.append(tx)

        try:
            outcome = resolve_round(chosen, r)
        except InvalidInput as exc:
            raise ProtocolViolation(r, -1, str(exc)) from None
        for tid in outcome.committed:
            del pending[tid]
            trace.commit_round[tid] = r
        for t in fresh:
            pending[t.id] = t
        rec = RoundRecord(tuple(fresh), outcome, len(pending))
        trace.rounds.append(rec)
        if annotate is not None:
            trace.annotations.append(annotate(r))
        if on_round is not None:
            on_round(rec)
        visible = rec.generated
        if outcome.invoked:
            committed = outcome.committed
            feedback = {tid: tid in committed for tid in outcome.invoked}
        elif feedback:
            feedback = {}
    return trace


class FifoScheduler:
    """Invoke the single oldest visible pending transaction each round.  Reference baseline."""

    def __init__(self) -> None:
        self._queue: list[Transaction] = []
        self._inflight: Optional[int] = None

    def step(self, round_no: int, new: Sequence[Transaction], feedback: Mapping[int, bool]) -> list[int]:
        if self._inflight is not None and feedback.get(self._inflight):
            self._queue.pop(0)
        self._queue.extend(new)
        self._inflight = self._queue[0].id if self._queue else None
        return [self._inflight] if self._inflight is not None else []


# Queue-free symmetry demonstration -------------------------------------------

PAUSE = "pause"
INVOKE = "invoke"


@dataclass(frozen=True)
class ThreadPolicy:
    """A deterministic thread automaton.

    ``step(state, feedback)`` returns ``(action, next_state)``; feedback is
    None after a pause (or before the first round), otherwise "commit" or
    "abort" for the thread's own transaction.
    """

    name: str
    initial: Hashable
    step: Callable[[Hashable, Optional[str]], tuple[str, Hashable]]


@dataclass
class SymmetryReport:
    policy: str
    horizon: int
    states: list[tuple[Hashable, Hashable]]
    actions: list[tuple[str, str]]
    commits: int
    aborts: int

    @property
    def states_equal(self) -> bool:
        return all(a == b for a, b in self.states)


def queue_free_symmetry_demo(policy: ThreadPolicy, horizon: int) -> SymmetryReport:
    """Two identical threads, one object, one transaction each: run them in lockstep."""
    only_object = TxType.of(0)
    txs = (Transaction(1, only_object, 0), Transaction(2, only_object, 0))
    states = [policy.initial, policy.initial]
    feedback: list[Optional[str]] = [None, None]
    done = [False, False]
    report = SymmetryReport(policy.name, horizon, [], [], 0, 0)
    for r in range(1, horizon + 1):
        report.states.append((states[0], states[1]))
        acts = []
        for i in (0, 1):
            if done[i]:
                acts.append(PAUSE)
                continue
            action, states[i] = policy.step(states[i], feedback[i])
            acts.append(action)
        report.actions.append((acts[0], acts[1]))
        outcome = resolve_round([txs[i] for i in (0, 1) if acts[i] == INVOKE], r)
        for i in (0, 1):
            if acts[i] != INVOKE:
                feedback[i] = None
            elif txs[i].id in outcome.committed:
                feedback[i] = "commit"
                done[i] = True
            else:
                feedback[i] = "abort"
        report.commits += len(outcome.committed)
        report.aborts += len(outcome.aborted)
    return report


def _always(state, feedback):
    return INVOKE, state + 1


def _alternate(state, feedback):
    return (INVOKE if state % 2 else PAUSE), state + 1


def _backoff(state, feedback):
    # state = (rounds left to wait, current window)
    wait, window = state
    if wait > 0:
        return PAUSE, (wait - 1, window)
    if feedback == "abort":
        window = min(window * 2, 1 << 10)
        return PAUSE, (window - 1, window)
    return INVOKE, (0, window)


def _counter_mod3(state, feedback):
    return (INVOKE if state % 3 == 0 else PAUSE), state + 1


def _abort_counter(state, feedback):
    # invoke after every run of aborts whose length is a perfect square
    aborts, tick = state
    if feedback == "abort":
        aborts += 1
    root = int(aborts ** 0.5)
    return (INVOKE if root * root == aborts or tick % 5 == 0 else PAUSE), (aborts, tick + 1)


SAMPLE_POLICIES = (
    ThreadPolicy("always-invoke", 0, _always),
    ThreadPolicy("alternate", 0, _alternate),
    ThreadPolicy("exponential-backoff", (0, 1), _backoff),
    ThreadPolicy("every-third-round", 0, _counter_mod3),
    ThreadPolicy("abort-counter", (0, 0), _abort_counter),
)
