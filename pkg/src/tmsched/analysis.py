"""Post-hoc trace analytics: bound conformance, milestone checks, growth trend, determinism."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from .centralized import CentralizedBounds
from .combinatorics import build_block_conflict_graph
from .distributed import DistributedBounds, EpochRecord
from .engine import Trace
from .model import InvalidInput

Bounds = Union[CentralizedBounds, DistributedBounds]


@dataclass(frozen=True)
class BoundViolation:
    round: int
    quantity: str  # "pending" or "latency"
    observed: int
    bound: int


@dataclass(frozen=True)
class MilestoneFailure:
    interval: int
    uncommitted: tuple[int, ...]


@dataclass
class StabilityReport:
    rounds: int = 0
    generated: int = 0
    committed: int = 0
    aborts: int = 0
    max_pending: int = 0
    final_pending: int = 0
    max_latency: int = 0
    mean_latency: float = 0.0
    violations: list[BoundViolation] = field(default_factory=list)
    milestone_failures: list[MilestoneFailure] = field(default_factory=list)
    milestone_checked: int = 0
    notices: list[str] = field(default_factory=list)
    growth_slope: Fraction = Fraction(0)
    unstable: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations and not self.milestone_failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["growth_slope"] = str(self.growth_slope)
        d["ok"] = self.ok
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        rows = [
            ("rounds", self.rounds),
            ("generated", self.generated),
            ("committed", self.committed),
            ("aborts", self.aborts),
            ("max pending", self.max_pending),
            ("final pending", self.final_pending),
            ("max latency", self.max_latency),
            ("mean latency", f"{self.mean_latency:.3f}"),
            ("bound violations", len(self.violations)),
            ("milestone intervals checked", self.milestone_checked),
            ("milestone failures", len(self.milestone_failures)),
            ("growth slope", f"{float(self.growth_slope):.6f}"),
            ("unstable", "yes" if self.unstable else "no"),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        lines += [f"note: {n}" for n in self.notices]
        return "\n".join(lines) + "\n"


def least_squares_slope(ys: Sequence[int], x0: int = 0) -> Fraction:
    """Exact least-squares slope of ys against x0, x0+1, ..."""
    n = len(ys)
    if n < 2:
        return Fraction(0)
    xs = range(x0, x0 + n)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    return Fraction(n * sxy - sx * sy, n * sxx - sx * sx)


def growth_trend(pending: Sequence[int]) -> tuple[Fraction, bool]:
    """Slope over the trailing half; unstable when it is positive and pending at least doubled since the midpoint."""
    T = len(pending)
    if T < 2:
        return Fraction(0), False
    mid = T // 2
    slope = least_squares_slope(pending[mid:], mid + 1)
    unstable = slope > 0 and pending[-1] >= 2 * pending[mid - 1] and pending[-1] > 0
    return slope, unstable


def analyze(trace: Trace, bounds: Optional[Bounds] = None, interval_len: Optional[int] = None) -> StabilityReport:
    rep = StabilityReport()
    T = len(trace.rounds)
    rep.rounds = T
    if T == 0:
        return rep
    pending_bound = latency_bound = None
    if bounds is not None:
        pending_bound, latency_bound = bounds.pending_bound, bounds.latency_bound
        if interval_len is None:
            interval_len = bounds.milestone_len if isinstance(bounds, CentralizedBounds) else bounds.interval_len
    if interval_len is not None and interval_len < 1:
        raise InvalidInput("interval length must be at least 1")

    commit = trace.commit_round
    lat_sum = lat_n = 0
    for rec in trace.rounds:
        o = rec.outcome
        rep.generated += len(rec.generated)
        rep.committed += len(o.committed)
        rep.aborts += len(o.aborted)
        if rec.pending > rep.max_pending:
            rep.max_pending = rec.pending
        if pending_bound is not None and rec.pending > pending_bound:
            rep.violations.append(BoundViolation(o.round, "pending", rec.pending, pending_bound))
        for t in rec.generated:
            c = commit.get(t.id)
            if c is not None:
                lat = c - t.gen_round
                lat_sum += lat
                lat_n += 1
                if lat > rep.max_latency:
                    rep.max_latency = lat
                if latency_bound is not None and lat > latency_bound:
                    rep.violations.append(BoundViolation(c, "latency", lat, latency_bound))
            elif latency_bound is not None and T - t.gen_round > latency_bound:
                # still pending past its deadline
                rep.violations.append(BoundViolation(t.gen_round + latency_bound + 1, "latency",
                                                     T - t.gen_round, latency_bound))
    rep.violations.sort(key=lambda v: (v.round, v.quantity))
    rep.final_pending = trace.rounds[-1].pending
    rep.mean_latency = lat_sum / lat_n if lat_n else 0.0

    if interval_len is not None:
        checkable = T // interval_len - 1
        if checkable < 1:
            rep.notices.append(f"trace shorter than two intervals of {interval_len} rounds; milestone check skipped")
        else:
            rep.milestone_checked = checkable
            late: dict[int, list[int]] = {}
            for rec in trace.rounds[: checkable * interval_len]:
                for t in rec.generated:
                    j = (t.gen_round - 1) // interval_len + 1
                    deadline = (j + 1) * interval_len
                    c = commit.get(t.id)
                    if c is None or c > deadline:
                        late.setdefault(j, []).append(t.id)
            rep.milestone_failures = [MilestoneFailure(j, tuple(ids)) for j, ids in sorted(late.items())]

    rep.growth_slope, rep.unstable = growth_trend(trace.pending_series())
    return rep


def conservation_holds(trace: Trace) -> bool:
    """Recompute generated - committed per round and compare with the recorded pending counts."""
    outstanding = 0
    for rec in trace.rounds:
        outstanding += len(rec.generated) - len(rec.outcome.committed)
        if outstanding != rec.pending:
            return False
    return True


def compare_traces(a: Trace, b: Trace) -> Optional[int]:
    """None when the serialized rounds agree byte for byte, else the first divergent round."""
    if a.config != b.config:
        raise InvalidInput("traces come from different configurations")
    la, lb = a.to_jsonl().splitlines()[1:], b.to_jsonl().splitlines()[1:]
    for i, (x, y) in enumerate(zip(la, lb), 1):
        if x != y:
            return i
    if len(la) != len(lb):
        return min(len(la), len(lb)) + 1
    return None


def phase_aborts(trace: Trace) -> dict[int, int]:
    """Aborts per distributed-scheduler phase, from the trace annotations."""
    if trace.annotations is None:
        raise InvalidInput("trace carries no scheduler annotations")
    out = {1: 0, 2: 0, 3: 0}
    for rec, note in zip(trace.rounds, trace.annotations):
        out[note["phase"]] += len(rec.outcome.aborted)
    return out


def knowledge_gaps(epochs: Sequence[EpochRecord], m: int) -> list[tuple[int, int]]:
    """(epoch, processor) pairs whose table after Phase 1 differs from its active component.

    The expected table of an active processor lists every active processor
    reachable from it in the block conflict graph restricted to active blocks.
    """
    gaps = []
    for rec in epochs:
        if rec.known is None:
            continue
        g = build_block_conflict_graph(list(rec.actives.items()), m)
        for comp in g.components():
            expected = {pid: t for pid, t in comp}
            for pid in expected:
                if rec.known.get(pid) != expected:
                    gaps.append((rec.epoch, pid))
    return gaps
