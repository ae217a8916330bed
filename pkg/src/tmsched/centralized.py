"""Centralized greedy scheduler and its stability bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .model import Transaction


def ceil_sqrt(m: int) -> int:
    r = math.isqrt(m)
    return r if r * r == m else r + 1


def select_execute_set(pending: Sequence[Transaction]) -> tuple[list[Transaction], list[Transaction]]:
    """Scan oldest to newest, taking every transaction that collides with nothing taken so far.

    Returns (execute, remaining); both keep the input order.
    """
    used = 0
    execute, remaining = [], []
    for t in pending:
        mask = t.ttype.mask
        if used & mask:
            remaining.append(t)
        else:
            used |= mask
            execute.append(t)
    return execute, remaining


class CentralizedScheduler:
    """Keeps every visible pending transaction in generation order and invokes a maximal conflict-free prefix-greedy set each round."""

    def __init__(self) -> None:
        self.pending: list[Transaction] = []
        self._inflight: dict[int, Transaction] = {}

    def step(self, round_no: int, new: Sequence[Transaction], feedback: Mapping[int, bool]) -> list[int]:
        aborted = [self._inflight[tid] for tid, ok in feedback.items() if not ok and tid in self._inflight]
        if aborted:
            # selection never produces collisions; kept so a foreign feedback stream cannot lose work
            self.pending = sorted(self.pending + aborted, key=lambda t: (t.gen_round, t.id))
        self.pending.extend(new)
        execute, self.pending = select_execute_set(self.pending)
        self._inflight = {t.id: t for t in execute}
        return [t.id for t in execute]


def centralized_round(state: CentralizedScheduler, round_no: int, new: Sequence[Transaction],
                      feedback: Mapping[int, bool]) -> list[int]:
    return state.step(round_no, new, feedback)


@dataclass(frozen=True)
class CentralizedBounds:
    rho_max: Fraction
    pending_bound: int
    latency_bound: int
    milestone_len: int


def centralized_bounds(m: int, k: int, b: int) -> CentralizedBounds:
    r = ceil_sqrt(m)
    short = min(k, r)
    return CentralizedBounds(
        rho_max=max(Fraction(1, 4 * k), Fraction(1, 4 * r)),
        pending_bound=4 * b * m,
        latency_bound=8 * b * short,
        milestone_len=4 * b * short,
    )
