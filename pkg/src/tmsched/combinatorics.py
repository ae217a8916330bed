"""Pairwise-intersecting set families, conflict graphs and the two greedy colorings."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Optional, Sequence

from .model import InvalidInput, Transaction, TxType

Vertex = Hashable


@dataclass(frozen=True)
class SetFamily:
    n: int
    sets: tuple[frozenset[int], ...]

    @property
    def universe(self) -> int:
        return self.n * (self.n + 1) // 2


@dataclass(frozen=True)
class FamilyReport:
    ok: bool
    violation: Optional[str] = None


def build_set_family(n: int) -> SetFamily:
    """Build n+1 sets of size n over [1, n(n+1)/2], each pair meeting exactly once.

    Set l+1 takes, from every earlier set, its smallest element not yet shared
    with any other set, then fills up with the smallest unused integers.
    """
    if n < 1:
        raise InvalidInput("n must be positive")
    sets: list[list[int]] = [list(range(1, n + 1))]
    # still-private elements of each set, ascending; fresh integers only ever grow
    private: list[deque[int]] = [deque(sets[0])]
    next_unused = n + 1
    for ell in range(1, n + 1):
        new = [p.popleft() for p in private]
        fresh = range(next_unused, next_unused + n - ell)
        next_unused += n - ell
        new.extend(fresh)
        sets.append(new)
        private.append(deque(fresh))
    return SetFamily(n, tuple(frozenset(s) for s in sets))


def verify_set_family(f: SetFamily) -> FamilyReport:
    """Exhaustively check sizes, pairwise single intersections, double coverage and the union."""
    n, universe = f.n, f.universe
    if len(f.sets) != n + 1:
        return FamilyReport(False, f"expected {n + 1} sets, found {len(f.sets)}")
    for i, s in enumerate(f.sets, 1):
        if len(s) != n:
            return FamilyReport(False, f"set {i} has {len(s)} elements, expected {n}")
        if any(not 1 <= x <= universe for x in s):
            return FamilyReport(False, f"set {i} has elements outside [1, {universe}]")
    for (i, a), (j, b) in combinations(enumerate(f.sets, 1), 2):
        shared = len(a & b)
        if shared != 1:
            return FamilyReport(False, f"sets {i} and {j} share {shared} elements")
    holders = Counter(x for s in f.sets for x in s)
    for x in range(1, universe + 1):
        if holders[x] != 2:
            return FamilyReport(False, f"element {x} lies in {holders[x]} sets")
    union = frozenset().union(*f.sets)
    if union != frozenset(range(1, universe + 1)):
        return FamilyReport(False, "union is not the full range")
    return FamilyReport(True)


@dataclass
class ConflictGraph:
    """Simple undirected graph with a fixed vertex order.

    ``adjacency`` maps each vertex to its neighbours listed in vertex order.
    """

    vertices: tuple[Vertex, ...]
    edges: frozenset[frozenset] = field(default_factory=frozenset)
    adjacency: dict[Vertex, tuple[Vertex, ...]] = field(init=False)

    def __post_init__(self) -> None:
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != len(self.vertices):
            raise InvalidInput("duplicate vertex labels")
        nbrs: dict[Vertex, list[Vertex]] = {v: [] for v in self.vertices}
        for e in self.edges:
            if len(e) != 2:
                raise InvalidInput(f"self-loop or malformed edge {set(e)}")
            u, v = tuple(e)
            if u not in index or v not in index:
                raise InvalidInput(f"edge {set(e)} mentions an unknown vertex")
            nbrs[u].append(v)
            nbrs[v].append(u)
        self.adjacency = {v: tuple(sorted(ns, key=index.__getitem__)) for v, ns in nbrs.items()}

    @classmethod
    def from_edges(cls, vertices: Iterable[Vertex], edges: Iterable[tuple[Vertex, Vertex]]) -> "ConflictGraph":
        return cls(tuple(vertices), frozenset(frozenset(e) for e in edges))

    def has_edge(self, u: Vertex, v: Vertex) -> bool:
        return frozenset((u, v)) in self.edges

    def degree(self, v: Vertex) -> int:
        return len(self.adjacency[v])

    def max_degree(self) -> int:
        return max((len(ns) for ns in self.adjacency.values()), default=0)

    def components(self) -> list[frozenset]:
        seen: set = set()
        out = []
        for v in self.vertices:
            if v in seen:
                continue
            comp, stack = {v}, [v]
            while stack:
                for w in self.adjacency[stack.pop()]:
                    if w not in comp:
                        comp.add(w)
                        stack.append(w)
            seen |= comp
            out.append(frozenset(comp))
        return out


def is_proper(g: ConflictGraph, coloring: dict[Vertex, int]) -> bool:
    return all(coloring[u] != coloring[v] for u, v in map(tuple, g.edges))


def _order_indices(g: ConflictGraph, order: Optional[Sequence[Vertex]]) -> tuple[list[Vertex], list[int]]:
    if order is None:
        order = g.vertices
    order = list(order)
    if len(order) != len(g.vertices) or set(order) != set(g.vertices):
        raise InvalidInput("order must be a permutation of the graph's vertices")
    pos = {v: i for i, v in enumerate(order)}
    nbr_masks = [0] * len(order)
    for v, ns in g.adjacency.items():
        m = 0
        for w in ns:
            m |= 1 << pos[w]
        nbr_masks[pos[v]] = m
    return order, nbr_masks


def primary_greedy_coloring(g: ConflictGraph, order: Optional[Sequence[Vertex]] = None) -> dict[Vertex, int]:
    """Give each vertex, in order, the least positive color unused by its colored neighbours."""
    order, _ = _order_indices(g, order)
    colors: dict[Vertex, int] = {}
    for v in order:
        used = {colors[w] for w in g.adjacency[v] if w in colors}
        c = 1
        while c in used:
            c += 1
        colors[v] = c
    return colors


def alternative_greedy_coloring(g: ConflictGraph, order: Optional[Sequence[Vertex]] = None) -> dict[Vertex, int]:
    """Peel off greedy maximal independent sets in order; the i-th set gets color i."""
    order, nbr = _order_indices(g, order)
    colors: dict[Vertex, int] = {}
    alive = list(range(len(order)))
    color = 0
    while alive:
        color += 1
        chosen = 0
        rest = []
        for i in alive:
            if nbr[i] & chosen:
                rest.append(i)
            else:
                chosen |= 1 << i
                colors[order[i]] = color
        alive = rest
    return colors


def build_transaction_conflict_graph(txs: Sequence[Transaction]) -> ConflictGraph:
    """Vertices are transaction ids ordered by (gen_round, id); edges join colliding types."""
    ordered = sorted(txs, key=lambda t: (t.gen_round, t.id))
    edges = [
        (a.id, b.id) for a, b in combinations(ordered, 2) if a.ttype.mask & b.ttype.mask
    ]
    return ConflictGraph.from_edges((t.id for t in ordered), edges)


def build_block_conflict_graph(blocks: Sequence[tuple[int, TxType]], m: Optional[int] = None) -> ConflictGraph:
    """Vertices are (processor, type) pairs; edges join equal processors or colliding types.

    Vertices are ordered by processor, then by type bitstring.
    """
    if m is None:
        m = max((t.mask.bit_length() for _, t in blocks), default=1)
    ordered = sorted(set(blocks), key=lambda b: (b[0], b[1].bits(m)))
    edges = [
        (a, b) for a, b in combinations(ordered, 2) if a[0] == b[0] or a[1].mask & b[1].mask
    ]
    return ConflictGraph.from_edges(ordered, edges)
