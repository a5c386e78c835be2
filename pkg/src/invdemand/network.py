"""Directed tree networks with per-arc transport velocities.

Arcs are identified by the index of the vertex they end in, so arc ``i``
is the unique arc entering vertex ``v_i``. The source ``v_0`` is a leaf.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

ALPHA_TOL = 1e-12


class NetworkError(ValueError):
    pass


class CycleError(NetworkError):
    """The arc list does not describe a tree rooted at ``v_0``."""


class AlphaSumError(NetworkError):
    pass


class NonPositiveVelocity(NetworkError):
    pass


class SourceNotLeaf(NetworkError):
    pass


@dataclass(frozen=True)
class Arc:
    id: int
    start: int
    velocity: float
    # fraction of the flux at ``start`` routed into this arc; 1 for the source arc
    alpha: float = 1.0

    @property
    def end(self) -> int:
        return self.id


@dataclass(frozen=True)
class NetworkTree:
    arcs: tuple[Arc, ...]  # topological order, source arc first
    arc_length: float
    _by_id: dict = field(init=False, repr=False, compare=False)
    _children: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {a.id: a for a in self.arcs}
        children = defaultdict(list)
        for a in self.arcs:
            children[a.start].append(a.id)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_children", {v: tuple(sorted(c)) for v, c in children.items()})

    def arc(self, arc_id: int) -> Arc:
        return self._by_id[arc_id]

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def arc_ids(self) -> list[int]:
        """Arc ids in ascending order."""
        return sorted(self._by_id)

    @property
    def vertices(self) -> list[int]:
        return [0] + self.arc_ids

    @property
    def source_arc(self) -> int:
        return self.arcs[0].id

    def outgoing(self, vertex: int) -> tuple[int, ...]:
        return self._children.get(vertex, ())

    def parent(self, arc_id: int) -> int | None:
        """Arc feeding into ``arc_id``, or None for the source arc."""
        start = self._by_id[arc_id].start
        return None if start == 0 else start

    @property
    def inner_vertices(self) -> list[int]:
        return [v for v in self.arc_ids if self.outgoing(v)]

    @property
    def demand_vertices(self) -> list[int]:
        return [v for v in self.arc_ids if not self.outgoing(v)]

    def path_from_source(self, arc_id: int) -> tuple[int, ...]:
        path = [arc_id]
        while (p := self.parent(path[-1])) is not None:
            path.append(p)
        return tuple(reversed(path))

    def travel_time(self, arc_id: int) -> float:
        """Time for a signal to traverse a single arc."""
        return self.arc_length / self._by_id[arc_id].velocity

    def alpha_product(self, arc_id: int) -> float:
        prod = 1.0
        for a in self.path_from_source(arc_id):
            prod *= self._by_id[a].alpha
        return prod


def build_tree(
    spec: Iterable[tuple[int, int, float]],
    alpha: Mapping[int, float] | None = None,
    arc_length: float = 1.0,
) -> NetworkTree:
    """Validate an arc list and return a topologically ordered tree.

    ``spec`` holds ``(arc_id, start_vertex, velocity)`` triples. ``alpha``
    maps an arc id to its share of the flux leaving its start vertex; it may
    be omitted for arcs that are the only outflow of an inner vertex.
    """
    spec = [(int(i), int(s), float(lam)) for i, s, lam in spec]
    alpha = {int(k): float(v) for k, v in (alpha or {}).items()}
    if not spec:
        raise NetworkError("network needs at least one arc")
    if not arc_length > 0:
        raise NetworkError(f"arc length must be positive, got {arc_length}")

    ids = [i for i, _, _ in spec]
    if len(set(ids)) != len(ids):
        raise NetworkError(f"duplicate arc ids in {ids}")
    if any(i <= 0 for i in ids):
        raise CycleError("arc ids name their end vertex and must be >= 1 (v_0 is the source)")
    for i, _, lam in spec:
        if not lam > 0:
            raise NonPositiveVelocity(f"arc {i} has velocity {lam}")

    start_of = {i: s for i, s, _ in spec}
    for i, s in start_of.items():
        if s != 0 and s not in start_of:
            raise CycleError(f"arc {i} starts at vertex {s}, which no arc reaches")
        if s == i:
            raise CycleError(f"arc {i} is a self-loop")
    # each vertex has one incoming arc, so following parents either reaches v_0 or loops
    for i in ids:
        seen = {i}
        v = start_of[i]
        while v != 0:
            if v in seen:
                raise CycleError(f"arc {i} lies on a cycle")
            seen.add(v)
            v = start_of[v]

    children = defaultdict(list)
    for i, s in start_of.items():
        children[s].append(i)
    if len(children[0]) != 1:
        raise SourceNotLeaf(f"source v_0 must have exactly one outgoing arc, has {len(children[0])}")

    for v, outs in children.items():
        if v == 0:
            continue
        if len(outs) == 1 and outs[0] not in alpha:
            alpha[outs[0]] = 1.0
        missing = [k for k in outs if k not in alpha]
        if missing:
            raise AlphaSumError(f"no distribution weight for arcs {missing} at vertex {v}")
        for k in outs:
            if not 0 < alpha[k] <= 1:
                raise AlphaSumError(f"weight {alpha[k]} of arc {k} outside (0, 1]")
        total = sum(alpha[k] for k in outs)
        if abs(total - 1.0) > ALPHA_TOL:
            raise AlphaSumError(f"weights at vertex {v} sum to {total!r}, not 1")

    velocity = {i: lam for i, _, lam in spec}
    order, frontier = [], [children[0][0]]
    while frontier:
        i = frontier.pop(0)
        order.append(
            Arc(i, start_of[i], velocity[i], 1.0 if start_of[i] == 0 else alpha[i])
        )
        frontier.extend(sorted(children.get(i, [])))
    return NetworkTree(tuple(order), float(arc_length))


def demand_arcs(net: NetworkTree) -> list[int]:
    """Arcs ending in a vertex without outgoing arcs, ascending."""
    return net.demand_vertices
