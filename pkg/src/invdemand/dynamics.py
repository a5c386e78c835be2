"""Transport on the network: CFL-1 upwind scheme and the exact characteristics solution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from invdemand.network import NetworkTree

GRID_TOL = 1e-9


class GridMismatch(ValueError):
    pass


def _as_count(ratio: float, what: str) -> int:
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > GRID_TOL * max(1.0, ratio):
        raise GridMismatch(f"{what} = {ratio!r} is not a positive integer")
    return k


@dataclass(frozen=True)
class DiscretizationGrid:
    dt: float
    J: int
    steps: dict  # arc id -> L - 1, the number of cells along the arc
    arc_length: float

    @property
    def T(self) -> float:
        return (self.J - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.J) * self.dt

    def L(self, arc_id: int) -> int:
        return self.steps[arc_id] + 1

    def dx(self, arc_id: int) -> float:
        return self.arc_length / self.steps[arc_id]

    def positions(self, arc_id: int) -> np.ndarray:
        return np.arange(self.L(arc_id)) * self.dx(arc_id)

    def courant(self, net: NetworkTree, arc_id: int) -> float:
        return net.arc(arc_id).velocity * self.dt / self.dx(arc_id)

    def check(self, net: NetworkTree) -> None:
        if set(self.steps) != set(net.arc_ids):
            raise GridMismatch("grid and network have different arcs")
        if abs(self.arc_length - net.arc_length) > GRID_TOL * net.arc_length:
            raise GridMismatch("grid and network disagree on the arc length")
        for i in net.arc_ids:
            expected = net.arc_length / (net.arc(i).velocity * self.dt)
            if abs(self.steps[i] - expected) > GRID_TOL * max(1.0, expected):
                raise GridMismatch(f"arc {i}: {self.steps[i]} cells but omega/(lambda dt) = {expected!r}")


def make_grid(net: NetworkTree, dt: float, T: float) -> DiscretizationGrid:
    """Grid with ``dx = lambda * dt`` on every arc; ``dt`` must divide ``T`` and every travel time."""
    if not dt > 0:
        raise GridMismatch(f"time step must be positive, got {dt}")
    if not T > 0:
        raise GridMismatch(f"time horizon must be positive, got {T}")
    J = _as_count(T / dt, "T/dt") + 1
    steps = {i: _as_count(net.travel_time(i) / dt, f"omega/(lambda dt) on arc {i}") for i in net.arc_ids}
    return DiscretizationGrid(float(dt), J, steps, net.arc_length)


@dataclass
class DiscreteState:
    """Densities ``z[arc][j, q]``; a trailing axis holds independent runs when batched."""

    grid: DiscretizationGrid
    z: dict

    def __getitem__(self, arc_id: int) -> np.ndarray:
        return self.z[arc_id]

    def end_trace(self, arc_id: int) -> np.ndarray:
        return self.z[arc_id][:, -1]

    def flatten(self) -> np.ndarray:
        """Concatenate arcs in ascending id order, each in (time, space) row-major order."""
        parts = []
        for i in sorted(self.z):
            a = self.z[i]
            parts.append(a.reshape((a.shape[0] * a.shape[1],) + a.shape[2:]))
        return np.concatenate(parts, axis=0)

    @property
    def size(self) -> int:
        return sum(self.grid.J * self.grid.L(i) for i in self.z)


def _check_inflow(grid: DiscretizationGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[:1] != (grid.J,):
        raise GridMismatch(f"inflow has {u.shape[0] if u.ndim else 0} samples, grid has J = {grid.J}")
    if not np.all(np.isfinite(u)):
        raise ValueError("inflow has non-finite entries")
    return u


def simulate_upwind(net: NetworkTree, grid: DiscretizationGrid, u) -> DiscreteState:
    """Left-sided upwind scheme with the junction coupling applied at every time level.

    ``u`` holds the inflow samples ``u(t_j)``; shape ``(J,)`` or ``(J, k)``
    for ``k`` simultaneous inputs.
    """
    grid.check(net)
    u = _check_inflow(grid, u)
    batch = u.shape[1:]
    z = {a.id: np.zeros((grid.J, grid.L(a.id)) + batch) for a in net.arcs}
    c = {a.id: grid.courant(net, a.id) for a in net.arcs}
    lam = {a.id: a.velocity for a in net.arcs}
    for j in range(grid.J):
        for a in net.arcs:
            zi = z[a.id]
            if j > 0:
                prev = zi[j - 1]
                zi[j, 1:] = prev[1:] - c[a.id] * (prev[1:] - prev[:-1])
            if a.start == 0:
                zi[j, 0] = u[j] / a.velocity
            else:
                zi[j, 0] = a.alpha * lam[a.start] / a.velocity * z[a.start][j, -1]
    return DiscreteState(grid, z)


Signal = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _sample(grid: DiscretizationGrid, u: Signal, s: np.ndarray) -> np.ndarray:
    """Evaluate the inflow at times ``s``, extended by zero before ``t = 0``."""
    if callable(u):
        out = np.asarray(u(np.maximum(s, 0.0)), dtype=float)
        return np.where(s >= -GRID_TOL * grid.dt, out, 0.0)
    k = s / grid.dt
    kr = np.rint(k)
    on_grid = np.abs(k - kr) <= GRID_TOL * np.maximum(1.0, np.abs(k))
    idx = np.where(on_grid, kr, np.floor(k)).astype(int)
    frac = np.where(on_grid, 0.0, k - idx)
    ext = np.concatenate([u, [0.0]])  # index J maps to zero for out-of-range lookups
    lo = np.where((idx >= 0) & (idx < grid.J), idx, grid.J)
    hi = np.where((idx + 1 >= 0) & (idx + 1 < grid.J), idx + 1, grid.J)
    vals = (1.0 - frac) * ext[lo] + frac * ext[hi]
    return np.where(k >= -GRID_TOL, vals, 0.0)


def characteristics_state(net: NetworkTree, grid: DiscretizationGrid, u: Signal) -> DiscreteState:
    """Exact transport solution sampled on the grid.

    On each arc the density at ``(t, x)`` is the inflow at the time the
    characteristic through ``(t, x)`` left the source, scaled by the gains
    ``alpha * lambda_upstream / lambda_downstream`` picked up at each junction.
    ``u`` is either the sample vector ``u(t_j)`` or a callable of time.
    """
    grid.check(net)
    if not callable(u):
        u = _check_inflow(grid, u)
        if u.ndim != 1:
            raise ValueError("characteristics_state takes a single inflow signal")
    t = grid.times
    z = {}
    for a in net.arcs:
        path = net.path_from_source(a.id)
        gain = 1.0 / net.arc(path[0]).velocity
        delay = 0.0
        for up, down in zip(path[:-1], path[1:]):
            gain *= net.arc(down).alpha * net.arc(up).velocity / net.arc(down).velocity
            delay += net.arc_length / net.arc(up).velocity
        x = grid.positions(a.id)
        s = t[:, None] - delay - x[None, :] / a.velocity
        z[a.id] = gain * _sample(grid, u, s)
    return DiscreteState(grid, z)
