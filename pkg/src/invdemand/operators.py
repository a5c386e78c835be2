"""Explicit linear maps: inflow-to-arc-end operators and observation operators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from invdemand.dynamics import DiscreteState, DiscretizationGrid, GridMismatch, simulate_upwind
from invdemand.network import NetworkTree, demand_arcs

KINDS = ("C1", "C2", "C3")


class BadKappa(ValueError):
    pass


class BadWindow(ValueError):
    pass


def impulse_response(net: NetworkTree, grid: DiscretizationGrid) -> DiscreteState:
    """Batched state whose trailing index ``j`` is the response to a unit inflow at ``t_j``."""
    return simulate_upwind(net, grid, np.eye(grid.J))


def state_matrix(net: NetworkTree, grid: DiscretizationGrid) -> np.ndarray:
    """Matrix taking inflow samples to the flattened network state."""
    return impulse_response(net, grid).flatten()


@dataclass(frozen=True)
class ArcEndOperator:
    arc: int
    matrix: np.ndarray  # (J, J); entry (r, j) is the effect of u_j on z[arc][r, L-1]
    delay: int
    gain: float


def assemble_arc_end_operator(
    net: NetworkTree,
    grid: DiscretizationGrid,
    arc_id: int,
    response: DiscreteState | None = None,
) -> ArcEndOperator:
    if response is None:
        response = impulse_response(net, grid)
    elif response.grid != grid:
        raise GridMismatch("impulse response was computed on another grid")
    M = np.array(response.end_trace(arc_id))
    delay = sum(grid.steps[a] for a in net.path_from_source(arc_id))
    col = M[:, 0]
    gain = float(col[delay]) if delay < grid.J else 0.0
    return ArcEndOperator(arc_id, M, delay, gain)


@dataclass(frozen=True)
class ObservationOperator:
    kind: str
    kappa: dict  # arc id -> weight
    t_hat: float
    arcs: np.ndarray
    js: np.ndarray
    qs: np.ndarray
    weights: np.ndarray
    matrix: sp.csr_matrix  # rows x flattened state size
    grid: DiscretizationGrid
    # times at which the inflow misfit counts; C3 confines it to [t_hat, T] as well
    inflow_mask: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.weights)


def _kappa_map(net: NetworkTree, kappa) -> dict:
    if isinstance(kappa, Mapping):
        kap = {int(k): float(v) for k, v in kappa.items()}
        unknown = set(kap) - set(net.arc_ids)
        if unknown:
            raise BadKappa(f"kappa names unknown arcs {sorted(unknown)}")
        kap = {i: kap.get(i, 0.0) for i in net.arc_ids}
    else:
        vals = [float(v) for v in kappa]
        if len(vals) != net.n_arcs:
            raise BadKappa(f"kappa needs {net.n_arcs} entries, got {len(vals)}")
        kap = dict(zip(net.arc_ids, vals))
    bad = {i: v for i, v in kap.items() if not (v >= 0 and np.isfinite(v))}
    if bad:
        raise BadKappa(f"kappa must be finite and nonnegative, got {bad}")
    return kap


def build_observation(
    net: NetworkTree,
    grid: DiscretizationGrid,
    kind: str,
    kappa: Sequence[float] | Mapping[int, float],
    t_hat: float = 0.0,
) -> ObservationOperator:
    """Row selection of the state, scaled per arc by ``kappa``.

    C1 observes the first point of the source arc and the last point of each
    demand arc. C2 adds every point with ``x >= omega/2`` on demand arcs.
    C3 is C1 restricted to ``t >= t_hat``, and the inflow misfit of the
    reconstruction objective is restricted to the same window.
    """
    grid.check(net)
    if kind not in KINDS:
        raise ValueError(f"unknown observation kind {kind!r}; expected one of {KINDS}")
    kap = _kappa_map(net, kappa)
    t_hat = float(t_hat)
    if kind == "C3" and not 0 <= t_hat < grid.T:
        raise BadWindow(f"window start {t_hat} must lie in [0, T) = [0, {grid.T})")

    times = grid.times
    eps = 1e-9 * grid.dt
    t_keep = times >= t_hat - eps if kind == "C3" else np.ones(grid.J, bool)
    demand = set(demand_arcs(net))
    offsets, pos = {}, 0
    for i in net.arc_ids:
        offsets[i] = pos
        pos += grid.J * grid.L(i)

    rows = []
    for i in net.arc_ids:
        if kap[i] == 0.0:
            continue
        L = grid.L(i)
        q_keep = np.zeros(L, bool)
        if i == net.source_arc:
            q_keep[0] = True
        if i in demand:
            q_keep[-1] = True
            if kind == "C2":
                q_keep |= grid.positions(i) >= net.arc_length / 2 - 1e-12 * net.arc_length
        for j in np.flatnonzero(t_keep):
            for q in np.flatnonzero(q_keep):
                rows.append((i, j, q, kap[i]))

    if rows:
        arcs, js, qs, w = (np.array(c) for c in zip(*rows))
        arcs, js, qs = arcs.astype(int), js.astype(int), qs.astype(int)
        w = w.astype(float)
        cols = np.array([offsets[a] + j * grid.L(a) + q for a, j, q in zip(arcs, js, qs)])
    else:
        arcs = js = qs = cols = np.zeros(0, int)
        w = np.zeros(0)
    mat = sp.csr_matrix((w, (np.arange(len(w)), cols)), shape=(len(w), pos))
    return ObservationOperator(kind, kap, t_hat, arcs, js, qs, w, mat, grid, t_keep)


def apply_observation(obs: ObservationOperator, state: DiscreteState) -> np.ndarray:
    if state.grid != obs.grid:
        raise GridMismatch("state and observation operator live on different grids")
    return obs.matrix @ state.flatten()
