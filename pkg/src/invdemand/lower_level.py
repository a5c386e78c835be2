"""Discrete lower-level problem: optimal inflow for given demand weights.

For weights ``beta`` the inflow minimizing

    f_h(u, beta) = 1/2 sum_i |M_i u - sum_l beta_il D_il|^2 + sigma/2 |u|^2

solves ``A u = B beta`` with ``A = sum_i M_i^T M_i + sigma I`` and
``B = [M_i^T D_i1 ... M_i^T D_im]_i``, where ``M_i`` maps the inflow to the
density at the end of demand arc ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from invdemand.dynamics import DiscretizationGrid, GridMismatch
from invdemand.network import NetworkTree, demand_arcs
from invdemand.numerics import Factorization, NotSPD, spd_factorize, spd_solve
from invdemand.operators import ArcEndOperator, assemble_arc_end_operator, impulse_response


class BadBreakpoints(ValueError):
    pass


class FactorizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DemandBasis:
    arcs: tuple  # demand arcs, ascending
    vectors: dict  # arc id -> (m, J) array, one sampled profile per row
    breakpoints: tuple
    levels: dict  # arc id -> (m, pieces) array

    @property
    def m(self) -> int:
        return next(iter(self.vectors.values())).shape[0]

    def demand(self, arc_id: int, weights) -> np.ndarray:
        return np.asarray(weights, dtype=float) @ self.vectors[arc_id]


def sample_demand_basis(
    breakpoints: Sequence[float],
    levels: Mapping[int, Sequence[Sequence[float]]],
    grid: DiscretizationGrid,
) -> DemandBasis:
    """Sample piecewise-constant profiles at the grid times.

    Pieces are left-closed and right-open except the last, which includes ``T``.
    """
    bp = np.asarray(breakpoints, dtype=float)
    tol = 1e-9 * grid.dt
    if bp.ndim != 1 or bp.size < 2:
        raise BadBreakpoints("need at least two breakpoints")
    if np.any(np.diff(bp) <= 0):
        raise BadBreakpoints(f"breakpoints must increase strictly: {bp.tolist()}")
    if abs(bp[0]) > tol or abs(bp[-1] - grid.T) > tol:
        raise BadBreakpoints(f"breakpoints must run from 0 to T = {grid.T}, got {bp[0]} .. {bp[-1]}")
    n_pieces = bp.size - 1
    piece = np.searchsorted(bp, grid.times + tol, side="right") - 1
    piece = np.clip(piece, 0, n_pieces - 1)

    vectors, lv = {}, {}
    ms = set()
    for arc_id in sorted(int(k) for k in levels):
        delta = np.asarray(levels[arc_id], dtype=float)
        if delta.ndim != 2 or delta.shape[1] != n_pieces:
            raise BadBreakpoints(
                f"levels for arc {arc_id} have shape {delta.shape}, expected (m, {n_pieces})"
            )
        if delta.shape[0] < 2:
            raise BadBreakpoints(f"arc {arc_id} needs at least two profiles")
        ms.add(delta.shape[0])
        lv[arc_id] = delta
        vectors[arc_id] = delta[:, piece]
    if not vectors:
        raise BadBreakpoints("no demand profiles given")
    if len(ms) != 1:
        raise BadBreakpoints(f"all arcs need the same number of profiles, got {sorted(ms)}")
    return DemandBasis(tuple(vectors), vectors, tuple(bp.tolist()), lv)


@dataclass(frozen=True)
class LowerLevelSystem:
    net: NetworkTree
    grid: DiscretizationGrid
    basis: DemandBasis
    sigma: float
    operators: dict  # demand arc -> ArcEndOperator
    A: np.ndarray
    B: np.ndarray
    factorization: Factorization

    @property
    def arcs(self) -> tuple:
        return self.basis.arcs

    @property
    def n_params(self) -> int:
        return self.B.shape[1]

    def split(self, beta) -> dict:
        """Block vector -> {arc: weights}."""
        beta = np.asarray(beta, dtype=float)
        m = self.basis.m
        return {a: beta[k * m:(k + 1) * m] for k, a in enumerate(self.arcs)}

    def objective(self, u, beta) -> float:
        total = 0.5 * self.sigma * float(np.dot(u, u))
        for a, w in self.split(beta).items():
            r = self.operators[a].matrix @ u - self.basis.demand(a, w)
            total += 0.5 * float(r @ r)
        return total

    def gradient(self, u, beta) -> np.ndarray:
        return self.A @ u - self.B @ np.asarray(beta, dtype=float)


def assemble_lower_system(
    net: NetworkTree,
    grid: DiscretizationGrid,
    basis: DemandBasis,
    sigma: float,
    operators: Mapping[int, ArcEndOperator] | None = None,
) -> LowerLevelSystem:
    if not sigma > 0:
        raise ValueError(f"regularization sigma must be positive, got {sigma}")
    grid.check(net)
    arcs = tuple(demand_arcs(net))
    if basis.arcs != arcs:
        raise ValueError(f"demand basis covers arcs {basis.arcs}, network demand arcs are {arcs}")
    if any(v.shape[1] != grid.J for v in basis.vectors.values()):
        raise GridMismatch("demand basis was sampled on another grid")
    if operators is None:
        response = impulse_response(net, grid)
        operators = {a: assemble_arc_end_operator(net, grid, a, response) for a in arcs}

    A = sigma * np.eye(grid.J)
    blocks = []
    for a in arcs:
        M = operators[a].matrix
        A += M.T @ M
        blocks.append(M.T @ basis.vectors[a].T)
    B = np.hstack(blocks)
    try:
        fact = spd_factorize(A)
    except NotSPD as exc:
        raise FactorizationError(f"lower-level matrix is not SPD: {exc}") from exc
    return LowerLevelSystem(net, grid, basis, float(sigma), dict(operators), A, B, fact)


def solve_lower_level(sys: LowerLevelSystem, beta) -> np.ndarray:
    """Optimal inflow for weights ``beta``; linear in ``beta``, no simplex check."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != sys.n_params:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {sys.n_params}")
    return spd_solve(sys.factorization, sys.B @ beta)


def reduced_map(sys: LowerLevelSystem) -> np.ndarray:
    """``A^{-1} B``: the linear map from weights to optimal inflow."""
    return spd_solve(sys.factorization, sys.B)
