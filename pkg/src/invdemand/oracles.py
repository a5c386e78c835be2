"""Cross-checks run by ``invdemand oracle``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from invdemand.dynamics import DiscretizationGrid, characteristics_state, simulate_upwind
from invdemand.network import NetworkTree
from invdemand.upper_level import BlockSimplexQP, solve_block_simplex_qp


@dataclass
class OracleResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.value <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def junction_imbalance(net: NetworkTree, state) -> float:
    """Largest flux mismatch over inner vertices and time steps."""
    worst = 0.0
    for v in net.inner_vertices:
        inflow = net.arc(v).velocity * state[v][:, -1]
        outflow = sum(net.arc(k).velocity * state[k][:, 0] for k in net.outgoing(v))
        worst = max(worst, float(np.abs(outflow - inflow).max()))
    return worst


def scheme_oracles(net: NetworkTree, grid: DiscretizationGrid, runs: int = 50, seed: int = 0) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    exact, balance = 0.0, 0.0
    for _ in range(runs):
        u = rng.standard_normal(grid.J)
        up = simulate_upwind(net, grid, u)
        ch = characteristics_state(net, grid, u)
        exact = max(exact, max(float(np.abs(up[a] - ch[a]).max()) for a in net.arc_ids))
        balance = max(balance, junction_imbalance(net, up))
    return [
        OracleResult(f"upwind vs characteristics, {runs} random inflows", exact, 1e-12),
        OracleResult(f"junction flux balance, {runs} random inflows", balance, 1e-12),
    ]


def grid_search_min(qp: BlockSimplexQP, step: float = 1e-3) -> float:
    """Brute-force minimum over blocks of size 2 on a uniform grid."""
    if qp.block_size != 2:
        raise ValueError("grid search is implemented for blocks of size 2")
    s = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    per_block = np.stack([s, 1.0 - s], axis=1)
    best = np.inf
    if qp.n_blocks == 1:
        pts = per_block
    else:
        grids = np.meshgrid(*([np.arange(len(s))] * qp.n_blocks), indexing="ij")
        pts = np.concatenate([per_block[g.ravel()] for g in grids], axis=1)
    for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
        vals = 0.5 * np.einsum("ij,jk,ik->i", chunk, qp.H, chunk) + chunk @ qp.g + qp.c
        best = min(best, float(vals.min()))
    return best


def random_small_qp(rng: np.random.Generator, n_blocks: int) -> BlockSimplexQP:
    """Random convex instance with blocks of size 2, scaled so the grid search is accurate to ~1e-7."""
    d = 2 * n_blocks
    X = rng.standard_normal((d, d)) * (rng.random((1, d)) < 0.8)
    H = X.T @ X
    lmax = np.linalg.eigvalsh(H).max()
    if lmax > 0:
        H /= lmax
    g = rng.standard_normal(d)
    return BlockSimplexQP(H, g, 0.0, n_blocks, 2)


def qp_oracles(instances: int = 20, seed: int = 0, tol: float = 1e-8) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    gap = 0.0
    for k in range(instances):
        qp = random_small_qp(rng, 1 + k % 2)
        _, diag = solve_block_simplex_qp(qp, tol=tol)
        gap = max(gap, abs(diag.objective - grid_search_min(qp)))
    return [OracleResult(f"QP solver vs grid search, {instances} instances", gap, 1e-6)]

