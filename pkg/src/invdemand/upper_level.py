"""Reconstruction of demand weights as a QP over a product of simplices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from invdemand.dynamics import DiscreteState, simulate_upwind
from invdemand.lower_level import LowerLevelSystem, reduced_map, solve_lower_level
from invdemand.numerics import operator_norm_estimate
from invdemand.operators import ObservationOperator, apply_observation, state_matrix


class DimensionMismatch(ValueError):
    pass


class MaxIterExceeded(RuntimeWarning):
    pass


@dataclass
class ObservationSet:
    inflows: np.ndarray  # (p, J)
    states: list  # p DiscreteState objects

    @property
    def p(self) -> int:
        return len(self.states)


def generate_observations(
    sys: LowerLevelSystem,
    beta_rows,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ObservationSet:
    """Optimal inflow and resulting state for each weight row.

    With ``noise > 0`` independent Gaussian perturbations of that standard
    deviation are added to the inflow and to every state entry.
    """
    rows = np.atleast_2d(np.asarray(beta_rows, dtype=float))
    if rows.shape[1] != sys.n_params:
        raise DimensionMismatch(f"weight rows have {rows.shape[1]} entries, expected {sys.n_params}")
    if noise > 0 and rng is None:
        rng = np.random.default_rng(0)
    inflows, states = [], []
    for beta in rows:
        u = solve_lower_level(sys, beta)
        state = simulate_upwind(sys.net, sys.grid, u)
        if noise > 0:
            u = u + noise * rng.standard_normal(u.shape)
            state = DiscreteState(
                state.grid, {a: z + noise * rng.standard_normal(z.shape) for a, z in state.z.items()}
            )
        inflows.append(u)
        states.append(state)
    return ObservationSet(np.array(inflows), states)


@dataclass(frozen=True)
class BlockSimplexQP:
    """``min 1/2 b^T H b + g^T b + c`` with every block of ``block_size`` entries in the simplex."""

    H: np.ndarray
    g: np.ndarray
    c: float
    n_blocks: int
    block_size: int

    def __post_init__(self):
        d = self.n_blocks * self.block_size
        if self.H.shape != (d, d) or self.g.shape != (d,):
            raise DimensionMismatch(
                f"H {self.H.shape} and g {self.g.shape} do not match {self.n_blocks} blocks of {self.block_size}"
            )

    @property
    def dim(self) -> int:
        return self.n_blocks * self.block_size

    def objective(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return float(0.5 * beta @ self.H @ beta + self.g @ beta + self.c)

    def gradient(self, beta) -> np.ndarray:
        return self.H @ beta + self.g

    def blocks(self, beta) -> np.ndarray:
        return np.asarray(beta).reshape(self.n_blocks, self.block_size)

    def project(self, beta) -> np.ndarray:
        return np.concatenate([project_simplex(b) for b in self.blocks(beta)])

    def is_feasible(self, beta, tol: float = 1e-12) -> bool:
        b = self.blocks(beta)
        return bool(np.all(b >= -tol) and np.all(np.abs(b.sum(axis=1) - 1.0) <= tol))

    def tangent_basis(self) -> np.ndarray:
        """Orthonormal basis of directions keeping every block sum fixed."""
        E = np.kron(np.eye(self.n_blocks), np.ones((1, self.block_size)))
        return null_space(E)

    def min_feasible_eigenvalue(self) -> float:
        """Smallest eigenvalue of H on the tangent space of the feasible set."""
        Z = self.tangent_basis()
        if Z.shape[1] == 0:
            return float("inf")
        return float(np.linalg.eigvalsh(Z.T @ self.H @ Z).min())


def assemble_upper_qp(
    sys: LowerLevelSystem,
    obs: ObservationSet,
    obsop: ObservationOperator,
    psi: np.ndarray | None = None,
) -> BlockSimplexQP:
    """Reduced objective ``1/2 sum_r |G b - y_r|^2 + |K b - u_r|^2`` as a QP.

    ``K = W A^{-1} B`` gives the optimal inflow on the observed time window
    ``W`` (all times unless the operator is windowed), ``G`` the observed
    state it generates, ``y_r`` and ``W u_r`` the observed data.
    """
    if psi is None:
        psi = reduced_map(sys)
    if psi.shape != (sys.grid.J, sys.n_params):
        raise DimensionMismatch(f"reduced map has shape {psi.shape}")
    if obsop.grid != sys.grid:
        raise DimensionMismatch("observation operator lives on another grid")
    if obs.inflows.shape[1:] != (sys.grid.J,):
        raise DimensionMismatch("observed inflows do not match the time grid")

    G = obsop.matrix @ (state_matrix(sys.net, sys.grid) @ psi)
    w = obsop.inflow_mask.astype(float)
    K = w[:, None] * psi
    p = obs.p
    H = p * (G.T @ G + K.T @ K)
    H = 0.5 * (H + H.T)
    g = np.zeros(sys.n_params)
    c = 0.0
    for u_o, z_o in zip(obs.inflows, obs.states):
        y = apply_observation(obsop, z_o)
        uw = w * u_o
        g -= G.T @ y + K.T @ uw
        c += 0.5 * (float(y @ y) + float(uw @ uw))
    return BlockSimplexQP(H, g, c, len(sys.arcs), sys.basis.m)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{b >= 0, sum(b) = 1}``.

    Michelot's fixed-point iteration: shift the currently positive entries so
    they sum to one and drop those that go nonpositive, until nothing changes.
    """
    v = np.asarray(v, dtype=float)
    active = np.ones(v.size, bool)
    while True:
        tau = (v[active].sum() - 1.0) / active.sum()
        keep = v > tau
        if np.array_equal(keep, active):
            break
        active = keep
    return np.maximum(v - tau, 0.0)


def kkt_residual(qp: BlockSimplexQP, beta, support_tol: float = 1e-10) -> float:
    """Largest violation of the simplex KKT conditions over all blocks.

    Within a block the gradient must attain its minimum on every entry in the
    support; the residual is how far a support entry sits above that minimum.
    """
    grad = qp.blocks(qp.gradient(beta))
    b = qp.blocks(beta)
    res = 0.0
    for gb, bb in zip(grad, b):
        supp = bb > support_tol
        if supp.any():
            res = max(res, float(gb[supp].max() - gb.min()))
    return res


@dataclass
class SolveDiagnostics:
    iterations: int
    objective: float
    kkt_residual: float
    kkt_tolerance: float
    converged: bool
    min_feasible_eigenvalue: float
    step_norm_estimate: float
    polished: bool = False


def _polish(qp: BlockSimplexQP, beta: np.ndarray, support_tol: float) -> np.ndarray | None:
    """Solve the equality-constrained QP on the support of ``beta``.

    The correction is the minimum-norm solution of the KKT system, so in the
    degenerate case it stays as close to ``beta`` as the optimal face allows.
    """
    supp = beta > support_tol
    idx = np.flatnonzero(supp)
    nb, m = qp.n_blocks, qp.block_size
    E = np.kron(np.eye(nb), np.ones((1, m)))[:, idx]
    Hs = qp.H[np.ix_(idx, idx)]
    n = idx.size
    kkt = np.block([[Hs, E.T], [E, np.zeros((nb, nb))]])
    rhs = np.concatenate([-(qp.H @ beta + qp.g)[idx], 1.0 - qp.blocks(beta).sum(axis=1)])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    cand = np.zeros_like(beta)
    cand[idx] = beta[idx] + sol[:n]
    if cand.min() < -1e-12:
        return None
    return qp.project(cand)


def solve_block_simplex_qp(
    qp: BlockSimplexQP,
    tol: float = 1e-8,
    max_iter: int = 200_000,
    x0=None,
    polish_every: int = 100,
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Accelerated projected gradient with restarts and support polishing.

    Stops once :func:`kkt_residual` is at most ``tol * max(1, |g|_inf)``,
    which certifies global optimality since the problem is convex.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lmax = operator_norm_estimate(qp.H)
    # power iteration underestimates; pad the Lipschitz constant slightly
    lip = 1.01 * lmax if lmax > 0 else 1.0
    step = 1.0 / lip
    kkt_tol = tol * max(1.0, float(np.abs(qp.g).max(initial=0.0)))
    support_tol = 1e-10

    x = qp.project(np.full(qp.dim, 1.0 / qp.block_size) if x0 is None else np.asarray(x0, float))
    y, t = x.copy(), 1.0
    fx = qp.objective(x)
    best, fbest = x.copy(), fx
    polished = False

    it = 0
    for it in range(1, max_iter + 1):
        x_new = qp.project(y - step * qp.gradient(y))
        f_new = qp.objective(x_new)
        if f_new > fx:
            # adaptive restart: drop momentum when the objective goes up
            y, t = x.copy(), 1.0
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, fx, t = x_new, f_new, t_new
            if fx < fbest:
                best, fbest = x.copy(), fx

        if it % polish_every == 0 or it == max_iter:
            res = kkt_residual(qp, best, support_tol)
            cand = _polish(qp, best, support_tol)
            if cand is not None and qp.objective(cand) <= fbest + 1e-12 * max(1.0, abs(fbest)):
                res_c = kkt_residual(qp, cand, support_tol)
                if res_c < res:
                    best, fbest, res, polished = cand, qp.objective(cand), res_c, True
                    x, fx, y, t = best.copy(), fbest, best.copy(), 1.0
            if res <= kkt_tol:
                break

    res = kkt_residual(qp, best, support_tol)
    converged = res <= kkt_tol
    if not converged:
        warnings.warn(
            f"block-simplex QP stopped after {it} iterations with KKT residual {res:.3e}",
            MaxIterExceeded,
            stacklevel=2,
        )
    diag = SolveDiagnostics(
        iterations=it,
        objective=qp.objective(best),
        kkt_residual=res,
        kkt_tolerance=kkt_tol,
        converged=converged,
        min_feasible_eigenvalue=qp.min_feasible_eigenvalue(),
        step_norm_estimate=lmax,
        polished=polished,
    )
    return best, diag
