"""Dense linear-algebra helpers shared by the solver modules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve


class NotSPD(np.linalg.LinAlgError):
    """Raised when a matrix handed to :func:`spd_factorize` is not symmetric positive definite."""


@dataclass(frozen=True)
class Factorization:
    """Lower Cholesky factor ``R`` with ``A = R @ R.T``."""

    factor: np.ndarray
    reconstruction_error: float

    @property
    def size(self) -> int:
        return self.factor.shape[0]


def spd_factorize(A: np.ndarray, sym_tol: float = 1e-10) -> Factorization:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSPD(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotSPD("matrix has non-finite entries")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > sym_tol * scale:
        raise NotSPD("matrix is not symmetric")
    try:
        R = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc
    err = float(np.abs(R @ R.T - A).max(initial=0.0))
    if err > 1e-10 * scale:
        raise NotSPD(f"reconstruction error {err:.3e} too large")
    return Factorization(R, err)


def spd_solve(fact: Factorization, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for a vector or a matrix of right-hand sides."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fact.size:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {fact.size}")
    return cho_solve((fact.factor, True), b)


def operator_norm_estimate(H: np.ndarray, iters: int = 1000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Returns the Rayleigh quotient of the final iterate, which never exceeds
    the true value.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(iters):
        y = H @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return float(max(x @ (H @ x), 0.0))


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    e = np.zeros_like(x)
    for k in range(x.size):
        e.flat[k] = h
        grad.flat[k] = (fun(x + e) - fun(x - e)) / (2.0 * h)
        e.flat[k] = 0.0
    return grad
