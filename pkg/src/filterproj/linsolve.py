"""Matrix-free Krylov solvers and a dense direct oracle.

Operators are plain callables mapping an ndarray to an ndarray of the same
shape.  Residual norms are Euclidean norms of the raw arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SolverError(RuntimeError):
    """A linear solve did not meet its tolerance contract."""


class CompatibilityError(ValueError):
    """Right-hand side of a singular system is outside the range of the operator."""


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int | None = None  # None -> 10 * number of unknowns

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def iteration_cap(self, n: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * n


@dataclass
class SolveStats:
    iterations: int = 0
    final_residual: float = 0.0
    converged: bool = True
    restarts: int = 0
    restart_residuals: list = field(default_factory=list)


def _dot(a, b):
    return float(np.sum(np.multiply(a, b).ravel()))


def _norm(a):
    return float(np.sqrt(_dot(a, a)))


def _target(b, cfg):
    return max(cfg.rel_tol * _norm(b), cfg.abs_tol)


def cg_solve(apply_A, b, cfg: SolverConfig = SolverConfig(), x0=None, mask=None,
             singular=False):
    """Conjugate gradients for symmetric positive (semi)definite ``apply_A``.

    ``mask`` restricts the unknowns (entries outside it stay zero).  With
    ``singular=True`` the operator is taken to have the constant vector as
    null space: the right-hand side must have zero mean and every iterate is
    kept mean-free.  Convergence is always confirmed on the recomputed true
    residual; if the recursion drifts, CG restarts from the current iterate.
    """
    b = np.asarray(b, dtype=float)
    if mask is not None:
        b = np.where(mask, b, 0.0)

    def A(x):
        y = apply_A(x)
        if mask is not None:
            y = np.where(mask, y, 0.0)
        return y

    def proj(x):
        return x - np.mean(x) if singular else x

    if singular:
        bmean = float(np.mean(b))
        if abs(bmean) * np.sqrt(b.size) > max(1e-12 * _norm(b), 1e-300):
            raise CompatibilityError(f"right-hand side has non-zero mean {bmean:.3e}")
        b = proj(b)

    n = int(mask.sum()) if mask is not None else b.size
    cap = cfg.iteration_cap(n)
    target = _target(b, cfg)
    stats = SolveStats()
    x = np.zeros_like(b) if x0 is None else proj(np.array(x0, dtype=float))
    if mask is not None:
        x = np.where(mask, x, 0.0)

    while True:
        r = proj(b - A(x))
        rnorm = _norm(r)
        stats.restart_residuals.append(rnorm)
        if rnorm <= target:
            stats.final_residual = rnorm
            return x, stats
        if stats.iterations >= cap:
            stats.final_residual = rnorm
            stats.converged = False
            return x, stats
        p = r.copy()
        rr = rnorm * rnorm
        start = stats.iterations
        while stats.iterations < cap:
            Ap = proj(A(p))
            pAp = _dot(p, Ap)
            if pAp <= 0.0:
                break
            alpha = rr / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            stats.iterations += 1
            rr_new = _dot(r, r)
            if np.sqrt(rr_new) <= target:
                break
            p = r + (rr_new / rr) * p
            rr = rr_new
        x = proj(x)
        if stats.iterations == start:
            stats.final_residual = rnorm
            stats.converged = False
            return x, stats
        stats.restarts += 1


def bicgstab_solve(apply_A, b, cfg: SolverConfig = SolverConfig(), x0=None, mask=None):
    """BiCGStab for non-symmetric operators, with the same contract as :func:`cg_solve`."""
    b = np.asarray(b, dtype=float)
    if mask is not None:
        b = np.where(mask, b, 0.0)

    def A(x):
        y = apply_A(x)
        if mask is not None:
            y = np.where(mask, y, 0.0)
        return y

    n = int(mask.sum()) if mask is not None else b.size
    cap = cfg.iteration_cap(n)
    target = _target(b, cfg)
    stats = SolveStats()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if mask is not None:
        x = np.where(mask, x, 0.0)

    while True:
        r = b - A(x)
        rnorm = _norm(r)
        stats.restart_residuals.append(rnorm)
        if rnorm <= target:
            stats.final_residual = rnorm
            return x, stats
        if stats.iterations >= cap:
            stats.final_residual = rnorm
            stats.converged = False
            return x, stats
        r_hat = r.copy()
        start = stats.iterations
        rho = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        while stats.iterations < cap:
            rho_new = _dot(r_hat, r)
            if rho_new == 0.0:
                break
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            v = A(p)
            denom = _dot(r_hat, v)
            if denom == 0.0:
                break
            alpha = rho_new / denom
            s = r - alpha * v
            stats.iterations += 1
            if _norm(s) <= target:
                x = x + alpha * p
                break
            t = A(s)
            tt = _dot(t, t)
            if tt == 0.0:
                x = x + alpha * p
                break
            omega = _dot(t, s) / tt
            x = x + alpha * p + omega * s
            r = s - omega * t
            rho = rho_new
            if _norm(r) <= target or omega == 0.0:
                break
        if stats.iterations == start:
            stats.final_residual = rnorm
            stats.converged = False
            return x, stats
        stats.restarts += 1


def assemble(apply_A, shape, mask=None) -> np.ndarray:
    """Dense matrix of ``apply_A`` restricted to the unknowns selected by ``mask``."""
    idx = np.flatnonzero(np.ones(shape, bool) if mask is None else mask)
    if idx.size > 4096:
        raise ValueError(f"dense assembly limited to 4096 unknowns, got {idx.size}")
    M = np.empty((idx.size, idx.size))
    e = np.zeros(shape)
    flat = e.reshape(-1)
    for k, col in enumerate(idx):
        flat[col] = 1.0
        M[:, k] = np.asarray(apply_A(e)).reshape(-1)[idx]
        flat[col] = 0.0
    return M


def dense_solve(assemble_A, b, mask=None, singular=False) -> np.ndarray:
    """Direct LU solve used as an oracle.

    ``assemble_A`` is either a dense matrix or a linear operator callable
    (assembled here on the unknowns of ``mask``).  For ``singular=True``
    (pure-Neumann Poisson) the constant null space is checked to be exactly
    one-dimensional and the mean-free restricted system is solved.
    """
    b = np.asarray(b, dtype=float)
    shape = b.shape
    idx = np.flatnonzero(np.ones(shape, bool) if mask is None else mask)
    if callable(assemble_A):
        M = assemble(assemble_A, shape, mask)
    else:
        M = np.atleast_2d(np.asarray(assemble_A, dtype=float))
    rhs = b.reshape(-1)[idx]
    if singular:
        null_dim = M.shape[0] - np.linalg.matrix_rank(M)
        if null_dim != 1:
            raise np.linalg.LinAlgError(f"expected a 1-dimensional null space, found {null_dim}")
        if abs(rhs.mean()) > 1e-12 * max(np.abs(rhs).max(), 1e-300):
            raise CompatibilityError(
                f"compatibility violation: right-hand side mean {rhs.mean():.3e} != 0")
        # bordered system enforcing a zero-mean solution
        n = M.shape[0]
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = M
        B[:n, n] = 1.0
        B[n, :n] = 1.0
        sol = scipy.linalg.solve(B, np.append(rhs, 0.0))[:n]
    else:
        sol = scipy.linalg.solve(M, rhs)
    out = np.zeros(b.size)
    out[idx] = sol
    return out.reshape(shape)
