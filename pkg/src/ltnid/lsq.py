"""Dense least-squares kernels: projection residuals and sign-constrained LS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import RankDeficiencyError, SolverError

RANK_RTOL = 1e-10


def orthonormal_basis(Q, rank_policy: str = "raise", segment=None) -> np.ndarray:
    """Orthonormal basis of ``range(Q)`` from a thin SVD.

    With ``rank_policy="raise"`` a matrix whose singular-value ratio falls
    below :data:`RANK_RTOL` (or that has fewer rows than columns) raises
    :class:`RankDeficiencyError`; with ``"lstsq"`` the numerically null
    directions are dropped instead.
    """
    Q = np.asarray(Q, dtype=float)
    rows, cols = Q.shape
    if cols == 0:
        return np.zeros((rows, 0))
    if rows < cols and rank_policy == "raise":
        raise RankDeficiencyError(
            f"matrix has {rows} rows but {cols} columns", segment=segment, ratio=0.0
        )
    U, s, _ = np.linalg.svd(Q, full_matrices=False)
    smax = s[0] if s.size else 0.0
    ratio = (s[-1] / smax) if smax > 0 else 0.0
    if s.size < cols or ratio < RANK_RTOL:
        if rank_policy == "raise":
            raise RankDeficiencyError(
                f"matrix is numerically rank deficient (sigma_min/sigma_max = {ratio:.3e})",
                segment=segment,
                ratio=ratio,
            )
        return U[:, s > RANK_RTOL * smax] if smax > 0 else np.zeros((rows, 0))
    return U


def projection_residual(Q, y, rank_policy: str = "raise") -> np.ndarray:
    """``y`` minus its orthogonal projection onto ``range(Q)``."""
    y = np.asarray(y, dtype=float)
    U = orthonormal_basis(Q, rank_policy)
    return y - U @ (U.T @ y)


@dataclass
class ConstrainedLSResult:
    xi: np.ndarray
    mu: np.ndarray
    iterations: int
    active: tuple


def kkt_residuals(Q, y, S, xi, mu) -> dict:
    """Infinity-norm KKT violations of ``min 0.5 ||y + Q xi||^2 s.t. S xi <= 0``."""
    Q, S = np.asarray(Q, float), np.asarray(S, float).reshape(-1, np.shape(Q)[1])
    xi, mu = np.asarray(xi, float), np.asarray(mu, float)
    grad = Q.T @ (np.asarray(y, float) + Q @ xi) + S.T @ mu
    Sx = S @ xi
    return {
        "stationarity": float(np.max(np.abs(grad), initial=0.0)),
        "primal": float(np.max(Sx, initial=0.0)),
        "dual": float(np.max(-mu, initial=0.0)),
        "complementarity": float(np.max(np.abs(mu * Sx), initial=0.0)),
    }


def _eqp(Q, b, S, work):
    """Minimize ``0.5 ||Q xi - b||^2`` on ``{xi : S[work] xi = 0}``."""
    if work:
        Z = null_space(S[sorted(work)])
        if Z.shape[1] == 0:
            return np.zeros(Q.shape[1])
        z = np.linalg.lstsq(Q @ Z, b, rcond=None)[0]
        return Z @ z
    return np.linalg.lstsq(Q, b, rcond=None)[0]


def constrained_ls(Q, y, S=None, max_iter: int | None = None) -> ConstrainedLSResult:
    """Solve ``min 0.5 ||y + Q xi||^2`` subject to ``S xi <= 0``.

    Primal active-set method started at the feasible origin with an empty
    working set, so the first step heads straight for the unconstrained
    minimizer.  Blocking and dropping constraints are chosen by smallest
    index among the eligible ones, which rules out cycling.

    Raises
    ------
    SolverError
        If no optimum is reached within ``10 * (n_constraints + 1)`` steps.
    """
    Q = np.asarray(Q, dtype=float)
    b = -np.asarray(y, dtype=float)
    nv = Q.shape[1]
    S = np.zeros((0, nv)) if S is None else np.asarray(S, dtype=float).reshape(-1, nv)
    nc = S.shape[0]
    if max_iter is None:
        max_iter = 10 * (nc + 1)

    xi_unc = np.linalg.lstsq(Q, b, rcond=None)[0]
    scale = max(1.0, float(np.max(np.abs(xi_unc), initial=0.0)))
    feas_tol = 1e-12 * scale
    if nc == 0 or np.all(S @ xi_unc <= feas_tol):
        return ConstrainedLSResult(xi_unc, np.zeros(nc), 0, ())

    gscale = max(1.0, float(np.linalg.norm(Q.T @ b, np.inf)))
    mu_tol = 1e-12 * gscale
    xi = np.zeros(nv)
    work: set = set()
    for it in range(1, max_iter + 1):
        target = _eqp(Q, b, S, work)
        p = target - xi
        if np.max(np.abs(p), initial=0.0) <= 1e-14 * scale:
            grad = Q.T @ (Q @ xi - b)
            mu = np.zeros(nc)
            if work:
                W = sorted(work)
                mu[W] = np.linalg.lstsq(S[W].T, -grad, rcond=None)[0]
            negative = [i for i in sorted(work) if mu[i] < -mu_tol]
            if not negative:
                mu = np.maximum(mu, 0.0)
                return ConstrainedLSResult(xi, mu, it, tuple(sorted(work)))
            work.discard(negative[0])
            continue
        Sp = S @ p
        step, block = 1.0, None
        for i in range(nc):
            if i in work or Sp[i] <= 1e-14 * scale:
                continue
            t = max(0.0, -(S[i] @ xi) / Sp[i])
            if t < step:
                step, block = t, i
        xi = xi + step * p
        if block is not None:
            work.add(block)
    raise SolverError(f"active-set iteration did not converge in {max_iter} steps")
