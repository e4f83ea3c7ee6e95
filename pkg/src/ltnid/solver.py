"""Scalar objective in alpha, segment-wise minimization and parameter recovery.

For a fixed pattern the linear unknowns ``(v, h)`` are eliminated by a
projection, leaving ``J(alpha) = 0.5 || M (X_plus - alpha X) ||^2``.  The
regressor ``[C  -P]`` is block diagonal after the selector columns absorb
the saturated rows, so ``M`` acts node by node on the interior rows only:
each node contributes the residual of its interior rows projected off its
own regressor block.  The selector columns leave no residual on saturated
rows.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import partition as part_mod
from .errors import DataError, RankDeficiencyError
from .lsq import constrained_ls, orthonormal_basis
from .types import (
    DataBatch,
    IdentResult,
    Partition,
    SaturationPattern,
    dale_constraint_matrix,
    normalize_signs,
    unpack_h,
)

log = logging.getLogger(__name__)

LAMBDA_WARN = 1e-8


@dataclass(frozen=True)
class SegmentCandidate:
    alpha_cand: float
    J_cand: float
    segment_index: int
    is_boundary: bool


class BlockProjector:
    """Per-node projection residuals of ``X_plus`` and ``X``, cached by row mask.

    Adjacent segments usually differ in a handful of entries, so most
    node blocks repeat from one pattern to the next.
    """

    def __init__(self, batch: DataBatch, rank_policy: str = "raise"):
        if rank_policy not in ("raise", "lstsq"):
            raise ValueError(f"unknown rank_policy {rank_policy!r}")
        self.batch = batch
        self.rank_policy = rank_policy
        self._cache: dict = {}
        self.factorizations = 0

    def _block(self, i: int, rows: np.ndarray, segment):
        key = (i, rows.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        b = self.batch
        A = b.blocks[i][rows]
        try:
            U = orthonormal_basis(A, self.rank_policy, segment)
        except RankDeficiencyError as err:
            err.args = (f"node {i}: {err.args[0]}",)
            raise
        yp = b.x_plus[rows, i]
        yx = b.x[rows, i]
        out = (yp - U @ (U.T @ yp), yx - U @ (U.T @ yx))
        self._cache[key] = out
        self.factorizations += 1
        return out

    def residuals(self, pattern: SaturationPattern, segment=None):
        """``(M X_plus, M X)`` restricted to interior rows, one pair per node."""
        n = self.batch.n
        E = pattern.E_diag.reshape(-1, n)
        return [self._block(i, E[:, i] == 0, segment) for i in range(n)]

    def coefficients(self, pattern: SaturationPattern, segment=None) -> tuple[float, float, float]:
        """``(c0, c1, c2)`` with ``J(alpha) = c0 + c1 alpha + c2 alpha^2``."""
        c0 = c1 = c2 = 0.0
        for rp, rx in self.residuals(pattern, segment):
            c0 += 0.5 * float(rp @ rp)
            c1 -= float(rp @ rx)
            c2 += 0.5 * float(rx @ rx)
        return c0, c1, c2

    def J(self, pattern: SaturationPattern, alpha: float, segment=None) -> float:
        total = 0.0
        for rp, rx in self.residuals(pattern, segment):
            d = rp - alpha * rx
            total += float(d @ d)
        return 0.5 * total


def objective_J(batch: DataBatch, alpha: float, pattern: SaturationPattern | None = None,
                rank_policy: str = "raise") -> float:
    """``J(alpha)``; the pattern defaults to the classification at ``alpha``."""
    if pattern is None:
        pattern = part_mod.classify(batch, alpha)
    return BlockProjector(batch, rank_policy).J(pattern, alpha)


def segment_minimize(batch: DataBatch, lo: float, hi: float, pattern: SaturationPattern,
                     index: int = 0, projector: BlockProjector | None = None) -> SegmentCandidate:
    """Minimize the segment's parabola over the closed interval ``[lo, hi]``.

    A non-positive left end is replaced by a point just inside the domain.
    When the parabola is flat or linear the better end wins, the left one
    on ties.
    """
    projector = projector or BlockProjector(batch)
    if lo <= 0:
        lo = min(1e-12, 0.5 * hi)
    c0, c1, c2 = projector.coefficients(pattern, segment=index)
    if c2 > 0:
        a = min(max(-c1 / (2.0 * c2), lo), hi)
    elif c1 < 0:
        a = hi
    else:
        a = lo
    return SegmentCandidate(float(a), projector.J(pattern, a, segment=index), index, False)


def _recover_unconstrained(batch, alpha, pattern, rank_policy):
    """Least-squares ``h`` per node on interior rows, then ``v`` on saturated rows."""
    n, layout = batch.n, batch.layout
    E = pattern.E_diag.reshape(-1, n)
    h = np.zeros(layout.h_dim)
    for i in range(n):
        rows = E[:, i] == 0
        A = batch.blocks[i][rows]
        y = batch.x_plus[rows, i] - alpha * batch.x[rows, i]
        orthonormal_basis(A, rank_policy, segment=None)
        h[layout.block(i)] = np.linalg.lstsq(A, y, rcond=None)[0]
    return h


def _recover_constrained(batch, alpha, pattern, dale_signs, rank_policy):
    """Per-node least squares with the sign constraints of the node's row of ``W_D``."""
    n, m, layout = batch.n, batch.m, batch.layout
    S_all = dale_constraint_matrix(n, m, dale_signs, batch.self_loop_mask)
    E = pattern.E_diag.reshape(-1, n)
    h = np.zeros(layout.h_dim)
    iterations = 0
    for i in range(n):
        sl = layout.block(i)
        rows = E[:, i] == 0
        A = batch.blocks[i][rows]
        y = batch.x_plus[rows, i] - alpha * batch.x[rows, i]
        orthonormal_basis(A, rank_policy, segment=None)
        S_i = S_all[:, sl]
        S_i = S_i[np.any(S_i != 0, axis=1)]
        res = constrained_ls(-A, y, S_i)
        h[sl] = res.xi
        iterations += res.iterations
    return h, iterations


def _v_from_h(batch, alpha, pattern, h):
    y = batch.X_plus - alpha * batch.X
    idx = np.flatnonzero(pattern.E_diag)
    return pattern.E_diag[idx] * (batch.apply_h(h)[idx] - y[idx])


def lambda_min_proxy(batch: DataBatch, pattern: SaturationPattern) -> float:
    """Smallest singular value of ``[X P]`` restricted to the pattern's interior rows."""
    rows = pattern.E_diag == 0
    if not np.any(rows):
        return 0.0
    A = np.column_stack([batch.X[rows], batch.P[rows]])
    if A.shape[0] < A.shape[1]:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def rmse_h(h_hat, h_star, h_dim: int | None = None) -> float:
    """``sqrt(||h_hat - h_star|| / h_dim)``: the norm itself, not its square, under the root."""
    h_hat = np.asarray(h_hat, dtype=float)
    h_star = np.asarray(h_star, dtype=float)
    if h_hat.shape != h_star.shape:
        raise DataError(f"length mismatch: {h_hat.shape} vs {h_star.shape}")
    if h_dim is None:
        h_dim = h_hat.size
    return float(np.sqrt(np.linalg.norm(h_hat - h_star) / h_dim))


def _candidates(batch, partition, projector):
    cands = []
    for ell, (lo, hi) in enumerate(partition.segments()):
        cands.append(segment_minimize(batch, lo, hi, partition.segment_patterns[ell], ell, projector))
        bp = partition.boundary_patterns[ell]
        cands.append(SegmentCandidate(hi, projector.J(bp, hi, segment=ell), ell, True))
    return cands


def identify(batch: DataBatch, algorithm: int = 2, dale_signs=None, rank_policy: str = "raise",
             partition: Partition | None = None) -> IdentResult:
    """Run the domain-partition identification.

    ``algorithm=1`` treats the data as exact: classification ignores
    ``batch.eps_bar`` (only the feasible range honours it), ``h`` comes from plain least
    squares and ``s_D`` from the largest residual.  ``algorithm=2`` uses
    the relaxed classification, enforces the sign constraints given by
    ``dale_signs`` and averages the upper-saturated residuals for ``s_D``.
    """
    if algorithm not in (1, 2):
        raise ValueError(f"algorithm must be 1 or 2, got {algorithm}")
    timing = {}
    work = batch.with_eps(0.0) if algorithm == 1 else batch
    t0 = time.perf_counter()
    if partition is None:
        partition = part_mod.build_partition(work, amax=part_mod.alpha_max(batch))
    timing["partition_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    projector = BlockProjector(work, rank_policy)
    cands = _candidates(work, partition, projector)
    best = min(cands, key=lambda c: (c.J_cand, c.alpha_cand))
    alpha = best.alpha_cand
    if best.is_boundary:
        pattern = partition.boundary_patterns[best.segment_index]
    else:
        pattern = partition.segment_patterns[best.segment_index]
    timing["search_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    diagnostics = {
        "num_critical_points": partition.num_critical_points,
        "segments_solved": partition.num_segments,
        "iterations": partition.iterations,
        "iteration_bound": part_mod.iteration_bound(work),
        "num_candidates_generated": partition.num_candidates,
        "num_distinct_patterns": len(partition.distinct_patterns()),
        "factorizations": projector.factorizations,
        "winning_segment": best.segment_index,
        "winning_is_boundary": best.is_boundary,
        "rank_check_passed": None,
    }
    if algorithm == 1:
        h = _recover_unconstrained(work, alpha, pattern, rank_policy)
        r = work.X_plus - alpha * work.X
        s_D = float(r.max())
        v = _v_from_h(work, alpha, pattern, h)
        v_upper = v[pattern.E_diag[pattern.E_diag != 0] == 1]
        # ties at the maximum or a positive excess both indicate real saturation
        saturated = v_upper.size >= 2 or bool(np.any(v_upper > work.tie_tol))
        diagnostics["lower_bound_only"] = not saturated
    else:
        h, qp_iters = _recover_constrained(work, alpha, pattern, dale_signs, rank_policy)
        v = _v_from_h(work, alpha, pattern, h)
        fresh = part_mod.classify(work, alpha)
        r = work.X_plus - alpha * work.X
        s_D = float(np.mean(r[fresh.set_S]))
        diagnostics["qp_iterations"] = qp_iters
        lam = lambda_min_proxy(work, pattern)
        diagnostics["lambda_min_proxy"] = lam
        if lam < LAMBDA_WARN:
            log.warning("smallest singular value of the interior data matrix is %.3e", lam)
    if "lambda_min_proxy" not in diagnostics:
        diagnostics["lambda_min_proxy"] = lambda_min_proxy(work, pattern)
    timing["recovery_s"] = time.perf_counter() - t0
    diagnostics["timing"] = timing

    W, B = unpack_h(h, work.n, work.m, work.self_loop_mask)
    return IdentResult(
        alpha_hat=float(alpha),
        h_hat=h,
        v_hat=v,
        s_D_hat=s_D,
        J_value=float(best.J_cand),
        W_D_hat=W,
        B_D_hat=B,
        pattern=pattern,
        algorithm=algorithm,
        alpha_max=partition.alpha_max,
        diagnostics=diagnostics,
        candidates=cands,
    )


def algorithm1(batch: DataBatch, rank_policy: str = "raise", partition: Partition | None = None) -> IdentResult:
    """Identification assuming noiseless data."""
    return identify(batch, 1, None, rank_policy, partition)


def algorithm2(batch: DataBatch, dale_signs=None, rank_policy: str = "raise",
               partition: Partition | None = None) -> IdentResult:
    """Identification under bounded noise ``batch.eps_bar`` with sign constraints."""
    return identify(batch, 2, normalize_signs(dale_signs, batch.n), rank_policy, partition)
