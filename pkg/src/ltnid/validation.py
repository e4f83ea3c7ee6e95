"""Data-quality checks: pattern enumeration, rank conditions, probability bound, grid oracle."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from . import partition as part_mod
from .errors import RankDeficiencyError
from .lsq import RANK_RTOL, projection_residual
from .types import DataBatch, Partition, SaturationPattern


@dataclass
class AssumptionReport:
    passed: bool
    num_E_matrices: int
    min_singular_value_seen: float
    failing_pair: Optional[tuple] = None
    min_ratio_seen: float = float("inf")
    pairs_checked: int = 0
    exhaustive: bool = True
    bound: int = 0

    @property
    def mode(self) -> str:
        return "exhaustive" if self.exhaustive else "sampled, not exhaustive"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "num_E_matrices": self.num_E_matrices,
            "min_singular_value_seen": self.min_singular_value_seen,
            "min_ratio_seen": self.min_ratio_seen,
            "failing_pair": list(self.failing_pair) if self.failing_pair is not None else None,
            "pairs_checked": self.pairs_checked,
            "mode": self.mode,
            "E_count_bound": self.bound,
        }


def enumerate_E(batch: DataBatch, partition: Partition | None = None) -> list:
    """Distinct patterns over all segments and critical points, in first-seen order."""
    if partition is None:
        partition = part_mod.build_partition(batch)
    return partition.distinct_patterns()


def E_count_bound(batch: DataBatch) -> int:
    return 4 * batch.N + 2


class _NodeFactors:
    """Cached thin QR of each node block restricted to a row mask."""

    def __init__(self, batch: DataBatch):
        self.batch = batch
        self._cache = {}

    def get(self, i: int, rows: np.ndarray):
        key = (i, rows.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            A = self.batch.blocks[i][rows]
            x = self.batch.x[rows, i]
            if A.shape[0] < A.shape[1]:
                hit = None
            else:
                Qf, R = np.linalg.qr(A)
                qx = Qf.T @ x
                rho2 = max(float(x @ x - qx @ qx), 0.0)
                hit = (R, qx, rho2)
            self._cache[key] = hit if hit is not None else False
            return hit
        return hit if hit is not False else None


def _masked_singular_values(factors: _NodeFactors, interior: np.ndarray) -> np.ndarray:
    """Singular values of ``[X P]`` restricted to rows where ``interior`` holds.

    The row set splits by node, so the matrix equals an orthonormal factor
    times a small square core assembled from per-node QR factors plus one
    row carrying the part of ``X`` orthogonal to every node block.
    """
    batch = factors.batch
    n, layout = batch.n, batch.layout
    mask = interior.reshape(-1, n)
    dim = layout.h_dim + 1
    core = np.zeros((dim, dim))
    rho2 = 0.0
    for i in range(n):
        f = factors.get(i, mask[:, i])
        if f is None:
            return np.zeros(dim)
        R, qx, r2 = f
        sl = layout.block(i)
        rows = slice(sl.start, sl.stop)
        core[rows, 0] = qx
        core[rows, 1 + sl.start:1 + sl.stop] = R
        rho2 += r2
    core[-1, 0] = math.sqrt(rho2)
    return np.linalg.svd(core, compute_uv=False)


def check_assumption1(batch: DataBatch, partition: Partition | None = None,
                      max_pairs: int | None = None, seed: int = 0) -> AssumptionReport:
    """Full-column-rank test of ``[X P]`` on rows interior to both patterns of every pair.

    Only the supports of the patterns matter, so patterns are first reduced
    to distinct supports; unordered pairs (including a support with itself)
    cover all ordered pairs.  With ``max_pairs`` a random subset of pairs is
    checked and the report says so.
    """
    patterns = enumerate_E(batch, partition)
    supports = {}
    for p in patterns:
        interior = p.E_diag == 0
        supports.setdefault(interior.tobytes(), interior)
    sup_list = list(supports.values())
    pairs = list(itertools.combinations_with_replacement(range(len(sup_list)), 2))
    exhaustive = True
    if max_pairs is not None and len(pairs) > max_pairs:
        rng = np.random.Generator(np.random.PCG64(seed))
        pick = np.sort(rng.choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[k] for k in pick]
        exhaustive = False

    factors = _NodeFactors(batch)
    min_sigma, min_ratio, failing = math.inf, math.inf, None
    for a, b in pairs:
        s = _masked_singular_values(factors, sup_list[a] & sup_list[b])
        smax = s[0] if s.size else 0.0
        ratio = s[-1] / smax if smax > 0 else 0.0
        if s[-1] < min_sigma:
            min_sigma = float(s[-1])
        if ratio < min_ratio:
            min_ratio = float(ratio)
            if ratio <= RANK_RTOL and failing is None:
                failing = (a, b)
    # pairs are visited in a fixed order, so the first failing pair is deterministic
    return AssumptionReport(
        passed=failing is None,
        num_E_matrices=len(patterns),
        min_singular_value_seen=min_sigma if pairs else 0.0,
        failing_pair=failing,
        min_ratio_seen=min_ratio if pairs else 0.0,
        pairs_checked=len(pairs),
        exhaustive=exhaustive,
        bound=E_count_bound(batch),
    )


def _prop2_log_terms(sigma1, sigma2, T_d, n, m):
    half_up = (T_d + 1) // 2
    half_down = T_d // 2
    ell = np.arange(m + n, half_up + 1)
    log_binom = gammaln(half_up + 1) - gammaln(ell + 1) - gammaln(half_up - ell + 1)
    log_tail = log_binom + xlogy(ell, sigma2) + xlog1py(half_up - ell, -sigma2)
    log_first = half_down * math.log1p(-sigma1) if sigma1 < 1 else -math.inf
    return half_up, log_first, log_tail


def _check_prop2_args(sigma1, sigma2, T_d, n, m):
    if not (0 < sigma1 <= 1 and 0 < sigma2 <= 1):
        raise ValueError("sigma1 and sigma2 must lie in (0, 1]")
    if min(T_d, n, m) < 1:
        raise ValueError("T_d, n and m must be positive")


def prop2_bound(sigma1: float, sigma2: float, T_d: int, n: int, m: int) -> float:
    """Lower bound on the probability that the rank condition holds.

    ``(1 - (1 - sigma1)^floor(T/2)) * P(Binomial(ceil(T/2), sigma2) >= n + m)``,
    summed in log space.  Returns 0 when ``n + m > ceil(T/2)``.
    """
    _check_prop2_args(sigma1, sigma2, T_d, n, m)
    half_up, log_first, log_tail = _prop2_log_terms(sigma1, sigma2, T_d, n, m)
    if log_tail.size == 0:
        return 0.0
    first = -math.expm1(log_first)
    rho = first * math.exp(float(logsumexp(log_tail)))
    return float(min(1.0, max(0.0, rho)))


def prop2_complement(sigma1: float, sigma2: float, T_d: int, n: int, m: int) -> float:
    """``1 - prop2_bound(...)`` without cancellation for bounds close to 1."""
    _check_prop2_args(sigma1, sigma2, T_d, n, m)
    half_up = (T_d + 1) // 2
    if m + n > half_up:
        return 1.0
    miss_first = math.exp(T_d // 2 * math.log1p(-sigma1)) if sigma1 < 1 else 0.0
    ell = np.arange(0, m + n)
    log_binom = gammaln(half_up + 1) - gammaln(ell + 1) - gammaln(half_up - ell + 1)
    lower = log_binom + xlogy(ell, sigma2) + xlog1py(half_up - ell, -sigma2)
    miss_tail = math.exp(float(logsumexp(lower)))
    # 1 - a b = (1 - a) + a (1 - b)
    return float(min(1.0, max(0.0, miss_first + (1.0 - miss_first) * miss_tail)))


def estimate_sigmas(batch: DataBatch, gamma: float) -> tuple[float, float]:
    """Empirical frequencies of the two sample events behind the probability bound."""
    d = batch.x_plus - batch.x
    s1 = float(np.mean(d.max(axis=1) >= gamma))
    s2 = float(np.mean((d.min(axis=1) > 0) & (batch.x_plus.max(axis=1) < gamma)))
    return s1, s2


def rank_spot_check(batch: DataBatch, trials: int = 100, seed: int = 0) -> float:
    """Smallest singular-value ratio over random ``(n + m)``-subsets of sample regressors."""
    p = np.hstack([batch.x, batch.u])
    k = p.shape[1]
    if batch.T_d < k:
        return 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = math.inf
    for _ in range(trials):
        rows = rng.choice(batch.T_d, size=k, replace=False)
        s = np.linalg.svd(p[rows], compute_uv=False)
        worst = min(worst, s[-1] / s[0] if s[0] > 0 else 0.0)
    return float(worst)


@dataclass
class GridResult:
    alpha: float
    J: float
    skipped: int
    alphas: np.ndarray = field(repr=False, default=None)
    J_values: np.ndarray = field(repr=False, default=None)


def _dense_Q(batch: DataBatch, pattern: SaturationPattern) -> np.ndarray:
    return np.hstack([part_mod.build_C(pattern), -batch.P])


def grid_oracle(batch: DataBatch, num_points: int, method: str = "dense",
                keep_values: bool = False, amax: float | None = None) -> GridResult:
    """Minimum of ``J`` over ``alpha_max * k / num_points``, ``k = 1..num_points``.

    Each grid point is classified on its own.  ``method="dense"`` projects
    with the full matrix ``[C -P]`` (independent of the solver's
    block-wise route); ``"block"`` reuses the solver's projector.
    Points whose regressor is rank deficient are skipped and counted.
    ``amax`` overrides the grid's right end.
    """
    from .solver import BlockProjector

    if num_points < 2:
        raise ValueError("num_points must be at least 2")
    if amax is None:
        amax = part_mod.alpha_max(batch)
    alphas = amax * np.arange(1, num_points + 1) / num_points
    J = np.full(num_points, np.inf)
    projector = BlockProjector(batch) if method == "block" else None
    groups: dict = {}
    for start, E in part_mod._chunked_rows(batch, alphas):
        keys = [row.tobytes() for row in E]
        for local, key in enumerate(keys):
            groups.setdefault(key, (E[local], []))[1].append(start + local)
    skipped = 0
    for key, (row, idx) in groups.items():
        idx = np.asarray(idx)
        pattern = SaturationPattern(row)
        try:
            if projector is None:
                Q = _dense_Q(batch, pattern)
                rp = projection_residual(Q, batch.X_plus)
                rx = projection_residual(Q, batch.X)
                a = alphas[idx][:, None]
                J[idx] = 0.5 * np.sum((rp[None, :] - a * rx[None, :]) ** 2, axis=1)
            else:
                for t in idx:
                    J[t] = projector.J(pattern, alphas[t])
        except RankDeficiencyError:
            skipped += idx.size
    if skipped:
        warnings.warn(f"grid oracle skipped {skipped} rank-deficient points", RuntimeWarning)
    if not np.any(np.isfinite(J)):
        return GridResult(math.nan, math.inf, skipped,
                          alphas if keep_values else None, J if keep_values else None)
    k = int(np.argmin(J))
    return GridResult(float(alphas[k]), float(J[k]), skipped,
                      alphas if keep_values else None, J if keep_values else None)
