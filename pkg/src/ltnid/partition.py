"""Piecewise structure of the saturation pattern as a function of alpha.

Every entry of the residual ``r(alpha) = X_plus - alpha X`` is a line in
alpha.  The pattern changes only where a line crosses the upper envelope
band (upper saturation) or the lower band (zero saturation), so all
possible change points are roots of linear equations.  Those roots are
generated in one pass and then verified by classification at and between
them.
"""
from __future__ import annotations

import numpy as np

from .errors import InfeasibleDataError, PartitionError
from .types import DataBatch, Partition, SaturationPattern

DEDUPE_TOL = 1e-12
_CHUNK_ENTRIES = 4_000_000


def alpha_max(batch: DataBatch) -> float:
    """Largest alpha keeping the thresholded term non-negative, capped at 1.

    Only entries whose lower state bound ``X - eps_bar`` is positive
    constrain alpha.
    """
    eps = batch.eps_bar
    den = batch.X - eps
    keep = den > 0
    if not np.any(keep):
        return 1.0
    a = min(1.0, float(np.min((batch.X_plus[keep] + eps) / den[keep])))
    if not a > 0:
        raise InfeasibleDataError(
            f"data admit no alpha in (0, 1): upper bound evaluates to {a:.6g}"
        )
    return a


def _classify_rows(b, m, alphas, eps, tol) -> np.ndarray:
    """Pattern rows (int8) for each alpha in ``alphas``."""
    alphas = np.asarray(alphas, dtype=float).reshape(-1, 1)
    r = b[None, :] - alphas * m[None, :]
    vstar = r.max(axis=1, keepdims=True)
    upper = r >= vstar - 2.0 * (1.0 + alphas) * eps - tol
    if eps > 0:
        lower = r <= (1.0 + alphas) * eps + tol
    else:
        lower = np.abs(r) <= tol
    E = np.zeros(r.shape, dtype=np.int8)
    E[lower] = -1
    E[upper] = 1
    return E


def classify(batch: DataBatch, alpha: float) -> SaturationPattern:
    """Saturation pattern of ``X_plus - alpha X``.

    An entry is upper saturated when it lies within ``2 (1 + alpha) eps_bar``
    of the maximum, zero saturated when it is at most ``(1 + alpha) eps_bar``
    (exactly zero when ``eps_bar = 0``), and interior otherwise; upper
    saturation wins when both hold.  A slack of
    :attr:`DataBatch.tie_tol` absorbs rounding, so with ``eps_bar = 0`` exact
    ties and exact zeros are detected.
    """
    E = _classify_rows(batch.X_plus, batch.X, [alpha], batch.eps_bar, batch.tie_tol)
    return SaturationPattern(E[0])


def build_C(pattern: SaturationPattern) -> np.ndarray:
    """Signed column selector: column ``j`` is ``E_kk e_k`` for the j-th saturated ``k``."""
    idx = np.flatnonzero(pattern.E_diag)
    C = np.zeros((pattern.E_diag.size, idx.size))
    C[idx, np.arange(idx.size)] = pattern.E_diag[idx]
    return C


def upper_envelope(b, m, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Pieces of ``max_i (b_i - alpha m_i)`` over ``[lo, hi]``.

    Returns ``(breaks, active)``: piece ``p`` spans ``breaks[p]..breaks[p+1]``
    and is attained by line ``active[p]``.
    """
    r0 = b - lo * m
    top = r0.max()
    cand = np.flatnonzero(r0 >= top - 1e-15 * max(1.0, abs(top)))
    s = cand[np.argmin(m[cand])]
    breaks, active = [lo], [s]
    a = lo
    while True:
        steeper = m < m[s]
        if not np.any(steeper):
            break
        idx = np.flatnonzero(steeper)
        t = (b[s] - b[idx]) / (m[s] - m[idx])
        ok = t > a
        if not np.any(ok):
            break
        idx, t = idx[ok], t[ok]
        tmin = t.min()
        if tmin >= hi:
            break
        near = idx[t <= tmin + 1e-15 * max(1.0, abs(tmin))]
        s = near[np.argmin(m[near])]
        a = tmin
        breaks.append(a)
        active.append(s)
    breaks.append(hi)
    return np.array(breaks), np.array(active, dtype=int)


def candidate_points(batch: DataBatch, amax: float | None = None) -> np.ndarray:
    """Sorted, deduplicated roots in ``(0, amax)`` where the pattern may change.

    ``amax`` itself is always appended as the last entry.
    """
    if amax is None:
        amax = alpha_max(batch)
    b, m, eps = batch.X_plus, batch.X, batch.eps_bar
    breaks, active = upper_envelope(b, m, 0.0, amax)
    roots = [breaks[1:-1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        roots.append((b - eps) / (m + eps))
        for p, s in enumerate(active):
            t = (b - b[s] + 2.0 * eps) / (m - m[s] - 2.0 * eps)
            lo, hi = breaks[p], breaks[p + 1]
            roots.append(t[(t > lo - DEDUPE_TOL) & (t < hi + DEDUPE_TOL)])
    c = np.concatenate(roots)
    c = c[np.isfinite(c) & (c > 0) & (c < amax)]
    c = np.sort(c)
    if c.size:
        keep = np.concatenate([[True], np.diff(c) > DEDUPE_TOL])
        c = c[keep]
    if c.size and amax - c[-1] <= DEDUPE_TOL:
        c = c[:-1]
    return np.append(c, amax)


def _chunked_rows(batch: DataBatch, alphas: np.ndarray):
    """Yield ``(start, E_rows)`` for consecutive chunks of ``alphas``."""
    step = max(1, _CHUNK_ENTRIES // max(1, batch.N))
    for start in range(0, alphas.size, step):
        yield start, _classify_rows(
            batch.X_plus, batch.X, alphas[start:start + step], batch.eps_bar, batch.tie_tol
        )


def iteration_bound(batch: DataBatch) -> int:
    """Worst-case while-loop iteration count of the partition driver."""
    N = batch.N
    return 3 * N + 1 if batch.eps_bar > 0 else 2 * N + 1


def build_partition(batch: DataBatch, slack: int = 10, amax: float | None = None) -> Partition:
    """Split ``(0, alpha_max]`` into segments of constant pattern.

    Candidates ``c_1 < ... < c_K = alpha_max`` are classified together with
    the midpoints between them.  A candidate is kept as a critical point if
    the pattern at it, or on its right, differs from the pattern on its left.
    ``amax`` overrides the upper end of the search range.
    """
    if amax is None:
        amax = alpha_max(batch)
    cands = candidate_points(batch, amax)
    K = cands.size
    lefts = np.concatenate([[0.0], cands[:-1]])
    mids = 0.5 * (lefts + cands)
    # q = mid_0, c_1, mid_1, c_2, ..., mid_{K-1}, c_K
    q = np.empty(2 * K)
    q[0::2] = mids
    q[1::2] = cands

    differs = np.zeros(2 * K, dtype=bool)
    prev = None
    for start, E in _chunked_rows(batch, q):
        if prev is not None:
            differs[start] = np.any(E[0] != prev)
        differs[start + 1:start + E.shape[0]] = np.any(E[1:] != E[:-1], axis=1)
        prev = E[-1].copy()

    critical = [j for j in range(1, K) if differs[2 * j - 1] or differs[2 * j]]
    psis = [0.0] + [float(cands[j - 1]) for j in critical] + [float(amax)]
    seg_rows = [0] + [2 * j for j in critical]
    bnd_rows = [2 * j - 1 for j in critical] + [2 * K - 1]
    E_seg = _classify_rows(batch.X_plus, batch.X, q[seg_rows], batch.eps_bar, batch.tie_tol)
    E_bnd = _classify_rows(batch.X_plus, batch.X, q[bnd_rows], batch.eps_bar, batch.tie_tol)
    segment_patterns = tuple(SaturationPattern(e) for e in E_seg)
    boundary_patterns = tuple(SaturationPattern(e) for e in E_bnd)
    part = Partition(amax, np.array(psis), segment_patterns, boundary_patterns,
                     batch.eps_bar, int(K))
    if part.iterations > iteration_bound(batch) + slack:
        raise PartitionError(
            f"partition needed {part.iterations} iterations, bound is {iteration_bound(batch)}"
        )
    return part


def next_critical_point(batch: DataBatch, psi: float, pattern: SaturationPattern | None = None) -> float:
    """Smallest point after ``psi`` where the pattern differs from the segment's.

    ``pattern`` is the pattern just right of ``psi``; when omitted it is taken
    from classification at the midpoint to the first candidate.  Returns
    ``alpha_max`` when nothing changes before it.
    """
    amax = alpha_max(batch)
    if not psi < amax:
        raise ValueError(f"psi={psi} is not below alpha_max={amax}")
    cands = candidate_points(batch, amax)
    cands = cands[cands > psi + DEDUPE_TOL]
    if cands.size == 0:
        return float(amax)
    if pattern is None:
        pattern = classify(batch, 0.5 * (psi + cands[0]))
    for j, c in enumerate(cands[:-1]):
        after = classify(batch, 0.5 * (c + cands[j + 1]))
        if classify(batch, c) != pattern or after != pattern:
            return float(c)
    return float(amax)
