"""Domain types and the packing between matrix and stacked-vector forms.

Row ``k * n + i`` of every stacked quantity (``X``, ``X_plus``, ``P``)
belongs to node ``i`` of sample ``k`` (both zero based).  The parameter
vector ``h`` is the concatenation, node by node, of row ``i`` of
``[W_D  B_D]`` with the self-weight ``W_D[i, i]`` dropped unless the
node's self-loop flag is set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DataError

LAYOUT_VERSION = 1


def _readonly(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def normalize_mask(self_loop_mask, n: int) -> np.ndarray:
    if self_loop_mask is None:
        return _readonly(np.zeros(n, dtype=bool), bool)
    mask = np.asarray(self_loop_mask, dtype=bool).reshape(-1)
    if mask.shape != (n,):
        raise DataError(f"self_loop_mask has length {mask.size}, expected {n}")
    return _readonly(mask, bool)


def normalize_signs(dale_signs, n: int) -> np.ndarray:
    """Dale signs as an int8 vector over {+1, -1, 0}; 0 means unconstrained."""
    if dale_signs is None:
        return _readonly(np.zeros(n, dtype=np.int8), np.int8)
    signs = np.asarray(dale_signs).reshape(-1)
    if signs.shape != (n,):
        raise DataError(f"dale_signs has length {signs.size}, expected {n}")
    if not np.all(np.isin(signs, (-1, 0, 1))):
        raise DataError("dale_signs entries must be +1, -1 or 0")
    return _readonly(signs.astype(np.int8), np.int8)


@dataclass(frozen=True)
class HLayout:
    """Column bookkeeping for ``h``.

    ``columns[i]`` lists the indices into ``p = [x; u]`` kept for node ``i``;
    ``offsets[i]:offsets[i + 1]`` is that node's slice of ``h``.
    """

    n: int
    m: int
    self_loop_mask: np.ndarray
    columns: tuple
    offsets: np.ndarray

    @property
    def h_dim(self) -> int:
        return int(self.offsets[-1])

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))


def h_layout(n: int, m: int, self_loop_mask=None) -> HLayout:
    mask = normalize_mask(self_loop_mask, n)
    columns = []
    for i in range(n):
        cols = [j for j in range(n + m) if j != i or mask[i]]
        columns.append(np.array(cols, dtype=int))
    offsets = np.concatenate([[0], np.cumsum([c.size for c in columns])]).astype(int)
    return HLayout(n, m, mask, tuple(columns), offsets)


def pack_h(W_D, B_D, self_loop_mask=None) -> np.ndarray:
    """Stack the free entries of ``[W_D B_D]`` into the vector ``h``."""
    W = np.asarray(W_D, dtype=float)
    B = np.asarray(B_D, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DataError(f"W_D must be square, got shape {W.shape}")
    n = W.shape[0]
    if B.ndim == 1 and n == B.size and n > 0:
        B = B.reshape(n, 1)
    if B.ndim != 2 or B.shape[0] != n:
        raise DataError(f"B_D must have {n} rows, got shape {B.shape}")
    layout = h_layout(n, B.shape[1], self_loop_mask)
    diag = np.diag(W)
    if np.any(diag[~layout.self_loop_mask] != 0):
        raise DataError("W_D has a nonzero diagonal entry on a node without self-loop")
    H = np.hstack([W, B])
    return np.concatenate([H[i, layout.columns[i]] for i in range(n)])


def unpack_h(h, n: int, m: int, self_loop_mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_h`; returns ``(W_D, B_D)``."""
    layout = h_layout(n, m, self_loop_mask)
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.size != layout.h_dim:
        raise DataError(f"h has length {h.size}, expected {layout.h_dim}")
    H = np.zeros((n, n + m))
    for i in range(n):
        H[i, layout.columns[i]] = h[layout.block(i)]
    return H[:, :n], H[:, n:]


def dale_constraint_matrix(n: int, m: int, dale_signs, self_loop_mask=None) -> np.ndarray:
    """Rows ``a`` with ``a @ h <= 0`` encoding the column sign pattern of ``W_D``.

    A column with sign +1 yields ``-h[idx] <= 0`` for each of its free
    entries, sign -1 yields ``h[idx] <= 0``; unconstrained columns add
    nothing.
    """
    layout = h_layout(n, m, self_loop_mask)
    signs = normalize_signs(dale_signs, n)
    rows = []
    for i in range(n):
        start = layout.offsets[i]
        for pos, j in enumerate(layout.columns[i]):
            if j < n and signs[j] != 0:
                row = np.zeros(layout.h_dim)
                row[start + pos] = -float(signs[j])
                rows.append(row)
    if not rows:
        return np.zeros((0, layout.h_dim))
    return np.vstack(rows)


@dataclass(frozen=True)
class LtnModel:
    """Discrete-time linear-threshold network ``x+ = a x + [W x + B u]_0^s``."""

    alpha: float
    W_D: np.ndarray
    B_D: np.ndarray
    s_D: float
    self_loop_mask: np.ndarray = None
    dale_signs: np.ndarray = None

    def __post_init__(self):
        W = _readonly(self.W_D)
        B = _readonly(self.B_D)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DataError(f"W_D must be square, got shape {W.shape}")
        n = W.shape[0]
        if B.ndim == 1:
            B = _readonly(B.reshape(n, -1))
        if B.shape[0] != n:
            raise DataError(f"B_D must have {n} rows, got shape {B.shape}")
        object.__setattr__(self, "W_D", W)
        object.__setattr__(self, "B_D", B)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "s_D", float(self.s_D))
        object.__setattr__(self, "self_loop_mask", normalize_mask(self.self_loop_mask, n))
        object.__setattr__(self, "dale_signs", normalize_signs(self.dale_signs, n))
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.s_D > 0.0:
            raise DataError(f"s_D must be positive, got {self.s_D}")
        if np.any(np.diag(W)[~self.self_loop_mask] != 0):
            raise DataError("W_D has a nonzero diagonal entry on a node without self-loop")
        for j, sgn in enumerate(self.dale_signs):
            if sgn > 0 and np.any(W[:, j] < 0):
                raise DataError(f"column {j} of W_D violates its excitatory sign")
            if sgn < 0 and np.any(W[:, j] > 0):
                raise DataError(f"column {j} of W_D violates its inhibitory sign")

    @property
    def n(self) -> int:
        return self.W_D.shape[0]

    @property
    def m(self) -> int:
        return self.B_D.shape[1]

    @property
    def h(self) -> np.ndarray:
        return pack_h(self.W_D, self.B_D, self.self_loop_mask)


@dataclass(frozen=True)
class DataSample:
    x: np.ndarray
    u: np.ndarray
    x_plus: np.ndarray


@dataclass(frozen=True)
class DataBatch:
    """``T_d`` samples in stacked form.

    Only the per-sample arrays are stored; ``X``, ``X_plus`` and the
    per-node blocks of ``P`` are derived on first access.  The dense ``P``
    is materialized only on request.
    """

    x: np.ndarray
    u: np.ndarray
    x_plus: np.ndarray
    eps_bar: float = 0.0
    self_loop_mask: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x_plus = np.asarray(self.x_plus, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise DataError("batch needs at least one sample with a state vector")
        if u.ndim == 1 and u.size == 0:
            u = np.zeros((x.shape[0], 0))
        if x_plus.shape != x.shape or u.ndim != 2 or u.shape[0] != x.shape[0]:
            raise DataError(
                f"inconsistent sample shapes: x {x.shape}, u {u.shape}, x_plus {x_plus.shape}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u)) and np.all(np.isfinite(x_plus))):
            raise DataError("samples contain non-finite entries")
        eps = float(self.eps_bar)
        if not eps >= 0.0:
            raise DataError(f"eps_bar must be non-negative, got {self.eps_bar}")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "u", _readonly(u))
        object.__setattr__(self, "x_plus", _readonly(x_plus))
        object.__setattr__(self, "eps_bar", eps)
        object.__setattr__(self, "self_loop_mask", normalize_mask(self.self_loop_mask, x.shape[1]))

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def T_d(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        """Length of the stacked vectors, ``n * T_d``."""
        return self.x.size

    @cached_property
    def layout(self) -> HLayout:
        return h_layout(self.n, self.m, self.self_loop_mask)

    @property
    def h_dim(self) -> int:
        return self.layout.h_dim

    @cached_property
    def X(self) -> np.ndarray:
        return _readonly(self.x.reshape(-1))

    @cached_property
    def X_plus(self) -> np.ndarray:
        return _readonly(self.x_plus.reshape(-1))

    @cached_property
    def blocks(self) -> tuple:
        """Per-node regressor blocks, ``blocks[i][k] = p_bar_i(k)``."""
        p = np.hstack([self.x, self.u])
        return tuple(_readonly(p[:, cols]) for cols in self.layout.columns)

    @cached_property
    def P(self) -> np.ndarray:
        n, layout = self.n, self.layout
        P = np.zeros((self.N, layout.h_dim))
        for i, blk in enumerate(self.blocks):
            P[i::n, layout.block(i)] = blk
        P.setflags(write=False)
        return P

    @cached_property
    def tie_tol(self) -> float:
        """Absolute slack used when testing ``r[i] == vmax(r)`` or ``r[i] == 0``."""
        scale = max(1.0, float(np.max(np.abs(self.X_plus))), float(np.max(np.abs(self.X))))
        return 1e-10 * scale

    @property
    def samples(self) -> list:
        return [DataSample(self.x[k], self.u[k], self.x_plus[k]) for k in range(self.T_d)]

    def with_eps(self, eps_bar: float) -> "DataBatch":
        return DataBatch(self.x, self.u, self.x_plus, eps_bar, self.self_loop_mask)

    def apply_h(self, h) -> np.ndarray:
        """``P @ h`` computed block by block."""
        h = np.asarray(h, dtype=float)
        out = np.empty((self.T_d, self.n))
        for i, blk in enumerate(self.blocks):
            out[:, i] = blk @ h[self.layout.block(i)]
        return out.reshape(-1)


def build_batch(samples: Sequence, eps_bar: float = 0.0, self_loop_mask=None) -> DataBatch:
    """Stack ``samples`` (DataSample or ``(x, u, x_plus)`` triples) into a batch."""
    samples = list(samples)
    if not samples:
        raise DataError("empty sample list")
    xs, us, xps = [], [], []
    for k, s in enumerate(samples):
        if isinstance(s, DataSample):
            x, u, xp = s.x, s.u, s.x_plus
        else:
            x, u, xp = s
        xs.append(np.asarray(x, dtype=float).reshape(-1))
        us.append(np.asarray(u, dtype=float).reshape(-1))
        xps.append(np.asarray(xp, dtype=float).reshape(-1))
        if xs[-1].shape != xs[0].shape or us[-1].shape != us[0].shape or xps[-1].shape != xs[0].shape:
            raise DataError(f"sample {k} has dimensions inconsistent with sample 0")
    return DataBatch(np.vstack(xs), np.vstack(us), np.vstack(xps), eps_bar, self_loop_mask)


@dataclass(frozen=True)
class SaturationPattern:
    """Per-entry classification: +1 upper saturated, -1 zero saturated, 0 interior."""

    E_diag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "E_diag", _readonly(self.E_diag, np.int8))

    @property
    def set_S(self) -> np.ndarray:
        return np.flatnonzero(self.E_diag == 1)

    @property
    def set_Z(self) -> np.ndarray:
        return np.flatnonzero(self.E_diag == -1)

    @property
    def set_M(self) -> np.ndarray:
        return np.flatnonzero(self.E_diag == 0)

    @property
    def d(self) -> int:
        return int(np.count_nonzero(self.E_diag))

    @cached_property
    def key(self) -> bytes:
        return self.E_diag.tobytes()

    def __eq__(self, other):
        if not isinstance(other, SaturationPattern):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)


@dataclass(frozen=True)
class Partition:
    """Critical points ``0 = psis[0] < ... < psis[-1] = alpha_max``.

    ``segment_patterns[l]`` holds on the open interval ``(psis[l], psis[l+1])``
    and ``boundary_patterns[l]`` at the point ``psis[l+1]``.
    """

    alpha_max: float
    psis: np.ndarray
    segment_patterns: tuple
    boundary_patterns: tuple
    eps_bar: float = 0.0
    num_candidates: int = 0

    @property
    def num_segments(self) -> int:
        return len(self.segment_patterns)

    @property
    def iterations(self) -> int:
        """While-loop iterations of the domain-partition driver."""
        return len(self.segment_patterns)

    @property
    def num_critical_points(self) -> int:
        return len(self.psis) - 1

    def segments(self):
        for ell in range(self.num_segments):
            yield float(self.psis[ell]), float(self.psis[ell + 1])

    def distinct_patterns(self) -> list:
        seen = {}
        for p in (*self.segment_patterns, *self.boundary_patterns):
            seen.setdefault(p.key, p)
        return list(seen.values())


@dataclass
class IdentResult:
    alpha_hat: float
    h_hat: np.ndarray
    v_hat: np.ndarray
    s_D_hat: float
    J_value: float
    W_D_hat: np.ndarray
    B_D_hat: np.ndarray
    pattern: SaturationPattern
    algorithm: int
    alpha_max: float
    diagnostics: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)

    def model(self, dale_signs=None, self_loop_mask=None) -> LtnModel:
        """The identified parameters as an :class:`LtnModel`.

        ``alpha_hat`` is clipped into the open unit interval; sign metadata
        is attached only when the estimate satisfies it.
        """
        alpha = float(np.clip(self.alpha_hat, 1e-12, 1 - 1e-12))
        s = max(self.s_D_hat, 1e-12)
        W = np.array(self.W_D_hat)
        if self_loop_mask is None:
            self_loop_mask = np.diag(W) != 0
        try:
            return LtnModel(alpha, W, self.B_D_hat, s, self_loop_mask, dale_signs)
        except DataError:
            return LtnModel(alpha, W, self.B_D_hat, s, self_loop_mask, None)
