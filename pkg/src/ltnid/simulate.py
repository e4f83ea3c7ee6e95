"""Forward simulation, Euler discretization and synthetic data generation.

Random numbers come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence``; the model, the states, the inputs and the noise each draw
from their own spawned child stream, so a seed reproduces a batch on any
platform with the same numpy major version.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .types import DataBatch, LtnModel


def threshold(x, s: float) -> np.ndarray:
    """Clamp ``x`` componentwise to ``[0, s]``."""
    return np.clip(np.asarray(x, dtype=float), 0.0, s)


def step(model: LtnModel, x, u) -> np.ndarray:
    """One update ``alpha x + [W_D x + B_D u]_0^{s_D}``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != model.n or u.shape[-1] != model.m:
        raise DataError(
            f"expected x of length {model.n} and u of length {model.m}, "
            f"got {x.shape[-1]} and {u.shape[-1]}"
        )
    drive = x @ model.W_D.T + u @ model.B_D.T
    return model.alpha * x + threshold(drive, model.s_D)


def discretize(tau: float, delta: float, W, B, s: float, self_loop_mask=None, dale_signs=None) -> LtnModel:
    """Forward-Euler map from time constant ``tau`` and step ``delta``.

    ``alpha = 1 - delta / tau`` and ``W``, ``B``, ``s`` are scaled by
    ``delta / tau``.
    """
    if not (0.0 < delta < tau):
        raise DataError(f"need 0 < delta < tau, got delta={delta}, tau={tau}")
    r = delta / tau
    W = np.asarray(W, dtype=float)
    if self_loop_mask is None:
        self_loop_mask = np.diag(W) != 0
    return LtnModel(1.0 - r, r * W, r * np.asarray(B, dtype=float), r * s, self_loop_mask, dale_signs)


def simulate_trajectory(model: LtnModel, x0, inputs: Sequence) -> np.ndarray:
    """Iterate :func:`step`; row ``k`` of the result is the state at step ``k``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != model.n:
        raise DataError(f"x0 has length {x0.size}, expected {model.n}")
    if np.any(x0 < 0):
        raise DataError("x0 must be non-negative")
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs.reshape(-1, model.m) if inputs.size else np.zeros((0, model.m))
    states = np.empty((inputs.shape[0] + 1, model.n))
    states[0] = x0
    for k, u in enumerate(inputs):
        states[k + 1] = step(model, states[k], u)
    return states


@dataclass(frozen=True)
class GenerationConfig:
    """Recipe for a random ground-truth model and independent samples.

    Columns ``0..n_excitatory-1`` of ``W_D`` are excitatory and drawn from
    ``excitatory_range``; the remaining columns are inhibitory and drawn
    from ``inhibitory_range``.  Leaving ``n_excitatory`` unset makes every
    column excitatory, the setting under which noisy data of the default
    size typically keep ``alpha_max = 1``.  Supplying ``dale_signs``
    overrides the split.
    """

    n: int = 10
    m: int = 10
    T_d: int = 250
    state_range: tuple = (0.0, 4.0)
    input_range: tuple = (0.0, 6.0)
    excitatory_range: tuple = (0.0, 0.1)
    inhibitory_range: tuple = (-0.05, 0.0)
    input_weight_range: tuple = (-0.04, 0.06)
    alpha_star: float = 0.9
    s_D_star: float = 2.0
    rng_seed: int = 0
    n_excitatory: Optional[int] = None
    dale_signs: Optional[tuple] = None
    self_loop_mask: Optional[tuple] = None

    def __post_init__(self):
        for name in ("n", "m", "T_d"):
            if int(getattr(self, name)) < 1:
                raise DataError(f"{name} must be a positive integer")
        for name in ("state_range", "input_range", "excitatory_range",
                     "inhibitory_range", "input_weight_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise DataError(f"{name} is empty: lower bound {lo} exceeds upper bound {hi}")
        if self.state_range[0] < 0:
            raise DataError("state_range must be non-negative")
        if self.excitatory_range[0] < 0:
            raise DataError("excitatory_range must be non-negative")
        if self.inhibitory_range[1] > 0:
            raise DataError("inhibitory_range must be non-positive")
        if not 0.0 < self.alpha_star < 1.0:
            raise DataError("alpha_star must lie in (0, 1)")
        if not self.s_D_star > 0:
            raise DataError("s_D_star must be positive")
        if self.n_excitatory is not None and not 0 <= self.n_excitatory <= self.n:
            raise DataError(f"n_excitatory must lie in [0, {self.n}]")
        if self.dale_signs is not None and len(self.dale_signs) != self.n:
            raise DataError(f"dale_signs must have length {self.n}")
        if self.self_loop_mask is not None and len(self.self_loop_mask) != self.n:
            raise DataError(f"self_loop_mask must have length {self.n}")

    def signs(self) -> np.ndarray:
        if self.dale_signs is not None:
            return np.asarray(self.dale_signs, dtype=np.int8)
        n_exc = self.n if self.n_excitatory is None else self.n_excitatory
        signs = -np.ones(self.n, dtype=np.int8)
        signs[:n_exc] = 1
        return signs


def _streams(seed, count: int) -> list:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def random_model(config: GenerationConfig, rng: np.random.Generator) -> LtnModel:
    n, m = config.n, config.m
    signs = config.signs()
    mask = np.zeros(n, dtype=bool) if config.self_loop_mask is None else np.asarray(config.self_loop_mask, bool)
    W = np.empty((n, n))
    for j in range(n):
        lo, hi = config.excitatory_range if signs[j] >= 0 else config.inhibitory_range
        W[:, j] = rng.uniform(lo, hi, size=n)
    W[np.diag_indices(n)] *= mask
    B = rng.uniform(*config.input_weight_range, size=(n, m))
    return LtnModel(config.alpha_star, W, B, config.s_D_star, mask, signs)


def generate_synthetic(config: GenerationConfig) -> tuple[LtnModel, DataBatch]:
    """Draw a ground-truth model and ``T_d`` independent noiseless samples."""
    model_rng, x_rng, u_rng = _streams(config.rng_seed, 3)
    model = random_model(config, model_rng)
    x = x_rng.uniform(*config.state_range, size=(config.T_d, config.n))
    u = u_rng.uniform(*config.input_range, size=(config.T_d, config.m))
    x_plus = step(model, x, u)
    return model, DataBatch(x, u, x_plus, 0.0, model.self_loop_mask)


def count_saturated(model: LtnModel, batch: DataBatch) -> tuple[int, int]:
    """Numbers of drive entries clamped at ``s_D`` and at 0 on noiseless data."""
    drive = batch.x @ model.W_D.T + batch.u @ model.B_D.T
    return int(np.sum(drive >= model.s_D)), int(np.sum(drive <= 0))


def add_noise(batch: DataBatch, eps_bar: float, rng_seed) -> DataBatch:
    """Perturb ``x``, ``u`` and ``x_plus`` with i.i.d. noise uniform on ``[-eps_bar, eps_bar]``.

    Noisy values are not clipped back to be non-negative.
    """
    if not eps_bar >= 0:
        raise DataError(f"eps_bar must be non-negative, got {eps_bar}")
    if eps_bar == 0:
        return batch.with_eps(0.0)
    rx, ru, rxp = _streams(rng_seed, 3)
    return DataBatch(
        batch.x + rx.uniform(-eps_bar, eps_bar, size=batch.x.shape),
        batch.u + ru.uniform(-eps_bar, eps_bar, size=batch.u.shape),
        batch.x_plus + rxp.uniform(-eps_bar, eps_bar, size=batch.x_plus.shape),
        eps_bar,
        batch.self_loop_mask,
    )
