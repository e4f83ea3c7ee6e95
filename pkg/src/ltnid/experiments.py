"""Experiment drivers shared by the command line and the acceptance suite."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import LtnError
from .io import augment_inputs, check_uniform_grid, normalize_inputs, trajectory_batch
from .simulate import add_noise, simulate_trajectory
from .solver import identify, rmse_h
from .types import DataBatch, IdentResult, LtnModel, normalize_signs
from .validation import AssumptionReport, _masked_singular_values, _NodeFactors, check_assumption1
from .lsq import RANK_RTOL


def trial_seed(seed: int, eps_index: int, trial: int) -> tuple:
    """Entropy tuple for one sweep trial; independent of scheduling order."""
    return (int(seed), int(eps_index), int(trial))


def _one_trial(args):
    model, clean, eps, eps_index, trial, seed = args
    noisy = add_noise(clean, eps, trial_seed(seed, eps_index, trial))
    rows = []
    for algo in (1, 2):
        t0 = time.perf_counter()
        try:
            res = identify(noisy, algo, model.dale_signs if algo == 2 else None)
            rows.append({
                "eps_bar": eps, "trial": trial, "algo": f"ALG{algo}",
                "alpha_err": abs(res.alpha_hat - model.alpha),
                "rmse_h": rmse_h(res.h_hat, model.h),
                "sD_err": abs(res.s_D_hat - model.s_D),
                "J": res.J_value,
                "num_psi": res.diagnostics["num_critical_points"],
                "iterations": res.diagnostics["iterations"],
                "iteration_bound": res.diagnostics["iteration_bound"],
                "num_patterns": res.diagnostics["num_distinct_patterns"],
                "wall_ms": 1000.0 * (time.perf_counter() - t0),
                "status": "ok",
            })
        except LtnError as err:
            rows.append({
                "eps_bar": eps, "trial": trial, "algo": f"ALG{algo}",
                "alpha_err": math.nan, "rmse_h": math.nan, "sD_err": math.nan, "J": math.nan,
                "num_psi": -1, "iterations": -1, "iteration_bound": -1, "num_patterns": -1,
                "wall_ms": 1000.0 * (time.perf_counter() - t0),
                "status": f"error: {type(err).__name__}: {err}",
            })
    return rows


def run_noise_sweep(model: LtnModel, clean: DataBatch, eps_list, trials: int, seed: int = 0,
                    threads: int = 1) -> list:
    """Fresh noise per ``(eps_bar, trial)``; both algorithms on each noisy batch.

    Rows come back ordered by ``eps_bar`` position, trial and algorithm
    whatever the number of worker processes.
    """
    jobs = [(model, clean, float(eps), e, t, seed)
            for e, eps in enumerate(eps_list) for t in range(trials)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_one_trial, jobs))
    else:
        chunks = [_one_trial(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def check_full_rank(batch: DataBatch) -> AssumptionReport:
    """Rank of ``[X P]`` on all rows: the pattern-free special case of the pairwise check."""
    s = _masked_singular_values(_NodeFactors(batch), np.ones(batch.N, dtype=bool))
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    return AssumptionReport(
        passed=ratio > RANK_RTOL,
        num_E_matrices=1,
        min_singular_value_seen=float(s[-1]),
        failing_pair=None if ratio > RANK_RTOL else (0, 0),
        min_ratio_seen=ratio,
        pairs_checked=1,
        exhaustive=False,
        bound=4 * batch.N + 2,
    )


@dataclass
class Reconstruction:
    t: np.ndarray
    measured: np.ndarray
    reconstructed: np.ndarray
    inputs: np.ndarray
    batch: DataBatch
    result: IdentResult | None
    report: AssumptionReport | None
    model: LtnModel | None


class AssumptionFailure(LtnError):
    def __init__(self, report: AssumptionReport):
        super().__init__(
            f"rank condition fails (smallest singular-value ratio {report.min_ratio_seen:.3e})"
        )
        self.report = report


def reconstruct(t, states, measured_inputs, delta_t=None, aug=("time", "impulse", "const"),
                self_loop_mask=None, dale_signs=None, eps_bar: float = 0.0, normalize: str = "raw",
                rank_policy: str = "lstsq", validate: str = "basic",
                max_pairs: int | None = 20000, seed: int = 0) -> Reconstruction:
    """Identify a model from one recording and replay it from the first state.

    ``validate`` is ``"none"``, ``"basic"`` (rank of the unmasked data
    matrix) or ``"strict"`` (pairwise check over all patterns); a failing
    check raises :class:`AssumptionFailure`.  The replay starts from the
    first measured state clipped at zero and uses the measured inputs.
    Rank deficiency defaults to ``"lstsq"`` here: the impulse channel is
    nonzero on one row only, so any segment saturating that row loses a
    column.
    """
    t = np.asarray(t, dtype=float)
    states = np.asarray(states, dtype=float)
    check_uniform_grid(t, delta_t)
    u = augment_inputs(t, normalize_inputs(np.asarray(measured_inputs, dtype=float).reshape(t.size, -1),
                                           normalize), tuple(aug))
    batch = trajectory_batch(states, u, eps_bar, self_loop_mask)
    report = None
    if validate == "basic":
        report = check_full_rank(batch)
    elif validate == "strict":
        report = check_assumption1(batch, max_pairs=max_pairs, seed=seed)
    elif validate != "none":
        raise ValueError(f"unknown validate mode {validate!r}")
    if report is not None and not report.passed:
        raise AssumptionFailure(report)
    signs = normalize_signs(dale_signs, batch.n)
    result = identify(batch, 2, signs, rank_policy)
    model = result.model(signs, batch.self_loop_mask)
    replay = simulate_trajectory(model, np.maximum(states[0], 0.0), u[:-1])
    return Reconstruction(t, states, replay, u, batch, result, report, model)
