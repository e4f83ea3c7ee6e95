"""Command line interface: ``ltnid <command>``.

Every command exits 0 when it produced its result files.  Failures write
``error.json`` into the output directory, echo the same JSON on stderr and
exit 1; a failed rank check under strict validation exits 2.
"""
from __future__ import annotations

import functools
import json
import sys
import time
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import io as lio
from .errors import LtnError
from .experiments import AssumptionFailure, reconstruct, run_noise_sweep
from .simulate import GenerationConfig, add_noise, generate_synthetic, simulate_trajectory
from .solver import identify
from .types import normalize_signs
from .validation import check_assumption1, estimate_sigmas, grid_oracle, prop2_bound

EXIT_ERROR = 1
EXIT_VALIDATION = 2


class _Ctx:
    def __init__(self, seed, threads, output_dir):
        self.seed = seed
        self.threads = threads
        self.output_dir = Path(output_dir)

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name


def _fail(ctx: _Ctx, err: Exception, code: int, extra: dict | None = None):
    payload = {"error": type(err).__name__, "message": str(err)}
    if extra:
        payload.update(extra)
    try:
        lio.write_json(ctx.path("error.json"), payload)
    except OSError:
        pass
    click.echo(json.dumps(lio._jsonable(payload)), err=True)
    sys.exit(code)


def _guarded(fn):
    """Turn library errors into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context().obj
        try:
            return fn(*args, **kwargs)
        except AssumptionFailure as err:
            _fail(ctx, err, EXIT_VALIDATION, {"report": err.report.to_dict()})
        except (LtnError, ValueError, OSError) as err:
            _fail(ctx, err, EXIT_ERROR)

    return wrapper


def _int_list(text: str | None, name: str):
    if text is None:
        return None
    try:
        return [int(float(v)) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}", param_hint=name)


def _float_list(text: str, name: str):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}", param_hint=name)


def _record(ctx: _Ctx, command: str, config: dict, result: dict | None, timing: dict) -> None:
    lio.write_json(ctx.path("run.json"), {
        "tool_version": __version__,
        "command": command,
        "seed": ctx.seed,
        "config": config,
        "timing": timing,
        "result": result,
    })


def _load_config(path) -> GenerationConfig:
    return lio.config_from_dict(lio.read_json(path)) if path else GenerationConfig()


@click.group()
@click.version_option(__version__, prog_name="ltnid")
@click.option("--seed", type=int, default=None, help="Master seed; overrides the config's rng_seed.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker processes for noise sweeps.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.pass_context
def main(ctx, seed, threads, output_dir):
    """Identify linear-threshold firing-rate networks from sampled data."""
    ctx.obj = _Ctx(seed, threads, output_dir)


@main.command()
@click.argument("config_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--eps-bar", type=float, default=0.0, show_default=True,
              help="Also write samples_noisy.csv with uniform noise of this bound.")
@_guarded
def generate(config_file, eps_bar):
    """Draw a ground-truth model and samples from a JSON config."""
    ctx = click.get_current_context().obj
    config = _load_config(config_file)
    if ctx.seed is not None:
        config = lio.config_from_dict({**lio.config_to_dict(config), "rng_seed": ctx.seed})
    t0 = time.perf_counter()
    model, batch = generate_synthetic(config)
    lio.write_json(ctx.path("model.json"), lio.model_to_dict(model))
    lio.write_samples_csv(ctx.path("samples.csv"), batch)
    if eps_bar > 0:
        lio.write_samples_csv(ctx.path("samples_noisy.csv"), add_noise(batch, eps_bar, config.rng_seed))
    _record(ctx, "generate", {**lio.config_to_dict(config), "eps_bar": eps_bar}, None,
            {"total_s": time.perf_counter() - t0})
    click.echo(f"wrote {batch.T_d} samples (n={batch.n}, m={batch.m}) to {ctx.output_dir}")


@main.command()
@click.argument("samples_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps-bar", type=float, default=0.0, show_default=True, help="Noise bound of the data.")
@click.option("--algorithm", type=click.Choice(["1", "2"]), default="2", show_default=True)
@click.option("--dale-signs", default=None, help="Comma-separated +1/-1/0 per node.")
@click.option("--self-loops", default=None, help="Comma-separated 0/1 per node.")
@click.option("--validate", type=click.Choice(["none", "report", "strict"]), default="none",
              show_default=True)
@click.option("--max-pairs", type=int, default=None, help="Sample this many pattern pairs when validating.")
@click.option("--rank-policy", type=click.Choice(["raise", "lstsq"]), default="raise", show_default=True)
@click.option("--landscape-points", type=click.IntRange(min=0), default=2000, show_default=True)
@click.option("--true-model", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Ground-truth model.json; adds error metrics to the result.")
@_guarded
def identify_cmd(samples_file, eps_bar, algorithm, dale_signs, self_loops, validate, max_pairs,
                 rank_policy, landscape_points, true_model):
    """Identify alpha, W_D, B_D and s_D from a samples file."""
    ctx = click.get_current_context().obj
    t0 = time.perf_counter()
    mask = _int_list(self_loops, "--self-loops")
    batch = lio.read_samples_csv(samples_file, eps_bar, None if mask is None else [bool(v) for v in mask])
    signs = normalize_signs(_int_list(dale_signs, "--dale-signs"), batch.n)
    algo = int(algorithm)
    timing = {"read_s": time.perf_counter() - t0}

    report = None
    if validate != "none":
        t1 = time.perf_counter()
        report = check_assumption1(batch.with_eps(0.0) if algo == 1 else batch,
                                   max_pairs=max_pairs, seed=ctx.seed or 0)
        lio.write_json(ctx.path("assumption_report.json"), report.to_dict())
        timing["validate_s"] = time.perf_counter() - t1
        if validate == "strict" and not report.passed:
            raise AssumptionFailure(report)

    t1 = time.perf_counter()
    result = identify(batch, algo, signs if algo == 2 else None, rank_policy)
    timing["identify_s"] = time.perf_counter() - t1
    if report is not None:
        result.diagnostics["rank_check_passed"] = report.passed
    truth = lio.model_from_dict(lio.read_json(true_model)) if true_model else None
    payload = lio.result_to_dict(result, truth)
    lio.write_json(ctx.path("result.json"), payload)

    if landscape_points:
        t1 = time.perf_counter()
        work = batch.with_eps(0.0) if algo == 1 else batch
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            grid = grid_oracle(work, max(2, landscape_points), method="block", keep_values=True,
                               amax=result.alpha_max)
        lio.write_landscape_csv(ctx.path("landscape.csv"), grid.alphas, grid.J_values, result.candidates)
        lio.write_landscape_svg(ctx.path("landscape.svg"), grid.alphas, grid.J_values, result.alpha_hat)
        timing["landscape_s"] = time.perf_counter() - t1

    timing["total_s"] = time.perf_counter() - t0
    _record(ctx, "identify", {"samples": str(samples_file), "eps_bar": eps_bar, "algorithm": algo,
                              "dale_signs": signs, "self_loops": mask, "rank_policy": rank_policy},
            payload, timing)
    click.echo(f"alpha_hat={result.alpha_hat:.10g} s_D_hat={result.s_D_hat:.10g} J={result.J_value:.6g} "
               f"critical_points={result.diagnostics['num_critical_points']}")


main.add_command(identify_cmd, name="identify")


@main.command("noise-sweep")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Generation config; the ground truth is drawn from it.")
@click.option("--samples", "samples_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Clean samples file (requires --model).")
@click.option("--model", "model_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--eps-list", default="0.02,0.04,0.06,0.08,0.1", show_default=True)
@click.option("--trials", type=click.IntRange(min=0), default=20, show_default=True)
@_guarded
def noise_sweep(config_file, samples_file, model_file, eps_list, trials):
    """Re-identify under fresh noise for each noise bound and trial."""
    ctx = click.get_current_context().obj
    t0 = time.perf_counter()
    if samples_file:
        if not model_file:
            raise click.UsageError("--samples needs --model for the error metrics")
        model = lio.model_from_dict(lio.read_json(model_file))
        clean = lio.read_samples_csv(samples_file, 0.0, model.self_loop_mask)
        config = {"samples": str(samples_file), "model": str(model_file)}
    else:
        cfg = _load_config(config_file)
        if ctx.seed is not None:
            cfg = lio.config_from_dict({**lio.config_to_dict(cfg), "rng_seed": ctx.seed})
        model, clean = generate_synthetic(cfg)
        config = lio.config_to_dict(cfg)
    eps = _float_list(eps_list, "--eps-list")
    rows = run_noise_sweep(model, clean, eps, trials, ctx.seed or 0, ctx.threads)
    lio.write_csv(ctx.path("sweep.csv"), lio.SWEEP_HEADER, [[r[k] for k in lio.SWEEP_HEADER] for r in rows])
    lio.write_csv(ctx.path("sweep_summary.csv"), lio.SUMMARY_HEADER, lio.quartile_summary(rows))
    _record(ctx, "noise-sweep", {**config, "eps_list": eps, "trials": trials}, None,
            {"total_s": time.perf_counter() - t0})
    failed = sum(r["status"] != "ok" for r in rows)
    click.echo(f"wrote {len(rows)} rows ({failed} failed) to {ctx.path('sweep.csv')}")


@main.command("reconstruct")
@click.argument("rates_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--time-column", default="t", show_default=True)
@click.option("--delta-t", type=float, default=None, help="Expected sampling interval.")
@click.option("--state-columns", required=True, help="Comma-separated column names of the states.")
@click.option("--input-columns", default="", help="Comma-separated column names of measured inputs.")
@click.option("--aug-inputs", default="time,impulse,const", show_default=True,
              help="Synthetic input channels to append (time, impulse, const; empty for none).")
@click.option("--self-loops", default=None, help="Comma-separated 0/1 per state.")
@click.option("--dale-signs", default=None, help="Comma-separated +1/-1/0 per state.")
@click.option("--eps-bar", type=float, default=0.0, show_default=True)
@click.option("--normalize", type=click.Choice(["raw", "zscore"]), default="raw", show_default=True)
@click.option("--validate", type=click.Choice(["none", "basic", "strict"]), default="basic",
              show_default=True)
@click.option("--rank-policy", type=click.Choice(["raise", "lstsq"]), default="lstsq", show_default=True)
@_guarded
def reconstruct_cmd(rates_file, time_column, delta_t, state_columns, input_columns, aug_inputs,
                    self_loops, dale_signs, eps_bar, normalize, validate, rank_policy):
    """Identify a model from a rate recording and replay it."""
    ctx = click.get_current_context().obj
    t0 = time.perf_counter()
    t, cols = lio.read_rates_csv(rates_file, time_column)
    s_names = [c.strip() for c in state_columns.split(",") if c.strip()]
    u_names = [c.strip() for c in input_columns.split(",") if c.strip()]
    missing = [c for c in s_names + u_names if c not in cols]
    if missing:
        raise lio.DataError(f"{rates_file}: missing columns {missing}")
    states = np.column_stack([cols[c] for c in s_names])
    inputs = np.column_stack([cols[c] for c in u_names]) if u_names else np.zeros((t.size, 0))
    aug = tuple(a.strip() for a in aug_inputs.split(",") if a.strip())
    mask = _int_list(self_loops, "--self-loops")
    rec = reconstruct(t, states, inputs, delta_t, aug,
                      None if mask is None else [bool(v) for v in mask],
                      _int_list(dale_signs, "--dale-signs"), eps_bar, normalize, rank_policy,
                      validate, seed=ctx.seed or 0)
    header = ["t"] + [f"measured_{c}" for c in s_names] + [f"reconstructed_{c}" for c in s_names]
    lio.write_csv(ctx.path("reconstruction.csv"), header,
                  [[float(v) for v in (rec.t[k], *rec.measured[k], *rec.reconstructed[k])]
                   for k in range(rec.t.size)])
    payload = lio.result_to_dict(rec.result)
    payload["input_names"] = u_names + list(aug)
    payload["state_names"] = s_names
    lio.write_json(ctx.path("result.json"), payload)
    if rec.report is not None:
        lio.write_json(ctx.path("assumption_report.json"), rec.report.to_dict())
    _record(ctx, "reconstruct", {"rates": str(rates_file), "states": s_names, "inputs": u_names,
                                 "aug": list(aug), "eps_bar": eps_bar, "normalize": normalize},
            payload, {"total_s": time.perf_counter() - t0})
    mae = np.mean(np.abs(rec.reconstructed - rec.measured), axis=0)
    click.echo("mean absolute error per state: " + ", ".join(f"{v:.4g}" for v in mae))


@main.command("validate")
@click.argument("samples_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps-bar", type=float, default=0.0, show_default=True)
@click.option("--self-loops", default=None)
@click.option("--max-pairs", type=int, default=None)
@click.option("--strict", is_flag=True, help="Exit 2 when the rank condition fails.")
@click.option("--gamma", type=float, default=None,
              help="Threshold for estimating the sample probabilities of the bound.")
@click.option("--sigmas", default=None, help="sigma1,sigma2 for the probability bound.")
@_guarded
def validate_cmd(samples_file, eps_bar, self_loops, max_pairs, strict, gamma, sigmas):
    """Check the rank condition over all pattern pairs and report the probability bound."""
    ctx = click.get_current_context().obj
    mask = _int_list(self_loops, "--self-loops")
    batch = lio.read_samples_csv(samples_file, eps_bar, None if mask is None else [bool(v) for v in mask])
    report = check_assumption1(batch, max_pairs=max_pairs, seed=ctx.seed or 0)
    out = report.to_dict()
    s = None
    if sigmas:
        s = _float_list(sigmas, "--sigmas")
        if len(s) != 2:
            raise click.BadParameter("need exactly two values", param_hint="--sigmas")
    elif gamma is not None:
        s = estimate_sigmas(batch, gamma)
        out["gamma"] = gamma
    if s is not None:
        out["sigma1"], out["sigma2"] = s
        out["probability_lower_bound"] = (prop2_bound(s[0], s[1], batch.T_d, batch.n, batch.m)
                                          if min(s) > 0 else 0.0)
    lio.write_json(ctx.path("assumption_report.json"), out)
    click.echo(f"rank condition {'holds' if report.passed else 'fails'} over {report.pairs_checked} "
               f"pattern pairs ({report.mode}); {report.num_E_matrices} patterns")
    if strict and not report.passed:
        raise AssumptionFailure(report)


@main.command("simulate")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--inputs", "inputs_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV with columns u_1..u_m, one row per step.")
@click.option("--steps", type=click.IntRange(min=0), default=100, show_default=True,
              help="Number of steps with random inputs when --inputs is absent.")
@click.option("--input-range", default="0,6", show_default=True)
@click.option("--x0", default=None, help="Comma-separated initial state (default zeros).")
@_guarded
def simulate_cmd(model_file, inputs_file, steps, input_range, x0):
    """Simulate a model and write trajectory.csv."""
    ctx = click.get_current_context().obj
    model = lio.model_from_dict(lio.read_json(model_file))
    if inputs_file:
        u = np.loadtxt(inputs_file, delimiter=",", skiprows=1, ndmin=2)
        if u.shape[1] != model.m:
            raise lio.DataError(f"{inputs_file}: expected {model.m} input columns, got {u.shape[1]}")
    else:
        lo, hi = _float_list(input_range, "--input-range")
        rng = np.random.Generator(np.random.PCG64(ctx.seed or 0))
        u = rng.uniform(lo, hi, size=(steps, model.m))
    start = np.zeros(model.n) if x0 is None else np.array(_float_list(x0, "--x0"))
    traj = simulate_trajectory(model, start, u)
    header = ["k"] + [f"x_{i + 1}" for i in range(model.n)] + [f"u_{j + 1}" for j in range(model.m)]
    rows = []
    for k in range(traj.shape[0]):
        uk = u[k] if k < u.shape[0] else np.full(model.m, np.nan)
        rows.append([k, *map(float, traj[k]), *map(float, uk)])
    lio.write_csv(ctx.path("trajectory.csv"), header, rows)
    click.echo(f"wrote {traj.shape[0]} states to {ctx.path('trajectory.csv')}")


if __name__ == "__main__":  # pragma: no cover
    main()
