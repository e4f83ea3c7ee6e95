"""File formats: samples, models, results, landscapes, sweeps and rate recordings.

All CSV numbers are written with 17 significant digits; JSON floats use
Python's round-trip representation.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .types import LAYOUT_VERSION, DataBatch, IdentResult, LtnModel

FMT = "%.17g"


def _fmt(v) -> str:
    return FMT % v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from err


# samples -----------------------------------------------------------------

def samples_header(n: int, m: int) -> list:
    return ([f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)]
            + [f"xplus_{i + 1}" for i in range(n)])


def write_samples_csv(path, batch: DataBatch) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(samples_header(batch.n, batch.m))
        for k in range(batch.T_d):
            w.writerow([_fmt(v) for v in (*batch.x[k], *batch.u[k], *batch.x_plus[k])])


def _parse_header(header: list, path) -> tuple[int, int]:
    n = sum(1 for h in header if h.startswith("x_"))
    m = sum(1 for h in header if h.startswith("u_"))
    if header != samples_header(n, m):
        raise DataError(f"{path}: header must be x_1..x_n,u_1..u_m,xplus_1..xplus_n")
    return n, m


def read_samples_csv(path, eps_bar: float = 0.0, self_loop_mask=None) -> DataBatch:
    """Load a samples file; malformed rows are reported by line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        n, m = _parse_header(header, path)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2 * n + m:
                raise DataError(f"{path}: row {line_no} has {len(row)} fields, expected {2 * n + m}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}: row {line_no} contains a non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {line_no} contains a non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no samples")
    a = np.array(rows)
    return DataBatch(a[:, :n], a[:, n:n + m], a[:, n + m:], eps_bar, self_loop_mask)


# models and results ----------------------------------------------------------

def model_to_dict(model: LtnModel) -> dict:
    return {
        "layout_version": LAYOUT_VERSION,
        "n": model.n,
        "m": model.m,
        "alpha": model.alpha,
        "s_D": model.s_D,
        "W_D": model.W_D.tolist(),
        "B_D": model.B_D.tolist(),
        "dale_signs": [int(s) for s in model.dale_signs],
        "self_loop_mask": [bool(b) for b in model.self_loop_mask],
    }


def model_from_dict(d: dict) -> LtnModel:
    version = d.get("layout_version", LAYOUT_VERSION)
    if version != LAYOUT_VERSION:
        raise DataError(f"unsupported model layout_version {version}")
    try:
        return LtnModel(d["alpha"], np.array(d["W_D"], float), np.array(d["B_D"], float), d["s_D"],
                        d.get("self_loop_mask"), d.get("dale_signs"))
    except KeyError as err:
        raise DataError(f"model is missing field {err.args[0]!r}") from None


def result_to_dict(result: IdentResult, truth: LtnModel | None = None) -> dict:
    from .solver import rmse_h

    out = {
        "algorithm": result.algorithm,
        "alpha_hat": result.alpha_hat,
        "s_D_hat": result.s_D_hat,
        "J_value": result.J_value,
        "alpha_max": result.alpha_max,
        "W_D_hat": result.W_D_hat,
        "B_D_hat": result.B_D_hat,
        "h_hat": result.h_hat,
        "v_hat": result.v_hat,
        "pattern": {"S": result.pattern.set_S, "Z": result.pattern.set_Z},
        "diagnostics": result.diagnostics,
    }
    if truth is not None:
        out["errors"] = {
            "alpha_err": abs(result.alpha_hat - truth.alpha),
            "rmse_h": rmse_h(result.h_hat, truth.h),
            "sD_err": abs(result.s_D_hat - truth.s_D),
        }
    return _jsonable(out)


def config_from_dict(d: dict):
    """Build a :class:`GenerationConfig`; unknown or malformed fields are named."""
    from .simulate import GenerationConfig

    names = {f.name: f for f in dataclasses.fields(GenerationConfig)}
    kwargs = {}
    for key, val in d.items():
        if key not in names:
            raise DataError(f"config: unknown field {key!r}")
        if key.endswith("_range"):
            if not (isinstance(val, (list, tuple)) and len(val) == 2):
                raise DataError(f"config: field {key!r} must be a [lo, hi] pair")
            if val[0] > val[1]:
                raise DataError(f"config: field {key!r} is empty (lo > hi)")
            val = (float(val[0]), float(val[1]))
        elif key in ("dale_signs", "self_loop_mask") and val is not None:
            val = tuple(val)
        kwargs[key] = val
    try:
        return GenerationConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise DataError(f"config: {err}") from None


def config_to_dict(config) -> dict:
    return _jsonable(dataclasses.asdict(config))


# tables -----------------------------------------------------------------------

def write_csv(path, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_landscape_csv(path, alphas, J, candidates=()) -> None:
    rows = [(float(a), float(j), "grid") for a, j in zip(alphas, J)]
    for c in candidates:
        rows.append((float(c.alpha_cand), float(c.J_cand), "boundary" if c.is_boundary else "segment"))
    rows.sort(key=lambda r: (r[0], r[2]))
    write_csv(path, ["alpha", "J", "kind"], rows)


def write_landscape_svg(path, alphas, J, alpha_hat: float | None = None,
                        width: int = 640, height: int = 400) -> None:
    """Bare polyline of ``J`` against ``alpha``; no axes library involved."""
    a = np.asarray(alphas, dtype=float)
    j = np.asarray(J, dtype=float)
    ok = np.isfinite(j)
    a, j = a[ok], j[ok]
    pad = 40
    if a.size < 2:
        pts = ""
    else:
        a0, a1 = a.min(), a.max()
        j0, j1 = j.min(), j.max()
        sx = (width - 2 * pad) / ((a1 - a0) or 1.0)
        sy = (height - 2 * pad) / ((j1 - j0) or 1.0)
        pts = " ".join(f"{pad + (x - a0) * sx:.2f},{height - pad - (y - j0) * sy:.2f}" for x, y in zip(a, j))
    marker = ""
    if alpha_hat is not None and a.size >= 2:
        xh = pad + (alpha_hat - a.min()) * (width - 2 * pad) / ((a.max() - a.min()) or 1.0)
        marker = (f'<line x1="{xh:.2f}" y1="{pad}" x2="{xh:.2f}" y2="{height - pad}" '
                  'stroke="red" stroke-dasharray="4 3"/>')
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#999"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="black"/>\n'
        f'{marker}\n'
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle">alpha</text>\n'
        f'<text x="12" y="{height / 2:.0f}">J</text>\n'
        '</svg>\n',
        encoding="utf-8",
    )


SWEEP_HEADER = ["eps_bar", "trial", "algo", "alpha_err", "rmse_h", "sD_err", "J", "num_psi", "wall_ms", "status"]


def quartile_summary(rows: list) -> list:
    """Per ``(eps_bar, algo)`` quartiles of the error columns."""
    groups: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        groups.setdefault((r["eps_bar"], r["algo"]), []).append(r)
    out = []
    for (eps, algo), grp in sorted(groups.items()):
        for metric in ("alpha_err", "rmse_h", "sD_err", "num_psi"):
            q = np.percentile([g[metric] for g in grp], [0, 25, 50, 75, 100])
            out.append((eps, algo, metric, len(grp), *map(float, q)))
    return out


SUMMARY_HEADER = ["eps_bar", "algo", "metric", "count", "min", "q1", "median", "q3", "max"]


# rate recordings ------------------------------------------------------------

def read_rates_csv(path, time_column: str = "t") -> tuple[np.ndarray, dict]:
    """Time column and named value columns of a rate recording."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if time_column not in header:
            raise DataError(f"{path}: no time column {time_column!r}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}: row {line_no} contains a non-numeric field") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two time points")
    a = np.array(rows)
    cols = {h: a[:, j] for j, h in enumerate(header)}
    return cols.pop(time_column), cols


def check_uniform_grid(t, delta_t: float | None = None, rtol: float = 1e-6) -> float:
    """Return the sampling interval, or raise if the grid is not uniform."""
    d = np.diff(np.asarray(t, dtype=float))
    if delta_t is None:
        delta_t = float(np.median(d))
    if delta_t <= 0 or np.any(np.abs(d - delta_t) > rtol * max(1.0, abs(delta_t))):
        raise DataError(
            f"time grid is not uniform with step {delta_t:g}: measured intervals range "
            f"from {d.min():g} to {d.max():g}"
        )
    return float(delta_t)


AUG_CHANNELS = ("time", "impulse", "const")


def augment_inputs(t, inputs: np.ndarray, aug: tuple) -> np.ndarray:
    """Append the requested synthetic channels to measured inputs.

    ``time`` is the timestamp itself, ``impulse`` is 1 at the sample whose
    timestamp is 0 and 0 elsewhere, ``const`` is 1 everywhere.
    """
    t = np.asarray(t, dtype=float)
    cols = [inputs] if inputs.size else [np.zeros((t.size, 0))]
    for name in aug:
        if name == "time":
            cols.append(t[:, None])
        elif name == "impulse":
            cols.append((t == 0).astype(float)[:, None])
        elif name == "const":
            cols.append(np.ones((t.size, 1)))
        else:
            raise DataError(f"unknown augmented input {name!r}; choose from {AUG_CHANNELS}")
    return np.hstack(cols)


def normalize_inputs(inputs: np.ndarray, how: str) -> np.ndarray:
    """``raw`` leaves inputs untouched; ``zscore`` centres and scales each input column.

    States are never normalized here since the model needs non-negative rates.
    """
    if how == "raw":
        return inputs
    if how == "zscore":
        sd = inputs.std(axis=0)
        sd[sd == 0] = 1.0
        return (inputs - inputs.mean(axis=0)) / sd
    raise DataError(f"unknown normalization {how!r}")


def trajectory_batch(states: np.ndarray, inputs: np.ndarray, eps_bar: float = 0.0,
                     self_loop_mask=None) -> DataBatch:
    """Consecutive pairs ``(x(t_k), u(t_k), x(t_{k+1}))`` of a recording."""
    if states.shape[0] != inputs.shape[0]:
        raise DataError("states and inputs must have the same number of time points")
    return DataBatch(states[:-1], inputs[:-1], states[1:], eps_bar, self_loop_mask)
