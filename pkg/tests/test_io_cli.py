import json

import numpy as np
import pytest
from click.testing import CliRunner

from ltnid import __version__
from ltnid import io as lio
from ltnid.cli import main
from ltnid.errors import DataError
from ltnid.simulate import GenerationConfig, generate_synthetic, simulate_trajectory
from ltnid.types import DataBatch, LtnModel

GOLDEN_SAMPLES = (
    "x_1,x_2,u_1,xplus_1,xplus_2\n"
    "1,0.5,2,0.10000000000000001,3\n"
    "0,0.25,-1,1.5,0\n"
)


def run(args, tmp_path):
    return CliRunner().invoke(main, ["--output-dir", str(tmp_path)] + args, catch_exceptions=False)


def test_samples_golden_and_round_trip(tmp_path):
    b = DataBatch(np.array([[1.0, 0.5], [0.0, 0.25]]), np.array([[2.0], [-1.0]]),
                  np.array([[0.1, 3.0], [1.5, 0.0]]))
    path = tmp_path / "s.csv"
    lio.write_samples_csv(path, b)
    assert path.read_text() == GOLDEN_SAMPLES
    back = lio.read_samples_csv(path)
    assert np.array_equal(back.x, b.x) and np.array_equal(back.u, b.u) and np.array_equal(back.x_plus, b.x_plus)


def test_random_samples_round_trip_bitwise(tmp_path):
    _, b = generate_synthetic(GenerationConfig(n=3, m=2, T_d=20, rng_seed=4))
    lio.write_samples_csv(tmp_path / "s.csv", b)
    back = lio.read_samples_csv(tmp_path / "s.csv")
    assert np.array_equal(back.x_plus, b.x_plus)


@pytest.mark.parametrize("body,match", [
    ("1,2,3,4,5\n1,2,3\n", "row 3"),
    ("1,2,3,4,5\n1,2,x,4,5\n", "row 3"),
    ("1,2,nan,4,5\n", "row 2"),
])
def test_malformed_rows_are_located(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text("x_1,x_2,u_1,xplus_1,xplus_2\n" + body)
    with pytest.raises(DataError, match=match):
        lio.read_samples_csv(path)


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="header"):
        lio.read_samples_csv(path)


def test_model_json_golden_fields():
    m = LtnModel(0.9, np.array([[0.0, 0.1], [0.0, 0.0]]), np.array([[0.2], [0.3]]), 2.0)
    d = lio.model_to_dict(m)
    assert list(d) == ["layout_version", "n", "m", "alpha", "s_D", "W_D", "B_D", "dale_signs", "self_loop_mask"]
    assert d["W_D"] == [[0.0, 0.1], [0.0, 0.0]] and d["self_loop_mask"] == [False, False]
    back = lio.model_from_dict(json.loads(json.dumps(d)))
    assert np.array_equal(back.W_D, m.W_D) and back.alpha == m.alpha
    with pytest.raises(DataError, match="layout_version"):
        lio.model_from_dict({**d, "layout_version": 99})


def test_config_errors_name_field():
    with pytest.raises(DataError, match="state_range"):
        lio.config_from_dict({"state_range": [3, 1]})
    with pytest.raises(DataError, match="bogus"):
        lio.config_from_dict({"bogus": 1})


def test_augmented_inputs_and_normalization():
    t = np.array([-0.02, -0.01, 0.0, 0.01])
    u = np.array([[1.0], [2.0], [3.0], [4.0]])
    aug = lio.augment_inputs(t, u, ("time", "impulse", "const"))
    assert aug.shape == (4, 4)
    assert aug[:, 1].tolist() == t.tolist()
    assert aug[:, 2].tolist() == [0, 0, 1, 0]
    assert aug[:, 3].tolist() == [1, 1, 1, 1]
    z = lio.normalize_inputs(u, "zscore")
    assert abs(z.mean()) < 1e-12 and z.std() == pytest.approx(1.0)
    assert lio.normalize_inputs(u, "raw") is u
    with pytest.raises(DataError):
        lio.augment_inputs(t, u, ("ramp",))


def test_uniform_grid_check():
    assert lio.check_uniform_grid(np.arange(5) * 0.1) == pytest.approx(0.1)
    with pytest.raises(DataError, match="intervals range"):
        lio.check_uniform_grid(np.array([0.0, 0.1, 0.25, 0.3]))


def test_generate_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--seed", "5", "generate"], a).exit_code == 0
    assert run(["--seed", "5", "generate"], b).exit_code == 0
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()
    assert len((a / "samples.csv").read_text().splitlines()) == 251
    header = (a / "samples.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 30


def test_generate_rejects_empty_range(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input_range": [6, 0]}))
    res = CliRunner().invoke(main, ["--output-dir", str(tmp_path), "generate", str(cfg)])
    assert res.exit_code == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert "input_range" in err["message"]


@pytest.fixture
def small_run(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 3, "m": 2, "T_d": 40, "input_range": [0, 12]}))
    assert run(["--seed", "1", "generate", str(cfg), "--eps-bar", "0.02"], tmp_path / "g").exit_code == 0
    return tmp_path / "g"


def test_identify_outputs(small_run, tmp_path):
    out = tmp_path / "id"
    res = run(["identify", str(small_run / "samples.csv"), "--algorithm", "1",
               "--true-model", str(small_run / "model.json"), "--validate", "report"], out)
    assert res.exit_code == 0, res.output
    result = json.loads((out / "result.json").read_text())
    assert result["alpha_hat"] == pytest.approx(0.9, abs=1e-8)
    assert result["errors"]["rmse_h"] <= 1e-6
    assert result["diagnostics"]["rank_check_passed"] is True
    lines = (out / "landscape.csv").read_text().splitlines()
    assert lines[0] == "alpha,J,kind"
    kinds = [ln.rsplit(",", 1)[1] for ln in lines[1:]]
    assert kinds.count("grid") == 2000 and "segment" in kinds and "boundary" in kinds
    record = json.loads((out / "run.json").read_text())
    assert record["tool_version"] == __version__ and record["command"] == "identify"
    assert set(record["timing"]) >= {"identify_s", "total_s"}
    assert (out / "assumption_report.json").exists() and (out / "landscape.svg").exists()


def test_identify_reproducible(small_run, tmp_path):
    results = []
    for name in ("r1", "r2"):
        assert run(["identify", str(small_run / "samples_noisy.csv"), "--eps-bar", "0.02",
                    "--landscape-points", "0"], tmp_path / name).exit_code == 0
        d = json.loads((tmp_path / name / "result.json").read_text())
        d["diagnostics"].pop("timing")
        results.append(d)
    assert results[0] == results[1]


def test_identify_malformed_row_exit_code(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_1,u_1,xplus_1\n1,2,3\n1,2\n")
    res = CliRunner().invoke(main, ["--output-dir", str(tmp_path), "identify", str(path)])
    assert res.exit_code == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "DataError" and "row 3" in err["message"]


def test_identify_strict_validation_exit_two(tmp_path):
    _, b = generate_synthetic(GenerationConfig(n=2, m=3, T_d=3))
    lio.write_samples_csv(tmp_path / "s.csv", b)
    res = CliRunner().invoke(main, ["--output-dir", str(tmp_path), "identify", str(tmp_path / "s.csv"),
                                    "--validate", "strict"])
    assert res.exit_code == 2
    assert json.loads((tmp_path / "error.json").read_text())["report"]["passed"] is False


def test_noise_sweep_rows_and_header(small_run, tmp_path):
    out = tmp_path / "sw"
    res = run(["noise-sweep", "--samples", str(small_run / "samples.csv"), "--model",
               str(small_run / "model.json"), "--eps-list", "0.02,0.05", "--trials", "2"], out)
    assert res.exit_code == 0, res.output
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(lio.SWEEP_HEADER)
    assert len(lines) == 1 + 2 * 2 * 2
    assert (out / "sweep_summary.csv").read_text().startswith(",".join(lio.SUMMARY_HEADER))


def test_noise_sweep_zero_trials(tmp_path):
    assert run(["noise-sweep", "--trials", "0"], tmp_path).exit_code == 0
    assert (tmp_path / "sweep.csv").read_text() == ",".join(lio.SWEEP_HEADER) + "\n"


def test_sweep_threads_do_not_change_rows(small_run, tmp_path):
    texts = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert run(["--threads", threads, "noise-sweep", "--samples", str(small_run / "samples.csv"),
                    "--model", str(small_run / "model.json"), "--eps-list", "0.03", "--trials", "3"],
                   out).exit_code == 0
        rows = [ln.split(",")[:8] for ln in (out / "sweep.csv").read_text().splitlines()]
        texts.append(rows)
    assert texts[0] == texts[1]


def _write_rates(path, t, states, inputs):
    header = ["t"] + [f"g{i}" for i in range(states.shape[1])] + [f"in{j}" for j in range(inputs.shape[1])]
    lio.write_csv(path, header, [[float(v) for v in (t[k], *states[k], *inputs[k])] for k in range(t.size)])


def test_reconstruct_dimensions(tmp_path, rng):
    model = LtnModel(0.9, np.array([[0.0, -0.03], [0.02, 0.0]]),
                     np.array([[0.1, 0.05, 0.1, 0.2, 0.3], [0.05, 0.1, -0.1, 0.3, 0.2]]), 2.0)
    t = 0.01 * np.arange(60)
    u_ext = rng.uniform(0, 6, (60, 2))
    u = lio.augment_inputs(t, u_ext, ("time", "impulse", "const"))
    x = simulate_trajectory(model, [1.0, 2.0], u[:-1])
    _write_rates(tmp_path / "rates.csv", t, x, u_ext)
    res = run(["reconstruct", str(tmp_path / "rates.csv"), "--state-columns", "g0,g1",
               "--input-columns", "in0,in1", "--delta-t", "0.01"], tmp_path / "out")
    assert res.exit_code == 0, res.output
    result = json.loads((tmp_path / "out" / "result.json").read_text())
    assert np.array(result["B_D_hat"]).shape == (2, 5)
    assert result["input_names"] == ["in0", "in1", "time", "impulse", "const"]
    rec = np.loadtxt(tmp_path / "out" / "reconstruction.csv", delimiter=",", skiprows=1)
    assert rec.shape == (60, 5)
    assert np.max(np.abs(rec[:, 3:] - x)) <= 1e-8


def test_reconstruct_refuses_constant_rates(tmp_path):
    t = 0.1 * np.arange(30)
    _write_rates(tmp_path / "flat.csv", t, np.full((30, 2), 3.0), np.ones((30, 1)))
    res = CliRunner().invoke(main, ["--output-dir", str(tmp_path), "reconstruct", str(tmp_path / "flat.csv"),
                                    "--state-columns", "g0,g1", "--input-columns", "in0"])
    assert res.exit_code == 2
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "AssumptionFailure" and err["report"]["passed"] is False


def test_reconstruct_rejects_uneven_grid(tmp_path):
    t = np.array([0.0, 0.1, 0.2, 0.35, 0.4])
    _write_rates(tmp_path / "r.csv", t, np.ones((5, 1)), np.ones((5, 1)))
    res = CliRunner().invoke(main, ["--output-dir", str(tmp_path), "reconstruct", str(tmp_path / "r.csv"),
                                    "--state-columns", "g0"])
    assert res.exit_code == 1
    assert "intervals" in json.loads((tmp_path / "error.json").read_text())["message"]


def test_validate_command(small_run, tmp_path):
    res = run(["validate", str(small_run / "samples.csv"), "--sigmas", "0.5,0.5"], tmp_path / "v")
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "v" / "assumption_report.json").read_text())
    assert rep["passed"] and rep["mode"] == "exhaustive"
    assert 0.0 <= rep["probability_lower_bound"] <= 1.0


def test_simulate_command(small_run, tmp_path):
    res = run(["--seed", "2", "simulate", str(small_run / "model.json"), "--steps", "7"], tmp_path / "s")
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "s" / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("k,x_1,x_2,x_3,u_1") and len(lines) == 9
