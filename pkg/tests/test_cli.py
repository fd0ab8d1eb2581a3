"""Command-line pipeline tests (subcommands, exit codes, file formats)."""

import json
import re
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from flowcast.cli import main
from flowcast.config import ExperimentConfig
from flowcast.io import file_sha256

RUNNER = CliRunner()


def _run(args, **kwargs):
    return RUNNER.invoke(main, args, catch_exceptions=False, **kwargs)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with the standard artifacts built once through the CLI."""
    root = tmp_path_factory.mktemp("cli_ws")
    torus = root / "torus.csv"
    model = root / "model.json"
    model_k1 = root / "model_k1.json"
    res = _run(["simulate", "--out", str(torus)])
    assert res.exit_code == 0, res.output
    res = _run(["train", "--data", str(torus), "--out", str(model)])
    assert res.exit_code == 0, res.output
    res = _run(["train", "--data", str(torus), "--k", "1", "--out", str(model_k1)])
    assert res.exit_code == 0, res.output
    return root


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_default_torus(ws):
    lines = (ws / "torus.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,z,u"
    assert len(lines) == 1 + 6001
    first = [float(v) for v in lines[1].split(",")]
    assert first == [0.0, 1.0, -1.0, 1.0, -1.0]


def test_simulate_chaos_neg_span(tmp_path):
    out = tmp_path / "cneg.csv"
    res = _run(["simulate", "--ic", "chaos_neg", "--t-span", "200", "--out", str(out)])
    assert res.exit_code == 0
    assert "4001 samples" in res.output
    assert len(out.read_text().splitlines()) == 1 + 4001


def test_simulate_explicit_ic(tmp_path):
    out = tmp_path / "run.csv"
    res = _run(["simulate", "--ic", "0.5,0.5,0.5,0.5", "--t-span", "1", "--out", str(out)])
    assert res.exit_code == 0
    row = out.read_text().splitlines()[1].split(",")
    assert [float(v) for v in row[1:]] == [0.5, 0.5, 0.5, 0.5]


def test_simulate_invalid_dt_exit_2(tmp_path):
    res = RUNNER.invoke(main, ["simulate", "--dt", "0", "--out",
                               str(tmp_path / "x.csv")])
    assert res.exit_code == 2


def test_simulate_bad_ic_exit_2(tmp_path):
    res = RUNNER.invoke(main, ["simulate", "--ic", "1,2,3", "--out",
                               str(tmp_path / "x.csv")])
    assert res.exit_code == 2


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _run(["simulate", "--t-span", "5", "--out", str(a)])
    _run(["simulate", "--t-span", "5", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def test_train_report(ws):
    report = json.loads((ws / "model.json.report.json").read_text())
    assert report["feature_dim"] == 45
    assert report["n_weights"] == 180
    assert report["n_samples"] == 6001
    assert report["n_training_pairs"] == 5999
    assert report["training_nrmse"] <= 1e-4
    assert report["alpha_search"] is None


def test_train_echoes_dimensions(ws, tmp_path):
    res = _run(["train", "--data", str(ws / "torus.csv"),
                "--out", str(tmp_path / "m.json")])
    assert "feature_dim 45, weights 180" in res.output


def test_train_deterministic(ws, tmp_path):
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    _run(["train", "--data", str(ws / "torus.csv"), "--out", str(m1)])
    _run(["train", "--data", str(ws / "torus.csv"), "--out", str(m2)])
    assert m1.read_bytes() == m2.read_bytes()
    assert m1.read_bytes() == (ws / "model.json").read_bytes()


def test_train_alpha_search(tmp_path):
    data = tmp_path / "long.csv"
    _run(["simulate", "--t-span", "350", "--out", str(data)])
    model_path = tmp_path / "searched.json"
    res = _run(["train", "--data", str(data), "--alpha-search",
                "--out", str(model_path)])
    assert res.exit_code == 0
    assert "grid-searched" in res.output
    report = json.loads(Path(str(model_path) + ".report.json").read_text())
    table = report["alpha_search"]
    assert len(table) == 41
    # winner must sit in the flat optimum region of the ridge curve
    assert 1e-6 <= report["alpha"] <= 1e-3
    scored = [row for row in table if row["continuation_nrmse"] is not None]
    assert scored
    best = min(scored, key=lambda row: row["continuation_nrmse"])
    assert best["alpha"] == report["alpha"]
    # the winning model was trained on the prefix only
    assert report["n_samples"] == 6001


def test_train_missing_data_exit_2(tmp_path):
    res = RUNNER.invoke(main, ["train", "--data", str(tmp_path / "nope.csv"),
                               "--out", str(tmp_path / "m.json")])
    assert res.exit_code == 2


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------


def test_forecast_tail(ws, tmp_path):
    out = tmp_path / "fc.csv"
    truth = tmp_path / "truth.csv"
    res = _run(["forecast", "--model", str(ws / "model.json"),
                "--data", str(ws / "torus.csv"),
                "--out", str(out), "--truth-out", str(truth)])
    assert res.exit_code == 0
    report = json.loads(Path(str(out) + ".report.json").read_text())
    assert report["warmup"] == "tail"
    assert report["steps"] == 3000
    assert report["duration"] == pytest.approx(150.0)
    assert report["nrmse"] <= 1e-2
    assert len(out.read_text().splitlines()) == 1 + 3000
    assert len(truth.read_text().splitlines()) == 1 + 3000
    # forecast picks up one dt after the data tail
    first_t = float(out.read_text().splitlines()[1].split(",")[0])
    assert first_t == pytest.approx(300.05)


def test_forecast_oracle_warmup(ws, tmp_path):
    out = tmp_path / "fc.csv"
    res = _run(["forecast", "--model", str(ws / "model.json"),
                "--warmup", "oracle", "--ic", "chaos_neg",
                "--steps", "400", "--out", str(out)])
    assert res.exit_code == 0
    report = json.loads(Path(str(out) + ".report.json").read_text())
    assert report["warmup"] == "oracle"
    assert 5.0 <= report["valid_time"] <= 12.0


def test_forecast_bootstrap_warmup(ws, tmp_path):
    out = tmp_path / "fc.csv"
    res = _run(["forecast", "--model", str(ws / "model.json"),
                "--warmup", "bootstrap", "--ic", "chaos_neg",
                "--ladder", str(ws / "model_k1.json"),
                "--steps", "200", "--out", str(out)])
    assert res.exit_code == 0
    assert len(out.read_text().splitlines()) == 1 + 200


def test_forecast_bootstrap_missing_ladder_exit_1(ws, tmp_path):
    res = RUNNER.invoke(main, [
        "forecast", "--model", str(ws / "model.json"),
        "--warmup", "bootstrap", "--ic", "chaos_neg",
        "--steps", "10", "--out", str(tmp_path / "fc.csv")])
    assert res.exit_code == 1
    assert "LadderGap" in res.output


def test_forecast_tail_requires_data(ws, tmp_path):
    res = RUNNER.invoke(main, ["forecast", "--model", str(ws / "model.json"),
                               "--out", str(tmp_path / "fc.csv")])
    assert res.exit_code == 2


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def forecast_pair(ws, tmp_path_factory):
    root = tmp_path_factory.mktemp("pair")
    out, truth = root / "fc.csv", root / "truth.csv"
    res = _run(["forecast", "--model", str(ws / "model.json"),
                "--data", str(ws / "torus.csv"), "--steps", "2000",
                "--out", str(out), "--truth-out", str(truth)])
    assert res.exit_code == 0
    return out, truth


def test_metrics_single_pair(forecast_pair, tmp_path):
    out, truth = forecast_pair
    report = tmp_path / "metrics.csv"
    res = _run(["metrics", "--torus", str(out), str(truth), "--out", str(report)])
    assert res.exit_code == 0
    assert re.search(r"delta_att\[torus\] = \d", res.output)
    assert "delta_tot = incomplete" in res.output
    rows = report.read_text().splitlines()
    assert rows[0] == "attractor,variable,delta_v,delta_abs_v"
    assert rows[-1] == "all,delta_tot,,incomplete"


def test_metrics_requires_inputs(tmp_path):
    res = RUNNER.invoke(main, ["metrics", "--out", str(tmp_path / "m.csv")])
    assert res.exit_code == 2


def test_metrics_length_mismatch_exit_2(forecast_pair, tmp_path):
    out, truth = forecast_pair
    clipped = tmp_path / "short.csv"
    lines = truth.read_text().splitlines()
    clipped.write_text("\n".join(lines[:-5]) + "\n")
    res = RUNNER.invoke(main, ["metrics", "--torus", str(out), str(clipped),
                               "--out", str(tmp_path / "m.csv")])
    assert res.exit_code == 2


# ---------------------------------------------------------------------------
# basin
# ---------------------------------------------------------------------------


def test_basin_oracle_grid(tmp_path):
    out = tmp_path / "oracle.csv"
    res = _run(["basin", "--engine", "oracle", "--res", "10", "8",
                "--workers", "2", "--out", str(out)])
    assert res.exit_code == 0
    assert "engine oracle:" in res.output
    lines = out.read_text().splitlines()
    assert lines[0] == "axis1,axis2,label"
    assert len(lines) == 1 + 80
    meta = json.loads(Path(str(out) + ".meta.json").read_text())
    assert meta["engine"] == "oracle"
    assert meta["resolution"] == [10, 8]
    assert sum(meta["label_counts"].values()) == 80


def test_basin_deterministic_body(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _run(["basin", "--engine", "oracle", "--res", "6", "5", "--out", str(a)])
    _run(["basin", "--engine", "oracle", "--res", "6", "5", "--workers", "1",
          "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_basin_agreement_flow(ws, tmp_path):
    truth = tmp_path / "truth.csv"
    res = _run(["basin", "--engine", "oracle", "--res", "12", "10",
                "--out", str(truth)])
    assert res.exit_code == 0
    model_grid = tmp_path / "model.csv"
    res = _run(["basin", "--engine", "ngrc_oracle_warmup",
                "--model", str(ws / "model.json"), "--res", "12", "10",
                "--truth", str(truth), "--out", str(model_grid)])
    assert res.exit_code == 0
    assert "agreement[overall]" in res.output
    agree = json.loads(Path(str(model_grid) + ".agreement.json").read_text())
    assert set(agree["per_label"]) == {"chaos_neg", "chaos_pos"}
    assert 0.0 <= agree["overall"] <= 1.0
    assert agree["truth_engine"] == "oracle"
    meta = json.loads(Path(str(model_grid) + ".meta.json").read_text())
    assert meta["model_sha256"] == file_sha256(ws / "model.json")


def test_basin_bootstrap_engine(ws, tmp_path):
    out = tmp_path / "boot.csv"
    res = _run(["basin", "--engine", "ngrc_bootstrap",
                "--model", str(ws / "model.json"),
                "--ladder", str(ws / "model_k1.json"),
                "--res", "5", "4", "--out", str(out)])
    assert res.exit_code == 0
    meta = json.loads(Path(str(out) + ".meta.json").read_text())
    assert meta["engine"] == "ngrc_bootstrap"


def test_basin_nvar_engine_requires_model(tmp_path):
    res = RUNNER.invoke(main, ["basin", "--engine", "ngrc_oracle_warmup",
                               "--res", "3", "3", "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 2


def test_basin_companion_region(tmp_path):
    out = tmp_path / "comp.csv"
    res = _run(["basin", "--engine", "oracle", "--region", "companion",
                "--res", "4", "4", "--out", str(out)])
    assert res.exit_code == 0
    meta = json.loads(Path(str(out) + ".meta.json").read_text())
    assert meta["region"]["lo"] == [-6.0, -3.0]


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"dt": 0.1, "t_train": 10.0}))
    out = tmp_path / "run.csv"
    res = _run(["simulate", "--config", str(cfg_path), "--out", str(out)])
    assert res.exit_code == 0
    assert len(out.read_text().splitlines()) == 1 + 101
    out2 = tmp_path / "run2.csv"
    res = _run(["simulate", "--config", str(cfg_path), "--dt", "0.05",
                "--out", str(out2)])
    assert res.exit_code == 0
    assert len(out2.read_text().splitlines()) == 1 + 201


def test_config_unknown_key_exit_2(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"dt": 0.1, "ridge": 1.0}))
    res = RUNNER.invoke(main, ["simulate", "--config", str(cfg_path),
                               "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 2


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(k=3, alpha=1e-3)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.canonical_json())
    assert ExperimentConfig.from_file(path) == cfg


def test_config_defaults_hash_guard():
    # docs/parameters.md publishes the default table; its hash must track
    # the code so the published values cannot silently drift
    doc = (Path(__file__).resolve().parents[1] / "docs" / "parameters.md").read_text()
    published = re.search(r"```\n([0-9a-f]{64})\n```", doc).group(1)
    assert published == ExperimentConfig().sha256()


def test_help_lists_subcommands():
    res = _run(["--help"])
    for name in ("simulate", "train", "forecast", "metrics", "basin"):
        assert name in res.output
