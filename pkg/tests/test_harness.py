import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdilab import cli
from fdilab.errors import ContractError, StageError
from fdilab.harness import (
    ExperimentConfig,
    Metrics,
    Setup,
    attack_span,
    attack_windows,
    default_k_sweep,
    evaluate,
    make_benign,
    read_metrics,
    run_experiment,
)
from fdilab.trace import split_bounds

TINY = {
    "seed": 3,
    "scenario": {"duration": 40},
    "attack": {"k_sweep": [17, 60], "window": 20, "gap": 20},
    "detector": {"num_recurrent_layers": 1, "hidden_size": 8, "window_len": 8, "conv_channels": 4, "epochs": 2},
}


def tiny(out_dir, **overrides):
    d = json.loads(json.dumps(TINY))
    d.update(overrides)
    d["out_dir"] = str(out_dir)
    return ExperimentConfig.from_dict(d)


@pytest.fixture(scope="module")
def setup():
    return Setup.case39()


# ---------------------------------------------------------------- metrics


def test_metrics_all_correct():
    lab = np.array([1, 0, 1, 1, 0], bool)
    m = evaluate(lab, lab)
    assert m.accuracy == 1.0 and m.f1 == 1.0


def test_metrics_all_wrong():
    lab = np.array([1, 0, 1, 1, 0], bool)
    assert evaluate(~lab, lab).accuracy == 0.0


def test_metrics_counts_example():
    m = Metrics(tp=8, fp=2, tn=88, fn=2)
    assert m.precision == pytest.approx(0.8)
    assert m.recall == pytest.approx(0.8)
    assert m.accuracy == pytest.approx(0.96)


def test_metrics_length_mismatch():
    with pytest.raises(ContractError):
        evaluate(np.zeros(3, bool), np.zeros(4, bool))


def test_undefined_metrics_are_nan():
    m = Metrics(0, 0, 5, 0)
    assert math.isnan(m.precision) and math.isnan(m.recall) and math.isnan(m.f1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_metric_algebra(pairs):
    pred = np.array([p for p, _ in pairs])
    lab = np.array([q for _, q in pairs])
    m = evaluate(pred, lab)
    assert m.total == len(pairs)
    if m.tp:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))


# ---------------------------------------------------------------- config and plumbing


def test_default_k_sweep():
    assert default_k_sweep() == [9, 17, 26, 34, 43, 51, 60, 68, 77]


def test_attack_windows_alternate():
    assert attack_windows(100, 20, 20, 20) == [(20, 40), (60, 80)]
    assert attack_windows(10, 20, 20, 20) == []


def test_config_round_trip(tmp_path):
    cfg = tiny(tmp_path)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path).to_dict() == cfg.to_dict()


def test_config_rejects_unknown_keys_and_bad_json(tmp_path):
    with pytest.raises(ContractError, match="unknown"):
        ExperimentConfig.from_dict({"sed": 1})
    with pytest.raises(ContractError):
        ExperimentConfig.from_dict({"detector": {"hidden": 3}})
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ContractError, match="JSON"):
        ExperimentConfig.load(bad)


def test_config_validation_surfaces_as_stage(tmp_path, setup):
    cfg = tiny(tmp_path, attack={"k_sweep": [90]})
    with pytest.raises(StageError) as err:
        run_experiment(cfg, setup)
    assert err.value.stage == "config"


def test_split_integrity():
    for n in (10, 333, 3500):
        b = split_bounds(n)
        idx = [set(range(*x)) for x in b]
        assert not (idx[0] & idx[1]) and not (idx[1] & idx[2]) and not (idx[0] & idx[2])
        assert b[0][1] <= b[1][0] and b[1][1] <= b[2][0]
        assert sum(map(len, idx)) == n


def test_attack_span_labels_and_features(tmp_path, setup):
    cfg = tiny(tmp_path)
    span = make_benign(cfg, setup).slice(0, 100)
    out = attack_span(span, 17, cfg, setup, np.random.default_rng(0))
    assert out.labels.sum() == 40
    assert out.labels[8:28].all() and out.labels[48:68].all()
    assert out.features is not None
    diff = out.z != span.z
    assert (diff[out.labels].sum(axis=1) == 17).all()
    assert not diff[~out.labels].any()


# ---------------------------------------------------------------- full runs


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, setup):
    out = tmp_path_factory.mktemp("run")
    return run_experiment(tiny(out), setup)


def test_run_outputs(tiny_run):
    out = tiny_run.out_dir
    for name in ("config.json", "benign.trace.csv", "benign.features.csv", "model.npz", "metrics.csv",
                 "verdicts_k17.csv", "verdicts_k60.csv"):
        assert (out / name).exists(), name
    rows = read_metrics(out / "metrics.csv")
    assert [r["k"] for r in rows] == [17, 60]
    assert rows[0]["k_over_n"] == pytest.approx(0.2)
    for r in rows:
        assert r["tp"] + r["fp"] + r["tn"] + r["fn"] == 80 - 8
        assert 0 <= r["accuracy"] <= 1


def test_run_is_byte_identical(tmp_path, setup, tiny_run):
    again = run_experiment(tiny(tmp_path), setup)
    for name in ("metrics.csv", "verdicts_k17.csv", "verdicts_k60.csv", "benign.trace.csv", "benign.features.csv"):
        assert (again.out_dir / name).read_bytes() == (tiny_run.out_dir / name).read_bytes(), name


def test_k_zero_fails_cleanly_at_calibration(tmp_path, setup, tiny_run):
    cfg = tiny(tmp_path, attack={"k_sweep": [0]})
    with pytest.raises(StageError) as err:
        run_experiment(cfg, setup, model=tiny_run.model)
    assert err.value.stage == "calibrate"
    assert "single class" in str(err.value)


def test_with_static_adds_alarms(tmp_path, setup, tiny_run):
    base = read_metrics(tiny_run.out_dir / "metrics.csv")
    cfg = tiny(tmp_path, with_static=True)
    rows = run_experiment(cfg, setup, model=tiny_run.model).rows
    for a, b in zip(base, rows):
        assert b["tp"] + b["fp"] >= a["tp"] + a["fp"]


# ---------------------------------------------------------------- CLI


def _write_cfg(tmp_path, **overrides):
    path = tmp_path / "cfg.json"
    cfg = tiny(tmp_path / "out", **overrides)
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def test_cli_pipeline(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    trace = out / "benign.trace.csv"
    assert trace.exists()
    model = tmp_path / "m.npz"
    assert cli.main(["train", str(trace), str(model), "--config", str(cfg), "--train-only"]) == 0
    attacked = tmp_path / "att.trace.csv"
    assert cli.main(["attack", str(trace), str(attacked), "--config", str(cfg), "--window", "100", "200",
                     "--k", "40"]) == 0
    cal = tmp_path / "cal.json"
    assert cli.main(["calibrate", str(model), str(attacked), "--output", str(cal)]) == 0
    assert "tau" in json.loads(cal.read_text())
    verdicts = tmp_path / "v.csv"
    assert cli.main(["detect", str(model), str(attacked), str(verdicts), "--calibration", str(cal)]) == 0
    assert verdicts.read_text().startswith("t,score,tau,is_attack,label")
    capsys.readouterr()


def test_cli_stealthy_and_replay(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    trace = tmp_path / "out" / "benign.trace.csv"
    assert cli.main(["attack", str(trace), str(tmp_path / "s.trace.csv"), "--kind", "stealthy",
                     "--window", "0", "50"]) == 0
    assert cli.main(["attack", str(trace), str(tmp_path / "r.trace.csv"), "--kind", "replay",
                     "--recorded", str(trace), "--offset", "10", "--window", "0", "50"]) == 0


def test_cli_bench_and_report(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["bench", "--config", str(cfg), "--k-sweep", "0.2,60"]) == 0
    text = capsys.readouterr().out
    assert "k/n" in text
    assert cli.main(["report", "--out", str(tmp_path / "out")]) == 0
    assert [r["k"] for r in read_metrics(tmp_path / "out" / "metrics.csv")] == [17, 60]


def test_cli_stage_error_exit_code(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["bench", "--config", str(cfg), "--k-sweep", "0"]) == 2
    assert "stage calibrate" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path, capsys):
    assert cli.main(["calibrate", str(tmp_path / "no.npz"), str(tmp_path / "no.csv")]) == 1
    assert "fdilab calibrate" in capsys.readouterr().err


def test_k_sweep_parser():
    assert cli._parse_k_sweep("0.1,0.5,0.9") == [9, 43, 77]
    assert cli._parse_k_sweep("3, 17") == [3, 17]
