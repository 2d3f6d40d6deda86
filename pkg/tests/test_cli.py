import numpy as np
import pytest

from mice.cli import main
from mice.config import ConfigError, parse_config
from mice.io import read_tensor, read_tsv
from mice.tensors import AdjacencyTensor


def _write(path, text):
    path.write_text(text)
    return path


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


# config parsing


def test_parse_config_values():
    cfg = parse_config("mode = ice\nn = 10\nK = 3\nn_grid = 10, 20\nmethods = MICE, ICE\n"
                       "mask_aware = true\ns = auto\n")
    assert cfg.mode == "ICE" and cfg.n_grid == (10, 20) and cfg.methods == ("MICE", "ICE")
    assert cfg.mask_aware is True and cfg.s is None


@pytest.mark.parametrize("text, message", [
    ("bogus = 1\n", "unknown key"),
    ("n = 3\nn = 4\n", "duplicate key"),
    ("n = three\n", "bad value"),
    ("n = 1\n", "invalid value for n"),
    ("rho = 1.5\n", "invalid value for rho"),
    ("graphon = G9\n", "unknown graphon"),
    ("mode = FAST\n", "invalid value for mode"),
    ("format_version = other/9\n", "format_version"),
    ("just words\n", "expected 'key = value'"),
])
def test_parse_config_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


# commands


def _simulate(tmp_path, name="sim", extra=""):
    cfg = _write(tmp_path / f"{name}.cfg", f"graphon = G1\nn = 20\nK = 5\nseed = 1\n{extra}")
    out = tmp_path / name
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_simulate_outputs_and_determinism(tmp_path):
    a = _simulate(tmp_path, "a")
    b = _simulate(tmp_path, "b")
    assert set(_files(a)) == {"adjacency.mlt", "p_true.mlt", "latents.tsv", "manifest.txt"}
    assert _files(a) == _files(b)


def test_simulate_manifest_round_trip(tmp_path):
    a = _simulate(tmp_path, "a", "rho = 0.2\n")
    out = tmp_path / "again"
    assert main(["simulate", "--config", str(a / "manifest.txt"), "--out", str(out)]) == 0
    assert _files(a) == _files(out)


def test_simulate_density(tmp_path):
    cfg = _write(tmp_path / "c.cfg", "graphon = Constant(0.3)\nn = 100\nK = 2\nseed = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    A = read_tensor(tmp_path / "o" / "adjacency.mlt", AdjacencyTensor)
    N = 2 * 100 * 99 / 2
    assert abs(A.density() - 0.3) < 3 * np.sqrt(0.21 / N)


def test_simulate_unknown_graphon(tmp_path, capsys):
    cfg = _write(tmp_path / "c.cfg", "graphon = G7\nn = 10\nK = 2\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "unknown graphon" in capsys.readouterr().err


def test_estimate_and_evaluate(tmp_path):
    sim = _simulate(tmp_path)
    cfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\nmax_iters = 3\n")
    code = main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est")])
    assert code in (0, 3)
    trace = read_tsv(tmp_path / "est" / "trace.tsv", ["m", "delta_p"])
    assert 1 <= len(trace) <= 3 and all(np.isfinite(float(r["delta_p"])) for r in trace)
    assert not (tmp_path / "est" / "timing.tsv").exists()

    ev = _write(tmp_path / "v.cfg", f"estimate = est/estimate.mlt\np_true = {sim}/p_true.mlt\n")
    assert main(["evaluate", "--config", str(ev), "--out", str(tmp_path / "ev")]) == 0
    report = {r["metric"]: float(r["value"])
              for r in read_tsv(tmp_path / "ev" / "report.tsv", ["metric", "value"])}
    assert 0 < report["rmse"] < 0.5
    assert report["rmse_x100"] == pytest.approx(100 * report["rmse"])
    assert len(read_tsv(tmp_path / "ev" / "per_layer.tsv", ["layer", "rmse", "mae"])) == 5


def test_estimate_timing_flag(tmp_path):
    _simulate(tmp_path)
    cfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\nmax_iters = 2\n")
    main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est"), "--timing"])
    assert len(read_tsv(tmp_path / "est" / "timing.tsv", ["m", "wall_time_s"])) >= 1


def test_estimate_exit_code_when_capped(tmp_path):
    _simulate(tmp_path)
    cfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\nmax_iters = 1\n"
                                     "delta_0 = 1e-300\n")
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est")]) == 3


def test_evaluate_truth_gives_zero(tmp_path):
    sim = _simulate(tmp_path)
    ev = _write(tmp_path / "v.cfg", f"estimate = {sim}/p_true.mlt\np_true = {sim}/p_true.mlt\n")
    assert main(["evaluate", "--config", str(ev), "--out", str(tmp_path / "ev")]) == 0
    rows = read_tsv(tmp_path / "ev" / "report.tsv", ["metric", "value"])
    assert {r["metric"]: r["value"] for r in rows}["rmse"] == "0.0"


def test_evaluate_perfect_masked_prediction(tmp_path):
    sim = _simulate(tmp_path, extra="rho = 0.3\n")
    from mice.io import write_tensor
    from mice.tensors import ProbabilityTensor

    A = read_tensor(sim / "adjacency.mlt")
    write_tensor(tmp_path / "perfect.mlt", ProbabilityTensor(A.data.astype(float)))
    ev = _write(tmp_path / "v.cfg", "estimate = perfect.mlt\nadjacency = sim/adjacency.mlt\n"
                                    "mask = sim/mask.mlt\n")
    assert main(["evaluate", "--config", str(ev), "--out", str(tmp_path / "ev")]) == 0
    rows = {r["metric"]: r["value"] for r in read_tsv(tmp_path / "ev" / "report.tsv")}
    assert float(rows["auc"]) == 1.0
    assert read_tsv(tmp_path / "ev" / "roc.tsv", ["tau", "fpr", "tpr"])


def test_evaluate_precision_path(tmp_path):
    sim = _simulate(tmp_path)
    ev = _write(tmp_path / "v.cfg", f"estimate = {sim}/p_true.mlt\nadjacency = sim/adjacency.mlt\n"
                                    "adjacency_next = sim/adjacency.mlt\n")
    assert main(["evaluate", "--config", str(ev), "--out", str(tmp_path / "ev")]) == 0
    rows = {r["metric"]: r["value"] for r in read_tsv(tmp_path / "ev" / "report.tsv")}
    # the next epoch equals the previous one, so no new link is realized
    assert rows.get("precision", "0.0") == "0.0" or "precision_diagnostic" in rows


def test_evaluate_dimension_mismatch(tmp_path, capsys):
    sim = _simulate(tmp_path)
    other = tmp_path / "o.cfg"
    other.write_text("graphon = G1\nn = 10\nK = 5\n")
    main(["simulate", "--config", str(other), "--out", str(tmp_path / "small")])
    ev = _write(tmp_path / "v.cfg", f"estimate = small/p_true.mlt\np_true = {sim}/p_true.mlt\n")
    assert main(["evaluate", "--config", str(ev), "--out", str(tmp_path / "ev")]) == 1
    assert "inconsistent dimensions" in capsys.readouterr().err


def test_oracle_without_truth_errors(tmp_path, capsys):
    _simulate(tmp_path)
    cfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\n")
    assert main(["estimate", "--mode", "ORACLE", "--config", str(cfg),
                 "--out", str(tmp_path / "est")]) == 1
    assert "p_true" in capsys.readouterr().err


def test_ice_on_single_layer(tmp_path):
    cfg = _write(tmp_path / "s.cfg", "graphon = G3\nn = 15\nK = 1\nseed = 2\n")
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")])
    ecfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\nmode = ICE\nmax_iters = 3\n")
    assert main(["estimate", "--config", str(ecfg), "--out", str(tmp_path / "est")]) in (0, 3)
    assert read_tensor(tmp_path / "est" / "estimate.mlt").shape == (1, 15, 15)


def test_estimate_from_edge_list(tmp_path):
    _write(tmp_path / "edges.txt", "layer 1 of 2, 4 nodes\n1 2\n2 3\nlayer 2 of 2, 4 nodes\n3 4\n")
    cfg = _write(tmp_path / "e.cfg", "edge_list = edges.txt\nmax_iters = 2\n")
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est")]) in (0, 3)


def test_missing_input(tmp_path, capsys):
    cfg = _write(tmp_path / "e.cfg", "adjacency = nowhere.mlt\n")
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est")]) == 1
    assert "not found" in capsys.readouterr().err


def test_threads_env_and_flag_are_result_neutral(tmp_path, monkeypatch):
    _simulate(tmp_path)
    cfg = _write(tmp_path / "e.cfg", "adjacency = sim/adjacency.mlt\nmax_iters = 3\n")
    main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "t1"), "--threads", "1"])
    monkeypatch.setenv("MICE_THREADS", "4")
    main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "t4")])
    assert _files(tmp_path / "t1") == _files(tmp_path / "t4")


def test_scenario_command(tmp_path):
    cfg = _write(tmp_path / "sc.cfg", "graphon = G1\nn_grid = 20, 30\nK = 4\nreplications = 2\n"
                                      "methods = MICE, ICE\nmax_iters = 3\n")
    assert main(["scenario", "--config", str(cfg), "--out", str(tmp_path / "sc")]) == 0
    rows = read_tsv(tmp_path / "sc" / "scenario.tsv")
    assert [(r["value"], r["method"]) for r in rows] == [
        ("20", "MICE"), ("20", "ICE"), ("30", "MICE"), ("30", "ICE")]
    assert len(read_tsv(tmp_path / "sc" / "replications.tsv")) == 8
    assert "RMSE (x100)" in (tmp_path / "sc" / "table.txt").read_text()

    # evaluate dispatches to the scenario harness when a grid is configured
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "sc2")]) == 0
    assert _files(tmp_path / "sc") == _files(tmp_path / "sc2")


def test_missing_out_dir(tmp_path, capsys):
    cfg = _write(tmp_path / "s.cfg", "graphon = G1\nn = 5\nK = 1\n")
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "--out" in capsys.readouterr().err
