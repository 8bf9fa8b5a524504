import csv
import io
import json

import numpy as np
import pytest

from mlprox.cli import main
from mlprox.harness import HISTORY_COLUMNS, RunConfig, compare, load_config, run, table_header
from mlprox.smooth import QuadraticObjective


def write_config(path, d):
    path.write_text(json.dumps(d), encoding="utf-8")
    return str(path)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "burgers", "nn": 8})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "burgers", "output": {"plots": "x"}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "heat"})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "burgers", "tr": {"delta_0": 1.0}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "burgers", "tr": {"spg": {"maxit": 5}}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"problem": "burgers", "levels": 0})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"n": 8})
    cfg = RunConfig.from_dict({"problem": "burgers", "options": {"viscosity": 1.0}})
    with pytest.raises(ValueError):
        run(cfg)


def test_config_roundtrip(tmp_path):
    d = {"problem": "burgers", "n": 64, "seed": 3, "levels": 2, "tr": {"delta0": 10.0},
         "spg": {"maxit": 20}, "output": {"dir": "out", "history": "h.csv", "solution": "s.csv"}}
    cfg = load_config(write_config(tmp_path / "c.json", d))
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    p = cfg.tr_params()
    assert p.delta0 == 10.0 and p.spg.maxit == 20 and p.eta1 == 0.05


def test_default_parameters():
    p = RunConfig(problem="burgers").tr_params()
    assert (p.delta0, p.eta1, p.eta2, p.gamma1, p.gamma2, p.gamma3, p.kappa_stop, p.eps_h) == (
        50.0, 0.05, 0.95, 0.25, 0.25, 2.0, 0.6, 1e-7,
    )


def test_smoke_run_quadratic_l1(tmp_path):
    cfg = RunConfig(problem="quadratic_l1", out_dir=str(tmp_path), solution="sol.csv")
    rep = run(cfg)
    assert rep.converged and rep.iter >= 1 and rep.h <= 1e-7
    rows = list(csv.reader(io.StringIO(rep.history)))
    assert tuple(rows[0]) == HISTORY_COLUMNS
    assert len(rows) == len(rep.result.trace.rows) + 1
    assert (tmp_path / "history.csv").read_bytes() == rep.history.encode("utf-8")
    assert b"\r" not in (tmp_path / "history.csv").read_bytes()
    sol = list(csv.reader(open(tmp_path / "sol.csv", encoding="utf-8")))
    assert sol[0] == ["z"] and len(sol) == 17


def test_history_rows_count_all_levels():
    rep = run(RunConfig(problem="poisson1d", levels=3, tr={"eps_model": 1e-9, "eps_model_bottom": 1e-9}))
    trace = rep.result.trace
    total = sum(s.iterations for s in trace.sequences)
    assert rep.history.count("\n") == total + 1
    levels = {int(line.split(",")[0]) for line in rep.history.splitlines()[1:]}
    assert levels == {0, 1, 2}


def test_history_is_byte_deterministic():
    cfg = RunConfig(problem="burgers", n=64, seed=5, levels=2)
    assert run(cfg).history == run(cfg).history


def test_counter_conservation(monkeypatch):
    calls = {"fval": 0, "grad": 0}
    value, gradient = QuadraticObjective._value, QuadraticObjective._gradient

    def counted_value(self, x):
        calls["fval"] += 1
        return value(self, x)

    def counted_gradient(self, x):
        calls["grad"] += 1
        return gradient(self, x)

    monkeypatch.setattr(QuadraticObjective, "_value", counted_value)
    monkeypatch.setattr(QuadraticObjective, "_gradient", counted_gradient)
    for levels in (1, 2, 3):
        calls.update(fval=0, grad=0)
        rep = run(RunConfig(problem="poisson1d", levels=levels, tr={"eps_model": 1e-9, "eps_model_bottom": 1e-9}))
        assert (rep.fval, rep.grad) == (calls["fval"], calls["grad"])
        assert rep.hess > 0 and rep.phi > 0 and rep.prox > 0


def test_compare_identical_and_mismatched():
    cfg = RunConfig(problem="quadratic_l1", levels=2)
    out = compare(cfg, RunConfig(problem="quadratic_l1", levels=2))
    assert out["ratio"] == 1.0
    assert all(r["F_a"] == r["F_b"] for r in out["rows"])
    with pytest.raises(ValueError):
        compare(cfg, RunConfig(problem="poisson1d"))
    with pytest.raises(ValueError):
        compare(cfg, RunConfig(problem="quadratic_l1", seed=4))


def test_table_row_format():
    rep = run(RunConfig(problem="burgers", n=64, seed=0))
    header, row = table_header(), rep.table_row()
    assert header.split() == ["Example", "DoF", "levels", "iter", "fval", "grad", "hess", "phi", "prox", "time"]
    assert len(row) == len(header)
    fields = row.split()
    assert fields[0] == "Burgers" and fields[1] == "64" and fields[2] == "1"
    assert all(f.isdigit() for f in fields[3:9])
    float(fields[9])


def test_cli_run_and_exit_codes(tmp_path, capsys):
    good = write_config(tmp_path / "a.json", {"problem": "quadratic_l1", "levels": 2})
    assert main(["run", "--config", good, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "history.csv").exists()
    assert main(["run", "--config", good, "--json", "--levels", "1", "--seed", "2"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["levels"] == 1 and summary["status"] == "converged"
    short = write_config(tmp_path / "b.json", {"problem": "burgers", "n": 64, "tr": {"max_iter": 1}})
    assert main(["run", "--config", short]) == 2
    bad = write_config(tmp_path / "c.json", {"problem": "burgers", "colour": "red"})
    assert main(["run", "--config", bad]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_compare(tmp_path, capsys):
    a = write_config(tmp_path / "a.json", {"problem": "burgers", "n": 128, "seed": 1, "levels": 1})
    b = write_config(tmp_path / "b.json", {"problem": "burgers", "n": 128, "seed": 1, "levels": 2})
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--config-a", a, "--config-b", b, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "fine-level iteration ratio" in text
    rows = list(csv.reader(open(out, encoding="utf-8")))
    assert rows[0] == ["k", "F_a", "F_b", "h_a", "h_b"]
    assert np.isfinite(float(rows[1][1]))


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))
    assert paths
    for path in paths:
        cfg = load_config(path)
        assert cfg.out_dir.startswith("runs/")
