import csv
import json
import math

import numpy as np
import pytest

from nvfem import experiments as ex


def test_eoc_formula():
    assert ex.eoc(4.0, 1.0, 2.0, 1.0) == pytest.approx(2.0)
    assert ex.eoc(0.0, 1.0, 2.0, 1.0) is None


def test_run_config_validation():
    with pytest.raises(ValueError):
        ex.RunConfig(levels=(8, 4))
    with pytest.raises(ValueError):
        ex.RunConfig(degree=3)
    with pytest.raises(ValueError):
        ex.RunConfig(mode="newton")
    assert ex.RunConfig(degree=2).levels == (4, 8, 16, 32)
    assert ex.RunConfig().levels == (8, 16, 32, 64)


def test_run_convergence_outputs(tmp_path):
    cfg = ex.RunConfig(problem="poisson", levels=(4, 8, 16), out=tmp_path)
    rows = ex.run_convergence(cfg)
    assert rows[0].eoc0 is None and rows[0].eoc1 is None
    assert all(math.isfinite(r.eoc0) and math.isfinite(r.eoc1) for r in rows[1:])
    assert rows[-1].eoc0 == pytest.approx(2.0, abs=0.2)
    stem = "convergence_poisson_nvfem_p1"
    with open(tmp_path / f"{stem}.csv") as fh:
        table = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in table] == [4, 8, 16] and table[0]["eoc0"] == ""
    dat = np.loadtxt(tmp_path / f"{stem}.dat")
    assert dat.shape == (3, 3)
    manifest = json.loads((tmp_path / f"{stem}.manifest.json").read_text())
    assert manifest["config"]["levels"] == [4, 8, 16]
    assert [r["status"] for r in manifest["rows"]] == ["ok"] * 3
    with open(tmp_path / f"solver_{stem}.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["n", "p", "problem", "dofs", "iterations", "residual", "seconds"]


def test_csv_deterministic(tmp_path):
    paths = []
    for sub in ("a", "b"):
        cfg = ex.RunConfig(problem="test43", levels=(2, 4), out=tmp_path / sub)
        ex.run_convergence(cfg)
        paths.append(tmp_path / sub / "convergence_test43_nvfem_p1.dat")
    assert paths[0].read_text() == paths[1].read_text()


def test_failed_level_recorded(monkeypatch):
    calls = {"n": 0}
    real = ex._solve_level

    def flaky(cfg, problem, n, records):
        calls["n"] += 1
        if n == 8:
            raise RuntimeError("boom")
        return real(cfg, problem, n, records)

    monkeypatch.setattr(ex, "_solve_level", flaky)
    rows = ex.run_convergence(ex.RunConfig(problem="poisson", levels=(4, 8, 16)))
    assert calls["n"] == 3
    assert rows[1].status.startswith("error") and rows[2].status == "ok"
    # the EOC skips the failed level
    assert rows[2].eoc0 == pytest.approx(math.log(rows[0].e0 / rows[2].e0) / math.log(4), rel=1e-12)


def test_standard_fem_mode():
    rows = ex.run_convergence(ex.RunConfig(problem="test42", params={"K": 1.0}, levels=(8, 16),
                                           mode="standard-fem"))
    assert rows[-1].eoc0 > 1.7


def test_run_condition_truncates(tmp_path):
    rows, truncated = ex.run_condition(ex.RunConfig(levels=(2, 4, 8, 32), mode="condition",
                                                    out=tmp_path))
    assert truncated and [r.n for r in rows] == [2, 4, 8]
    assert rows[0].kappa > 1
    assert all(b.kappa > a.kappa for a, b in zip(rows, rows[1:]))
    assert (tmp_path / "condition_test41_p1.csv").exists()


def test_condition_gate_logic():
    Row = ex.ConditionRow
    good = [Row(2, 9, 37, 1.0, 20.0, 20.0), Row(4, 25, 109, 0.5, 120.0, 30.0)]
    assert ex.condition_gate(good)
    assert not ex.condition_gate(good[:1])
    assert not ex.condition_gate([good[0], Row(4, 25, 109, 0.5, 400.0, 100.0)])


def test_run_compare_small(tmp_path):
    s = ex.run_compare(ex.RunConfig(problem="test42", params={"K": 1.0}, levels=(8,),
                                    out=tmp_path))
    assert s.fem_status == "ok" and 0.2 < s.ratio < 5
    assert len(s.cell_error_nvfem) == 2 * 8 * 8
    assert s.max_error_nvfem <= s.cell_error_nvfem.max() + 1e-15
    with open(tmp_path / "compare_test42_n8_p1_cells.csv") as fh:
        assert len(list(csv.reader(fh))) == 2 * 64 + 1


def test_run_compare_diverged(monkeypatch):
    def broken(problem, space):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(ex, "standard_fem_solve", broken)
    s = ex.run_compare(ex.RunConfig(problem="test42", levels=(4,)))
    assert s.fem_status == "diverged" and s.ratio == math.inf


def test_run_quasilinear_small(tmp_path):
    cfg = ex.RunConfig(problem="quasilinear", levels=(4, 8), degree=2, preconditioner="diagonal",
                       mode="quasilinear-nonvariational", out=tmp_path)
    rows, sweep = ex.run_quasilinear(cfg)
    assert {r.mode for r in rows} == {"variational", "nonvariational"}
    assert all(r.stagnation_point >= 1 for r in rows)
    assert len(sweep) == 2 and sweep[1].eoc0 is not None
    assert (tmp_path / "quasilinear_p2.csv").exists()


def test_quasilinear_gate_logic():
    R = ex.QuasilinearRow
    rows = []
    for n, nv, var in zip((10, 20, 40, 80), (4, 6, 7, 8), (5, 13, 16, 26)):
        rows += [R(n, 0.1, "nonvariational", nv, 0.0), R(n, 0.1, "variational", var, 0.0)]
    assert ex.quasilinear_gate(rows)
    rows[2] = R(20, 0.1, "nonvariational", 3, 0.0)
    assert not ex.quasilinear_gate(rows)
