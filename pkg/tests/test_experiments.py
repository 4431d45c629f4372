"""
실험 실행 및 산출물 테스트
"""
import json
from pathlib import Path

import pandas as pd
import pytest

import run as cli
from src.config import EXIT_CODES
from src.experiments import ExperimentRunner, run
from src.load import load_config, loads_config

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def _config(name, out, *overrides):
    return load_config(CONFIG_DIR / name, [f"output.dir={out}", *overrides])


def _report(out):
    return json.loads((out / "report" / "report.json").read_text(encoding="utf-8"))


def test_solve_writes_field_and_report(tmp_path):
    status = run(_config("solve_1d.ini", tmp_path))
    assert status == EXIT_CODES["ok"]
    field = pd.read_csv(tmp_path / "fields" / "u.csv")
    assert list(field.columns) == ["x", "value"]
    assert len(field) == 41
    report = _report(tmp_path)
    assert report["status"] == "ok"
    assert report["results"]["solve"]["converged"] is True
    assert report["tolerances"]["solver_tol"] == 1e-10
    assert report["config"]["game"]["F"] == "x"
    assert (tmp_path / "report" / "report.html").exists()


def test_reruns_are_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    run(_config("solve_1d.ini", first))
    run(_config("solve_1d.ini", second))
    assert (first / "fields" / "u.csv").read_bytes() == (second / "fields" / "u.csv").read_bytes()


def test_non_convergence_exit_code(tmp_path):
    status = run(_config("solve_1d.ini", tmp_path, "solver.max_iter=1"))
    assert status == EXIT_CODES["not_converged"]
    report = _report(tmp_path)
    assert report["status"] == "not_converged"
    assert report["warnings"]


def test_counterexample_verdicts(tmp_path):
    status = run(_config("check_counterexample.ini", tmp_path))
    assert status == EXIT_CODES["ok"]
    verdicts = _report(tmp_path)["verdicts"]
    assert verdicts["ratio_sub"]["verdict"] == "fail-at-all-nodes"
    assert verdicts["ratio_super"]["verdict"] == "pass"
    assert (tmp_path / "verdict_ratio_sub.csv").exists()


def test_counterexample_passes_product_form(tmp_path):
    run(_config("check_counterexample.ini", tmp_path, "operator.form=product"))
    verdicts = _report(tmp_path)["verdicts"]
    assert verdicts["product_sub"]["verdict"] == "pass"
    assert verdicts["product_super"]["verdict"] == "pass"


def test_doubling_table(tmp_path):
    assert run(_config("doubling_plane.ini", tmp_path)) == EXIT_CODES["ok"]
    table = pd.read_csv(tmp_path / "doubling.csv")
    assert list(table.columns) == ["eps", "gap", "wmax"]
    assert table["gap"].iloc[-1] == pytest.approx(0.2)
    assert all(entry["within_bound"] for entry in _report(tmp_path)["results"]["doubling"])


def test_slope_table(tmp_path):
    assert run(_config("slope_cone.ini", tmp_path)) == EXIT_CODES["ok"]
    header = (tmp_path / "slope.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "r,slope"
    assert _report(tmp_path)["results"]["slope"]["monotone"] is True


def test_cones_falsifier(tmp_path):
    assert run(_config("cones_bowl.ini", tmp_path)) == EXIT_CODES["ok"]
    cones = _report(tmp_path)["verdicts"]["cones"]
    assert cones["passed"] is False
    assert cones["kind"] == "falsifier"


def test_operator_selector(tmp_path):
    assert run(_config("operator_aronsson.ini", tmp_path)) == EXIT_CODES["ok"]
    frame = pd.read_csv(tmp_path / "fields" / "aronsson.csv")
    assert list(frame.columns) == ["x", "y", "value"]
    assert _report(tmp_path)["results"]["operator"]["max_abs"] <= 0.05


def test_recover_writes_refinement_table(tmp_path):
    overrides = ("grid.lower=0", "grid.upper=1", "grid.h=0.05", "game.epsilon=0.05")
    assert run(_config("recover_2d.ini", tmp_path, *overrides)) == EXIT_CODES["ok"]
    table = pd.read_csv(tmp_path / "recover_refine.csv")
    assert list(table.columns) == [
        "level", "h", "epsilon", "masked_nodes", "coverage", "sup_error", "mean_error", "ratio",
    ]
    assert table["h"].tolist() == pytest.approx([0.05, 0.025])
    rows = _report(tmp_path)["results"]["recovery_refinement"]
    assert [row["level"] for row in rows] == [0, 1]
    assert all(row["mean_error"] <= 1e-3 for row in rows)


def test_unique_reports_gap(tmp_path):
    assert run(_config("unique_1d.ini", tmp_path)) == EXIT_CODES["ok"]
    gap = _report(tmp_path)["results"]["uniqueness"]["gap"]
    assert gap == pytest.approx(0.125, abs=0.02)


def test_unique_without_convergence_omits_gap(tmp_path):
    status = run(_config("unique_1d.ini", tmp_path, "solver.max_iter=2"))
    assert status == EXIT_CODES["not_converged"]
    assert _report(tmp_path)["results"]["uniqueness"]["gap"] is None


def test_refine_table(tmp_path):
    assert run(_config("refine_1d.ini", tmp_path)) == EXIT_CODES["ok"]
    table = pd.read_csv(tmp_path / "refine.csv")
    assert list(table.columns) == ["level", "h", "epsilon", "nodes", "sup_error", "mean_error", "ratio"]
    assert len(table) == 3
    assert not (tmp_path / "report" / "report.html").exists()


def test_simulate_is_reproducible(tmp_path):
    overrides = ("verify.samples=200",)
    run(_config("simulate_1d.ini", tmp_path / "a", *overrides))
    run(_config("simulate_1d.ini", tmp_path / "b", *overrides))
    a = _report(tmp_path / "a")["results"]["monte_carlo"]
    b = _report(tmp_path / "b")["results"]["monte_carlo"]
    assert a["mean"] == b["mean"]
    assert a["dp_value"] == pytest.approx(0.75, abs=1e-6)


def test_runner_maps_bad_sample_to_error(tmp_path):
    text = (
        "[experiment]\nselector = doubling\n[grid]\nlower = 0\nupper = 1\nh = 0.1\n"
        f"[operator]\nu = 1/x\n[output]\ndir = {tmp_path}\n"
    )
    with pytest.raises(ValueError, match="operator.u"):
        ExperimentRunner(loads_config(text)).execute()


# --- 명령행 ---

def test_cli_missing_epsilon_exits_2(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[experiment]\nselector = solve\n[grid]\nlower = 0\nupper = 1\nh = 0.1\n"
                    "[game]\nf = 0\nF = x\n", encoding="utf-8")
    assert cli.main([str(path), "--out", str(tmp_path / "out")]) == EXIT_CODES["config"]


def test_cli_overrides_and_flags(tmp_path):
    out = tmp_path / "out"
    status = cli.main([str(CONFIG_DIR / "solve_1d.ini"), "-o", "game.f=0", "--seed", "5", "--out", str(out)])
    assert status == EXIT_CODES["ok"]
    report = _report(out)
    assert report["seed"] == 5
    assert report["config"]["game"]["f"] == "0"


def test_cli_non_convergence_exits_3(tmp_path):
    argv = [str(CONFIG_DIR / "solve_1d.ini"), "-o", "solver.max_iter=1", "--out", str(tmp_path)]
    assert cli.main(argv) == EXIT_CODES["not_converged"]
