"""
검증 모듈 테스트
"""
import numpy as np
import pytest

from src import solutions
from src.expr import parse
from src.game import GameProblem, solve_value
from src.grid import ScalarField, build_grid, sample
from src.verification import (
    cone_comparison_check,
    doubling_diagnostic,
    doubling_sweep,
    recover_cost,
    recovery_refinement,
    refinement_study,
    slope_analysis,
    slope_at,
    uniqueness_experiment,
)


# --- 비용 복원 ---

def test_recover_cost_1d(quadratic_problem):
    u, stats = solve_value(quadratic_problem, tol=1e-10)
    report = recover_cost(u, reference=2.0)
    assert stats.converged
    assert report.sup_error < 0.05
    assert report.coverage >= 0.5
    # |Du| = 2 - 2x < h^(1/2) 근처는 마스크에서 빠짐
    assert not report.mask[quadratic_problem.grid.locate([0.975])]
    assert report.to_dict()["masked_nodes"] == int(report.mask.sum())


def test_recover_cost_empty_mask_warns(unit_grid, caplog):
    report = recover_cost(ScalarField(unit_grid, np.ones(unit_grid.size)), reference=1.0)
    assert report.coverage == 0.0
    assert report.sup_error is None
    assert report.warnings
    assert "비어" in caplog.text


def test_recover_cost_region_restricts_mask(quadratic_problem):
    u, _ = solve_value(quadratic_problem, tol=1e-10)
    report = recover_cost(u, reference=2.0, region=([0.2], [0.4]))
    xs = quadratic_problem.grid.coords[report.mask, 0]
    assert xs.size > 0
    assert xs.min() >= 0.2 - 1e-12 and xs.max() <= 0.4 + 1e-12


def test_recover_cost_accepts_field_reference(quadratic_problem):
    u, _ = solve_value(quadratic_problem, tol=1e-10)
    reference = sample(quadratic_problem.grid, parse("2"))
    assert recover_cost(u, reference=reference).sup_error < 0.05


@pytest.mark.slow
def test_recover_cost_2d_axis_strip():
    grid = build_grid([0.0, 0.0], [1.0, 1.0], 0.025)
    prob = GameProblem.from_functions(grid, 0.025, parse("1"), parse("0"))
    u, stats = solve_value(prob, tol=1e-10)
    assert stats.converged
    report = recover_cost(u, reference=1.0, region=([0.1, 0.45], [0.4, 0.55]))
    assert report.mask.any()
    assert report.sup_error <= 0.15


def test_recovery_round_trip_under_halving():
    def builder(level):
        h = 0.05 / 2 ** level
        grid = build_grid([0.0], [1.0], h)
        u, stats = solve_value(GameProblem.from_functions(grid, h, parse("2"), parse("x")), tol=1e-10)
        assert stats.converged
        return u, h

    table = recovery_refinement(builder, 2.0)
    assert table["level"].tolist() == [0, 1]
    assert table["h"].tolist() == pytest.approx([0.05, 0.025])
    assert (table["coverage"] >= 0.5).all()
    # 1차원에서는 DPP 고정점이 이산 2차식이라 복원이 반올림 수준으로 정확함
    assert (table["mean_error"] <= 1e-3).all()
    assert (table["sup_error"] <= 1e-2).all()


# --- 유일성 ---

def test_uniqueness_gap_matches_ode_oracle(unit_grid):
    report = uniqueness_experiment(parse("1"), parse("2"), parse("0"), unit_grid, 0.025, tol=1e-10)
    assert report.stats_f.converged and report.stats_g.converged
    assert report.gap == pytest.approx(0.125, abs=0.02)
    assert abs(report.gap_location[0] - 0.5) <= 0.1


def test_uniqueness_gap_is_symmetric(unit_grid):
    forward = uniqueness_experiment(parse("1"), parse("2"), parse("0"), unit_grid, 0.025, tol=1e-10)
    backward = uniqueness_experiment(parse("2"), parse("1"), parse("0"), unit_grid, 0.025, tol=1e-10)
    assert forward.gap == pytest.approx(backward.gap, abs=1e-12)
    assert forward.gap_location == backward.gap_location


def test_uniqueness_control_has_no_gap(unit_grid):
    report = uniqueness_experiment(parse("1"), parse("1"), parse("0"), unit_grid, 0.025, tol=1e-10)
    assert report.gap <= 2e-10


def test_uniqueness_omits_gap_without_convergence(unit_grid):
    report = uniqueness_experiment(parse("1"), parse("2"), parse("0"), unit_grid, 0.025, tol=1e-12, max_iter=2)
    assert report.gap is None
    assert report.failure
    assert report.to_dict()["gap"] is None


# --- 변수 이중화 ---

def test_doubling_plane_oracle():
    grid = build_grid([0.0], [1.0], 0.1)
    u = sample(grid, parse("x"))
    report = doubling_diagnostic(u, u, 0.2)
    assert report.gap == pytest.approx(0.2, abs=1e-12)
    assert report.w_max == pytest.approx(0.1, abs=1e-12)
    assert report.gap <= report.gap_bound


def test_doubling_ties_use_lowest_pair():
    grid = build_grid([0.0], [1.0], 0.25)
    u = ScalarField(grid, np.zeros(grid.size))
    report = doubling_diagnostic(u, u, 0.5)
    assert report.x_bar == (0.0,)
    assert report.y_bar == (0.0,)
    assert report.w_max == 0.0


def test_doubling_rejects_mismatched_grids():
    u = sample(build_grid([0.0], [1.0], 0.1), parse("x"))
    v = sample(build_grid([0.0], [1.0], 0.1), parse("x"))
    with pytest.raises(ValueError):
        doubling_diagnostic(u, v, 0.1)


@pytest.mark.parametrize("name", ["plane", "cone", "aronsson43", "bowl"])
def test_doubling_gap_bound_on_catalog(name):
    entry = solutions.lookup(name)
    u = sample(entry.grid(0.05), entry.fn)
    reports, table = doubling_sweep(u, u, (0.05, 0.1, 0.2))
    assert list(table.columns) == ["eps", "gap", "wmax"]
    for report in reports:
        assert report.gap <= report.gap_bound + 1e-12


def test_doubling_gap_bound_on_solver_output(quadratic_problem):
    u, _ = solve_value(quadratic_problem, tol=1e-10)
    reports, _ = doubling_sweep(u, u)
    for report in reports:
        assert report.gap <= report.lipschitz * report.epsilon + quadratic_problem.grid.h


def test_doubling_lift_scales_u():
    grid = build_grid([0.0], [1.0], 0.1)
    u = sample(grid, parse("x"))
    plain = doubling_diagnostic(u, u, 0.1)
    lifted = doubling_diagnostic(u, u, 0.1, lift=True)
    assert lifted.lifted
    assert lifted.w_max > plain.w_max


# --- 기울기 ---

def test_slope_of_cone_is_constant(square_grid):
    u = sample(square_grid, parse("sqrt(x^2 + y^2)"))
    report = slope_analysis(u, [0.0, 0.0], [0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(report.slopes, 1.0, atol=1e-12)
    assert report.monotone
    assert report.s_plus == pytest.approx(1.0)
    assert all(report.endpoint_ok)


def test_slope_of_parabola_grows_linearly():
    grid = build_grid([-1.0], [1.0], 0.01)
    u = sample(grid, parse("x^2"))
    radii = [0.1, 0.2, 0.3, 0.4]
    report = slope_analysis(u, [0.0], radii)
    np.testing.assert_allclose(report.slopes, radii, atol=grid.h)
    assert report.monotone
    assert list(report.to_frame().columns) == ["r", "slope"]


@pytest.mark.parametrize("name, center", [("bowl", [0.0, 0.0]), ("x2", [0.0]), ("plane1d", [0.1])])
def test_endpoint_estimate_on_subsolutions(name, center):
    entry = solutions.lookup(name)
    grid = entry.grid(0.05)
    u = sample(grid, entry.fn)
    report = slope_analysis(u, center, [0.1, 0.2, 0.3, 0.4])
    for s_at_argmax, slope, s_plus in report.endpoints:
        assert s_at_argmax >= slope - grid.h
        assert slope >= s_plus - grid.h
    assert all(report.endpoint_ok)


def test_s_plus_defaults_to_grid_step():
    grid = build_grid([-1.0], [1.0], 0.01)
    u = sample(grid, parse("x^2"))
    radii = [0.1, 0.2, 0.3]
    default = slope_analysis(u, [0.0], radii)
    assert default.s_plus_radius == grid.h
    assert default.s_plus == pytest.approx(grid.h, abs=1e-9)
    widest = slope_analysis(u, [0.0], radii, s_plus_radius=radii[0])
    assert widest.s_plus_radius == radii[0]
    assert widest.s_plus == pytest.approx(0.1, abs=1e-9)


def test_slope_argmax_is_lowest_index(square_grid):
    u = ScalarField(square_grid, np.zeros(square_grid.size))
    slope, best = slope_at(u, square_grid.locate([0.0, 0.0]), 0.2)
    assert slope == 0.0
    np.testing.assert_allclose(square_grid.coords[best], [-0.2, 0.0], atol=1e-12)


def test_slope_rejects_ball_outside_grid(square_grid):
    u = sample(square_grid, parse("x"))
    with pytest.raises(ValueError, match="r=1.5"):
        slope_analysis(u, [0.0, 0.0], [0.5, 1.5])


def test_slope_rejects_unsorted_radii(square_grid):
    u = sample(square_grid, parse("x"))
    with pytest.raises(ValueError):
        slope_analysis(u, [0.0, 0.0], [0.3, 0.2])


# --- 원뿔 비교 ---

def test_bowl_fails_cone_comparison_from_below():
    entry = solutions.lookup("bowl")
    grid = entry.grid(0.1)
    report = cone_comparison_check(sample(grid, entry.fn), [-0.5, -0.5], [0.5, 0.5], "below")
    assert not report.passed
    assert report.worst_violation >= 0.2
    assert report.kind == "falsifier"


def test_bowl_passes_cone_comparison_from_above():
    grid = build_grid([-1.0, -1.0], [1.0, 1.0], 0.5)
    u = sample(grid, parse("x^2 + y^2"))
    report = cone_comparison_check(u, [-0.5, -0.5], [0.5, 0.5], "above")
    assert report.passed
    assert report.vertices_scanned == 16
    assert report.slopes_scanned == 42


@pytest.mark.parametrize("direction", ["above", "below"])
def test_plane_passes_cone_comparison(direction):
    grid = build_grid([-1.0, -1.0], [1.0, 1.0], 0.1)
    u = sample(grid, parse("x + 0.5*y"))
    report = cone_comparison_check(u, [-0.5, -0.5], [0.5, 0.5], direction)
    assert report.passed
    assert report.to_dict()["direction"] == direction


def test_cone_box_must_be_strictly_inside(square_grid):
    u = sample(square_grid, parse("x"))
    with pytest.raises(ValueError):
        cone_comparison_check(u, [-1.0, -0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        cone_comparison_check(u, [-0.5, -0.5], [0.5, 0.5], direction="sideways")


# --- 격자 세분 ---

def test_refinement_study_table():
    def builder(level):
        h = 0.1 / 2 ** level
        grid = build_grid([0.0], [1.0], h)
        prob = GameProblem.from_functions(grid, h, parse("2"), parse("x"))
        u, _ = solve_value(prob, tol=1e-11)
        return u, h

    table = refinement_study(builder, parse("2*x - x^2"), levels=2)
    assert len(table) == 3
    assert table["h"].tolist() == pytest.approx([0.1, 0.05, 0.025])
    assert table["epsilon"].tolist() == pytest.approx([0.1, 0.05, 0.025])
    assert table["ratio"].isna().iloc[0]
    assert (table["sup_error"] < 1e-6).all()
