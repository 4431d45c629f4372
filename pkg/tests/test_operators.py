"""
미분 연산자 및 점성해 판정 테스트
"""
import numpy as np
import pytest

from src import solutions
from src.expr import constant, parse
from src.grid import ScalarField, build_grid, sample
from src.operators import (
    GeneralOperatorSpec,
    HamiltonianSpec,
    aronsson_apply,
    comparison_check,
    default_theta,
    default_tolerance,
    general_operator_apply,
    gradient,
    hessian,
    hessian_eigenvalues,
    infinity_laplacian,
    lipschitz_constant,
    normalized_inf_laplacian,
    viscosity_check,
)


def _random_smooth_field(grid, rng):
    a, b, c, d, e = rng.uniform(-1, 1, 5)
    source = f"{a!r}*sin({b!r}*x + {c!r}*y) + {d!r}*x^2 + {e!r}*x*y + 0.3*y"
    return sample(grid, parse(source))


def test_stencils_are_exact_for_quadratics(square_grid):
    u = sample(square_grid, parse("x^2 + 3*x*y - y^2"))
    node = square_grid.locate([0.3, -0.4])
    np.testing.assert_allclose(gradient(u)[node], [2 * 0.3 + 3 * -0.4, 3 * 0.3 + 0.8], atol=1e-10)
    np.testing.assert_allclose(hessian(u)[node], [[2.0, 3.0], [3.0, -2.0]], atol=1e-9)


def test_boundary_entries_are_zero(square_grid):
    u = sample(square_grid, parse("x^2 + y"))
    assert np.all(gradient(u)[square_grid.boundary] == 0.0)
    assert np.all(infinity_laplacian(u).values[square_grid.boundary] == 0.0)


def test_hessian_eigenvalues_closed_form(square_grid):
    u = sample(square_grid, parse("x^2 + 3*x*y - y^2"))
    lam_min, lam_max = hessian_eigenvalues(u)
    node = square_grid.locate([0.0, 0.0])
    expected = np.linalg.eigvalsh(np.array([[2.0, 3.0], [3.0, -2.0]]))
    assert lam_min[node] == pytest.approx(expected[0], abs=1e-8)
    assert lam_max[node] == pytest.approx(expected[1], abs=1e-8)


def test_infinity_laplacian_of_bowl(square_grid):
    u = sample(square_grid, parse("x^2 + y^2"))
    expected = sample(square_grid, parse("8*(x^2 + y^2)"))
    lap = infinity_laplacian(u)
    interior = square_grid.interior
    np.testing.assert_allclose(lap.values[interior], expected.values[interior], atol=1e-8)


def test_operator_identities_on_random_fields(square_grid):
    rng = np.random.default_rng(20)
    quadratic = HamiltonianSpec.quadratic(2)
    linear_b = GeneralOperatorSpec.from_sources("p1, p2", "0")
    for _ in range(20):
        u = _random_smooth_field(square_grid, rng)
        lap = infinity_laplacian(u).values
        np.testing.assert_allclose(aronsson_apply(quadratic, u).values, lap, atol=1e-10)
        np.testing.assert_allclose(general_operator_apply(linear_b, u).values, lap, atol=1e-10)


def test_numeric_hamiltonian_derivatives_match_explicit(square_grid):
    u = _random_smooth_field(square_grid, np.random.default_rng(1))
    numeric = HamiltonianSpec(parse("0.5*(p1^2 + p2^2)"))
    assert not numeric.has_explicit_derivatives
    np.testing.assert_allclose(
        aronsson_apply(numeric, u).values, infinity_laplacian(u).values, atol=1e-6,
    )


def test_aronsson_chain_rule_with_state_dependence():
    grid = build_grid([0.0], [1.0], 0.05)
    u = sample(grid, parse("x^2"))
    H = HamiltonianSpec(parse("0.5*p1^2 + z"))
    result = aronsson_apply(H, u)
    node = grid.locate([0.5])
    # H_z (H_p . Du) + H_p^2 u'' = p^2 + 2 p^2 with p = 2x
    assert result[node] == pytest.approx(3 * 1.0 ** 2, rel=1e-6)


def test_hamiltonian_on_lower_dimension_is_lifted(square_grid):
    u = sample(square_grid, parse("x^2 + y^2"))
    H = HamiltonianSpec(parse("0.5*p1^2"))
    assert H.dim == 1
    node = square_grid.locate([0.5, 0.5])
    # p1^2 u_xx = (2x)^2 * 2
    assert aronsson_apply(H, u)[node] == pytest.approx(2.0, rel=1e-6)


def test_wrong_explicit_derivative_is_rejected():
    with pytest.raises(ValueError, match="H_p"):
        HamiltonianSpec(parse("0.5*p1^2"), H_p=[parse("2*p1")])


def test_general_operator_with_constant_term():
    grid = build_grid([0.0], [1.0], 0.05)
    u = sample(grid, parse("x^2"))
    result = general_operator_apply(GeneralOperatorSpec.from_sources("1", "x"), u)
    node = grid.locate([0.25])
    assert result[node] == pytest.approx(2.25)


def test_general_operator_dimension_mismatch(square_grid):
    u = sample(square_grid, parse("x"))
    with pytest.raises(ValueError):
        general_operator_apply(GeneralOperatorSpec.from_sources("1", "0"), u)


def test_default_theta_and_tolerances():
    grid = build_grid([0.0], [1.0], 0.01)
    assert default_theta(grid) == pytest.approx(0.1)
    assert default_tolerance(grid, "sampled") == pytest.approx(1e-3)
    assert default_tolerance(grid, "solver") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        default_tolerance(grid, "loose")


def test_normalized_laplacian_masks_small_gradients():
    grid = build_grid([-1.0], [1.0], 0.01)
    u = sample(grid, parse("x^2"))
    values, mask = normalized_inf_laplacian(u)
    near_zero = np.abs(grid.coords[:, 0]) < 0.04
    assert not mask[near_zero].any()
    np.testing.assert_allclose(values.values[mask], 2.0, atol=1e-9)
    assert np.all(values.values[~mask] == 0.0)


def test_lipschitz_constant():
    grid = build_grid([0.0, 0.0], [1.0, 1.0], 0.1)
    assert lipschitz_constant(sample(grid, parse("x - 3*y"))) == pytest.approx(3.0)


def test_zero_counterexample_with_zero_slack():
    grid = build_grid([0.0], [1.0], 0.05)
    u = sample(grid, parse("0"))
    f = sample(grid, constant(-1.0))
    for role in ("sub", "super"):
        assert viscosity_check(u, f, form="product", role=role, tol=0.0).all_passed
    assert viscosity_check(u, f, form="ratio", role="super", tol=0.0).all_passed
    ratio_sub = viscosity_check(u, f, form="ratio", role="sub", tol=0.0)
    assert ratio_sub.all_failed
    assert ratio_sub.degenerate.all()
    assert ratio_sub.notes


def test_degenerate_branch_uses_extremal_eigenvalue():
    entry = solutions.lookup("quad-f2-sym")
    grid = entry.grid(0.01)
    u = sample(grid, entry.fn)
    verdict = viscosity_check(u, sample(grid, constant(2.0)), form="ratio", role="sub")
    center = list(verdict.nodes).index(grid.locate([0.5]))
    assert verdict.degenerate[center]
    assert verdict.eigenvalue[center] == pytest.approx(-2.0)
    assert verdict.all_passed


@pytest.mark.parametrize("role", ["sub", "super"])
def test_ratio_pass_carries_over_to_product_form(square_grid, role):
    u = sample(square_grid, parse("x^2 + y^2"))
    f = sample(square_grid, parse("x - 2"))
    ratio = viscosity_check(u, f, form="ratio", role=role, tol=0.1)
    product = viscosity_check(u, f, form="product", role=role, tol=0.1)
    carried = ratio.passed & ~ratio.degenerate
    assert carried.any() and not ratio.all_passed
    norm2 = ratio.gradient_norm[carried] ** 2
    slack = 0.1 * norm2 + 1e-12
    if role == "super":
        assert np.all(product.residual[carried] <= slack)
    else:
        assert np.all(product.residual[carried] >= -slack)


def test_invalid_form_and_role(square_grid):
    u = sample(square_grid, parse("x"))
    f = sample(square_grid, parse("0"))
    with pytest.raises(ValueError):
        viscosity_check(u, f, form="weird")
    with pytest.raises(ValueError):
        viscosity_check(u, f, role="both")


def test_verdict_frame_columns(square_grid):
    u = sample(square_grid, parse("x^2 + y^2"))
    verdict = viscosity_check(u, sample(square_grid, parse("0")), form="product", role="sub")
    frame = verdict.to_frame(square_grid)
    assert list(frame.columns[:3]) == ["node", "x", "y"]
    assert len(frame) == int(square_grid.interior.sum())
    assert verdict.summary()["nodes"] == len(frame)


def _claim_cases():
    for entry in solutions.catalog():
        for claim in entry.claims:
            yield pytest.param(entry.name, claim, id=f"{entry.name}-{claim.form}-{claim.role}")


@pytest.mark.parametrize("name, claim", list(_claim_cases()))
def test_catalog_claims(name, claim):
    entry = solutions.lookup(name)
    grid = entry.grid(0.05 if entry.dim == 2 else 0.01)
    u = sample(grid, entry.fn)
    verdict = viscosity_check(u, sample(grid, constant(claim.f)), form=claim.form, role=claim.role)
    assert verdict.all_passed == claim.passes


def test_aronsson_patch_residual_and_refinement():
    entry = solutions.lookup("aronsson43")
    coarse = infinity_laplacian(sample(entry.grid(0.01), entry.fn))
    fine = infinity_laplacian(sample(entry.grid(0.005), entry.fn))
    coarse_sup = np.abs(coarse.values).max()
    fine_sup = np.abs(fine.values).max()
    assert coarse_sup <= 0.05
    assert fine_sup / coarse_sup <= 0.6


def test_comparison_check_fractions():
    grid = build_grid([0.0], [1.0], 0.05)
    u = sample(grid, parse("x^2"))
    spec = GeneralOperatorSpec.from_sources("1", "0")
    same = comparison_check(u, spec, sample(grid, constant(2.0)), sample(grid, constant(2.0)))
    assert same.sub_fraction == 1.0 and same.super_fraction == 1.0
    assert same.both_nodes == grid.interior.sum()
    assert same.max_f_minus_g == 0.0
    assert not same.indistinct
    apart = comparison_check(u, spec, sample(grid, constant(3.0)), sample(grid, constant(1.0)))
    assert apart.sub_fraction == 0.0 and apart.super_fraction == 0.0
    assert apart.both_nodes == 0
    assert apart.max_f_minus_g is None
    assert not apart.indistinct


def test_comparison_check_flags_f_above_g_within_tolerance(caplog):
    grid = build_grid([0.0], [1.0], 0.05)
    u = sample(grid, parse("x^2"))
    spec = GeneralOperatorSpec.from_sources("1", "0")
    report = comparison_check(u, spec, sample(grid, constant(2.4)), sample(grid, constant(1.6)), tol=0.5)
    assert report.sub_fraction == 1.0 and report.super_fraction == 1.0
    assert report.max_f_minus_g == pytest.approx(0.8)
    assert report.indistinct
    assert report.to_dict()["indistinct"] is True
    assert "f - g" in caplog.text
