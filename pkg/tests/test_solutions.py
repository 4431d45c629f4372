"""
기준해 카탈로그 테스트
"""
import pytest

from src import solutions


def test_catalog_names():
    assert set(solutions.names()) >= {
        "plane1d", "plane", "cone", "aronsson43", "zero-counterexample",
        "quad-f2", "quad-f2-sym", "x2", "bowl",
    }
    assert [entry.name for entry in solutions.catalog()] == solutions.names()


def test_lookup_unknown_lists_names():
    with pytest.raises(KeyError, match="aronsson43"):
        solutions.lookup("paraboloid")


def test_describe():
    info = solutions.lookup("zero-counterexample").describe()
    assert info["expression"] == "0"
    assert info["default_f"] == -1.0
    assert {"form": "ratio", "role": "sub", "f": -1.0, "passes": False} in info["claims"]


@pytest.mark.parametrize("entry", solutions.catalog(), ids=lambda e: e.name)
def test_validity_box_builds_grid(entry):
    grid = entry.grid(0.05)
    assert grid.dim == entry.dim
    assert entry.fn.coordinate_arity <= entry.dim


def test_quadratic_builder():
    entry = solutions.quadratic_1d(0.0, 2.0, 2.0)
    assert entry.name == "quad-f2"
    assert entry.fn(x=0.5) == pytest.approx(0.75)
    assert entry.default_f == 2.0
    assert len(entry.claims) == 4


def test_cone_and_plane_builders():
    c = solutions.cone((0.5, -0.5), slope=2.0, offset=1.0)
    assert c.fn(x=0.5 + 3.0, y=-0.5 + 4.0) == pytest.approx(11.0)
    assert c.validity == ((1.5, 0.5), (2.5, 1.5))
    p = solutions.plane((1.0, -2.0), 3.0)
    assert p.fn(x=1.0, y=1.0) == pytest.approx(2.0)
    assert all(claim.passes and claim.f == 0.0 for claim in p.claims)
