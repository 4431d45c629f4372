"""
공통 픽스처
"""
import pytest

from src.expr import parse
from src.game import GameProblem
from src.grid import build_grid


@pytest.fixture
def unit_grid():
    """(0, 1) 위의 h = 0.025 격자"""
    return build_grid([0.0], [1.0], 0.025)


@pytest.fixture
def quadratic_problem(unit_grid):
    """f = 2, F = x: 값 함수는 2x - x^2"""
    return GameProblem.from_functions(unit_grid, 0.025, parse("2"), parse("x"))


@pytest.fixture
def square_grid():
    return build_grid([-1.0, -1.0], [1.0, 1.0], 0.05)
