"""
격자 모듈 - 1/2차원 박스 위의 균일 격자, 스칼라 필드, 공 이웃 테이블
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from sklearn.neighbors import NearestNeighbors

from .config import GRID_OPTIONS
from .expr import ExprEvalError, FunctionSpec

logger = logging.getLogger(__name__)


class GridError(ValueError):
    """격자 구성 오류 (문제 축 포함)"""

    def __init__(self, message: str, axis: Optional[int] = None):
        self.axis = axis
        super().__init__(message)


class Grid:
    """균일 직사각 격자. 노드 번호는 축 0 이 가장 느리게 변하는 C 순서입니다."""

    def __init__(self, lower: Sequence[float], upper: Sequence[float], h: float, shape: Sequence[int]):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.h = float(h)
        self.shape = tuple(int(n) for n in shape)
        self.dim = len(self.shape)
        self.size = int(np.prod(self.shape))

        axes = [self.lower[k] + np.arange(n) * self.h for k, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = np.stack([m.ravel() for m in mesh], axis=1)

        index_mesh = np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij")
        self.indices = np.stack([m.ravel() for m in index_mesh], axis=1)
        on_face = np.zeros(self.size, dtype=bool)
        for k, n in enumerate(self.shape):
            on_face |= (self.indices[:, k] == 0) | (self.indices[:, k] == n - 1)
        self.boundary = on_face
        self.interior = ~on_face

        for array in (self.coords, self.indices, self.boundary, self.interior):
            array.flags.writeable = False

    @property
    def interior_indices(self) -> np.ndarray:
        """내부 노드 번호 (오름차순)"""
        return np.flatnonzero(self.interior)

    def flat_index(self, multi_index: Sequence[int]) -> int:
        """축별 인덱스를 C 순서 노드 번호로 바꿉니다."""
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def locate(self, point: Sequence[float]) -> int:
        """좌표에 가장 가까운 노드 번호를 반환합니다."""
        point = np.asarray(point, dtype=float).reshape(self.dim)
        multi = np.rint((point - self.lower) / self.h).astype(int)
        if np.any(multi < 0) or np.any(multi >= np.array(self.shape)):
            raise GridError(f"점 {point.tolist()} 이(가) 격자 밖에 있습니다")
        return self.flat_index(multi)

    def describe(self) -> dict:
        """리포트용 격자 요약"""
        return {
            "dim": self.dim,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "h": self.h,
            "shape": list(self.shape),
            "nodes": self.size,
            "interior": int(self.interior.sum()),
        }

    def __repr__(self) -> str:
        return f"Grid(dim={self.dim}, lower={self.lower.tolist()}, upper={self.upper.tolist()}, h={self.h})"


def build_grid(lower: Sequence[float], upper: Sequence[float], h: float) -> Grid:
    """박스 [lower, upper] 위에 간격 h 의 균일 격자를 생성합니다."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))

    if lower.shape != upper.shape or lower.size not in (1, 2):
        raise GridError(f"차원은 1 또는 2 여야 합니다: lower={lower.tolist()}, upper={upper.tolist()}")
    if not h > 0:
        raise GridError(f"격자 간격 h 는 양수여야 합니다: h={h}")

    shape = []
    for axis in range(lower.size):
        span = upper[axis] - lower[axis]
        if not span > 0:
            raise GridError(f"축 {axis}: upper 가 lower 보다 커야 합니다", axis)
        ratio = span / h
        count = round(ratio)
        if abs(ratio - count) > GRID_OPTIONS["span_rtol"] * max(1.0, ratio):
            raise GridError(f"축 {axis}: 구간 길이 {span} 가 h={h} 의 정수배가 아닙니다 ({ratio})", axis)
        shape.append(int(count) + 1)

    grid = Grid(lower, upper, h, shape)
    logger.debug(f"격자 생성: {grid}")
    return grid


class ScalarField:
    """격자 노드에 붙은 유한 실수 값 (불변)"""

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != grid.size:
            raise ValueError(f"값 개수 {values.size} 가 노드 수 {grid.size} 와 다릅니다")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"노드 {bad} {grid.coords[bad].tolist()} 의 값이 유한하지 않습니다")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    def as_array(self) -> np.ndarray:
        """격자 형태로 재배열한 값 (읽기 전용 뷰)"""
        return self.values.reshape(self.grid.shape)

    def shifted(self, c: float) -> "ScalarField":
        """모든 노드에 상수 c 를 더한 새 필드"""
        return ScalarField(self.grid, self.values + c)

    def sup_distance(self, other: "ScalarField", mask: Optional[np.ndarray] = None) -> float:
        """
        두 필드의 sup-norm 거리

        Args:
            other: 같은 격자 위의 필드
            mask: 비교할 노드 (없으면 전체)

        Returns:
            mask 노드에서의 max |u - v| (빈 마스크면 0)
        """
        diff = np.abs(self.values - other.values)
        if mask is not None:
            diff = diff[mask]
        return float(diff.max()) if diff.size else 0.0

    def __getitem__(self, index: int) -> float:
        """노드 값"""
        return float(self.values[index])

    def __len__(self) -> int:
        return self.values.size


def coordinate_bindings(grid: Grid, coords: Optional[np.ndarray] = None) -> dict:
    """좌표 배열로부터 x[, y], r 바인딩을 만듭니다."""
    coords = grid.coords if coords is None else coords
    bindings = {"x": coords[..., 0], "r": np.sqrt(np.sum(coords ** 2, axis=-1))}
    if grid.dim == 2:
        bindings["y"] = coords[..., 1]
    return bindings


def sample(grid: Grid, fn: FunctionSpec) -> ScalarField:
    """함수를 모든 노드에서 평가하여 ScalarField 를 생성합니다."""
    if fn.coordinate_arity > grid.dim:
        raise ValueError(f"함수 '{fn.source}' 는 {fn.coordinate_arity}차원 좌표가 필요하지만 격자는 {grid.dim}차원입니다")
    if fn.uses_state:
        raise ValueError(f"함수 '{fn.source}' 는 z/p 에 의존하므로 격자에서 직접 샘플링할 수 없습니다")

    try:
        values = fn.evaluate(coordinate_bindings(grid))
    except ExprEvalError as e:
        if e.index is not None:
            node = grid.coords[e.index].tolist()
            raise ExprEvalError(f"'{fn.source}' 평가 실패 - 노드 {e.index} {node}: {e}", e.operation, e.index) from e
        raise
    return ScalarField(grid, np.broadcast_to(values, (grid.size,)))


class NeighborTable:
    """반경 r 유클리드 공 이웃 테이블 (자기 자신 포함, 노드 번호 오름차순)"""

    def __init__(self, grid: Grid, radius: float, neighbors: List[np.ndarray]):
        self.grid = grid
        self.radius = float(radius)
        self.neighbors = neighbors
        width = max(len(n) for n in neighbors)
        # 빈 칸은 자기 자신으로 채움 (max/min 에 영향 없음)
        padded = np.empty((grid.size, width), dtype=np.intp)
        for i, nbrs in enumerate(neighbors):
            padded[i, : len(nbrs)] = nbrs
            padded[i, len(nbrs):] = i
        padded.flags.writeable = False
        self.padded = padded

    def __getitem__(self, index: int) -> np.ndarray:
        return self.neighbors[index]

    def __len__(self) -> int:
        return len(self.neighbors)

    def is_symmetric(self) -> bool:
        """y 가 x 의 이웃이면 x 도 y 의 이웃인지 확인합니다."""
        members = {(i, int(j)) for i, nbrs in enumerate(self.neighbors) for j in nbrs}
        return all((j, i) in members for i, j in members)


def ball_neighbors(grid: Grid, r: float) -> NeighborTable:
    """각 노드의 |y - x| <= r 이웃 목록을 계산합니다."""
    if not r > 0:
        raise ValueError(f"반경은 양수여야 합니다: r={r}")
    if r < grid.h:
        logger.warning(f"반경 r={r} 가 격자 간격 h={grid.h} 보다 작아 공에는 중심 노드만 포함됩니다")

    tol = GRID_OPTIONS["ball_tol"]
    search = NearestNeighbors(radius=r + GRID_OPTIONS["candidate_slack"]).fit(grid.coords)
    candidates = search.radius_neighbors(grid.coords, return_distance=False)

    neighbors = []
    for i, cand in enumerate(candidates):
        cand = np.asarray(cand, dtype=np.intp)
        dist = np.sqrt(np.sum((grid.coords[cand] - grid.coords[i]) ** 2, axis=1))
        neighbors.append(np.sort(cand[dist <= r + tol]))

    table = NeighborTable(grid, r, neighbors)
    logger.debug(f"공 이웃 테이블: r={r}, 최대 이웃 수 {table.padded.shape[1]}")
    return table
