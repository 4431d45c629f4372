"""
검증 모듈 - 비용 복원, 유일성 실험, 변수 이중화 진단, 기울기 분석, 원뿔 비교, 격자 세분 연구

모든 허용 오차는 리포트에 기록됩니다.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import SOLVER_OPTIONS, VERIFY_OPTIONS
from .expr import FunctionSpec
from .game import GameProblem, SolveStats, solve_value
from .grid import Grid, ScalarField, sample
from .operators import default_theta, gradient, lipschitz_constant, normalized_inf_laplacian

logger = logging.getLogger(__name__)


def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def _box_mask(grid: Grid, lower: Sequence[float], upper: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return np.all((grid.coords >= lower - tol) & (grid.coords <= upper + tol), axis=1)


# --- 비용 복원 ---

@dataclass
class RecoveryReport:
    """f_hat = -Delta_inf u / |Du|^2 복원 결과"""

    f_hat: ScalarField
    mask: np.ndarray
    sup_error: Optional[float]
    mean_error: Optional[float]
    coverage: float
    theta: float
    coherence: float
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "sup_error": _finite_or_none(self.sup_error),
            "mean_error": _finite_or_none(self.mean_error),
            "coverage": self.coverage,
            "masked_nodes": int(self.mask.sum()),
            "theta": self.theta,
            "coherence": self.coherence,
            "warnings": list(self.warnings),
        }


def coherence_mask(u: ScalarField, coherence: float) -> np.ndarray:
    """축 이웃(내부 노드)과의 기울기 방향 코사인이 coherence 이상인 노드"""
    grid = u.grid
    grad = gradient(u)
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    unit = np.divide(grad, norm, out=np.zeros_like(grad), where=norm > 0)
    unit = unit.reshape(grid.shape + (grid.dim,))
    interior = grid.interior.reshape(grid.shape)

    coherent = np.ones(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        for sign in (1, -1):
            neighbor_unit = np.roll(unit, -sign, axis=axis)
            neighbor_interior = np.roll(interior, -sign, axis=axis)
            cosine = np.sum(unit * neighbor_unit, axis=-1)
            coherent &= ~neighbor_interior | (cosine >= coherence)
    return coherent.reshape(-1)


def recover_cost(u: ScalarField, theta: Optional[float] = None,
                 reference: Union[None, float, ScalarField] = None,
                 coherence: float = VERIFY_OPTIONS["coherence"],
                 region: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> RecoveryReport:
    """값 함수로부터 진행 비용을 복원합니다 (기울기 퇴화/꺾임 노드는 마스크로 제외)."""
    grid = u.grid
    theta = default_theta(grid) if theta is None else float(theta)
    normalized, mask = normalized_inf_laplacian(u, theta)
    if coherence > -1:
        mask = mask & coherence_mask(u, coherence)
    if region is not None:
        mask = mask & _box_mask(grid, *region)

    f_hat = ScalarField(grid, -normalized.values * mask)
    interior_count = int(grid.interior.sum())
    coverage = float(mask.sum()) / interior_count if interior_count else 0.0

    warnings = []
    sup_error = mean_error = None
    if not mask.any():
        message = "복원 마스크가 비어 있습니다 (기울기가 theta 미만)"
        logger.warning(message)
        warnings.append(message)
    elif reference is not None:
        ref = reference.values if isinstance(reference, ScalarField) else np.full(grid.size, float(reference))
        errors = np.abs(f_hat.values[mask] - ref[mask])
        sup_error = float(errors.max())
        mean_error = float(errors.mean())
        logger.info(f"비용 복원: sup 오차 {sup_error:.4e}, 평균 오차 {mean_error:.4e}, 커버리지 {coverage:.1%}")

    return RecoveryReport(
        f_hat=f_hat, mask=mask, sup_error=sup_error, mean_error=mean_error,
        coverage=coverage, theta=theta, coherence=coherence, warnings=tuple(warnings),
    )


# --- 유일성 실험 ---

@dataclass
class UniquenessReport:
    stats_f: SolveStats
    stats_g: SolveStats
    gap: Optional[float]
    gap_location: Optional[List[float]]
    u_f: ScalarField
    u_g: ScalarField
    failure: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "stats_f": self.stats_f.to_dict(),
            "stats_g": self.stats_g.to_dict(),
            "gap": self.gap,
            "gap_location": self.gap_location,
            "failure": self.failure,
        }


def uniqueness_experiment(f: FunctionSpec, g: FunctionSpec, F: FunctionSpec, grid: Grid, epsilon: float,
                          tol: float = SOLVER_OPTIONS["tol"], max_iter: int = SOLVER_OPTIONS["max_iter"],
                          sweep: str = SOLVER_OPTIONS["sweep"]) -> UniquenessReport:
    """서로 다른 진행 비용 f, g 로 두 게임을 풀고 값 함수의 sup 간격을 측정합니다."""
    prob_f = GameProblem.from_functions(grid, epsilon, f, F)
    prob_g = GameProblem.from_functions(grid, epsilon, g, F)
    logger.info(f"유일성 실험: f={f}, g={g} (부호 {prob_f.sign_regime}/{prob_g.sign_regime})")

    u_f, stats_f = solve_value(prob_f, tol, max_iter, sweep)
    u_g, stats_g = solve_value(prob_g, tol, max_iter, sweep)

    if not (stats_f.converged and stats_g.converged):
        failed = [name for name, s in (("f", stats_f), ("g", stats_g)) if not s.converged]
        message = f"미수렴: {', '.join(failed)}"
        logger.warning(message)
        return UniquenessReport(stats_f, stats_g, None, None, u_f, u_g, failure=message)

    diff = np.abs(u_f.values - u_g.values)
    location = int(np.argmax(diff))
    gap = float(diff[location])
    logger.info(f"유일성 실험: sup 간격 {gap:.6f} (위치 {grid.coords[location].tolist()})")
    return UniquenessReport(stats_f, stats_g, gap, grid.coords[location].tolist(), u_f, u_g)


# --- 변수 이중화 진단 ---

@dataclass(frozen=True)
class DoublingReport:
    """w_eps(x, y) = u(x) - v(y) - |x - y|^2 / (2 eps) 의 최대화 쌍"""

    epsilon: float
    x_bar: Tuple[float, ...]
    y_bar: Tuple[float, ...]
    gap: float
    w_max: float
    ratio: float
    lipschitz: float
    gap_bound: float
    lifted: bool
    pairs_scanned: int

    def to_dict(self) -> dict:
        data = dict(self.__dict__)
        data["x_bar"] = list(self.x_bar)
        data["y_bar"] = list(self.y_bar)
        return data


def doubling_diagnostic(u: ScalarField, v: ScalarField, epsilon: float, lift: bool = False) -> DoublingReport:
    """모든 노드 쌍에서 w_eps 를 최대화합니다 (동점은 가장 낮은 (x, y) 쌍 번호).

    립시츠 상수 L (v 의 인접 차이) 로 |x - y| > 2 eps L sqrt(dim) 인 쌍은
    대각선 최댓값보다 작으므로 건너뜁니다.
    """
    grid = u.grid
    if v.grid is not grid:
        raise ValueError("u 와 v 는 같은 격자 위에 있어야 합니다")
    if not epsilon > 0:
        raise ValueError(f"epsilon 은 양수여야 합니다: {epsilon}")

    uu = u.values * (1 + epsilon ** 0.75) if lift else u.values
    vv = v.values
    lip_v = lipschitz_constant(v)
    reach = 2 * epsilon * lip_v * math.sqrt(grid.dim) + 1e-12
    chunk = VERIFY_OPTIONS["doubling_chunk"]

    best = -np.inf
    best_pair = (0, 0)
    scanned = 0
    for start in range(0, grid.size, chunk):
        rows = np.arange(start, min(start + chunk, grid.size))
        d2 = np.sum((grid.coords[rows, None, :] - grid.coords[None, :, :]) ** 2, axis=-1)
        w = uu[rows, None] - vv[None, :] - d2 / (2 * epsilon)
        w = np.where(d2 <= reach ** 2, w, -np.inf)
        scanned += int(np.count_nonzero(d2 <= reach ** 2))
        flat = int(np.argmax(w))
        value = float(w.flat[flat])
        if value > best:
            best = value
            best_pair = (int(rows[flat // grid.size]), int(flat % grid.size))

    x_bar, y_bar = grid.coords[best_pair[0]], grid.coords[best_pair[1]]
    gap = float(np.linalg.norm(x_bar - y_bar))
    lip_u = lipschitz_constant(ScalarField(grid, uu))
    bound = math.sqrt(grid.dim) * (lip_u * epsilon + grid.h / 2)
    logger.info(f"이중화 진단 eps={epsilon}: 간격 {gap:.4f}, w 최대 {best:.6f}, 한계 {bound:.4f}")
    return DoublingReport(
        epsilon=float(epsilon),
        x_bar=tuple(x_bar.tolist()),
        y_bar=tuple(y_bar.tolist()),
        gap=gap,
        w_max=best,
        ratio=gap / epsilon,
        lipschitz=lip_u,
        gap_bound=bound,
        lifted=lift,
        pairs_scanned=scanned,
    )


def doubling_sweep(u: ScalarField, v: ScalarField, eps_list: Sequence[float] = VERIFY_OPTIONS["doubling_eps"],
                   lift: bool = False) -> Tuple[List[DoublingReport], pd.DataFrame]:
    """여러 eps 에 대해 이중화 진단을 수행하고 (eps, gap, wmax) 표를 반환합니다."""
    reports = [doubling_diagnostic(u, v, eps, lift=lift) for eps in eps_list]
    table = pd.DataFrame({
        "eps": [r.epsilon for r in reports],
        "gap": [r.gap for r in reports],
        "wmax": [r.w_max for r in reports],
    })
    return reports, table


# --- 기울기 분석 ---

@dataclass
class SlopeReport:
    """반경별 기울기 분석 결과

    s_plus 는 가장 작은 분석 반경 radii[0] 이 아니라 s_plus_radius (기본: 격자 간격 h, 이산 환형이 비지 않는
    최소 반경) 에서 잰 기울기입니다. 끝점 부등식의 S_+(x_r) 도 같은 반경을 씁니다. verify.rho 로 바꿀 수 있습니다.
    """

    center: Tuple[float, ...]
    radii: List[float]
    slopes: List[float]
    monotone: bool
    s_plus: float
    s_plus_radius: float
    argmax_points: List[Tuple[float, ...]]
    endpoints: List[Tuple[Optional[float], float, float]]
    endpoint_ok: List[Optional[bool]]
    tol: float

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": self.radii,
            "slopes": self.slopes,
            "monotone": self.monotone,
            "s_plus": self.s_plus,
            "s_plus_radius": self.s_plus_radius,
            "argmax_points": [list(p) for p in self.argmax_points],
            "endpoints": [list(t) for t in self.endpoints],
            "endpoint_ok": self.endpoint_ok,
            "tol": self.tol,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"r": self.radii, "slope": self.slopes})


def _ball_inside(grid: Grid, point: np.ndarray, r: float) -> bool:
    tol = 1e-12
    return bool(np.all(point - r >= grid.lower - tol) and np.all(point + r <= grid.upper + tol))


def slope_at(u: ScalarField, node: int, r: float) -> Tuple[float, int]:
    """(max_{r-h < |y-x| <= r} u - u(x)) / r 와 최댓값 노드 (동점은 낮은 번호)"""
    grid = u.grid
    point = grid.coords[node]
    if not _ball_inside(grid, point, r):
        raise ValueError(f"반경 r={r} 의 공이 노드 {point.tolist()} 에서 격자를 벗어납니다")
    dist = np.linalg.norm(grid.coords - point, axis=1)
    ring = np.flatnonzero((dist > r - grid.h + 1e-12) & (dist <= r + 1e-12))
    if ring.size == 0:
        raise ValueError(f"반경 r={r} 의 이산 구면(환형)이 비어 있습니다")
    best = ring[int(np.argmax(u.values[ring]))]
    return float((u.values[best] - u.values[node]) / r), int(best)


def slope_analysis(u: ScalarField, x: Union[int, Sequence[float]], radii: Sequence[float],
                   s_plus_radius: Optional[float] = None, tol: Optional[float] = None) -> SlopeReport:
    """반경별 기울기, 단조성, S_+ 추정, 끝점 부등식 S_+(x_r) >= slope(r) >= S_+(x) 를 검사합니다."""
    grid = u.grid
    node = x if isinstance(x, (int, np.integer)) else grid.locate(x)
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"반경 목록은 양수이며 순증가해야 합니다: {radii}")
    rho = grid.h if s_plus_radius is None else float(s_plus_radius)
    tol = grid.h if tol is None else float(tol)

    slopes, argmax_nodes = [], []
    for r in radii:
        slope, best = slope_at(u, node, r)
        slopes.append(slope)
        argmax_nodes.append(best)
    monotone = all(b >= a - tol for a, b in zip(slopes, slopes[1:]))
    s_plus, _ = slope_at(u, node, rho)

    endpoints, endpoint_ok = [], []
    for slope, best in zip(slopes, argmax_nodes):
        try:
            s_at_best, _ = slope_at(u, best, rho)
        except ValueError:
            endpoints.append((None, slope, s_plus))
            endpoint_ok.append(None)
            continue
        endpoints.append((s_at_best, slope, s_plus))
        endpoint_ok.append(bool(s_at_best >= slope - tol and slope >= s_plus - tol))

    logger.info(f"기울기 분석: 단조 {monotone}, S_+ {s_plus:.4f}, 끝점 검사 {endpoint_ok}")
    return SlopeReport(
        center=tuple(grid.coords[node].tolist()),
        radii=radii,
        slopes=slopes,
        monotone=monotone,
        s_plus=s_plus,
        s_plus_radius=rho,
        argmax_points=[tuple(grid.coords[b].tolist()) for b in argmax_nodes],
        endpoints=endpoints,
        endpoint_ok=endpoint_ok,
        tol=tol,
    )


# --- 원뿔 비교 ---

@dataclass(frozen=True)
class ConeReport:
    """원뿔 비교 반례 탐색 결과 (통과는 증명이 아니라 반례 부재)"""

    direction: str
    box: Tuple[Tuple[float, ...], Tuple[float, ...]]
    passed: bool
    worst_violation: float
    worst_vertex: Tuple[float, ...]
    worst_slope: float
    vertices_scanned: int
    slopes_scanned: int
    tol: float
    kind: str = "falsifier"

    def to_dict(self) -> dict:
        data = dict(self.__dict__)
        data["box"] = [list(self.box[0]), list(self.box[1])]
        data["worst_vertex"] = list(self.worst_vertex)
        return data


def cone_comparison_check(u: ScalarField, box_lower: Sequence[float], box_upper: Sequence[float],
                          direction: str = "above", tol: Optional[float] = None,
                          n_slopes: int = VERIFY_OPTIONS["cone_slope_count"],
                          reach: float = VERIFY_OPTIONS["cone_vertex_reach"]) -> ConeReport:
    """V 밖 꼭짓점 x0 의 원뿔 a|x - x0| + b 가 경계에서 u 를 위(아래)에서 누르면 내부에서도 누르는지 검사합니다.

    기울기 a 는 [-A, A] 격자 (A = 2 max(L, 1)) 와 경계 맞춤 기울기
    max/min_{dV} (u - u(x0)) / |x - x0| 를 쓰고, b 는 각 a 에 대해 경계 조건을 만족하는 최적값입니다.
    """
    if direction not in ("above", "below"):
        raise ValueError(f"direction 은 above 또는 below 여야 합니다: {direction}")
    grid = u.grid
    lower = np.asarray(box_lower, dtype=float)
    upper = np.asarray(box_upper, dtype=float)
    if np.any(lower <= grid.lower) or np.any(upper >= grid.upper) or np.any(upper <= lower):
        raise ValueError(f"V=[{lower.tolist()}, {upper.tolist()}] 는 격자 내부에 엄격히 포함되어야 합니다")
    tol = grid.h if tol is None else float(tol)

    eps = 1e-12
    in_v = _box_mask(grid, lower, upper)
    on_face = np.any((np.abs(grid.coords - lower) <= eps) | (np.abs(grid.coords - upper) <= eps), axis=1)
    boundary = np.flatnonzero(in_v & on_face)
    inside = np.flatnonzero(in_v & ~on_face)
    if inside.size == 0 or boundary.size == 0:
        raise ValueError("V 의 내부 또는 경계 노드가 없습니다")

    diam = float(np.linalg.norm(upper - lower))
    outside = np.maximum(np.maximum(lower - grid.coords, grid.coords - upper), 0.0)
    vertex_dist = np.linalg.norm(outside, axis=1)
    vertices = np.flatnonzero(~in_v & (vertex_dist <= reach * diam + eps))

    A = 2 * max(lipschitz_constant(u), 1.0)
    slope_grid = np.linspace(-A, A, n_slopes)

    xv = grid.coords[vertices]
    d_b = np.linalg.norm(grid.coords[boundary][None, :, :] - xv[:, None, :], axis=-1)
    d_i = np.linalg.norm(grid.coords[inside][None, :, :] - xv[:, None, :], axis=-1)
    u_b = u.values[boundary][None, :]
    u_i = u.values[inside][None, :]
    u_0 = u.values[vertices][:, None]

    fitted_ratio = (u_b - u_0) / d_b
    fitted = fitted_ratio.max(axis=1) if direction == "above" else fitted_ratio.min(axis=1)

    worst = -np.inf
    worst_vertex, worst_slope = vertices[0], 0.0
    candidates = [np.full(vertices.size, a) for a in slope_grid] + [fitted]
    for a in candidates:
        a_col = a[:, None]
        if direction == "above":
            b = np.max(u_b - a_col * d_b, axis=1, keepdims=True)
            violation = np.max(u_i - (a_col * d_i + b), axis=1)
        else:
            b = np.min(u_b - a_col * d_b, axis=1, keepdims=True)
            violation = np.max((a_col * d_i + b) - u_i, axis=1)
        k = int(np.argmax(violation))
        if violation[k] > worst:
            worst = float(violation[k])
            worst_vertex, worst_slope = vertices[k], float(a[k])

    passed = worst <= tol
    logger.info(f"원뿔 비교 ({direction}): 최대 위반 {worst:.4e}, 허용 {tol:.4e}, 꼭짓점 {vertices.size}개")
    return ConeReport(
        direction=direction,
        box=(tuple(lower.tolist()), tuple(upper.tolist())),
        passed=bool(passed),
        worst_violation=worst,
        worst_vertex=tuple(grid.coords[worst_vertex].tolist()),
        worst_slope=worst_slope,
        vertices_scanned=int(vertices.size),
        slopes_scanned=len(candidates),
        tol=tol,
    )


# --- 격자 세분 연구 ---

Approximation = Union[ScalarField, Tuple[ScalarField, float]]


def refinement_study(builder: Callable[[int], Approximation], reference: FunctionSpec,
                     levels: int = VERIFY_OPTIONS["refine_levels"],
                     interior_only: bool = True) -> pd.DataFrame:
    """수준 k (h 를 2^k 로 나눔) 마다 근사 필드와 기준 함수의 오차를 표로 만듭니다.

    builder 는 필드 또는 (필드, epsilon) 을 반환합니다.
    """
    rows = []
    previous = None
    for level in range(levels + 1):
        result = builder(level)
        approx, epsilon = result if isinstance(result, tuple) else (result, None)
        grid = approx.grid
        exact = sample(grid, reference)
        mask = grid.interior if interior_only else np.ones(grid.size, dtype=bool)
        errors = np.abs(approx.values - exact.values)[mask]
        sup_error = float(errors.max()) if errors.size else 0.0
        ratio = sup_error / previous if previous else None
        rows.append({
            "level": level,
            "h": grid.h,
            "epsilon": epsilon,
            "nodes": grid.size,
            "sup_error": sup_error,
            "mean_error": float(errors.mean()) if errors.size else 0.0,
            "ratio": ratio,
        })
        logger.info(f"세분 수준 {level}: h={grid.h}, sup 오차 {sup_error:.4e}")
        previous = sup_error
    return pd.DataFrame(rows)


def recovery_refinement(builder: Callable[[int], Approximation], reference: Union[float, FunctionSpec],
                        levels: int = VERIFY_OPTIONS["recover_levels"],
                        coherence: float = VERIFY_OPTIONS["coherence"],
                        region: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> pd.DataFrame:
    """
    수준 k 마다 값 함수에서 비용을 복원하고 기준 비용과의 오차를 표로 만듭니다.

    Args:
        builder: 수준 k 의 값 함수 또는 (값 함수, epsilon) 을 반환하는 함수
        reference: 기준 비용 (상수 또는 함수)
        levels: 세분 횟수 (표는 levels + 1 행)
        coherence: 방향 일관성 하한
        region: 마스크를 제한할 상자 (lower, upper)

    Returns:
        level, h, epsilon, masked_nodes, coverage, sup_error, mean_error, ratio 열의 표.
        ratio 는 직전 수준 대비 mean_error 비율이며 theta 는 수준별 기본값 h^(1/2) 입니다.
    """
    rows = []
    previous = None
    for level in range(levels + 1):
        result = builder(level)
        u, epsilon = result if isinstance(result, tuple) else (result, None)
        grid = u.grid
        ref = sample(grid, reference) if isinstance(reference, FunctionSpec) else float(reference)
        report = recover_cost(u, reference=ref, coherence=coherence, region=region)
        mean_error = report.mean_error
        ratio = mean_error / previous if previous and mean_error is not None else None
        rows.append({
            "level": level,
            "h": grid.h,
            "epsilon": epsilon,
            "masked_nodes": int(report.mask.sum()),
            "coverage": report.coverage,
            "sup_error": report.sup_error,
            "mean_error": mean_error,
            "ratio": ratio,
        })
        logger.info(f"복원 세분 수준 {level}: h={grid.h}, 평균 오차 {mean_error}, 커버리지 {report.coverage:.1%}")
        previous = mean_error
    return pd.DataFrame(rows)
