"""
게임 솔버 모듈 - 이산 epsilon 줄다리기 게임의 동적계획 고정점과 동전 던지기 몬테카를로 플레이아웃

한 번의 DPP 갱신 (내부 노드 x):
    u'(x) = 1/2 (max_{B_eps(x)} u + min_{B_eps(x)} u) + (eps^2 / 2) f(x)
경계 노드는 종료 보상 F 로 고정됩니다.
"""
import time
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple, Union

import numpy as np

from .config import GAME_OPTIONS, SOLVER_OPTIONS
from .expr import FunctionSpec
from .grid import Grid, NeighborTable, ScalarField, ball_neighbors, coordinate_bindings

logger = logging.getLogger(__name__)

SWEEP_MODES = ("jacobi", "gauss-seidel")

Seed = Union[int, np.random.SeedSequence]


def classify_sign(values: np.ndarray) -> str:
    """내부 노드의 f 부호 체계를 분류합니다."""
    if values.size == 0 or np.all(values == 0):
        return "zero"
    if np.all(values > 0):
        return "positive"
    if np.all(values < 0):
        return "negative"
    return "mixed"


def _sample_on(grid: Grid, fn: FunctionSpec, mask: np.ndarray) -> np.ndarray:
    """mask 노드에서만 함수를 평가하고 나머지는 0 으로 둡니다."""
    values = np.zeros(grid.size)
    idx = np.flatnonzero(mask)
    if idx.size:
        result = fn.evaluate(coordinate_bindings(grid, grid.coords[idx]))
        values[idx] = np.broadcast_to(result, idx.shape)
    return values


class GameProblem:
    """격자, 스텝 반경 epsilon, 진행 보상 f (내부), 종료 보상 F (경계)"""

    def __init__(self, grid: Grid, epsilon: float, f: ScalarField, F: ScalarField):
        if f.grid is not grid or F.grid is not grid:
            raise ValueError("f 와 F 는 같은 격자 위의 필드여야 합니다")
        if not epsilon > 0:
            raise ValueError(f"epsilon 은 양수여야 합니다: {epsilon}")
        if epsilon < grid.h * (1 - 1e-12):
            raise ValueError(f"epsilon={epsilon} 은 격자 간격 h={grid.h} 이상이어야 합니다")

        self.grid = grid
        self.epsilon = float(epsilon)
        self.f = f
        self.F = F
        self.sign_regime = classify_sign(f.values[grid.interior])

        running = np.where(grid.interior, 0.5 * self.epsilon ** 2 * f.values, 0.0)
        running.flags.writeable = False
        self.running = running

    @classmethod
    def from_functions(cls, grid: Grid, epsilon: float, f: FunctionSpec, F: FunctionSpec) -> "GameProblem":
        """f 는 내부 노드에서, F 는 경계 노드에서만 샘플링합니다."""
        f_field = ScalarField(grid, _sample_on(grid, f, grid.interior))
        F_field = ScalarField(grid, _sample_on(grid, F, grid.boundary))
        return cls(grid, epsilon, f_field, F_field)

    def describe(self) -> dict:
        interior_f = self.f.values[self.grid.interior]
        return {
            "epsilon": self.epsilon,
            "sign_regime": self.sign_regime,
            "f_min": float(interior_f.min()) if interior_f.size else 0.0,
            "f_max": float(interior_f.max()) if interior_f.size else 0.0,
        }


@dataclass(frozen=True)
class SolveStats:
    """값 반복 결과 통계"""

    iterations: int
    final_update: float
    converged: bool
    wall_time: float
    tol: float
    sweep: str = "jacobi"
    sign_regime: str = "zero"
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["warnings"] = list(self.warnings)
        return data


def initial_guess(prob: GameProblem) -> ScalarField:
    """경계는 F, 내부는 경계 F 의 평균으로 채운 초기값"""
    boundary_mean = float(prob.F.values[prob.grid.boundary].mean())
    values = np.where(prob.grid.boundary, prob.F.values, boundary_mean)
    return ScalarField(prob.grid, values)


def _check_table(prob: GameProblem, nbr: NeighborTable) -> None:
    if nbr.grid is not prob.grid:
        raise ValueError("이웃 테이블이 다른 격자에서 생성되었습니다")
    if abs(nbr.radius - prob.epsilon) > 1e-12 * max(1.0, prob.epsilon):
        raise ValueError(f"이웃 테이블 반경 {nbr.radius} 가 epsilon={prob.epsilon} 과 다릅니다")


def _jacobi_values(values: np.ndarray, prob: GameProblem, nbr: NeighborTable) -> np.ndarray:
    ball = values[nbr.padded]
    new = 0.5 * (ball.max(axis=1) + ball.min(axis=1)) + prob.running
    return np.where(prob.grid.interior, new, prob.F.values)


def _gauss_seidel_pass(values: np.ndarray, prob: GameProblem, nbr: NeighborTable) -> float:
    """노드 순서대로 제자리 갱신하고 최대 변화량을 반환합니다."""
    delta = 0.0
    for i in prob.grid.interior_indices:
        ball = values[nbr.neighbors[i]]
        new = 0.5 * (ball.max() + ball.min()) + prob.running[i]
        delta = max(delta, abs(new - values[i]))
        values[i] = new
    return delta


def dpp_update(u: ScalarField, prob: GameProblem, nbr: NeighborTable) -> ScalarField:
    """한 번의 Jacobi DPP 갱신을 수행합니다."""
    _check_table(prob, nbr)
    return ScalarField(prob.grid, _jacobi_values(u.values, prob, nbr))


def solve_value(prob: GameProblem, tol: float = SOLVER_OPTIONS["tol"],
                max_iter: int = SOLVER_OPTIONS["max_iter"], sweep: str = SOLVER_OPTIONS["sweep"],
                initial: Optional[ScalarField] = None,
                nbr: Optional[NeighborTable] = None) -> Tuple[ScalarField, SolveStats]:
    """sup-norm 갱신량이 tol 이하가 되거나 max_iter 에 도달할 때까지 DPP 를 반복합니다."""
    if not tol > 0:
        raise ValueError(f"tol 은 양수여야 합니다: {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter 는 1 이상이어야 합니다: {max_iter}")
    if sweep not in SWEEP_MODES:
        raise ValueError(f"알 수 없는 sweep 모드 '{sweep}' (가능: {', '.join(SWEEP_MODES)})")

    warnings = []
    if prob.sign_regime == "mixed":
        message = "f 의 부호가 섞여 있어 극한 수렴이 보장되지 않습니다 (max_iter 로 보호)"
        logger.warning(message)
        warnings.append(message)

    nbr = nbr or ball_neighbors(prob.grid, prob.epsilon)
    _check_table(prob, nbr)

    start = initial if initial is not None else initial_guess(prob)
    values = np.array(start.values)
    values[prob.grid.boundary] = prob.F.values[prob.grid.boundary]

    logger.info(f"값 반복 시작: 노드 {prob.grid.size}개, eps={prob.epsilon}, sweep={sweep}, tol={tol}")
    started = time.perf_counter()
    log_every = SOLVER_OPTIONS["log_every"]
    delta = float("inf")
    iterations = 0
    converged = False

    for iterations in range(1, max_iter + 1):
        if sweep == "jacobi":
            new = _jacobi_values(values, prob, nbr)
            delta = float(np.max(np.abs(new - values)))
            values = new
        else:
            delta = _gauss_seidel_pass(values, prob, nbr)

        if delta <= tol:
            converged = True
            break
        if iterations % log_every == 0:
            logger.info(f"  - 반복 {iterations}: 갱신량 {delta:.3e}")

    wall_time = time.perf_counter() - started
    if converged:
        logger.info(f"값 반복 수렴: {iterations}회, 갱신량 {delta:.3e}, {wall_time:.2f}s")
    else:
        message = f"max_iter={max_iter} 안에 수렴하지 않았습니다 (갱신량 {delta:.3e})"
        logger.warning(message)
        warnings.append(message)

    stats = SolveStats(
        iterations=iterations,
        final_update=delta,
        converged=converged,
        wall_time=wall_time,
        tol=tol,
        sweep=sweep,
        sign_regime=prob.sign_regime,
        warnings=tuple(warnings),
    )
    return ScalarField(prob.grid, values), stats


# --- 몬테카를로 플레이아웃 ---

@dataclass(frozen=True)
class PlayoutResult:
    payoff: float
    steps: int
    terminated: bool


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    truncated_fraction: float
    n_samples: int
    seed: int
    step_cap: int
    prng: str = GAME_OPTIONS["prng"]

    def to_dict(self) -> dict:
        return asdict(self)


def best_response_tables(value: ScalarField, nbr: NeighborTable) -> Tuple[np.ndarray, np.ndarray]:
    """탐욕 전략의 이동 테이블 (플레이어 I: argmax, 플레이어 II: argmin, 동점은 낮은 노드 번호)"""
    up = np.empty(len(nbr), dtype=np.intp)
    down = np.empty(len(nbr), dtype=np.intp)
    for i, nbrs in enumerate(nbr.neighbors):
        ball = value.values[nbrs]
        up[i] = nbrs[int(np.argmax(ball))]
        down[i] = nbrs[int(np.argmin(ball))]
    return up, down


def default_step_cap(epsilon: float) -> int:
    return int(GAME_OPTIONS["step_cap_factor"] * (1.0 / epsilon) ** 2)


def make_rng(seed: Seed) -> np.random.Generator:
    """문서화된 고정 PRNG (PCG64) 생성기"""
    return np.random.Generator(np.random.PCG64(seed))


def simulate_playout(prob: GameProblem, value: ScalarField, start: int, seed: Seed,
                     step_cap: Optional[int] = None,
                     tables: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     nbr: Optional[NeighborTable] = None) -> PlayoutResult:
    """공정한 동전으로 이동권을 정하는 게임 한 판을 탐욕 전략으로 진행합니다."""
    grid = prob.grid
    if not grid.interior[start]:
        raise ValueError(f"시작 노드 {start} 는 내부 노드여야 합니다")
    if tables is None:
        tables = best_response_tables(value, nbr or ball_neighbors(grid, prob.epsilon))
    step_cap = default_step_cap(prob.epsilon) if step_cap is None else int(step_cap)

    up, down = tables
    rng = make_rng(seed)
    position = int(start)
    payoff = 0.0
    steps = 0
    while not grid.boundary[position]:
        if steps >= step_cap:
            return PlayoutResult(payoff, steps, False)
        payoff += prob.running[position]
        position = int(up[position]) if rng.random() < 0.5 else int(down[position])
        steps += 1
    return PlayoutResult(payoff + prob.F.values[position], steps, True)


def estimate_value_mc(prob: GameProblem, value: ScalarField, start: int,
                      n_samples: int = GAME_OPTIONS["n_samples"], seed: int = 0,
                      step_cap: Optional[int] = None) -> MonteCarloEstimate:
    """독립 시드 플레이아웃의 표본 평균, 표준오차, 절단 비율을 계산합니다."""
    if n_samples < 1:
        raise ValueError(f"n_samples 는 1 이상이어야 합니다: {n_samples}")
    step_cap = default_step_cap(prob.epsilon) if step_cap is None else int(step_cap)

    tables = best_response_tables(value, ball_neighbors(prob.grid, prob.epsilon))
    streams = np.random.SeedSequence(seed).spawn(n_samples)

    logger.info(f"몬테카를로 시작: {n_samples}회, 시작 노드 {start}, seed={seed}")
    payoffs = np.empty(n_samples)
    truncated = 0
    for k, stream in enumerate(streams):
        result = simulate_playout(prob, value, start, stream, step_cap=step_cap, tables=tables)
        payoffs[k] = result.payoff
        truncated += not result.terminated

    mean = float(payoffs.mean())
    stderr = float(payoffs.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    fraction = truncated / n_samples
    if truncated:
        logger.warning(f"step cap {step_cap} 에 걸린 플레이아웃 {truncated}개 ({fraction:.2%})")
    logger.info(f"몬테카를로 완료: 평균 {mean:.6f} ± {stderr:.6f}")

    return MonteCarloEstimate(
        mean=mean,
        stderr=stderr,
        truncated_fraction=fraction,
        n_samples=n_samples,
        seed=int(seed),
        step_cap=step_cap,
    )
