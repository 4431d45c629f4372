"""
미분 연산자 모듈 - 중앙 차분 기울기/헤시안, 무한 라플라시안, 아론손 연산자,
일반 연산자 B.D2u.B + c, 그리고 점별 점성해 판정기

모든 연산은 내부 노드에서만 정의되며 경계 노드 값은 0 입니다.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import OPERATOR_OPTIONS
from .expr import ExprEvalError, FunctionSpec, parse, parse_vector
from .grid import Grid, ScalarField

logger = logging.getLogger(__name__)

FORMS = ("ratio", "product")
ROLES = ("sub", "super")


# --- 기본 차분 ---

def _interior_view(U: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """내부 블록을 offset 만큼 이동한 뷰"""
    return U[tuple(slice(1 + o, n - 1 + o) for o, n in zip(offset, U.shape))]


def _scatter(grid: Grid, block: np.ndarray) -> np.ndarray:
    """내부 블록 값을 전체 노드 배열(경계 0)로 펼칩니다."""
    full = np.zeros(grid.shape + block.shape[grid.dim:])
    full[(slice(1, -1),) * grid.dim] = block
    return full.reshape((grid.size,) + block.shape[grid.dim:])


def _unit(dim: int, axis: int, sign: int = 1) -> Tuple[int, ...]:
    offset = [0] * dim
    offset[axis] = sign
    return tuple(offset)


def gradient(u: ScalarField) -> np.ndarray:
    """축별 중앙 차분 기울기 (N, dim)"""
    grid = u.grid
    U = u.as_array()
    parts = [
        (_interior_view(U, _unit(grid.dim, k, 1)) - _interior_view(U, _unit(grid.dim, k, -1))) / (2 * grid.h)
        for k in range(grid.dim)
    ]
    return _scatter(grid, np.stack(parts, axis=-1))


def hessian(u: ScalarField) -> np.ndarray:
    """표준 2계 차분과 4점 교차 스텐실 헤시안 (N, dim, dim)"""
    grid = u.grid
    U = u.as_array()
    h2 = grid.h ** 2
    center = _interior_view(U, (0,) * grid.dim)
    block = np.zeros(center.shape + (grid.dim, grid.dim))
    for k in range(grid.dim):
        plus = _interior_view(U, _unit(grid.dim, k, 1))
        minus = _interior_view(U, _unit(grid.dim, k, -1))
        block[..., k, k] = (plus - 2 * center + minus) / h2
    if grid.dim == 2:
        cross = (
            _interior_view(U, (1, 1)) - _interior_view(U, (1, -1))
            - _interior_view(U, (-1, 1)) + _interior_view(U, (-1, -1))
        ) / (4 * h2)
        block[..., 0, 1] = cross
        block[..., 1, 0] = cross
    return _scatter(grid, block)


def hessian_eigenvalues(u: ScalarField, hess: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """노드별 (최소, 최대) 고윳값. 2차원은 닫힌 형태, 1차원은 2계 차분 자체."""
    hess = hessian(u) if hess is None else hess
    if u.grid.dim == 1:
        second = hess[:, 0, 0]
        return second, second
    a, b, c = hess[:, 0, 0], hess[:, 0, 1], hess[:, 1, 1]
    mean = 0.5 * (a + c)
    radius = 0.5 * np.sqrt((a - c) ** 2 + 4 * b ** 2)
    return mean - radius, mean + radius


def _field(grid: Grid, values: np.ndarray) -> ScalarField:
    return ScalarField(grid, np.where(grid.interior, values, 0.0))


def _quadratic_form(v: np.ndarray, hess: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nij,nj->n", v, hess, v)


def infinity_laplacian(u: ScalarField) -> ScalarField:
    """Du . D2u . Du"""
    return _field(u.grid, _quadratic_form(gradient(u), hessian(u)))


def default_theta(grid: Grid) -> float:
    """퇴화 임계값 theta = h^(1/2)"""
    return grid.h ** OPERATOR_OPTIONS["theta_power"]


def default_tolerance(grid: Grid, policy: str = "sampled") -> float:
    """샘플링된 매끄러운 필드는 10 h^2, 솔버 출력은 10 h^(1/2)"""
    if policy == "sampled":
        return OPERATOR_OPTIONS["sampled_tol_factor"] * grid.h ** 2
    if policy == "solver":
        return OPERATOR_OPTIONS["solver_tol_factor"] * grid.h ** 0.5
    raise ValueError(f"알 수 없는 허용 오차 정책 '{policy}' (가능: sampled, solver)")


def normalized_inf_laplacian(u: ScalarField, theta: Optional[float] = None) -> Tuple[ScalarField, np.ndarray]:
    """|Du| >= theta 인 곳에서 Delta_inf u / |Du|^2, 나머지는 마스크로 무효 처리"""
    theta = default_theta(u.grid) if theta is None else theta
    if not theta > 0:
        raise ValueError(f"theta 는 양수여야 합니다: {theta}")
    grad = gradient(u)
    norm2 = np.sum(grad ** 2, axis=1)
    mask = u.grid.interior & (np.sqrt(norm2) >= theta)
    lap = _quadratic_form(grad, hessian(u))
    values = np.divide(lap, norm2, out=np.zeros_like(lap), where=mask)
    return ScalarField(u.grid, values), mask


def lipschitz_constant(u: ScalarField) -> float:
    """인접 노드 차이의 최댓값 / h"""
    U = u.as_array()
    diffs = [np.abs(np.diff(U, axis=k)).max() for k in range(u.grid.dim)]
    return float(max(diffs)) / u.grid.h


# --- 상태/기울기 의존 함수 평가 ---

def _state_bindings(dim: int, xs: np.ndarray, z: np.ndarray, p: np.ndarray) -> dict:
    bindings = {
        "x": xs[:, 0],
        "r": np.sqrt(np.sum(xs ** 2, axis=1)),
        "z": z,
        "p1": p[:, 0],
    }
    if dim == 2:
        bindings["y"] = xs[:, 1]
        bindings["p2"] = p[:, 1]
    return bindings


def _eval_state(fn: FunctionSpec, dim: int, xs: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
    value = fn.evaluate(_state_bindings(dim, xs, z, p))
    return np.broadcast_to(np.asarray(value, dtype=float), z.shape)


def _spec_dim(specs: Sequence[FunctionSpec]) -> int:
    used = set()
    for spec in specs:
        used |= spec.variables
    return 2 if used & {"y", "p2"} else 1


class HamiltonianSpec:
    """H(x, z, p) 와 (선택적) 명시적 도함수 H_x, H_z, H_p"""

    def __init__(self, H: FunctionSpec, H_x: Optional[Sequence[FunctionSpec]] = None,
                 H_z: Optional[FunctionSpec] = None, H_p: Optional[Sequence[FunctionSpec]] = None,
                 step: float = OPERATOR_OPTIONS["fd_step"], dim: Optional[int] = None,
                 validate: bool = True):
        specs = [H] + list(H_x or []) + ([H_z] if H_z is not None else []) + list(H_p or [])
        self.dim = dim or _spec_dim(specs)
        self.H = H
        self.H_x = tuple(H_x) if H_x is not None else None
        self.H_z = H_z
        self.H_p = tuple(H_p) if H_p is not None else None
        self.step = float(step)

        for name, vector in (("H_x", self.H_x), ("H_p", self.H_p)):
            if vector is not None and len(vector) != self.dim:
                raise ValueError(f"{name} 성분 수 {len(vector)} 가 차원 {self.dim} 과 다릅니다")
        if validate and self.has_explicit_derivatives:
            self.validate_derivatives()

    @classmethod
    def quadratic(cls, dim: int) -> "HamiltonianSpec":
        """H = 1/2 |p|^2 (명시적 도함수 포함)"""
        names = ["p1", "p2"][:dim]
        H = parse("0.5*(" + " + ".join(f"{n}^2" for n in names) + ")")
        return cls(H, H_x=[parse("0")] * dim, H_z=parse("0"), H_p=[parse(n) for n in names], dim=dim)

    @property
    def has_explicit_derivatives(self) -> bool:
        return self.H_x is not None or self.H_z is not None or self.H_p is not None

    def value(self, xs: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
        return _eval_state(self.H, self.dim, xs, z, p)

    def _central(self, xs: np.ndarray, z: np.ndarray, p: np.ndarray, which: str, axis: int = 0) -> np.ndarray:
        d = self.step

        def shifted(sign: float) -> np.ndarray:
            xs2, z2, p2 = xs.copy(), z.copy(), p.copy()
            if which == "x":
                xs2[:, axis] += sign * d
            elif which == "z":
                z2 += sign * d
            else:
                p2[:, axis] += sign * d
            return self.value(xs2, z2, p2)

        return (shifted(1.0) - shifted(-1.0)) / (2 * d)

    def numeric_derivatives(self, xs: np.ndarray, z: np.ndarray, p: np.ndarray):
        Hx = np.stack([self._central(xs, z, p, "x", k) for k in range(self.dim)], axis=1)
        Hz = self._central(xs, z, p, "z")
        Hp = np.stack([self._central(xs, z, p, "p", k) for k in range(self.dim)], axis=1)
        return Hx, Hz, Hp

    def derivatives(self, xs: np.ndarray, z: np.ndarray, p: np.ndarray):
        """(H_x, H_z, H_p) 를 반환합니다. 없는 도함수는 중앙 차분으로 근사합니다."""
        if self.H_x is not None:
            Hx = np.stack([_eval_state(s, self.dim, xs, z, p) for s in self.H_x], axis=1)
        else:
            Hx = np.stack([self._central(xs, z, p, "x", k) for k in range(self.dim)], axis=1)
        Hz = _eval_state(self.H_z, self.dim, xs, z, p) if self.H_z is not None else self._central(xs, z, p, "z")
        if self.H_p is not None:
            Hp = np.stack([_eval_state(s, self.dim, xs, z, p) for s in self.H_p], axis=1)
        else:
            Hp = np.stack([self._central(xs, z, p, "p", k) for k in range(self.dim)], axis=1)
        return Hx, Hz, Hp

    def validate_derivatives(self) -> None:
        """무작위 탐색점에서 명시적 도함수와 중앙 차분을 비교합니다."""
        rng = np.random.default_rng(OPERATOR_OPTIONS["probe_seed"])
        low, high = OPERATOR_OPTIONS["probe_box"]
        n = OPERATOR_OPTIONS["probe_count"]
        tol = OPERATOR_OPTIONS["derivative_check_tol"]
        xs = rng.uniform(low, high, (n, self.dim))
        z = rng.uniform(low, high, n)
        p = rng.uniform(low, high, (n, self.dim))

        checked = 0
        for k in range(n):
            point = (xs[k:k + 1], z[k:k + 1], p[k:k + 1])
            try:
                explicit = self.derivatives(*point)
                numeric = self.numeric_derivatives(*point)
            except ExprEvalError:
                continue
            checked += 1
            for name, a, b in zip(("H_x", "H_z", "H_p"), explicit, numeric):
                if np.any(np.abs(a - b) > tol * np.maximum(1.0, np.abs(b))):
                    raise ValueError(
                        f"{name} 가 H 의 중앙 차분과 일치하지 않습니다 "
                        f"(탐색점 x={xs[k].tolist()}, z={z[k]:.4f}, p={p[k].tolist()})"
                    )
        if checked == 0:
            logger.warning("도함수 검증: 유효한 탐색점이 없습니다")


class GeneralOperatorSpec:
    """B(x, z, p) . D2u . B(x, z, p) + c(x, z, p)"""

    def __init__(self, B: Sequence[FunctionSpec], c: FunctionSpec):
        self.B = tuple(B)
        self.c = c

    @classmethod
    def from_sources(cls, B: str, c: str) -> "GeneralOperatorSpec":
        return cls(parse_vector(B), parse(c))

    @property
    def dim(self) -> int:
        return len(self.B)


def _state(u: ScalarField):
    grid = u.grid
    idx = grid.interior_indices
    grad = gradient(u)
    hess = hessian(u)
    return idx, grid.coords[idx], u.values[idx], grad[idx], hess[idx]


def aronsson_apply(H: HamiltonianSpec, u: ScalarField) -> ScalarField:
    """A_H(u) = H_p.H_x + H_z (H_p.Du) + H_p.D2u.H_p  (모두 (x, u(x), Du(x)) 에서 평가)"""
    grid = u.grid
    if H.dim > grid.dim:
        raise ValueError(f"H 는 {H.dim}차원 변수를 쓰지만 격자는 {grid.dim}차원입니다")
    if H.dim < grid.dim:
        if H.has_explicit_derivatives:
            raise ValueError(f"명시적 도함수의 차원 {H.dim} 이 격자 차원 {grid.dim} 과 다릅니다")
        H = HamiltonianSpec(H.H, step=H.step, dim=grid.dim, validate=False)

    idx, xs, z, p, hess = _state(u)
    Hx, Hz, Hp = H.derivatives(xs, z, p)
    values = np.zeros(grid.size)
    values[idx] = (
        np.sum(Hp * Hx, axis=1)
        + Hz * np.sum(Hp * p, axis=1)
        + _quadratic_form(Hp, hess)
    )
    return ScalarField(grid, values)


def general_operator_apply(spec: GeneralOperatorSpec, u: ScalarField) -> ScalarField:
    """내부 노드에서 B.D2u.B + c"""
    grid = u.grid
    if spec.dim != grid.dim:
        raise ValueError(f"B 성분 수 {spec.dim} 가 격자 차원 {grid.dim} 과 다릅니다")
    idx, xs, z, p, hess = _state(u)
    B = np.stack([_eval_state(b, grid.dim, xs, z, p) for b in spec.B], axis=1)
    c = _eval_state(spec.c, grid.dim, xs, z, p)
    values = np.zeros(grid.size)
    values[idx] = _quadratic_form(B, hess) + c
    return ScalarField(grid, values)


# --- 점성해 판정 ---

@dataclass
class ViscosityVerdict:
    """내부 노드별 판정 결과"""

    form: str
    role: str
    theta: float
    tol: float
    nodes: np.ndarray
    gradient_norm: np.ndarray
    degenerate: np.ndarray
    residual: np.ndarray
    passed: np.ndarray
    eigenvalue: np.ndarray
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def all_failed(self) -> bool:
        return bool(not np.any(self.passed))

    def summary(self) -> dict:
        return {
            "form": self.form,
            "role": self.role,
            "theta": self.theta,
            "tol": self.tol,
            "nodes": int(self.nodes.size),
            "passed": int(self.passed.sum()),
            "failed": int((~self.passed).sum()),
            "degenerate": int(self.degenerate.sum()),
            "all_passed": self.all_passed,
            "all_failed": self.all_failed,
            "max_abs_residual": float(np.abs(self.residual).max()) if self.residual.size else 0.0,
            "notes": list(self.notes),
        }

    def to_frame(self, grid: Grid) -> pd.DataFrame:
        coords = grid.coords[self.nodes]
        frame = pd.DataFrame({"node": self.nodes, "x": coords[:, 0]})
        if grid.dim == 2:
            frame["y"] = coords[:, 1]
        frame["grad_norm"] = self.gradient_norm
        frame["degenerate"] = self.degenerate
        frame["residual"] = self.residual
        frame["eigenvalue"] = self.eigenvalue
        frame["passed"] = self.passed
        return frame


def viscosity_check(u: ScalarField, f: ScalarField, form: str = "ratio", role: str = "super",
                    theta: Optional[float] = None, tol: Optional[float] = None) -> ViscosityVerdict:
    """u 자신의 이산 기울기/헤시안을 시험 함수 대용으로 두 갈래 판정을 수행합니다.

    - 비퇴화 (|Du| >= theta): product 는 Delta_inf u + f|Du|^2, ratio 는 Delta_inf u/|Du|^2 + f
    - 퇴화 (ratio): super 는 lambda_min + f <= tol, sub 는 lambda_max + f >= -tol
    - product 형태는 연속 연산자이므로 퇴화 노드에서도 같은 잔차를 씁니다
    """
    if form not in FORMS:
        raise ValueError(f"알 수 없는 form '{form}' (가능: {', '.join(FORMS)})")
    if role not in ROLES:
        raise ValueError(f"알 수 없는 role '{role}' (가능: {', '.join(ROLES)})")
    if f.grid is not u.grid:
        raise ValueError("u 와 f 는 같은 격자 위에 있어야 합니다")

    grid = u.grid
    theta = default_theta(grid) if theta is None else float(theta)
    tol = default_tolerance(grid) if tol is None else float(tol)

    idx = grid.interior_indices
    grad = gradient(u)[idx]
    hess = hessian(u)[idx]
    fv = f.values[idx]
    norm2 = np.sum(grad ** 2, axis=1)
    norm = np.sqrt(norm2)
    degenerate = norm < theta
    lap = _quadratic_form(grad, hess)
    lam_min, lam_max = hessian_eigenvalues(u, hess)
    extremal = lam_min if role == "super" else lam_max

    eigenvalue = np.full(idx.size, np.nan)
    if form == "product":
        residual = lap + fv * norm2
    else:
        safe = np.where(degenerate, 1.0, norm2)
        residual = np.where(degenerate, extremal + fv, lap / safe + fv)
        eigenvalue = np.where(degenerate, extremal, np.nan)

    passed = residual <= tol if role == "super" else residual >= -tol

    notes = []
    if form == "ratio" and degenerate.any():
        notes.append(
            f"퇴화 노드 {int(degenerate.sum())}개는 이산 헤시안 고윳값 갈래로 판정됨 "
            "(연속 함수의 고립 퇴화점에서 대용 시험 함수의 충실도는 보장되지 않음)"
        )

    verdict = ViscosityVerdict(
        form=form, role=role, theta=theta, tol=tol, nodes=idx,
        gradient_norm=norm, degenerate=degenerate, residual=residual,
        passed=passed, eigenvalue=eigenvalue, notes=tuple(notes),
    )
    logger.info(f"점성해 판정 ({form}/{role}): 통과 {int(passed.sum())}/{idx.size}, 퇴화 {int(degenerate.sum())}")
    return verdict


@dataclass(frozen=True)
class ComparisonReport:
    """일반 연산자에 대한 f <= g 비교 검사 결과

    max_f_minus_g 는 두 판정을 모두 통과한 노드에서의 f - g 최댓값이며, 그런 노드가 없으면 None 입니다.
    이 값이 양수이면 tol 안에서는 부분해/상위해 판정이 f <= g 를 강제하지 못한다는 뜻이므로 indistinct 로 표시합니다.
    """

    sub_fraction: float
    super_fraction: float
    both_nodes: int
    max_f_minus_g: Optional[float]
    indistinct: bool
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def comparison_check(u: ScalarField, spec: GeneralOperatorSpec, f: ScalarField, g: ScalarField,
                     tol: Optional[float] = None) -> ComparisonReport:
    """u 가 (B.D2u.B + c = f) 의 부분해이자 (= g) 의 상위해로 판정되는 노드에서 f - g 를 측정합니다.

    Args:
        u: 판정할 필드
        spec: 연산자 계수 B, c
        f: 부분해 쪽 우변
        g: 상위해 쪽 우변
        tol: 잔차 허용 오차 (기본: 격자 기본 허용 오차)

    Returns:
        ComparisonReport
    """
    grid = u.grid
    tol = default_tolerance(grid) if tol is None else float(tol)
    residual = general_operator_apply(spec, u).values
    idx = grid.interior_indices
    sub_ok = residual[idx] >= f.values[idx] - tol
    super_ok = residual[idx] <= g.values[idx] + tol
    both = sub_ok & super_ok
    gap = f.values[idx][both] - g.values[idx][both]
    max_gap = float(gap.max()) if gap.size else None
    scale = max(1.0, float(np.abs(f.values).max()), float(np.abs(g.values).max()))
    indistinct = max_gap is not None and max_gap > 1e-12 * scale
    if indistinct:
        logger.warning(f"두 판정을 모두 통과한 노드에서 f - g 최댓값 {max_gap:.4e} > 0 (tol={tol} 로는 f <= g 를 확인할 수 없음)")
    return ComparisonReport(
        sub_fraction=float(np.mean(sub_ok)) if idx.size else 1.0,
        super_fraction=float(np.mean(super_ok)) if idx.size else 1.0,
        both_nodes=int(both.sum()),
        max_f_minus_g=max_gap,
        indistinct=bool(indistinct),
        tol=tol,
    )
