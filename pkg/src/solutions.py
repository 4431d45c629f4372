"""
기준해 카탈로그 - 닫힌 형태 함수와 해석적 분류 (모든 검증의 오라클)
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .expr import FunctionSpec, parse
from .grid import Grid, build_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Claim:
    """(form, role, f) 조합에서 viscosity_check 가 모든 노드를 통과하는지 (passes) 여부"""

    form: str
    role: str
    f: float
    passes: bool


@dataclass(frozen=True)
class ReferenceSolution:
    name: str
    fn: FunctionSpec
    dim: int
    notes: str
    validity: Tuple[Tuple[float, ...], Tuple[float, ...]]
    default_f: float = 0.0
    claims: Tuple[Claim, ...] = field(default_factory=tuple)

    def grid(self, h: float) -> Grid:
        """유효 영역 위의 격자 (특이 집합에서 충분히 떨어진 하위 박스)"""
        lower, upper = self.validity
        return build_grid(lower, upper, h)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "expression": self.fn.source,
            "dim": self.dim,
            "notes": self.notes,
            "validity": [list(self.validity[0]), list(self.validity[1])],
            "default_f": self.default_f,
            "claims": [claim.__dict__ for claim in self.claims],
        }


def _solution_claims(f: float, forms: Sequence[str] = ("ratio", "product")) -> Tuple[Claim, ...]:
    return tuple(Claim(form, role, f, True) for form in forms for role in ("sub", "super"))


def plane(a: Sequence[float], b: float = 0.0, name: str = "") -> ReferenceSolution:
    """a.x + b - 무한 조화"""
    names = ("x", "y")[: len(a)]
    source = " + ".join(f"{float(c)!r}*{n}" for c, n in zip(a, names)) + f" + {float(b)!r}"
    box = (tuple([-1.0] * len(a)), tuple([1.0] * len(a)))
    return ReferenceSolution(
        name=name or "plane",
        fn=parse(source),
        dim=len(a),
        notes="평면: 무한 조화, 어디서나 매끄러움",
        validity=box,
        claims=_solution_claims(0.0),
    )


def cone(vertex: Sequence[float], slope: float = 1.0, offset: float = 0.0, name: str = "") -> ReferenceSolution:
    """slope |x - x0| + offset - 꼭짓점 밖에서 무한 조화"""
    names = ("x", "y")[: len(vertex)]
    radial = " + ".join(f"({n} - {float(c)!r})^2" for n, c in zip(names, vertex))
    source = f"{float(slope)!r}*sqrt({radial}) + {float(offset)!r}"
    lower = tuple(float(c) + 1.0 for c in vertex)
    upper = tuple(float(c) + 2.0 for c in vertex)
    return ReferenceSolution(
        name=name or "cone",
        fn=parse(source),
        dim=len(vertex),
        notes="원뿔: 꼭짓점을 제외하면 무한 조화",
        validity=(lower, upper),
        claims=_solution_claims(0.0),
    )


def quadratic_1d(a: float, b: float, f: float, name: str = "") -> ReferenceSolution:
    """u = a + b x - (f/2) x^2 - 상수 f 에 대한 ratio 방정식의 해"""
    source = f"{float(a)!r} + {float(b)!r}*x - {float(f) / 2!r}*x^2"
    return ReferenceSolution(
        name=name or f"quad-f{f:g}",
        fn=parse(source),
        dim=1,
        notes=f"1차원 2차식: u'' = -{f:g}, ratio/product 형태 모두 f={f:g} 의 해 (퇴화점 포함)",
        validity=((0.0,), (1.0,)),
        default_f=float(f),
        claims=_solution_claims(float(f)),
    )


def _builtin_entries() -> List[ReferenceSolution]:
    return [
        plane((1.0,), 0.0, name="plane1d"),
        plane((1.0, 0.5), 0.0, name="plane"),
        cone((0.0, 0.0), name="cone"),
        ReferenceSolution(
            name="aronsson43",
            fn=parse("abs(x)^(4/3) - abs(y)^(4/3)"),
            dim=2,
            notes="x^(4/3) - y^(4/3): 무한 조화 점성해, 축 밖에서 매끄럽고 전체적으로는 C^(1,1/3) 뿐",
            validity=((1.0, 1.0), (2.0, 2.0)),
            claims=_solution_claims(0.0),
        ),
        ReferenceSolution(
            name="zero-counterexample",
            fn=parse("0"),
            dim=1,
            notes="u = 0, f = -1: product 형태의 매끄러운 해이지만 ratio 형태의 해는 아님",
            validity=((0.0,), (1.0,)),
            default_f=-1.0,
            claims=(
                Claim("product", "sub", -1.0, True),
                Claim("product", "super", -1.0, True),
                Claim("ratio", "super", -1.0, True),
                Claim("ratio", "sub", -1.0, False),
            ),
        ),
        ReferenceSolution(
            name="quad-f2",
            fn=parse("2*x - x^2"),
            dim=1,
            notes="2x - x^2: f = 2 의 ratio 해, x = 1 에서 기울기 소멸",
            validity=((0.0,), (1.0,)),
            default_f=2.0,
            claims=_solution_claims(2.0),
        ),
        ReferenceSolution(
            name="quad-f2-sym",
            fn=parse("x - x^2"),
            dim=1,
            notes="x - x^2: f = 2 의 ratio 해, 내부 퇴화점 x = 0.5 에서 고윳값 갈래가 등호로 성립",
            validity=((0.0,), (1.0,)),
            default_f=2.0,
            claims=_solution_claims(2.0),
        ),
        ReferenceSolution(
            name="x2",
            fn=parse("x^2"),
            dim=1,
            notes="x^2: Delta_inf u = 8x^2 >= 0 인 무한 부분조화 함수 (기울기 단조성 검사용)",
            validity=((-1.0,), (1.0,)),
            claims=(
                Claim("product", "sub", 0.0, True),
                Claim("product", "super", 0.0, False),
                Claim("ratio", "sub", 0.0, True),
                Claim("ratio", "super", 0.0, False),
            ),
        ),
        ReferenceSolution(
            name="bowl",
            fn=parse("x^2 + y^2"),
            dim=2,
            notes="x^2 + y^2: 무한 부분조화 (위에서의 원뿔 비교는 성립, 아래에서는 실패)",
            validity=((-1.0, -1.0), (1.0, 1.0)),
            claims=(
                Claim("product", "sub", 0.0, True),
                Claim("product", "super", 0.0, False),
            ),
        ),
    ]


_CATALOG: Dict[str, ReferenceSolution] = {entry.name: entry for entry in _builtin_entries()}


def catalog() -> List[ReferenceSolution]:
    """기준해 목록을 반환합니다."""
    return list(_CATALOG.values())


def names() -> List[str]:
    return list(_CATALOG)


def lookup(name: str) -> ReferenceSolution:
    """이름으로 기준해를 찾습니다."""
    try:
        return _CATALOG[name]
    except KeyError:
        raise KeyError(f"알 수 없는 카탈로그 이름 '{name}' (가능: {', '.join(_CATALOG)})") from None
