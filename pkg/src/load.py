"""
실험 설정 로드 및 검증 모듈

INI 형식 (평평한 [section] 블록, key = value, UTF-8, '#' 주석) 을 읽어
ExperimentConfig 로 변환합니다. 모든 수식은 로드 시점에 파싱됩니다.
"""
import re
import logging
import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import solutions
from .config import OUTPUT_DIR, SELECTORS, SOLVER_OPTIONS, GAME_OPTIONS, VERIFY_OPTIONS
from .expr import ExprSyntaxError, FunctionSpec, constant, parse, parse_vector
from .grid import Grid, GridError, build_grid
from .operators import FORMS, GeneralOperatorSpec, HamiltonianSpec

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """설정 오류 (문제 필드와 줄 번호 포함)"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = ""
        if field:
            where = f"{field}"
            if line is not None:
                where += f" ({line}번째 줄)"
            where += ": "
        super().__init__(where + message)


# 허용되는 섹션과 키
SCHEMA: Dict[str, Tuple[str, ...]] = {
    "experiment": ("selector", "seed"),
    "grid": ("lower", "upper", "h"),
    "game": ("epsilon", "f", "F"),
    "solver": ("tol", "max_iter", "sweep"),
    "operator": ("u", "v", "kind", "H", "H_x", "H_z", "H_p", "B", "c", "theta", "tol", "form", "role"),
    "verify": (
        "reference", "g", "eps", "lift", "coherence", "center", "radii", "rho",
        "box_lower", "box_upper", "direction", "start", "samples", "step_cap", "levels",
    ),
    "output": ("dir", "formats"),
}

GAME_KEYS = ("game.epsilon", "game.f", "game.F")

# 실험별 필수 키 (grid.h 는 항상 필요)
REQUIRED: Dict[str, Tuple[str, ...]] = {
    "solve": GAME_KEYS,
    "recover": GAME_KEYS,
    "unique": GAME_KEYS + ("verify.g",),
    "simulate": GAME_KEYS + ("verify.start",),
    "refine": GAME_KEYS + ("verify.reference",),
    "doubling": ("operator.u",),
    "slope": ("operator.u", "verify.center", "verify.radii"),
    "cones": ("operator.u", "verify.box_lower", "verify.box_upper"),
    "check": ("operator.u", "operator.form"),
    "operator": ("operator.u", "operator.kind"),
}

OPERATOR_KINDS = ("inf", "normalized", "aronsson", "general")
ROLE_CHOICES = ("sub", "super", "both")
SWEEPS = ("jacobi", "gauss-seidel")
FORMATS = ("csv", "json", "html")

# u/v 의 특별값: 게임 값 함수를 먼저 풀어서 사용
SOLUTION = "solution"

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


@dataclass
class GridSettings:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    h: float
    grid: Grid


@dataclass
class GameSettings:
    epsilon: Optional[float] = None
    f: Optional[FunctionSpec] = None
    F: Optional[FunctionSpec] = None


@dataclass
class SolverSettings:
    tol: float = SOLVER_OPTIONS["tol"]
    max_iter: int = SOLVER_OPTIONS["max_iter"]
    sweep: str = SOLVER_OPTIONS["sweep"]


@dataclass
class OperatorSettings:
    u_source: Optional[str] = None
    u: Optional[FunctionSpec] = None
    u_entry: Optional[solutions.ReferenceSolution] = None
    v_source: Optional[str] = None
    v: Optional[FunctionSpec] = None
    kind: str = "inf"
    hamiltonian: Optional[HamiltonianSpec] = None
    general: Optional[GeneralOperatorSpec] = None
    theta: Optional[float] = None
    tol: Optional[float] = None
    form: str = "ratio"
    role: str = "both"


@dataclass
class VerifySettings:
    reference: Optional[FunctionSpec] = None
    g: Optional[FunctionSpec] = None
    eps: Tuple[float, ...] = VERIFY_OPTIONS["doubling_eps"]
    lift: bool = False
    coherence: float = VERIFY_OPTIONS["coherence"]
    center: Optional[Tuple[float, ...]] = None
    radii: Optional[Tuple[float, ...]] = None
    rho: Optional[float] = None
    box_lower: Optional[Tuple[float, ...]] = None
    box_upper: Optional[Tuple[float, ...]] = None
    direction: str = "above"
    start: Optional[Tuple[float, ...]] = None
    samples: int = GAME_OPTIONS["n_samples"]
    step_cap: Optional[int] = None
    levels: int = VERIFY_OPTIONS["refine_levels"]


@dataclass
class OutputSettings:
    dir: Path = OUTPUT_DIR
    formats: Tuple[str, ...] = FORMATS


@dataclass
class ExperimentConfig:
    """검증이 끝난 실험 설정"""

    path: Optional[Path]
    selector: str
    seed: int
    grid: GridSettings
    game: GameSettings
    solver: SolverSettings
    operator: OperatorSettings
    verify: VerifySettings
    output: OutputSettings
    echo: Dict[str, Dict[str, str]] = field(default_factory=dict)


class _Source:
    """파서 + 줄 번호 색인 + 재정의 기록"""

    def __init__(self, parser: configparser.ConfigParser, lines: Dict[Tuple[str, str], int],
                 overridden: Sequence[Tuple[str, str]]):
        self.parser = parser
        self.lines = lines
        self.overridden = set(overridden)

    def line(self, section: str, key: str) -> Optional[int]:
        if (section, key) in self.overridden:
            return None
        return self.lines.get((section, key))

    def raw(self, dotted: str) -> Optional[str]:
        section, key = dotted.split(".", 1)
        if not self.parser.has_option(section, key):
            return None
        value = self.parser.get(section, key).strip()
        return value or None

    def error(self, dotted: str, message: str) -> ConfigError:
        section, key = dotted.split(".", 1)
        return ConfigError(message, dotted, self.line(section, key))


def _index_lines(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) 가 처음 나타나는 줄 번호를 찾습니다."""
    index: Dict[Tuple[str, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith(("#", ";")):
            continue
        match = _SECTION_RE.match(line)
        if match:
            section = match.group(1).strip()
            continue
        match = _KEY_RE.match(line)
        if match and section is not None:
            index.setdefault((section, match.group(1).strip()), lineno)
    return index


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # F 와 f 를 구분
    return parser


def _read(text: str, path: Optional[Path]) -> configparser.ConfigParser:
    parser = _new_parser()
    try:
        parser.read_string(text, source=str(path) if path else "<string>")
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("섹션 헤더 없이 키가 나타났습니다", line=e.lineno) from e
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(f"중복 정의: {e.message}", line=e.lineno) from e
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else None
        raise ConfigError("key = value 형식이 아닌 줄이 있습니다", line=lineno) from e
    return parser


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> List[Tuple[str, str]]:
    """'section.key=value' 재정의를 적용합니다. 각 재정의는 키 하나만 바꿉니다."""
    applied = []
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"재정의는 section.key=value 형식이어야 합니다: '{item}'", "override")
        dotted, value = item.split("=", 1)
        section, key = (part.strip() for part in dotted.split(".", 1))
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
        applied.append((section, key))
        logger.info(f"설정 재정의: {section}.{key} = {value.strip()}")
    return applied


def _check_schema(src: _Source) -> None:
    for section in src.parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"알 수 없는 섹션 [{section}] (가능: {', '.join(SCHEMA)})", section)
        for key in src.parser.options(section):
            if key not in SCHEMA[section]:
                raise src.error(f"{section}.{key}", f"알 수 없는 키 (가능: {', '.join(SCHEMA[section])})")


# --- 값 변환 ---

def _floats(src: _Source, dotted: str) -> Optional[Tuple[float, ...]]:
    raw = src.raw(dotted)
    if raw is None:
        return None
    try:
        values = tuple(float(part) for part in re.split(r"[,\s]+", raw) if part)
    except ValueError as e:
        raise src.error(dotted, f"숫자 목록이 아닙니다: '{raw}'") from e
    if not values:
        raise src.error(dotted, "값이 비어 있습니다")
    return values


def _float(src: _Source, dotted: str, positive: bool = False) -> Optional[float]:
    values = _floats(src, dotted)
    if values is None:
        return None
    if len(values) != 1:
        raise src.error(dotted, f"숫자 하나가 필요합니다: {list(values)}")
    if positive and not values[0] > 0:
        raise src.error(dotted, f"양수여야 합니다: {values[0]}")
    return values[0]


def _int(src: _Source, dotted: str, minimum: int = 0) -> Optional[int]:
    raw = src.raw(dotted)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError as e:
        raise src.error(dotted, f"정수가 아닙니다: '{raw}'") from e
    if value < minimum:
        raise src.error(dotted, f"{minimum} 이상이어야 합니다: {value}")
    return value


def _choice(src: _Source, dotted: str, choices: Sequence[str], default: str) -> str:
    raw = src.raw(dotted)
    if raw is None:
        return default
    if raw not in choices:
        raise src.error(dotted, f"'{raw}' 는 허용되지 않습니다 (가능: {', '.join(choices)})")
    return raw


def _bool(src: _Source, dotted: str, default: bool) -> bool:
    raw = src.raw(dotted)
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise src.error(dotted, f"참/거짓 값이 아닙니다: '{raw}'")


def _expression(src: _Source, dotted: str) -> Optional[FunctionSpec]:
    """카탈로그 이름을 먼저 찾고, 아니면 수식으로 파싱합니다."""
    raw = src.raw(dotted)
    if raw is None:
        return None
    if raw in solutions.names():
        return solutions.lookup(raw).fn
    try:
        return parse(raw)
    except ExprSyntaxError as e:
        raise src.error(dotted, f"수식 '{raw}' 파싱 실패 - {e}") from e


def _vector(src: _Source, dotted: str) -> Optional[Tuple[FunctionSpec, ...]]:
    raw = src.raw(dotted)
    if raw is None:
        return None
    try:
        return parse_vector(raw)
    except ExprSyntaxError as e:
        raise src.error(dotted, f"벡터 수식 '{raw}' 파싱 실패 - {e}") from e


# --- 섹션별 로드 ---

def _require(src: _Source, selector: str) -> None:
    for dotted in ("grid.h",) + REQUIRED[selector]:
        if src.raw(dotted) is None:
            raise src.error(dotted, f"실험 '{selector}' 에 필요한 키가 없습니다")
    if src.raw("operator.u") == SOLUTION or src.raw("operator.v") == SOLUTION:
        for dotted in GAME_KEYS:
            if src.raw(dotted) is None:
                raise src.error(dotted, "operator.u/v = solution 에는 게임 설정이 필요합니다")


def _field_source(src: _Source, dotted: str):
    raw = src.raw(dotted)
    if raw is None or raw == SOLUTION:
        return raw, None, None
    entry = solutions.lookup(raw) if raw in solutions.names() else None
    return raw, (entry.fn if entry else _expression(src, dotted)), entry


def _load_grid(src: _Source, entry: Optional[solutions.ReferenceSolution]) -> GridSettings:
    h = _float(src, "grid.h", positive=True)
    lower = _floats(src, "grid.lower")
    upper = _floats(src, "grid.upper")
    if lower is None or upper is None:
        if entry is None:
            missing = "grid.lower" if lower is None else "grid.upper"
            raise src.error(missing, "격자 박스가 없습니다 (operator.u 가 카탈로그 이름이면 생략 가능)")
        lower = lower or entry.validity[0]
        upper = upper or entry.validity[1]
    try:
        grid = build_grid(lower, upper, h)
    except GridError as e:
        dotted = "grid.h" if e.axis is not None else "grid.lower"
        raise src.error(dotted, str(e)) from e
    return GridSettings(lower=tuple(lower), upper=tuple(upper), h=h, grid=grid)


def _load_hamiltonian(src: _Source, dim: int) -> Optional[HamiltonianSpec]:
    raw = src.raw("operator.H")
    if raw is None:
        return None
    if raw == "quadratic":
        return HamiltonianSpec.quadratic(dim)
    H = _expression(src, "operator.H")
    H_z_raw = src.raw("operator.H_z")
    H_z = _expression(src, "operator.H_z") if H_z_raw is not None else None
    try:
        return HamiltonianSpec(H, H_x=_vector(src, "operator.H_x"), H_z=H_z, H_p=_vector(src, "operator.H_p"))
    except ValueError as e:
        raise src.error("operator.H", str(e)) from e


def _load_operator(src: _Source, grid: Grid, selector: str) -> OperatorSettings:
    u_source, u, entry = _field_source(src, "operator.u")
    v_source, v, _ = _field_source(src, "operator.v")
    settings = OperatorSettings(
        u_source=u_source, u=u, u_entry=entry, v_source=v_source, v=v,
        kind=_choice(src, "operator.kind", OPERATOR_KINDS, "inf"),
        theta=_float(src, "operator.theta", positive=True),
        tol=_float(src, "operator.tol"),
        form=_choice(src, "operator.form", FORMS, "ratio"),
        role=_choice(src, "operator.role", ROLE_CHOICES, "both"),
    )
    settings.hamiltonian = _load_hamiltonian(src, grid.dim)
    B = _vector(src, "operator.B")
    if B is not None:
        c = _expression(src, "operator.c") if src.raw("operator.c") is not None else constant(0.0)
        settings.general = GeneralOperatorSpec(B, c)

    if selector == "operator":
        if settings.kind == "aronsson" and settings.hamiltonian is None:
            raise src.error("operator.H", "kind = aronsson 에는 H 가 필요합니다")
        if settings.kind == "general" and settings.general is None:
            raise src.error("operator.B", "kind = general 에는 B 가 필요합니다")
    for dotted, fn in (("operator.u", settings.u), ("operator.v", settings.v)):
        if fn is not None and fn.coordinate_arity > grid.dim:
            raise src.error(dotted, f"'{fn.source}' 는 y 를 쓰지만 격자는 {grid.dim}차원입니다")
    return settings


def _load_verify(src: _Source, grid: Grid) -> VerifySettings:
    settings = VerifySettings(
        reference=_expression(src, "verify.reference"),
        g=_expression(src, "verify.g"),
        lift=_bool(src, "verify.lift", False),
        center=_floats(src, "verify.center"),
        radii=_floats(src, "verify.radii"),
        rho=_float(src, "verify.rho", positive=True),
        box_lower=_floats(src, "verify.box_lower"),
        box_upper=_floats(src, "verify.box_upper"),
        direction=_choice(src, "verify.direction", ("above", "below"), "above"),
        start=_floats(src, "verify.start"),
        step_cap=_int(src, "verify.step_cap", minimum=1),
    )
    eps = _floats(src, "verify.eps")
    if eps is not None:
        if any(e <= 0 for e in eps):
            raise src.error("verify.eps", f"모든 eps 는 양수여야 합니다: {list(eps)}")
        settings.eps = eps
    coherence = _float(src, "verify.coherence")
    if coherence is not None:
        settings.coherence = coherence
    samples = _int(src, "verify.samples", minimum=1)
    if samples is not None:
        settings.samples = samples
    levels = _int(src, "verify.levels", minimum=0)
    if levels is not None:
        settings.levels = levels

    for dotted, point in (("verify.center", settings.center), ("verify.start", settings.start),
                          ("verify.box_lower", settings.box_lower), ("verify.box_upper", settings.box_upper)):
        if point is not None and len(point) != grid.dim:
            raise src.error(dotted, f"좌표 성분 수 {len(point)} 가 격자 차원 {grid.dim} 과 다릅니다")
    return settings


def _load_output(src: _Source) -> OutputSettings:
    settings = OutputSettings()
    raw_dir = src.raw("output.dir")
    if raw_dir is not None:
        settings.dir = Path(raw_dir)
    raw_formats = src.raw("output.formats")
    if raw_formats is not None:
        formats = tuple(part for part in re.split(r"[,\s]+", raw_formats) if part)
        unknown = [fmt for fmt in formats if fmt not in FORMATS]
        if unknown:
            raise src.error("output.formats", f"알 수 없는 형식 {unknown} (가능: {', '.join(FORMATS)})")
        settings.formats = formats
    return settings


def build_config(parser: configparser.ConfigParser, lines: Dict[Tuple[str, str], int],
                 overridden: Sequence[Tuple[str, str]] = (), path: Optional[Path] = None) -> ExperimentConfig:
    """파싱된 INI 를 검증하여 ExperimentConfig 를 만듭니다."""
    src = _Source(parser, lines, overridden)
    _check_schema(src)

    selector = src.raw("experiment.selector")
    if selector is None:
        raise src.error("experiment.selector", f"실험 선택자가 없습니다 (가능: {', '.join(SELECTORS)})")
    if selector not in SELECTORS:
        raise src.error("experiment.selector", f"알 수 없는 선택자 '{selector}' (가능: {', '.join(SELECTORS)})")
    _require(src, selector)

    _, _, entry = _field_source(src, "operator.u")
    grid = _load_grid(src, entry)
    game = GameSettings(
        epsilon=_float(src, "game.epsilon", positive=True),
        f=_expression(src, "game.f"),
        F=_expression(src, "game.F"),
    )
    if game.epsilon is not None and game.epsilon < grid.h * (1 - 1e-12):
        raise src.error("game.epsilon", f"epsilon={game.epsilon} 는 h={grid.h} 이상이어야 합니다")
    if selector == "check" and game.f is None:
        if entry is None:
            raise src.error("game.f", "check 실험에는 비용 f 가 필요합니다 (카탈로그 이름이면 기본값 사용)")
        game.f = constant(entry.default_f)

    solver = SolverSettings(
        tol=_float(src, "solver.tol", positive=True) or SOLVER_OPTIONS["tol"],
        max_iter=_int(src, "solver.max_iter", minimum=1) or SOLVER_OPTIONS["max_iter"],
        sweep=_choice(src, "solver.sweep", SWEEPS, SOLVER_OPTIONS["sweep"]),
    )
    seed = _int(src, "experiment.seed", minimum=0)

    config = ExperimentConfig(
        path=path,
        selector=selector,
        seed=0 if seed is None else seed,
        grid=grid,
        game=game,
        solver=solver,
        operator=_load_operator(src, grid.grid, selector),
        verify=_load_verify(src, grid.grid),
        output=_load_output(src),
        echo={section: dict(parser.items(section)) for section in parser.sections()},
    )
    logger.info(f"설정 로드 완료: 실험 '{selector}', {grid.grid}")
    return config


def load_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> ExperimentConfig:
    """설정 파일을 읽고 재정의를 적용한 뒤 검증합니다."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        logger.error(f"설정 파일을 찾을 수 없습니다: {path}")
        raise ConfigError(f"설정 파일을 찾을 수 없습니다: {path}") from e
    return loads_config(text, overrides, path)


def loads_config(text: str, overrides: Sequence[str] = (), path: Optional[Path] = None) -> ExperimentConfig:
    """문자열로 주어진 설정을 로드합니다."""
    parser = _read(text, path)
    overridden = apply_overrides(parser, overrides)
    return build_config(parser, _index_lines(text), overridden, path)
