"""
수식 모듈 - f, g, F, H, B, c 를 설정 파일/CLI 에서 지정하기 위한 작은 산술 언어

문법 (우선순위 높은 순):
    ^ (오른쪽 결합)  >  단항 -  >  * /  >  + -
식별자: 변수 x, y, z, p1, p2, r / 함수 abs, min, max, sqrt, sin, cos, exp, log / 상수 pi
"""
import re
import math
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

VARIABLES = ("x", "y", "z", "p1", "p2", "r")
CONSTANTS = {"pi": math.pi}
UNARY_FUNCTIONS = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
}
VARIADIC_FUNCTIONS = {
    "min": np.minimum,
    "max": np.maximum,
}
BINARY_OPERATORS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}

Value = Union[float, np.ndarray]


class ExprSyntaxError(ValueError):
    """구문 오류 (위치 포함)"""

    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"위치 {position}: {message}")


class ExprEvalError(ValueError):
    """평가 오류 - 유한하지 않은 결과 또는 누락된 바인딩"""

    def __init__(self, message: str, operation: str = "", index: Optional[int] = None):
        self.operation = operation
        self.index = index
        super().__init__(message)


# --- 구문 트리 ---

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]


# --- 토크나이저 ---

_TOKEN_PATTERN = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


@dataclass(frozen=True)
class _Token:
    kind: str   # number | name | op | end
    text: str
    position: int


def tokenize(source: str) -> List[_Token]:
    """소스 문자열을 토큰 목록으로 변환합니다."""
    tokens: List[_Token] = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        match = _TOKEN_PATTERN.match(source, pos)
        if match is None or match.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"알 수 없는 문자 '{source[bad]}'", bad, source)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


# --- Pratt 파서 ---

_LEFT_BINDING = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BINDING = 25


class _Parser:
    """우선순위 기반 (Pratt) 재귀 하강 파서"""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0

    @property
    def token(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> None:
        if self.token.text != text:
            found = self.token.text or "입력 끝"
            raise ExprSyntaxError(f"'{text}' 가 필요하지만 '{found}' 발견", self.token.position, self.source)
        self.advance()

    def parse(self) -> Node:
        if self.token.kind == "end":
            raise ExprSyntaxError("빈 수식", 0, self.source)
        tree = self.expression(0)
        if self.token.kind != "end":
            raise ExprSyntaxError(f"예상치 못한 토큰 '{self.token.text}'", self.token.position, self.source)
        return tree

    def expression(self, rbp: int) -> Node:
        left = self.nud(self.advance())
        while self.token.kind == "op" and rbp < _LEFT_BINDING.get(self.token.text, 0):
            left = self.led(self.advance(), left)
        return left

    def nud(self, token: _Token) -> Node:
        if token.kind == "number":
            return Num(float(token.text))
        if token.kind == "name":
            return self.name(token)
        if token.text == "-":
            return Neg(self.expression(_UNARY_BINDING))
        if token.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        found = token.text or "입력 끝"
        raise ExprSyntaxError(f"피연산자가 필요하지만 '{found}' 발견", token.position, self.source)

    def led(self, token: _Token, left: Node) -> Node:
        lbp = _LEFT_BINDING[token.text]
        # ^ 는 오른쪽 결합
        rbp = lbp - 1 if token.text == "^" else lbp
        return BinOp(token.text, left, self.expression(rbp))

    def name(self, token: _Token) -> Node:
        name = token.text
        if name in VARIABLES:
            return Var(name)
        if name in CONSTANTS:
            return Num(CONSTANTS[name])
        if name in UNARY_FUNCTIONS or name in VARIADIC_FUNCTIONS:
            self.expect("(")
            args = [self.expression(0)]
            while self.token.text == ",":
                self.advance()
                args.append(self.expression(0))
            self.expect(")")
            if name in UNARY_FUNCTIONS and len(args) != 1:
                raise ExprSyntaxError(f"{name} 은(는) 인자 1개가 필요합니다", token.position, self.source)
            if name in VARIADIC_FUNCTIONS and len(args) < 2:
                raise ExprSyntaxError(f"{name} 은(는) 인자 2개 이상이 필요합니다", token.position, self.source)
            return Call(name, tuple(args))
        raise ExprSyntaxError(f"알 수 없는 식별자 '{name}'", token.position, self.source)


def _collect_variables(node: Node) -> FrozenSet[str]:
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Neg):
        return _collect_variables(node.operand)
    if isinstance(node, BinOp):
        return _collect_variables(node.left) | _collect_variables(node.right)
    if isinstance(node, Call):
        names: FrozenSet[str] = frozenset()
        for arg in node.args:
            names |= _collect_variables(arg)
        return names
    return frozenset()


def to_source(node: Node) -> str:
    """트리를 완전 괄호 표기의 소스로 출력합니다 (재파싱 시 동일 트리)."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    return f"{node.name}({', '.join(to_source(arg) for arg in node.args)})"


def _check_finite(value: np.ndarray, operation: str) -> np.ndarray:
    finite = np.isfinite(value)
    if not np.all(finite):
        index = int(np.flatnonzero(~finite.ravel())[0]) if value.ndim else None
        where = f" (인덱스 {index})" if index is not None else ""
        raise ExprEvalError(f"'{operation}' 결과가 유한하지 않습니다{where}", operation, index)
    return value


def _eval(node: Node, env: Mapping[str, np.ndarray]) -> np.ndarray:
    if isinstance(node, Num):
        return np.asarray(node.value, dtype=float)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, env))
    if isinstance(node, BinOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        return _check_finite(BINARY_OPERATORS[node.op](left, right), node.op)
    args = [_eval(arg, env) for arg in node.args]
    if node.name in UNARY_FUNCTIONS:
        return _check_finite(UNARY_FUNCTIONS[node.name](args[0]), node.name)
    result = args[0]
    for arg in args[1:]:
        result = VARIADIC_FUNCTIONS[node.name](result, arg)
    return result


@dataclass(frozen=True)
class FunctionSpec:
    """파싱된 스칼라 함수 (x[, y][, z, p1, p2], r 의 함수)"""

    source: str
    tree: Node
    variables: FrozenSet[str]

    @property
    def coordinate_arity(self) -> int:
        """필요한 공간 좌표 개수 (y 를 쓰면 2)"""
        return 2 if "y" in self.variables else 1

    @property
    def uses_state(self) -> bool:
        """z, p1, p2 중 하나라도 사용하는지 여부"""
        return bool(self.variables & {"z", "p1", "p2"})

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        return evaluate(self, bindings)

    def __call__(self, **bindings: Value) -> Value:
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return self.source


def parse(source: str) -> FunctionSpec:
    """수식 소스를 파싱하여 FunctionSpec 을 반환합니다."""
    tree = _Parser(source).parse()
    return FunctionSpec(source=source.strip(), tree=tree, variables=_collect_variables(tree))


def parse_vector(source: str) -> Tuple[FunctionSpec, ...]:
    """최상위 쉼표로 구분된 벡터 값 수식을 파싱합니다 (예: "p1, p2")."""
    parts: List[Tuple[int, str]] = []
    depth, start = 0, 0
    for pos, char in enumerate(source):
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        elif char == "," and depth == 0:
            parts.append((start, source[start:pos]))
            start = pos + 1
    parts.append((start, source[start:]))

    specs = []
    for offset, text in parts:
        try:
            specs.append(parse(text))
        except ExprSyntaxError as e:
            raise ExprSyntaxError(str(e).split(": ", 1)[-1], offset + e.position, source) from e
    return tuple(specs)


def constant(value: float) -> FunctionSpec:
    """상수 함수"""
    return FunctionSpec(source=repr(float(value)), tree=Num(float(value)), variables=frozenset())


def evaluate(fn: FunctionSpec, bindings: Mapping[str, Value]) -> Value:
    """바인딩(변수 -> 실수 또는 배열)에서 함수를 평가합니다.

    모든 입력이 스칼라이면 float, 아니면 브로드캐스트된 배열을 반환합니다.
    """
    missing = sorted(fn.variables - set(bindings))
    if missing:
        raise ExprEvalError(f"바인딩 누락: {', '.join(missing)}", "bind")

    env: Dict[str, np.ndarray] = {}
    for name in fn.variables:
        env[name] = _check_finite(np.asarray(bindings[name], dtype=float), name)

    with np.errstate(all="ignore"):
        result = _eval(fn.tree, env)
    result = _check_finite(np.asarray(result, dtype=float), "result")

    if result.ndim == 0:
        return float(result)
    return result
