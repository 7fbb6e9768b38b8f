"""Mini-Karel: tokens, AST, parser, pretty printer, random programs.

Grammar::

    prog  := stmt*
    stmt  := ACTION
           | "repeat" N "{" prog "}"            N in 2..9
           | "if" cond "{" prog "}" ["else" "{" prog "}"]
           | "while" cond "{" prog "}"
    cond  := "frontIsClear" | "markersPresent" | "not" cond
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence, Union

ACTIONS = ("move", "turnLeft", "turnRight", "putMarker", "pickMarker")
CONDS = ("frontIsClear", "markersPresent")
REPEAT_MIN, REPEAT_MAX = 2, 9
KEYWORDS = ("repeat", "if", "else", "while", "not", "{", "}")
TOKENS = ACTIONS + CONDS + KEYWORDS + tuple(str(n) for n in range(REPEAT_MIN, REPEAT_MAX + 1))
MAX_DEPTH = 4


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at token {position}")
        self.position = position


@dataclass(frozen=True)
class Cond:
    name: str
    negated: int = 0  # number of leading "not"s


@dataclass(frozen=True)
class Action:
    name: str


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple


@dataclass(frozen=True)
class If:
    cond: Cond
    body: tuple
    orelse: tuple | None = None


@dataclass(frozen=True)
class While:
    cond: Cond
    body: tuple


Stmt = Union[Action, Repeat, If, While]


@dataclass(frozen=True)
class Program:
    body: tuple = ()

    def __len__(self) -> int:
        return len(self.body)


def depth(node) -> int:
    """Nesting depth; a flat list of actions has depth 1, the empty program 0."""
    if isinstance(node, Program):
        return _block_depth(node.body)
    if isinstance(node, Action):
        return 1
    if isinstance(node, If):
        inner = _block_depth(node.body)
        if node.orelse is not None:
            inner = max(inner, _block_depth(node.orelse))
        return 1 + inner
    return 1 + _block_depth(node.body)


def _block_depth(block: tuple) -> int:
    return max((depth(s) for s in block), default=0)


def tokenize(text: str) -> list[str]:
    return text.replace("{", " { ").replace("}", " } ").split()


# -- parser ------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: Sequence[str], max_depth: int):
        self.toks = list(toks)
        self.i = 0
        self.max_depth = max_depth

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            want = f"expected {expected!r}" if expected else "unexpected end of input"
            raise ParseError(f"{want}, got EOF", self.i)
        if expected is not None and tok != expected:
            raise ParseError(f"expected {expected!r}, got {tok!r}", self.i)
        self.i += 1
        return tok

    def block(self, level: int) -> tuple:
        stmts = []
        while self.peek() not in (None, "}"):
            stmts.append(self.stmt(level))
        return tuple(stmts)

    def braced(self, level: int) -> tuple:
        self.take("{")
        body = self.block(level)
        self.take("}")
        return body

    def stmt(self, level: int):
        if level > self.max_depth:
            raise ParseError(f"nesting deeper than {self.max_depth}", self.i)
        at = self.i
        tok = self.take()
        if tok in ACTIONS:
            return Action(tok)
        if tok == "repeat":
            n_at = self.i
            n = self.take()
            if not n.isdigit() or not REPEAT_MIN <= int(n) <= REPEAT_MAX:
                raise ParseError(f"repeat count must be {REPEAT_MIN}..{REPEAT_MAX}, got {n!r}", n_at)
            return Repeat(int(n), self.braced(level + 1))
        if tok == "if":
            cond = self.cond()
            body = self.braced(level + 1)
            orelse = None
            if self.peek() == "else":
                self.take()
                orelse = self.braced(level + 1)
            return If(cond, body, orelse)
        if tok == "while":
            cond = self.cond()
            return While(cond, self.braced(level + 1))
        raise ParseError(f"unexpected token {tok!r}", at)

    def cond(self) -> Cond:
        neg = 0
        while self.peek() == "not":
            self.take()
            neg += 1
        tok = self.take()
        if tok not in CONDS:
            raise ParseError(f"expected condition, got {tok!r}", self.i - 1)
        return Cond(tok, neg)


def parse(source: str | Sequence[str], max_depth: int = MAX_DEPTH) -> Program:
    """Parse program text or a token sequence; raises ParseError with the offending token index."""
    toks = tokenize(source) if isinstance(source, str) else list(source)
    p = _Parser(toks, max_depth)
    body = p.block(1)
    if p.peek() is not None:
        raise ParseError(f"trailing token {p.peek()!r}", p.i)
    return Program(body)


def try_parse(source: str | Sequence[str], max_depth: int = MAX_DEPTH) -> Program | None:
    try:
        return parse(source, max_depth)
    except ParseError:
        return None


# -- printer -----------------------------------------------------------------------


def to_tokens(node) -> tuple[str, ...]:
    out: list[str] = []
    _emit(node, out)
    return tuple(out)


def _emit(node, out: list[str]) -> None:
    if isinstance(node, Program):
        for s in node.body:
            _emit(s, out)
    elif isinstance(node, Action):
        out.append(node.name)
    elif isinstance(node, Cond):
        out.extend(["not"] * node.negated)
        out.append(node.name)
    elif isinstance(node, Repeat):
        out += ["repeat", str(node.count), "{"]
        for s in node.body:
            _emit(s, out)
        out.append("}")
    elif isinstance(node, If):
        out.append("if")
        _emit(node.cond, out)
        out.append("{")
        for s in node.body:
            _emit(s, out)
        out.append("}")
        if node.orelse is not None:
            out += ["else", "{"]
            for s in node.orelse:
                _emit(s, out)
            out.append("}")
    elif isinstance(node, While):
        out.append("while")
        _emit(node.cond, out)
        out.append("{")
        for s in node.body:
            _emit(s, out)
        out.append("}")
    else:
        raise TypeError(f"not a program node: {node!r}")


def pretty_print(program: Program) -> str:
    return " ".join(to_tokens(program))


# -- random programs ---------------------------------------------------------------


@dataclass(frozen=True)
class ProgramConfig:
    min_stmts: int = 1
    max_stmts: int = 4
    max_depth: int = 3
    max_tokens: int = 30
    p_control: float = 0.35  # chance a statement is a control-flow node (while depth allows)
    p_else: float = 0.4
    p_not: float = 0.3
    max_body: int = 3

    def __post_init__(self) -> None:
        if not 0 <= self.min_stmts <= self.max_stmts:
            raise ValueError("need 0 <= min_stmts <= max_stmts")
        if not 1 <= self.max_depth <= MAX_DEPTH:
            raise ValueError(f"max_depth must be in 1..{MAX_DEPTH}")


def _random_cond(rng: random.Random, cfg: ProgramConfig) -> Cond:
    return Cond(rng.choice(CONDS), 1 if rng.random() < cfg.p_not else 0)


def _random_block(rng: random.Random, cfg: ProgramConfig, level: int, lo: int, hi: int) -> tuple:
    return tuple(_random_stmt(rng, cfg, level) for _ in range(rng.randint(lo, hi)))


def _random_stmt(rng: random.Random, cfg: ProgramConfig, level: int):
    if level < cfg.max_depth and rng.random() < cfg.p_control:
        kind = rng.choice(("repeat", "if", "while"))
        body = _random_block(rng, cfg, level + 1, 1, cfg.max_body)
        if kind == "repeat":
            return Repeat(rng.randint(REPEAT_MIN, REPEAT_MAX), body)
        if kind == "while":
            return While(_random_cond(rng, cfg), body)
        orelse = _random_block(rng, cfg, level + 1, 1, cfg.max_body) if rng.random() < cfg.p_else else None
        return If(_random_cond(rng, cfg), body, orelse)
    return Action(rng.choice(ACTIONS))


def random_program(rng: random.Random, cfg: ProgramConfig = ProgramConfig()) -> Program:
    """Random program within the configured statement, depth and token bounds (rejection on tokens)."""
    while True:
        p = Program(_random_block(rng, cfg, 1, cfg.min_stmts, cfg.max_stmts))
        if len(to_tokens(p)) <= cfg.max_tokens:
            return p
