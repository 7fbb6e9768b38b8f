"""Synthetic program-synthesis tasks, the execution filter, and top-1 evaluation.

A model's source for a task is its ``given`` tuple of (input, output) grids.
Held-out pairs live only on ``Task`` and are never reachable from the filter or
the conditioning feature.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..core import FilterVerdict, predict_all
from ..seeding import substream
from .lang import ParseError, Program, ProgramConfig, parse, pretty_print, random_program, to_tokens, try_parse
from .world import (
    DX, DY, STEP_BUDGET, GridConfig, GridState, execute, grid_from_json, grid_to_json, random_grid,
)

Given = tuple  # tuple[tuple[GridState, GridState], ...]


@dataclass(frozen=True)
class IOSpec:
    given: tuple
    heldout: tuple = ()

    def __post_init__(self) -> None:
        if not self.given:
            raise ValueError("an IO spec needs at least one given pair")
        dims = {(g.width, g.height) for pair in self.given + self.heldout for g in pair}
        if len(dims) != 1:
            raise ValueError("all grids of a task must share dimensions")


@dataclass(frozen=True)
class Task:
    spec: IOSpec
    gold: Program

    @property
    def source(self) -> Given:
        return self.spec.given

    @property
    def target(self) -> tuple[str, ...]:
        return to_tokens(self.gold)


def passes(program: Program, pairs: Iterable[tuple[GridState, GridState]], step_budget: int = STEP_BUDGET) -> bool:
    for g_in, g_out in pairs:
        out = execute(program, g_in, step_budget)
        if not out.ok or out.final != g_out:
            return False
    return True


class ExecutionFilter:
    """Target filter over token sequences: parses, and reproduces every given pair exactly.

    ``check(given, tokens)`` only ever sees the given pairs passed as source.
    """

    def __init__(self, step_budget: int = STEP_BUDGET, max_depth: int = 4):
        self.step_budget = step_budget
        self.max_depth = max_depth
        self._memo: dict = {}

    def check(self, source: Given, target: Sequence[str]) -> FilterVerdict:
        key = (source, tuple(target))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        prog = try_parse(target, self.max_depth)
        checks = {"parses": prog is not None}
        if prog is not None:
            checks["given"] = passes(prog, source, self.step_budget)
        v = self._memo[key] = FilterVerdict(checks, {})
        return v

    def __getstate__(self) -> dict:
        return {"step_budget": self.step_budget, "max_depth": self.max_depth, "_memo": {}}


class _BoundFilter:
    def __init__(self, given: Given, step_budget: int):
        self._given = given
        self._inner = ExecutionFilter(step_budget)

    def check(self, source, target: Sequence[str]) -> FilterVerdict:
        return self._inner.check(self._given, target)


def spec_filter(given: Given, step_budget: int = STEP_BUDGET) -> _BoundFilter:
    """Filter bound to one task's given pairs (the source argument of ``check`` is ignored)."""
    return _BoundFilter(tuple(given), step_budget)


# -- conditioning feature -------------------------------------------------------------


def _pair_summary(g_in: GridState, g_out: GridState) -> tuple[int, int, int, int]:
    """(turn, forward, sideways, marker delta) of one pair, displacement in the robot's starting frame."""
    dx, dy = g_out.x - g_in.x, g_out.y - g_in.y
    d = g_in.heading
    fwd = dx * DX[d] + dy * DY[d]
    right = dx * DX[(d + 1) % 4] + dy * DY[(d + 1) % 4]
    turn = (g_out.heading - g_in.heading) % 4
    delta = sum(g_out.markers) - sum(g_in.markers)
    return turn, fwd, right, delta


def _common(values: Sequence[int], lo: int, hi: int) -> int | str:
    if len(set(values)) > 1:
        return "*"
    return max(lo, min(hi, values[0]))


def featurize(given: Given) -> tuple:
    """Summary of the given pairs: per component, the shared (clipped) value or "*" if pairs disagree."""
    rows = [_pair_summary(a, b) for a, b in given]
    turn, fwd, right, delta = zip(*rows)
    return (
        _common(turn, 0, 3),
        _common(fwd, -3, 3),
        _common(right, -3, 3),
        _common(delta, -3, 3),
    )


# -- generation -----------------------------------------------------------------------


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskGenConfig:
    n_given: int = 5
    n_heldout: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    program: ProgramConfig = field(default_factory=ProgramConfig)
    step_budget: int = STEP_BUDGET
    grid_tries: int = 20  # fresh grids tried per slot before the program is rejected
    max_rejections: int = 100000


def _spec_hash(pairs) -> str:
    blob = json.dumps([[grid_to_json(a), grid_to_json(b)] for a, b in pairs], sort_keys=True)
    return hashlib.sha1(blob.encode()).hexdigest()


def _try_task(rng: random.Random, cfg: TaskGenConfig) -> tuple[Task | None, str]:
    prog = random_program(rng, cfg.program)
    w = rng.randint(cfg.grid.min_side, cfg.grid.max_side)
    h = rng.randint(cfg.grid.min_side, cfg.grid.max_side)
    pairs = []
    for _ in range(cfg.n_given + cfg.n_heldout):
        for _ in range(cfg.grid_tries):
            g = random_grid(rng, w, h, cfg.grid)
            out = execute(prog, g, cfg.step_budget)
            if out.ok:
                pairs.append((g, out.final))
                break
        else:
            return None, "execution"
    if all(a == b for a, b in pairs):
        return None, "identity"
    spec = IOSpec(tuple(pairs[:cfg.n_given]), tuple(pairs[cfg.n_given:]))
    return Task(spec, prog), ""


def generate_tasks(n: int, cfg: TaskGenConfig = TaskGenConfig(), seed: int = 0) -> list[Task]:
    """``n`` distinct tasks from random programs run on random grids of one size per task.

    A program is dropped when it cannot run cleanly on fresh grids within
    ``grid_tries`` draws for some slot, when it leaves every grid unchanged, or
    when its (tokens, spec) duplicates an earlier task.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = substream(seed, "gridlang-tasks")
    tasks: list[Task] = []
    seen: set[tuple] = set()
    rejected = {"execution": 0, "identity": 0, "duplicate": 0}
    while len(tasks) < n:
        if sum(rejected.values()) >= cfg.max_rejections:
            raise GenerationError(f"rejection budget exhausted after {len(tasks)} tasks: {rejected}")
        task, why = _try_task(rng, cfg)
        if task is None:
            rejected[why] += 1
            continue
        key = (task.target, _spec_hash(task.spec.given + task.spec.heldout))
        if key in seen:
            rejected["duplicate"] += 1
            continue
        seen.add(key)
        tasks.append(task)
    return tasks


# -- evaluation -----------------------------------------------------------------------


def top1_generalization(model, tasks: Sequence[Task], L: int = 10, seed: int = 0, workers: int = 1,
                        step_budget: int = STEP_BUDGET) -> float:
    """Fraction of tasks whose single emitted program reproduces both given and held-out pairs.

    Emission samples up to ``L`` programs and keeps the first passing the given
    pairs (else the first sample).
    """
    if not tasks:
        return 0.0
    sources = [t.source for t in tasks]
    preds = predict_all(sources, model, ExecutionFilter(step_budget), 1, L, seed, workers)
    return sum(generalizes(t, p[0], step_budget) for t, p in zip(tasks, preds)) / len(tasks)


def generalizes(task: Task, tokens: Sequence[str], step_budget: int = STEP_BUDGET) -> bool:
    prog = try_parse(tokens)
    if prog is None:
        return False
    return passes(prog, task.spec.given, step_budget) and passes(prog, task.spec.heldout, step_budget)


# -- JSONL ----------------------------------------------------------------------------


def task_to_json(t: Task) -> dict:
    return {
        "given": [{"in": grid_to_json(a), "out": grid_to_json(b)} for a, b in t.spec.given],
        "heldout": [{"in": grid_to_json(a), "out": grid_to_json(b)} for a, b in t.spec.heldout],
        "gold": pretty_print(t.gold),
    }


def task_from_json(obj: dict) -> Task:
    given = tuple((grid_from_json(p["in"]), grid_from_json(p["out"])) for p in obj["given"])
    heldout = tuple((grid_from_json(p["in"]), grid_from_json(p["out"])) for p in obj["heldout"])
    return Task(IOSpec(given, heldout), parse(obj["gold"]))


def write_tasks(path: str | Path, tasks: Iterable[Task]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(task_to_json(t), sort_keys=True, separators=(",", ":")) + "\n")


def read_tasks(path: str | Path) -> list[Task]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(task_from_json(json.loads(line)))
            except (KeyError, ValueError, ParseError) as e:
                raise ValueError(f"{path}:{n}: bad task record: {e}") from e
    return out
