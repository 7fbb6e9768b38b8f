"""Grid worlds and the Mini-Karel interpreter.

Coordinates: ``x`` grows east, ``y`` grows north, cell ``(x, y)`` has flat index
``y * width + x``.  Every primitive action and every condition evaluation costs
one step; control nodes themselves are free.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .lang import Action, Cond, If, Program, Repeat, While

HEADINGS = "NESW"
DX = (0, 1, 0, -1)
DY = (1, 0, -1, 0)
MAX_SIDE = 16
MARKER_CAP = 9
STEP_BUDGET = 500


@dataclass(frozen=True)
class GridState:
    width: int
    height: int
    walls: int  # bitmask over flat cell indices
    x: int
    y: int
    heading: int  # index into HEADINGS
    markers: tuple[int, ...]  # per cell, row-major

    def __post_init__(self) -> None:
        if not (1 <= self.width <= MAX_SIDE and 1 <= self.height <= MAX_SIDE):
            raise ValueError(f"grid sides must be in 1..{MAX_SIDE}")
        if len(self.markers) != self.width * self.height:
            raise ValueError("markers must have one count per cell")
        if any(not 0 <= m <= MARKER_CAP for m in self.markers):
            raise ValueError(f"marker counts must be in 0..{MARKER_CAP}")
        if not (0 <= self.x < self.width and 0 <= self.y < self.height):
            raise ValueError("robot outside the grid")
        if self.walls >> self.index(self.x, self.y) & 1:
            raise ValueError("robot on a wall cell")
        if not 0 <= self.heading < 4:
            raise ValueError("heading must be 0..3")

    def index(self, x: int, y: int) -> int:
        return y * self.width + x

    def is_wall(self, x: int, y: int) -> bool:
        return bool(self.walls >> self.index(x, y) & 1)

    @classmethod
    def empty(cls, width: int, height: int, x: int = 0, y: int = 0, heading: str = "E") -> "GridState":
        return cls(width, height, 0, x, y, HEADINGS.index(heading), (0,) * (width * height))

    def render(self) -> str:
        rows = []
        for y in reversed(range(self.height)):
            row = []
            for x in range(self.width):
                if (x, y) == (self.x, self.y):
                    row.append("^>v<"[self.heading])
                elif self.is_wall(x, y):
                    row.append("#")
                else:
                    m = self.markers[self.index(x, y)]
                    row.append(str(m) if m else ".")
            rows.append("".join(row))
        return "\n".join(rows)


@dataclass(frozen=True)
class ExecOutcome:
    status: str  # "ok" | "crash" | "timeout"
    steps: int
    final: GridState | None = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _Crash(Exception):
    pass


class _Timeout(Exception):
    pass


class _Machine:
    __slots__ = ("w", "h", "walls", "x", "y", "d", "markers", "steps", "budget")

    def __init__(self, g: GridState, budget: int):
        self.w, self.h, self.walls = g.width, g.height, g.walls
        self.x, self.y, self.d = g.x, g.y, g.heading
        self.markers = list(g.markers)
        self.steps = 0
        self.budget = budget

    def tick(self) -> None:
        if self.steps >= self.budget:
            raise _Timeout
        self.steps += 1

    def front_clear(self) -> bool:
        nx, ny = self.x + DX[self.d], self.y + DY[self.d]
        if not (0 <= nx < self.w and 0 <= ny < self.h):
            return False
        return not self.walls >> (ny * self.w + nx) & 1

    def cond(self, c: Cond) -> bool:
        self.tick()
        if c.name == "frontIsClear":
            v = self.front_clear()
        else:
            v = self.markers[self.y * self.w + self.x] > 0
        return v if c.negated % 2 == 0 else not v

    def act(self, name: str) -> None:
        self.tick()
        if name == "move":
            nx, ny = self.x + DX[self.d], self.y + DY[self.d]
            if not (0 <= nx < self.w and 0 <= ny < self.h):
                raise _Crash("bounds")
            if self.walls >> (ny * self.w + nx) & 1:
                raise _Crash("wall")
            self.x, self.y = nx, ny
        elif name == "turnLeft":
            self.d = (self.d + 3) % 4
        elif name == "turnRight":
            self.d = (self.d + 1) % 4
        elif name == "putMarker":
            i = self.y * self.w + self.x
            if self.markers[i] >= MARKER_CAP:
                raise _Crash("marker-cap")
            self.markers[i] += 1
        elif name == "pickMarker":
            i = self.y * self.w + self.x
            if self.markers[i] == 0:
                raise _Crash("no-marker")
            self.markers[i] -= 1
        else:
            raise ValueError(f"unknown action {name!r}")

    def run(self, block: Sequence) -> None:
        for s in block:
            if isinstance(s, Action):
                self.act(s.name)
            elif isinstance(s, Repeat):
                for _ in range(s.count):
                    self.run(s.body)
            elif isinstance(s, If):
                if self.cond(s.cond):
                    self.run(s.body)
                elif s.orelse is not None:
                    self.run(s.orelse)
            elif isinstance(s, While):
                while self.cond(s.cond):
                    self.run(s.body)
            else:
                raise TypeError(f"not a statement: {s!r}")

    def state(self) -> GridState:
        return GridState(self.w, self.h, self.walls, self.x, self.y, self.d, tuple(self.markers))


def execute(program: Program, grid: GridState, step_budget: int = STEP_BUDGET) -> ExecOutcome:
    """Run ``program`` on ``grid``; failures are encoded in the outcome, never raised."""
    m = _Machine(grid, step_budget)
    try:
        m.run(program.body)
    except _Crash as e:
        return ExecOutcome("crash", m.steps, None, str(e))
    except _Timeout:
        return ExecOutcome("timeout", m.steps, None, "step budget")
    return ExecOutcome("ok", m.steps, m.state())


# -- random grids -----------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    min_side: int = 4
    max_side: int = 6
    wall_density: float = 0.1
    marker_density: float = 0.15
    max_markers: int = 2

    def __post_init__(self) -> None:
        if not 1 <= self.min_side <= self.max_side <= MAX_SIDE:
            raise ValueError(f"need 1 <= min_side <= max_side <= {MAX_SIDE}")
        if not (0 <= self.wall_density < 1 and 0 <= self.marker_density <= 1):
            raise ValueError("densities must be in [0, 1)")
        if not 1 <= self.max_markers <= MARKER_CAP:
            raise ValueError(f"max_markers must be in 1..{MARKER_CAP}")


def random_grid(rng: random.Random, width: int, height: int, cfg: GridConfig) -> GridState:
    n = width * height
    walls = 0
    for i in range(n):
        if rng.random() < cfg.wall_density:
            walls |= 1 << i
    free = [i for i in range(n) if not walls >> i & 1]
    if not free:
        walls &= walls - 1  # clear the lowest wall bit
        free = [i for i in range(n) if not walls >> i & 1]
    pos = rng.choice(free)
    markers = tuple(
        rng.randint(1, cfg.max_markers) if not walls >> i & 1 and rng.random() < cfg.marker_density else 0
        for i in range(n)
    )
    return GridState(width, height, walls, pos % width, pos // width, rng.randrange(4), markers)


# -- JSON encoding ---------------------------------------------------------------


def grid_to_json(g: GridState) -> dict:
    return {
        "w": g.width,
        "h": g.height,
        "walls": [[i % g.width, i // g.width] for i in range(g.width * g.height) if g.walls >> i & 1],
        "robot": {"x": g.x, "y": g.y, "dir": HEADINGS[g.heading]},
        "markers": [[i % g.width, i // g.width, m] for i, m in enumerate(g.markers) if m],
    }


def grid_from_json(obj: dict) -> GridState:
    w, h = obj["w"], obj["h"]
    walls = 0
    for x, y in obj["walls"]:
        walls |= 1 << (y * w + x)
    markers = [0] * (w * h)
    for x, y, m in obj["markers"]:
        markers[y * w + x] = m
    r = obj["robot"]
    return GridState(w, h, walls, r["x"], r["y"], HEADINGS.index(r["dir"]), tuple(markers))
