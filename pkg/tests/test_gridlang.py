import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targetaug.gridlang import lang, tasks as gt, world
from targetaug.gridlang.lang import ParseError, ProgramConfig, parse, pretty_print, random_program, to_tokens
from targetaug.gridlang.world import GridConfig, GridState, execute
from targetaug.seeding import substream


def grid(w, h, x=0, y=0, d="E", walls=(), markers=None):
    wall_bits = 0
    for wx, wy in walls:
        wall_bits |= 1 << (wy * w + wx)
    cells = [0] * (w * h)
    for (mx, my), n in (markers or {}).items():
        cells[my * w + mx] = n
    return GridState(w, h, wall_bits, x, y, "NESW".index(d), tuple(cells))


# Hand-traced outcomes under the cost model: one step per action and per condition test.
# Each case: (program, start grid, budget, status, steps, expected final grid or crash reason)
CORRIDOR = grid(5, 1)
GOLDEN = [
    ("", CORRIDOR, 500, "ok", 0, CORRIDOR),
    ("move", CORRIDOR, 500, "ok", 1, grid(5, 1, 1)),
    ("while frontIsClear { move }", CORRIDOR, 500, "ok", 9, grid(5, 1, 4)),
    ("turnLeft", CORRIDOR, 500, "ok", 1, grid(5, 1, d="N")),
    ("turnRight", CORRIDOR, 500, "ok", 1, grid(5, 1, d="S")),
    ("turnLeft turnLeft turnLeft turnLeft", CORRIDOR, 500, "ok", 4, CORRIDOR),
    ("move", grid(5, 1, d="W"), 500, "crash", 1, "bounds"),
    ("move", grid(5, 1, walls=[(1, 0)]), 500, "crash", 1, "wall"),
    ("putMarker", CORRIDOR, 500, "ok", 1, grid(5, 1, markers={(0, 0): 1})),
    ("pickMarker", CORRIDOR, 500, "crash", 1, "no-marker"),
    ("repeat 9 { putMarker } putMarker", CORRIDOR, 500, "crash", 10, "marker-cap"),
    ("repeat 3 { move }", CORRIDOR, 500, "ok", 3, grid(5, 1, 3)),
    ("repeat 2 { repeat 3 { putMarker } }", CORRIDOR, 500, "ok", 6, grid(5, 1, markers={(0, 0): 6})),
    ("if frontIsClear { move }", CORRIDOR, 500, "ok", 2, grid(5, 1, 1)),
    ("if frontIsClear { move }", grid(5, 1, 4), 500, "ok", 1, grid(5, 1, 4)),
    ("if not frontIsClear { turnLeft } else { move }", CORRIDOR, 500, "ok", 2, grid(5, 1, 1)),
    ("if markersPresent { pickMarker } else { putMarker }", CORRIDOR, 500, "ok", 2,
     grid(5, 1, markers={(0, 0): 1})),
    ("if markersPresent { pickMarker } else { putMarker }", grid(5, 1, markers={(0, 0): 1}), 500, "ok", 2,
     CORRIDOR),
    ("while markersPresent { pickMarker }", grid(5, 1, markers={(0, 0): 3}), 500, "ok", 7, CORRIDOR),
    ("while not markersPresent { putMarker }", CORRIDOR, 500, "ok", 3, grid(5, 1, markers={(0, 0): 1})),
    ("while not markersPresent { turnLeft }", CORRIDOR, 500, "timeout", 500, None),
    ("while frontIsClear { turnLeft turnRight }", CORRIDOR, 10, "timeout", 10, None),
    ("move move turnRight move move", grid(3, 3, d="N"), 500, "ok", 5, grid(3, 3, 2, 2, "E")),
    ("move", grid(3, 3, 1, 1, "S"), 500, "ok", 1, grid(3, 3, 1, 0, "S")),
    ("move", grid(3, 3, 1, 1, "W"), 500, "ok", 1, grid(3, 3, 0, 1, "W")),
    ("if frontIsClear { move } else { turnRight move }", grid(3, 3, d="N", walls=[(0, 1)]), 500, "ok", 3,
     grid(3, 3, 1, 0, "E", walls=[(0, 1)])),
    ("if not not frontIsClear { move }", CORRIDOR, 500, "ok", 2, grid(5, 1, 1)),
    ("repeat 2 { move putMarker }", CORRIDOR, 500, "ok", 4, grid(5, 1, 2, markers={(1, 0): 1, (2, 0): 1})),
    ("while frontIsClear { move putMarker }", grid(4, 1), 500, "ok", 10,
     grid(4, 1, 3, markers={(1, 0): 1, (2, 0): 1, (3, 0): 1})),
    ("putMarker move pickMarker", CORRIDOR, 500, "crash", 3, "no-marker"),
    ("move move", CORRIDOR, 2, "ok", 2, grid(5, 1, 2)),
    ("move move", CORRIDOR, 1, "timeout", 1, None),
]


@pytest.mark.parametrize("src,start,budget,status,steps,expect", GOLDEN, ids=[f"g{i}" for i in range(len(GOLDEN))])
def test_golden_interpreter(src, start, budget, status, steps, expect):
    out = execute(parse(src), start, budget)
    assert (out.status, out.steps) == (status, steps)
    if status == "ok":
        assert out.final == expect
    elif status == "crash":
        assert out.reason == expect and out.final is None


def test_golden_suite_size():
    assert len(GOLDEN) >= 30


@pytest.mark.parametrize("src,pos", [
    ("move }", 1),
    ("repeat 1 { move }", 1),
    ("repeat 10 { move }", 1),
    ("if move { turnLeft }", 1),
    ("while frontIsClear { move", 4),
    ("jump", 0),
    ("if frontIsClear move", 2),
])
def test_parse_errors_report_position(src, pos):
    with pytest.raises(ParseError) as e:
        parse(src)
    assert e.value.position == pos


def test_depth_limit():
    four = "repeat 2 { repeat 2 { repeat 2 { move } } }"
    five = "repeat 2 { repeat 2 { repeat 2 { repeat 2 { move } } } }"
    assert lang.depth(parse(four)) == 4
    with pytest.raises(ParseError, match="nesting"):
        parse(five)
    assert lang.depth(parse("move")) == 1
    assert lang.try_parse(five) is None


def test_pretty_print_form():
    p = parse("if not frontIsClear { turnLeft } else { move }")
    assert pretty_print(p) == "if not frontIsClear { turnLeft } else { move }"
    assert pretty_print(parse("repeat 3{move}")) == "repeat 3 { move }"


def test_roundtrip_on_random_programs():
    rng = random.Random(0)
    for _ in range(1000):
        p = random_program(rng)
        assert parse(pretty_print(p)) == p
        assert parse(to_tokens(p)) == p


def test_random_programs_respect_bounds():
    cfg = ProgramConfig()
    rng = random.Random(1)
    for _ in range(300):
        p = random_program(rng, cfg)
        assert lang.depth(p) <= cfg.max_depth
        assert len(to_tokens(p)) <= cfg.max_tokens
        assert set(to_tokens(p)) <= set(lang.TOKENS)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=150, deadline=None)
@given(seeds, st.integers(1, 60), st.integers(1, 200))
def test_budget_monotonicity(seed, budget, extra):
    rng = random.Random(seed)
    p = random_program(rng)
    g = world.random_grid(rng, rng.randint(2, 6), rng.randint(2, 6), GridConfig())
    a = execute(p, g, budget)
    b = execute(p, g, budget + extra)
    if a.ok:
        assert b.ok and b.final == a.final and b.steps == a.steps
    assert execute(p, g, budget) == a  # deterministic


def test_grid_validation_and_json():
    with pytest.raises(ValueError):
        grid(3, 3, walls=[(0, 0)])
    with pytest.raises(ValueError):
        grid(3, 3, x=3)
    with pytest.raises(ValueError):
        grid(2, 2, markers={(0, 0): 10})
    g = grid(4, 3, 1, 2, "S", walls=[(3, 0)], markers={(2, 1): 4})
    assert world.grid_from_json(world.grid_to_json(g)) == g
    assert world.grid_to_json(g) == {"w": 4, "h": 3, "walls": [[3, 0]], "robot": {"x": 1, "y": 2, "dir": "S"},
                                     "markers": [[2, 1, 4]]}
    assert g.render().splitlines()[0] == ".v.."


# -- spec filter / tasks ------------------------------------------------------------


def io(src, *grids):
    p = parse(src)
    return tuple((g, execute(p, g).final) for g in grids)


def test_spec_filter_gold_passes_and_timeout_fails():
    given_pairs = io("turnLeft turnLeft", grid(3, 3, 1, 1, "N"), grid(3, 3, 0, 0, "E"))
    f = gt.spec_filter(given_pairs)
    assert f.check(None, to_tokens(parse("turnLeft turnLeft"))).passed
    v = f.check(None, to_tokens(parse("while frontIsClear { turnLeft }")))
    assert not v.passed and v.checks["given"] is False
    assert f.check(None, ("move", "}")).checks == {"parses": False}


def test_spec_filter_accepts_distinct_equivalent_program():
    given_pairs = io("turnLeft turnLeft", grid(3, 3, 1, 1, "N"), grid(3, 3, 0, 0, "E"))
    other = to_tokens(parse("turnRight turnRight"))
    assert gt.spec_filter(given_pairs).check(None, other).passed


def test_generalization_needs_heldout():
    # from x=2 of a 4-wide corridor "move" and the loop agree; from x=0 they do not
    task = gt.Task(gt.IOSpec(io("move", grid(4, 1, 2)), io("move", grid(4, 1))), parse("move"))
    loop = to_tokens(parse("while frontIsClear { move }"))
    assert gt.spec_filter(task.source).check(None, loop).passed
    assert not gt.generalizes(task, loop)
    assert gt.generalizes(task, ("move",))
    with pytest.raises(ValueError):
        gt.IOSpec(io("move", grid(2, 1)), io("move", grid(4, 1)))


def test_featurize_reads_only_given_pairs():
    pairs = io("move turnLeft putMarker", grid(4, 4, 0, 0, "E"), grid(4, 4, 1, 1, "N"))
    assert gt.featurize(pairs) == (3, 1, 0, 1)
    mixed = io("move", grid(4, 4, 0, 0, "E"), grid(4, 4, 3, 0, "E", walls=[(1, 1)]))
    assert gt.featurize(mixed[:1]) == (0, 1, 0, 0)


def test_generate_tasks_contract():
    cfg = gt.TaskGenConfig()
    ts = gt.generate_tasks(40, cfg, seed=3)
    assert len(ts) == 40
    assert gt.generate_tasks(0, cfg, seed=3) == []
    assert gt.generate_tasks(40, cfg, seed=3) == ts
    keys = set()
    for t in ts:
        assert len(t.spec.given) == cfg.n_given and len(t.spec.heldout) == cfg.n_heldout
        assert gt.passes(t.gold, t.spec.given) and gt.passes(t.gold, t.spec.heldout)
        assert gt.ExecutionFilter().check(t.source, t.target).passed
        assert any(a != b for a, b in t.spec.given + t.spec.heldout)
        keys.add((t.target, t.spec))
    assert len(keys) == len(ts)


def test_generation_budget_error():
    cfg = gt.TaskGenConfig(program=ProgramConfig(), max_rejections=1, grid=GridConfig(wall_density=0.9))
    with pytest.raises(gt.GenerationError, match="rejection budget"):
        gt.generate_tasks(50, cfg, seed=0)


def test_tasks_jsonl_roundtrip(tmp_path):
    ts = gt.generate_tasks(15, seed=4)
    gt.write_tasks(tmp_path / "t.jsonl", ts)
    assert gt.read_tasks(tmp_path / "t.jsonl") == ts
    (tmp_path / "bad.jsonl").write_text('{"given": []}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        gt.read_tasks(tmp_path / "bad.jsonl")


# -- top-1 --------------------------------------------------------------------------


class Memorizer:
    def __init__(self, table):
        self.table = table

    def sample(self, source, rng):
        return self.table[source]


class Guess:
    """Samples uniformly from a fixed list of candidate programs."""

    def __init__(self, options):
        self.options = options

    def sample(self, source, rng):
        return rng.choice(self.options)


def test_top1_memorizer_is_one():
    ts = gt.generate_tasks(20, seed=5)
    m = Memorizer({t.source: t.target for t in ts})
    assert gt.top1_generalization(m, ts, L=10, seed=0) == 1.0


def test_top1_matches_brute_force():
    ts = gt.generate_tasks(30, seed=6)
    options = [t.target for t in ts[:10]] + [("move",), ("turnLeft",), ("pickMarker",)]
    model = Guess(options)
    L, seed = 4, 9
    hits = 0
    for i, t in enumerate(ts):
        rng = substream(seed, "predict", i)
        draws = [model.sample(t.source, rng)]
        while not gt.passes(parse(draws[-1]), t.spec.given) and len(draws) < L:
            draws.append(model.sample(t.source, rng))
        out = draws[-1] if gt.passes(parse(draws[-1]), t.spec.given) else draws[0]
        hits += gt.passes(parse(out), t.spec.given) and gt.passes(parse(out), t.spec.heldout)
    assert gt.top1_generalization(model, ts, L, seed) == hits / len(ts)
    assert gt.top1_generalization(model, [], L, seed) == 0.0
