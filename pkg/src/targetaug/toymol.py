"""Synthetic molecule-analog domain.

Molecules are strings over ``A B C ( )``.  A string is valid when its
parentheses balance, nesting stays within ``DMAX`` and it carries at least one
letter.  The ground-truth property ``f0`` is the depth-weighted share of ``A``
letters; a ridge-regression proxy fitted on fingerprint features stands in for
a learned property predictor.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, FilterVerdict, Pair
from .seeding import derive_seed, substream

ALPHABET = ("A", "B", "C", "(", ")")
LETTERS = ("A", "B", "C")
DMAX = 4
LMAX = 40

_FIRST = ("^",) + ALPHABET
_SECOND = ALPHABET + ("$",)
BIGRAMS = tuple(a + b for a in _FIRST for b in _SECOND if not (a == "^" and b == "$"))
_BIGRAM_INDEX = {b: i for i, b in enumerate(BIGRAMS)}


def as_str(s: str | Sequence[str]) -> str:
    return s if isinstance(s, str) else "".join(s)


@lru_cache(maxsize=1 << 18)
def _valid(s: str, dmax: int, lmax: int) -> bool:
    if not 1 <= len(s) <= lmax:
        return False
    depth = 0
    letters = 0
    for ch in s:
        if ch == "(":
            depth += 1
            if depth > dmax:
                return False
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return False
        elif ch in LETTERS:
            letters += 1
        else:
            return False
    return depth == 0 and letters > 0


def is_valid(s: str | Sequence[str], dmax: int = DMAX, lmax: int = LMAX) -> bool:
    return _valid(as_str(s), dmax, lmax)


@lru_cache(maxsize=1 << 18)
def _fingerprint(s: str) -> frozenset[str]:
    return frozenset(["^" + s[0], s[-1] + "$"] + [s[i:i + 2] for i in range(len(s) - 1)])


def fingerprint(s: str | Sequence[str]) -> frozenset[str]:
    """Boundary-padded character bigrams, e.g. ``"AB" -> {^A, AB, B$}``."""
    s = as_str(s)
    if not s:
        raise ValueError("fingerprint of empty string")
    return _fingerprint(s)


def jaccard(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def tanimoto(a: str | Sequence[str], b: str | Sequence[str]) -> float:
    a, b = as_str(a), as_str(b)
    if not (_valid(a, DMAX, LMAX) and _valid(b, DMAX, LMAX)):
        raise ValueError(f"tanimoto needs valid molecules, got {a!r}, {b!r}")
    return jaccard(_fingerprint(a), _fingerprint(b))


@lru_cache(maxsize=1 << 18)
def _f0(s: str) -> float:
    depth = 0
    num = 0
    den = 0
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        else:
            w = 1 + depth
            den += w
            if ch == "A":
                num += w
    return num / den if den else 0.0


def f0(s: str | Sequence[str]) -> float:
    """Ground-truth property: depth-weighted fraction of ``A`` among letters."""
    s = as_str(s)
    if not _valid(s, DMAX, LMAX):
        raise ValueError(f"f0 of invalid molecule {s!r}")
    return _f0(s)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    alpha: float
    beta: float
    delta: float

    def __post_init__(self) -> None:
        if not (0 <= self.alpha < self.beta <= 1):
            raise ValueError("need 0 <= alpha < beta <= 1")
        if not (0 < self.delta <= 1):
            raise ValueError("need 0 < delta <= 1")


TASKS = {
    "qed": TaskSpec("qed", alpha=0.8, beta=0.9, delta=0.4),
    "drd2": TaskSpec("drd2", alpha=0.05, beta=0.5, delta=0.4),
}


# -- property predictors -------------------------------------------------------


def features(s: str) -> np.ndarray:
    """Fingerprint indicators, per-letter bigram frequencies, length, bias."""
    n_b = len(BIGRAMS)
    x = np.zeros(2 * n_b + 2)
    grams = ["^" + s[0]] + [s[i:i + 2] for i in range(len(s) - 1)] + [s[-1] + "$"]
    for g in grams:
        k = _BIGRAM_INDEX[g]
        x[k] = 1.0
        x[n_b + k] += 1.0 / len(grams)
    x[2 * n_b] = len(s) / LMAX
    x[2 * n_b + 1] = 1.0
    return x


N_FEATURES = 2 * len(BIGRAMS) + 2


class GroundTruth:
    """F0 wrapped in the predictor interface (RMSE 0 by definition)."""

    rmse = 0.0
    name = "oracle"

    def __call__(self, s: str) -> float:
        return _f0(s)


@dataclass
class ProxyPredictor:
    weights: np.ndarray
    ridge: float
    rmse: float
    name: str = "proxy"
    feature_mask: np.ndarray | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, s: str) -> float:
        v = self._memo.get(s)
        if v is None:
            x = features(s)
            if self.feature_mask is not None:
                x = x * self.feature_mask
            v = min(1.0, max(0.0, float(x @ self.weights)))
            self._memo[s] = v
        return v

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_memo"] = {}
        return state

    def to_record(self) -> dict:
        return {
            "format": "targetaug-proxy",
            "version": 1,
            "name": self.name,
            "ridge": self.ridge,
            "rmse": self.rmse,
            "weights": [float(w) for w in self.weights],
            "feature_mask": None if self.feature_mask is None else [float(m) for m in self.feature_mask],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ProxyPredictor":
        if rec.get("format") != "targetaug-proxy" or rec.get("version") != 1:
            raise ValueError("not a version-1 proxy record")
        mask = rec.get("feature_mask")
        return cls(
            weights=np.asarray(rec["weights"], dtype=float),
            ridge=rec["ridge"],
            rmse=rec["rmse"],
            name=rec.get("name", "proxy"),
            feature_mask=None if mask is None else np.asarray(mask, dtype=float),
        )


def _split(n: int, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(derive_seed(seed, "proxy-split")).permutation(n)
    n_hold = max(1, int(round(n * holdout)))
    return perm[n_hold:], perm[:n_hold]


def _ridge(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    A = X.T @ X + lam * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ y)


def fit_proxy(
    molecules: Sequence[tuple[str, float]],
    ridge: float = 1e-3,
    seed: int = 0,
    holdout: float = 0.2,
    label_noise: float = 0.0,
    subsample: float = 1.0,
    drop_features: float = 0.0,
    name: str = "proxy",
) -> ProxyPredictor:
    """Ridge regression of labels on fingerprint features.

    The degradation knobs corrupt only the training side; the reported RMSE is
    always measured against clean labels on the held-out split.
    """
    uniq = dict(molecules)
    if len(uniq) < 2:
        raise ValueError("fit_proxy needs at least 2 distinct molecules")
    items = sorted(uniq.items())
    X = np.stack([features(s) for s, _ in items])
    y = np.array([v for _, v in items], dtype=float)
    tr, ho = _split(len(items), holdout, seed)
    rng = np.random.default_rng(derive_seed(seed, "proxy-degrade"))
    if subsample < 1.0:
        keep = max(2, int(round(len(tr) * subsample)))
        tr = np.sort(rng.permutation(tr)[:keep])
    mask = None
    if drop_features > 0.0:
        mask = np.ones(X.shape[1])
        n_drop = int(round((X.shape[1] - 1) * drop_features))
        # the bias column is never dropped
        mask[rng.permutation(X.shape[1] - 1)[:n_drop]] = 0.0
    Xtr = X[tr] if mask is None else X[tr] * mask
    ytr = y[tr]
    if label_noise > 0.0:
        ytr = ytr + label_noise * np.random.default_rng(derive_seed(seed, "proxy-noise")).standard_normal(len(ytr))
    w = _ridge(Xtr, ytr, ridge)
    Xho = X[ho] if mask is None else X[ho] * mask
    pred = np.clip(Xho @ w, 0.0, 1.0)
    rmse = float(np.sqrt(np.mean((pred - y[ho]) ** 2)))
    return ProxyPredictor(weights=w, ridge=ridge, rmse=rmse, name=name, feature_mask=mask)


def degrade_proxy(
    molecules: Sequence[tuple[str, float]],
    knob: str,
    levels: Sequence[float],
    ridge: float = 1e-3,
    seed: int = 0,
) -> list[ProxyPredictor]:
    """One predictor per level of ``knob`` in {label_noise, subsample, drop_features}."""
    if knob not in ("label_noise", "subsample", "drop_features"):
        raise ValueError(f"unknown degradation knob {knob!r}")
    return [
        fit_proxy(molecules, ridge=ridge, seed=seed, name=f"{knob}={lvl:g}", **{knob: lvl})
        for lvl in levels
    ]


def molecule_labels(data: Dataset) -> list[tuple[str, float]]:
    """Every labeled molecule of ``data`` with its F0 value (the predictor's training set)."""
    out = {}
    for p in data.pairs:
        for s in (as_str(p.source), as_str(p.target)):
            out[s] = _f0(s)
    return sorted(out.items())


# -- filter --------------------------------------------------------------------


class MoleculeFilter:
    """validity AND similarity >= delta AND predicted property >= beta.

    With ``conditional=False`` the similarity check is dropped (no source).
    """

    def __init__(self, task: TaskSpec, predictor=None, conditional: bool = True):
        self.task = task
        self.predictor = predictor if predictor is not None else GroundTruth()
        self.conditional = conditional
        self._memo: dict = {}

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_memo"] = {}
        return state

    def check(self, source, target) -> FilterVerdict:
        y = as_str(target)
        x = as_str(source) if self.conditional else None
        key = (x, y)
        v = self._memo.get(key)
        if v is not None:
            return v
        checks: dict[str, bool] = {"valid": _valid(y, DMAX, LMAX)}
        values: dict[str, float] = {}
        if checks["valid"]:
            if self.conditional:
                values["similarity"] = jaccard(_fingerprint(x), _fingerprint(y))
                checks["similarity"] = values["similarity"] >= self.task.delta
            values["property"] = self.predictor(y)
            checks["property"] = values["property"] >= self.task.beta
        v = FilterVerdict(checks, values)
        if len(self._memo) < 1 << 20:
            self._memo[key] = v
        return v


def make_filter(task: TaskSpec, predictor=None, conditional: bool = True) -> MoleculeFilter:
    return MoleculeFilter(task, predictor, conditional)


def similarity(a, b) -> float:
    return jaccard(fingerprint(a), fingerprint(b))


# -- conditioning feature for the sequence model ---------------------------------


def featurize(source) -> tuple[str, int, int, int, int]:
    """(first symbol, #B and #C capped at 3, group count, length) of the source.

    Fine enough that sources sharing a context have similar solutions; the
    model's pooled component covers contexts seen rarely or never.
    """
    s = as_str(source)
    return (s[0], min(s.count("B"), 3), min(s.count("C"), 3), s.count("("), len(s))


# -- dataset synthesis -------------------------------------------------------------


@dataclass
class SynthConfig:
    min_len: int = 4
    max_len: int = 12
    p_a: tuple[float, float] = (0.35, 0.75)
    p_group: float = 0.15
    max_edits: int = 8
    restarts: int = 20
    global_budget: int = 200_000


def random_molecule(rng: random.Random, cfg: SynthConfig) -> str:
    """Random valid string: letters and nested groups, length within cfg bounds."""
    n = rng.randint(cfg.min_len, cfg.max_len)
    pa = rng.uniform(*cfg.p_a)
    other = rng.choice(("B", "C", "BC"))
    while True:
        out: list[str] = []
        depth = 0
        while len(out) + depth < n:
            r = rng.random()
            if r < cfg.p_group and depth < DMAX and len(out) + depth + 3 <= n:
                out.append("(")
                depth += 1
                continue
            if depth > 0 and out[-1] != "(" and rng.random() < 0.3:
                out.append(")")
                depth -= 1
                continue
            out.append("A" if rng.random() < pa else rng.choice(other))
        out.extend(")" * depth)
        s = "".join(out)
        if _valid(s, DMAX, LMAX):
            return s


def _edit(s: str, rng: random.Random) -> str:
    r = rng.random()
    letters = [i for i, ch in enumerate(s) if ch in "BC"]
    if r < 0.5 and letters:
        i = rng.choice(letters)
        return s[:i] + "A" + s[i + 1:]
    if r < 0.7:
        # wrap a run of letters in parentheses
        i = rng.randrange(len(s))
        if s[i] in LETTERS:
            j = i
            while j + 1 < len(s) and s[j + 1] in LETTERS and rng.random() < 0.5:
                j += 1
            return s[:i] + "(" + s[i:j + 1] + ")" + s[j + 1:]
        return s
    if r < 0.85:
        i = rng.randrange(len(s) + 1)
        return s[:i] + "A" + s[i:]
    if letters:
        i = rng.choice(letters)
        return s[:i] + s[i + 1:]
    return s


def synthesize_target(x: str, task: TaskSpec, rng: random.Random, cfg: SynthConfig) -> str | None:
    fx = _fingerprint(x)
    for _ in range(cfg.restarts):
        y = x
        for _ in range(cfg.max_edits):
            y = _edit(y, rng)
            if not _valid(y, DMAX, LMAX):
                break
            if jaccard(fx, _fingerprint(y)) < task.delta:
                break
            if _f0(y) >= task.beta and y != x:
                return y
    return None


def synthesize_dataset(
    task: TaskSpec,
    n_pairs: int,
    n_unlabeled: int,
    seed: int,
    cfg: SynthConfig | None = None,
) -> Dataset:
    """Gold pairs with f0(x) <= alpha < beta <= f0(y), sim >= delta; plus unlabeled sources."""
    cfg = cfg or SynthConfig()
    rng = substream(seed, "toymol-pairs")
    pairs: list[Pair] = []
    tries = 0
    while len(pairs) < n_pairs:
        tries += 1
        if tries > cfg.global_budget:
            raise RuntimeError(f"pair synthesis budget exhausted: {len(pairs)}/{n_pairs} pairs after {tries} sources")
        x = random_molecule(rng, cfg)
        if _f0(x) > task.alpha:
            continue
        y = synthesize_target(x, task, rng, cfg)
        if y is None:
            continue
        pairs.append(Pair(tuple(x), tuple(y), "gold"))
    rng = substream(seed, "toymol-unlabeled")
    unlabeled: list[tuple[str, ...]] = []
    tries = 0
    while len(unlabeled) < n_unlabeled:
        tries += 1
        if tries > cfg.global_budget:
            raise RuntimeError(f"unlabeled synthesis budget exhausted: {len(unlabeled)}/{n_unlabeled}")
        x = random_molecule(rng, cfg)
        if _f0(x) <= task.alpha:
            unlabeled.append(tuple(x))
    return Dataset(pairs, unlabeled)


# -- JSONL I/O -----------------------------------------------------------------------


def write_pairs(path: str | Path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in data.pairs:
            fh.write(json.dumps({"x": as_str(p.source), "y": as_str(p.target)}) + "\n")


def write_unlabeled(path: str | Path, sources: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x in sources:
            fh.write(json.dumps({"x": as_str(x)}) + "\n")


def read_pairs(path: str | Path) -> list[Pair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(Pair(tuple(rec["x"]), tuple(rec["y"]), "gold"))
    return out


def read_unlabeled(path: str | Path) -> list[tuple[str, ...]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(tuple(json.loads(line)["x"]))
    return out
