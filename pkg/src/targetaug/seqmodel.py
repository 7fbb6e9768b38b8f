"""Count-based conditional sequence model with additive smoothing.

The model is an interpolated n-gram over target tokens, keyed additionally by a
small discrete context code computed from the source.  Fitting is an exact
re-count of sufficient statistics, so "training for an epoch" on a dataset is a
deterministic closed-form M-step.

Next-token distribution for context ``c`` and history ``h``::

    P(y | c, h) = sum_j w_j * (n(c, h_j, y) + kappa) / (n(c, h_j) + kappa * |V|)

where ``h_j`` is the length ``order-1-j`` suffix of ``h`` and ``V`` is the
alphabet plus EOS.  A component whose context was never observed contributes
the uniform distribution.

With ``shared_weight = s > 0`` the same mixture is also computed from pooled
tables that ignore the source context, and the two are blended as
``(1 - s) * P(y | c, h) + s * P(y | h)``.  Rare contexts then borrow the shape of
the whole corpus while still sharpening as their own counts grow.
"""

from __future__ import annotations

import importlib
import json
import math
import random
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
FORMAT_TAG = "targetaug-seqmodel"
FORMAT_VERSION = 1
# context key of the pooled, context-free count tables
SHARED = "*"

# name -> (module, attribute); resolved lazily so model files can name domain featurizers
_FEATURIZER_PATHS: dict[str, tuple[str, str]] = {
    "const": ("targetaug.seqmodel", "const_featurizer"),
    "toymol": ("targetaug.toymol", "featurize"),
    "gridlang": ("targetaug.gridlang.tasks", "featurize"),
}
_FEATURIZERS: dict[str, Callable[[Any], Hashable]] = {}


def const_featurizer(source: Any) -> int:
    """Unconditional mode: every source maps to the same context."""
    return 0


def register_featurizer(name: str, fn: Callable[[Any], Hashable]) -> None:
    _FEATURIZERS[name] = fn


def get_featurizer(name: str) -> Callable[[Any], Hashable]:
    if name not in _FEATURIZERS:
        if name not in _FEATURIZER_PATHS:
            raise KeyError(f"unknown featurizer {name!r}")
        mod, attr = _FEATURIZER_PATHS[name]
        _FEATURIZERS[name] = getattr(importlib.import_module(mod), attr)
    return _FEATURIZERS[name]


class Sample(tuple):
    """A sampled token sequence; ``terminated`` is False when max_len cut it off."""

    terminated: bool = True


def _freeze(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(_freeze(o) for o in obj)
    return obj


def default_weights(order: int) -> tuple[float, ...]:
    # highest order gets most mass; halves at each lower order
    raw = [2.0 ** -j for j in range(order)]
    total = sum(raw)
    return tuple(r / total for r in raw)


@dataclass
class SeqModel:
    alphabet: tuple[str, ...]
    order: int = 2
    kappa: float = 0.1
    weights: tuple[float, ...] | None = None
    max_len: int = 40
    featurizer: str = "const"
    shared_weight: float = 0.0
    counts: dict[tuple[Hashable, tuple[str, ...]], list[int]] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _ctx_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.alphabet = tuple(self.alphabet)
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if BOS in self.alphabet or EOS in self.alphabet:
            raise ValueError("alphabet may not contain BOS/EOS markers")
        if self.weights is None:
            self.weights = default_weights(self.order)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != self.order:
            raise ValueError(f"need {self.order} interpolation weights, got {len(self.weights)}")
        if any(w < 0 for w in self.weights) or not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise ValueError("interpolation weights must be non-negative and sum to 1")
        if not 0.0 <= self.shared_weight < 1.0:
            raise ValueError("shared_weight must lie in [0, 1)")
        self.vocab = self.alphabet + (EOS,)
        self._index = {t: i for i, t in enumerate(self.vocab)}

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_cache"] = {}
        state["_ctx_cache"] = {}
        return state

    # -- fitting -------------------------------------------------------------

    def refit(self, pairs: Iterable[tuple[Any, Sequence[str]]]) -> "SeqModel":
        """Return a new model with identical hyperparameters fitted on ``pairs``.

        ``pairs`` yields ``(source, target_tokens)``; duplicates count multiply.
        """
        fresh = replace(self, counts={})
        featurize = get_featurizer(self.featurizer)
        m = self.order
        V = len(self.vocab)
        counts = fresh.counts
        for idx, (source, target) in enumerate(pairs):
            ctx = featurize(source)
            ctxs = (ctx, SHARED) if self.shared_weight > 0 else (ctx,)
            padded = (BOS,) * (m - 1) + tuple(target)
            for pos in range(m - 1, len(padded) + 1):
                tok = padded[pos] if pos < len(padded) else EOS
                k = self._index.get(tok)
                if k is None or tok == EOS and pos < len(padded):
                    raise ValueError(f"pair {idx}: token {tok!r} not in alphabet")
                hist = padded[pos - m + 1:pos] if m > 1 else ()
                for c in ctxs:
                    for j in range(m):
                        key = (c, hist[j:])
                        row = counts.get(key)
                        if row is None:
                            row = counts[key] = [0] * V
                        row[k] += 1
        return fresh

    # -- distributions -------------------------------------------------------

    def context(self, source: Any) -> Hashable:
        try:
            return self._ctx_cache[source]
        except (KeyError, TypeError):
            pass
        ctx = get_featurizer(self.featurizer)(source)
        try:
            self._ctx_cache[source] = ctx
        except TypeError:
            pass
        return ctx

    def next_dist(self, ctx: Hashable, hist: tuple[str, ...]) -> list[float]:
        """Smoothed next-token probabilities over ``vocab`` (alphabet + EOS)."""
        m = self.order
        hist = tuple(hist[-(m - 1):]) if m > 1 else ()
        if len(hist) < m - 1:
            hist = (BOS,) * (m - 1 - len(hist)) + hist
        if self.shared_weight == 0.0:
            return self._mixture(ctx, hist)
        own = self._mixture(ctx, hist)
        pooled = self._mixture(SHARED, hist)
        s = self.shared_weight
        return [(1.0 - s) * a + s * b for a, b in zip(own, pooled)]

    def _mixture(self, ctx: Hashable, hist: tuple[str, ...]) -> list[float]:
        V = len(self.vocab)
        probs = [0.0] * V
        for j, w in enumerate(self.weights):
            if w == 0.0:
                continue
            row = self.counts.get((ctx, hist[j:]))
            total = sum(row) if row is not None else 0
            if total == 0:
                u = w / V
                for k in range(V):
                    probs[k] += u
                continue
            denom = total + self.kappa * V
            for k in range(V):
                probs[k] += w * (row[k] + self.kappa) / denom
        return probs

    def _cached(self, ctx: Hashable, hist: tuple[str, ...]) -> tuple[list[float], list[float]]:
        key = (ctx, hist)
        hit = self._cache.get(key)
        if hit is None:
            probs = self.next_dist(ctx, hist)
            acc = 0.0
            cum = []
            for p in probs:
                acc += p
                cum.append(acc)
            hit = self._cache[key] = (probs, cum)
        return hit

    def sample(self, source: Any, rng: random.Random, max_len: int | None = None) -> Sample:
        """Ancestral sample; stops at EOS or after ``max_len`` tokens."""
        limit = self.max_len if max_len is None else max_len
        ctx = self.context(source)
        m = self.order
        hist = (BOS,) * (m - 1)
        out: list[str] = []
        vocab = self.vocab
        eos = len(vocab) - 1
        for _ in range(limit):
            cum = self._cached(ctx, hist)[1]
            k = bisect_right(cum, rng.random() * cum[-1])
            if k > eos:
                k = eos
            if k == eos:
                return Sample(out)
            tok = vocab[k]
            out.append(tok)
            if m > 1:
                hist = hist[1:] + (tok,)
        s = Sample(out)
        s.terminated = False
        return s

    def log_prob(self, source: Any, target: Sequence[str], capped: bool = False) -> float:
        """log P(target | source), including the EOS step.

        With ``capped=True`` a target of exactly ``max_len`` tokens is scored as
        the sampler's truncated output (no EOS term), so that probabilities of all
        possible ``sample`` results sum to one.
        """
        target = tuple(target)
        if len(target) > self.max_len:
            raise ValueError(f"target longer than max_len={self.max_len}")
        for t in target:
            if t not in self._index or t == EOS:
                raise ValueError(f"token {t!r} not in alphabet")
        ctx = self.context(source)
        m = self.order
        hist = (BOS,) * (m - 1)
        lp = 0.0
        steps = list(target)
        if not (capped and len(target) == self.max_len):
            steps.append(EOS)
        for tok in steps:
            p = self._cached(ctx, hist)[0][self._index[tok]]
            if p <= 0.0:
                return -math.inf
            lp += math.log(p)
            if m > 1:
                hist = hist[1:] + (tok,)
        return lp

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the versioned JSON-lines model file (header, then sorted count records)."""
        header = {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "alphabet": list(self.alphabet),
            "order": self.order,
            "kappa": self.kappa,
            "weights": list(self.weights),
            "max_len": self.max_len,
            "featurizer": self.featurizer,
            "shared_weight": self.shared_weight,
        }
        records = sorted(
            (json.dumps([ctx, list(hist), row], separators=(",", ":")) for (ctx, hist), row in self.counts.items())
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in records:
                fh.write(rec + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SeqModel":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != FORMAT_TAG:
                raise ValueError(f"{path}: not a {FORMAT_TAG} file")
            if header.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported model version {header.get('version')}")
            counts = {}
            for line in fh:
                if line.strip():
                    ctx, hist, row = json.loads(line)
                    counts[(_freeze(ctx), tuple(hist))] = list(row)
        return cls(
            alphabet=tuple(header["alphabet"]),
            order=header["order"],
            kappa=header["kappa"],
            weights=tuple(header["weights"]),
            max_len=header["max_len"],
            featurizer=header["featurizer"],
            shared_weight=header.get("shared_weight", 0.0),
            counts=counts,
        )


def fit(
    pairs: Iterable[tuple[Any, Sequence[str]]],
    alphabet: Sequence[str],
    order: int = 2,
    kappa: float = 0.1,
    weights: Sequence[float] | None = None,
    max_len: int = 40,
    featurizer: str = "const",
    shared_weight: float = 0.0,
) -> SeqModel:
    proto = SeqModel(tuple(alphabet), order, kappa, None if weights is None else tuple(weights), max_len,
                     featurizer, shared_weight)
    return proto.refit(pairs)
