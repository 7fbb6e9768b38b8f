"""Evaluation metrics: success, diversity, uniqueness."""

from __future__ import annotations

import logging
from itertools import combinations
from typing import Any, Callable, Sequence

from .core import predict
from .seeding import substream

log = logging.getLogger(__name__)


def success_rate(sources: Sequence[Any], predictions: Sequence[Sequence], truth) -> float:
    """Fraction of sources for which any prediction passes the ground-truth filter."""
    if not sources:
        return 0.0
    hits = 0
    for i, (x, outs) in enumerate(zip(sources, predictions)):
        if not outs:
            log.warning("input %d has no predictions; counted as failure", i)
            continue
        if any(truth.check(x, y).passed for y in outs):
            hits += 1
    return hits / len(sources)


def diversity(
    sources: Sequence[Any],
    predictions: Sequence[Sequence],
    truth,
    similarity: Callable[[Any, Any], float],
) -> float:
    """Mean over sources of the average pairwise distance ``1 - sim`` among passing outputs.

    Sources with one or fewer passing outputs score 0.  Outputs are a multiset:
    repeated passing outputs contribute zero-distance pairs.
    """
    if not sources:
        return 0.0
    total = 0.0
    for x, outs in zip(sources, predictions):
        ok = [y for y in outs if truth.check(x, y).passed]
        if len(ok) < 2:
            continue
        dists = [1.0 - similarity(a, b) for a, b in combinations(ok, 2)]
        total += sum(dists) / len(dists)
    return total / len(sources)


def uniqueness(model, truth, n: int, seed: int, pred_filter=None, L: int = 1, source: Any = None) -> float:
    """Distinct passing samples among ``n`` draws, divided by ``n``.

    Each draw goes through prediction-time filtering with ``pred_filter`` and
    ``L`` attempts (``L=1`` is raw sampling).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, "uniqueness")
    outs = predict(source, model, pred_filter, n, L, rng)
    good = {y for y in outs if truth.check(source, y).passed}
    return len(good) / n
