"""Domain-agnostic iterative target augmentation.

The loop alternates two steps.  Augmentation samples up to ``C`` candidates per
source from the current model and keeps the first ``K`` distinct ones the
external filter accepts (padding with the gold target when fewer are found).
Training re-fits the model on the augmented set.  Rejection sampling from the
model restricted to filter-passing outputs plays the role of the E-step; the
re-fit is the M-step.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Hashable, Protocol, Sequence

from .seeding import substream

log = logging.getLogger(__name__)

ORIGINS = ("gold", "augmented", "padded")


@dataclass(frozen=True)
class Pair:
    source: Any
    target: tuple
    origin: str = "gold"

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise ValueError(f"bad origin {self.origin!r}")


@dataclass
class Dataset:
    pairs: list[Pair]
    unlabeled_sources: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def sources(self) -> list:
        return [p.source for p in self.pairs]


@dataclass(frozen=True)
class FilterVerdict:
    checks: dict[str, bool]
    values: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


class TargetFilter(Protocol):
    def check(self, source: Any, target: Sequence) -> FilterVerdict: ...


class Generator(Protocol):
    def sample(self, source: Any, rng) -> tuple: ...


class AcceptAll:
    """Stand-in filter for the no-filter ablation."""

    def check(self, source, target) -> FilterVerdict:
        return FilterVerdict({"accept_all": True})


@dataclass(frozen=True)
class AugmentConfig:
    K: int = 4
    C: int = 200
    L: int = 10
    Z: int = 20
    n1: int = 5
    n2: int = 10
    dedupe: bool = True
    pad_with_gold: bool = True
    keep_targets_across_epochs: bool = False
    keep_gold_after_bootstrap: bool = True
    conditional: bool = True
    shard_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 1 <= self.K <= self.C:
            raise ValueError(f"need 1 <= K <= C, got K={self.K}, C={self.C}")
        if self.L < 1 or self.Z < 1:
            raise ValueError("L and Z must be >= 1")
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("n1 and n2 must be >= 0")
        if not 0 < self.shard_fraction <= 1:
            raise ValueError("shard_fraction must be in (0, 1]")


@dataclass
class EpochStats:
    epoch: int
    phase: str
    candidates_sampled: int = 0
    candidates_passed: int = 0
    candidates_accepted: int = 0
    pads_added: int = 0
    pass_rate: float = 0.0
    train_size: int = 0
    train_log_likelihood: float = 0.0
    cumulative_unique: int = 0
    cold_start: bool = False

    def as_record(self) -> dict:
        return asdict(self)


# -- augmentation ----------------------------------------------------------------


def _safe_sample(model, source, rng):
    try:
        return tuple(model.sample(source, rng))
    except Exception:  # generator failure is a rejected candidate, never an abort
        return None


def _check(filt, index, source, target) -> bool:
    try:
        return filt.check(source, target).passed
    except Exception as exc:
        raise RuntimeError(f"filter raised on input {index}: {exc!r}") from exc


def _augment_one(model, filt, cfg: AugmentConfig, seed: int, epoch: int, index: int, source, gold, exclude):
    rng = substream(seed, "augment", epoch, index)
    seen = set(exclude)
    if gold is not None:
        seen.add(gold)
    accepted: list[tuple] = []
    sampled = passed = 0
    for _ in range(cfg.C):
        y = _safe_sample(model, source, rng)
        sampled += 1
        if y is None:
            continue
        if cfg.dedupe and y in seen:
            # a duplicate can never be added, so the filter verdict is irrelevant
            continue
        if not _check(filt, index, source, y):
            continue
        passed += 1
        accepted.append(y)
        seen.add(y)
        if len(accepted) == cfg.K:
            break
    return accepted, sampled, passed


def _run_jobs(fn: Callable, jobs: list, workers: int, common: tuple) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*common, *job) for job in jobs]
    chunk = math.ceil(len(jobs) / workers)
    chunks = [jobs[i:i + chunk] for i in range(0, len(jobs), chunk)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_chunk, [fn] * len(chunks), [common] * len(chunks), chunks))
    return [r for part in parts for r in part]


def _run_chunk(fn, common, jobs):
    return [fn(*common, *job) for job in jobs]


def augment_dataset(
    base: Dataset,
    model: Generator,
    filt: TargetFilter,
    cfg: AugmentConfig,
    seed: int,
    epoch: int = 0,
    workers: int = 1,
    exclude: dict[int, set] | None = None,
) -> tuple[Dataset, EpochStats]:
    """One augmentation pass over ``base``.

    Conditional mode returns, per labeled source, the gold pair followed by up to
    ``K`` accepted candidates and (with ``pad_with_gold``) enough gold copies to
    total ``K + 1`` pairs.  Unlabeled sources contribute accepted candidates only.
    ``exclude`` maps job index to targets that count as already present.
    """
    if not cfg.conditional:
        return _augment_unconditional(base, model, filt, cfg, seed, epoch, workers)
    exclude = exclude or {}
    jobs = [(i, p.source, tuple(p.target), frozenset(exclude.get(i, ()))) for i, p in enumerate(base.pairs)]
    off = len(jobs)
    jobs += [(off + j, x, None, frozenset(exclude.get(off + j, ()))) for j, x in enumerate(base.unlabeled_sources)]
    results = _run_jobs(_augment_one, jobs, workers, (model, filt, cfg, seed, epoch))

    pairs: list[Pair] = []
    st = EpochStats(epoch=epoch, phase="augment")
    for (i, source, gold, _), (accepted, sampled, passed) in zip(jobs, results):
        st.candidates_sampled += sampled
        st.candidates_passed += passed
        st.candidates_accepted += len(accepted)
        if gold is not None:
            pairs.append(base.pairs[i])
        pairs.extend(Pair(source, y, "augmented") for y in accepted)
        if gold is not None and cfg.pad_with_gold:
            n_pad = cfg.K - len(accepted)
            pairs.extend(Pair(source, gold, "padded") for _ in range(n_pad))
            st.pads_added += n_pad
    st.pass_rate = st.candidates_accepted / st.candidates_sampled if st.candidates_sampled else 0.0
    st.train_size = len(pairs)
    return Dataset(pairs, []), st


def _sample_round(model, filt, seed: int, epoch: int, r: int, n: int):
    rng = substream(seed, "augment", epoch, "round", r)
    out = []
    for k in range(n):
        y = _safe_sample(model, None, rng)
        ok = y is not None and _check(filt, k, None, y)
        out.append((y, ok))
    return out


def _augment_unconditional(base, model, filt, cfg, seed, epoch, workers):
    n = max(1, len(base.pairs))
    target_accepts = cfg.K * n
    keep = list(base.pairs) if cfg.keep_gold_after_bootstrap else []
    seen = {tuple(p.target) for p in keep}
    accepted: list[Pair] = []
    st = EpochStats(epoch=epoch, phase="augment")
    r = 0
    batch = max(1, workers)
    while r < cfg.C and len(accepted) < target_accepts:
        rounds = list(range(r, min(cfg.C, r + batch)))
        results = _run_jobs(_sample_round, [(k, n) for k in rounds], workers, (model, filt, seed, epoch))
        for res in results:
            for y, ok in res:
                if len(accepted) >= target_accepts:
                    break
                st.candidates_sampled += 1
                if not ok:
                    continue
                st.candidates_passed += 1
                if cfg.dedupe and y in seen:
                    continue
                seen.add(y)
                accepted.append(Pair(None, y, "augmented"))
            if len(accepted) >= target_accepts:
                break
        r = rounds[-1] + 1
    st.candidates_accepted = len(accepted)
    st.pass_rate = st.candidates_accepted / st.candidates_sampled if st.candidates_sampled else 0.0
    pairs = keep + accepted
    if not pairs:
        log.warning("epoch %d: unconditional augmentation produced no data; keeping gold", epoch)
        pairs = list(base.pairs)
    st.train_size = len(pairs)
    return Dataset(pairs, []), st


# -- training schedules ---------------------------------------------------------------


def _mean_loglik(model, pairs: Sequence[Pair]) -> float:
    if not pairs or not hasattr(model, "log_prob"):
        return 0.0
    total = 0.0
    for p in pairs:
        total += model.log_prob(p.source, p.target, capped=True)
    return total / len(pairs)


def _shard(data: Dataset, fraction: float, seed: int, epoch: int) -> Dataset:
    if fraction >= 1.0:
        return data
    rng = substream(seed, "shard", epoch)
    n = max(1, int(round(len(data.pairs) * fraction)))
    idx = sorted(rng.sample(range(len(data.pairs)), n))
    return Dataset([data.pairs[i] for i in idx], data.unlabeled_sources)


def train(
    model,
    data: Dataset,
    filt: TargetFilter,
    cfg: AugmentConfig,
    seed: int,
    workers: int = 1,
    on_epoch: Callable[[EpochStats], None] | None = None,
):
    """Bootstrap for ``n1`` epochs on gold data, then ``n2`` augment-and-refit epochs.

    ``model`` must provide ``refit(pairs) -> model`` and ``sample(source, rng)``.
    Returns ``(model, stats)``.
    """
    if not data.pairs:
        raise ValueError("train needs a non-empty dataset")
    stats: list[EpochStats] = []
    gold = [(p.source, p.target) for p in data.pairs]

    def emit(st: EpochStats) -> None:
        stats.append(st)
        if on_epoch is not None:
            on_epoch(st)

    for e in range(cfg.n1):
        model = model.refit(gold)
        emit(EpochStats(epoch=e, phase="bootstrap", train_size=len(gold),
                        train_log_likelihood=_mean_loglik(model, data.pairs)))
    cold = cfg.n1 == 0
    if cold and cfg.n2 == 0:
        model = model.refit(gold)

    n_sources = len(data.pairs) + len(data.unlabeled_sources)
    unique: dict[int, set] = {}
    kept: list[Pair] = []
    for t in range(cfg.n2):
        epoch = cfg.n1 + t
        base = _shard(data, cfg.shard_fraction, seed, epoch)
        exclude = None
        if cfg.keep_targets_across_epochs and cfg.conditional:
            exclude = {i: unique.get(i, set()) for i in range(n_sources)}
        aug, st = augment_dataset(base, model, filt, cfg, seed, epoch=epoch, workers=workers, exclude=exclude)
        st.cold_start = cold
        new = [p for p in aug.pairs if p.origin == "augmented"]
        train_pairs = aug.pairs
        if cfg.keep_targets_across_epochs:
            train_pairs = aug.pairs + kept
            kept = kept + new
        _record_unique(unique, base, aug, cfg.conditional)
        st.cumulative_unique = sum(len(v) for v in unique.values())
        model = model.refit([(p.source, p.target) for p in train_pairs])
        st.train_size = len(train_pairs)
        st.train_log_likelihood = _mean_loglik(model, train_pairs)
        emit(st)
    return model, stats


def _record_unique(unique: dict[int, set], base: Dataset, aug: Dataset, conditional: bool) -> None:
    if not conditional:
        bucket = unique.setdefault(0, set())
        bucket.update(p.target for p in aug.pairs if p.origin == "augmented")
        return
    index = {}
    for i, p in enumerate(base.pairs):
        index.setdefault(p.source, i)
    off = len(base.pairs)
    for j, x in enumerate(base.unlabeled_sources):
        index.setdefault(x, off + j)
    for p in aug.pairs:
        if p.origin == "augmented":
            unique.setdefault(index[p.source], set()).add(p.target)


def ideal_k(stats: Sequence[EpochStats], n_sources: int) -> int:
    """Average distinct accepted targets per source over a reference run, rounded."""
    aug = [s for s in stats if s.phase == "augment"]
    if not aug or n_sources == 0:
        return 1
    return max(1, int(round(aug[-1].cumulative_unique / n_sources)))


def train_ideal(
    model,
    data: Dataset,
    filt: TargetFilter,
    k_prime: int,
    c_big: int = 2000,
    seed: int = 0,
    workers: int = 1,
    base_cfg: AugmentConfig | None = None,
):
    """Direct-projection baseline: bootstrap, one large augmentation pass, one final fit."""
    base_cfg = base_cfg or AugmentConfig()
    gold = [(p.source, p.target) for p in data.pairs]
    model = model.refit(gold)
    cfg = replace(base_cfg, K=k_prime, C=max(c_big, k_prime), dedupe=True, pad_with_gold=True,
                  keep_targets_across_epochs=False)
    aug, st = augment_dataset(data, model, filt, cfg, seed, epoch=0, workers=workers)
    model = model.refit([(p.source, p.target) for p in aug.pairs])
    st.phase = "ideal"
    st.train_log_likelihood = _mean_loglik(model, aug.pairs)
    return model, [st]


# -- prediction -------------------------------------------------------------------------


def predict(source, model: Generator, filt: TargetFilter | None, Z: int, L: int, rng) -> list[tuple]:
    """Z outputs; each is the first of up to L samples passing ``filt``, else the first sample."""
    if Z < 1 or L < 1:
        raise ValueError("Z and L must be >= 1")
    outs = []
    for _ in range(Z):
        first = None
        chosen = None
        for j in range(L):
            y = tuple(model.sample(source, rng))
            if j == 0:
                first = y
            if L == 1 or filt is None:
                chosen = y
                break
            if filt.check(source, y).passed:
                chosen = y
                break
        outs.append(first if chosen is None else chosen)
    return outs


def _predict_job(model, filt, Z, L, seed, index, source):
    return predict(source, model, filt, Z, L, substream(seed, "predict", index))


def predict_all(sources: Sequence, model, filt, Z: int, L: int, seed: int, workers: int = 1) -> list[list[tuple]]:
    jobs = [(i, x) for i, x in enumerate(sources)]
    return _run_jobs(_predict_job, jobs, workers, (model, filt, Z, L, seed))
