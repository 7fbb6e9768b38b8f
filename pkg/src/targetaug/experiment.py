"""End-to-end pipelines: dataset files, training per ablation, evaluation, sweeps.

Everything here is a function of the config and its master seed; the worker
count only changes wall time.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from . import toymol as tm
from .config import ExperimentConfig, MetricsReport, ProxyConfig
from .core import AcceptAll, Dataset, EpochStats, Pair, ideal_k, predict, predict_all, train, train_ideal
from .gridlang import tasks as gt
from .gridlang.lang import ProgramConfig, TOKENS
from .gridlang.world import GridConfig
from .metrics import diversity, success_rate
from .seeding import derive_seed, substream
from .seqmodel import SeqModel

log = logging.getLogger(__name__)

# ablations whose evaluation samples once per slot (no prediction-time filter)
UNFILTERED_EVAL = ("baseline", "train_only", "no_filter")
EPOCH_FIELDS = tuple(EpochStats.__dataclass_fields__)


class ConfigError(ValueError):
    """Config and data do not fit together."""


@dataclass
class RunData:
    """Everything a run needs besides the config: training data and test inputs."""

    train: Dataset
    test_sources: list
    test_tasks: list | None = None  # gridlang only
    proxy_labels: list = field(default_factory=list)


# -- data ------------------------------------------------------------------------------


def _task_gen_config(cfg: ExperimentConfig) -> gt.TaskGenConfig:
    return gt.TaskGenConfig(
        n_given=cfg.data.n_given,
        n_heldout=cfg.data.n_heldout,
        grid=GridConfig(**cfg.data.grid),
        program=ProgramConfig(**cfg.data.program),
    )


def _task_spec(cfg: ExperimentConfig) -> tm.TaskSpec:
    if cfg.task not in tm.TASKS:
        raise ConfigError(f"unknown toymol task {cfg.task!r}; choose from {sorted(tm.TASKS)}")
    return tm.TASKS[cfg.task]


def synthesize(cfg: ExperimentConfig) -> dict[str, Any]:
    """In-memory datasets for ``cfg`` (train, unlabeled, test)."""
    if cfg.domain == "toymol":
        task = _task_spec(cfg)
        data = tm.synthesize_dataset(task, cfg.data.n_pairs, cfg.data.n_unlabeled, cfg.seed)
        # test inputs are sources of held-out synthesized pairs, so each has a known solution
        test = tm.synthesize_dataset(task, cfg.data.n_test, 0, derive_seed(cfg.seed, "test"))
        return {"pairs": data.pairs, "unlabeled": data.unlabeled_sources, "test": [p.source for p in test.pairs]}
    gen = _task_gen_config(cfg)
    return {
        "tasks": gt.generate_tasks(cfg.data.n_pairs, gen, cfg.seed),
        "test_tasks": gt.generate_tasks(cfg.data.n_test, gen, derive_seed(cfg.seed, "test")),
    }


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def gen_data(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Write the run's datasets as JSONL plus a manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = synthesize(cfg)
    files: dict[str, Path] = {}
    if cfg.domain == "toymol":
        files["train"] = out / "train.jsonl"
        files["unlabeled"] = out / "unlabeled.jsonl"
        files["test"] = out / "test.jsonl"
        tm.write_pairs(files["train"], Dataset(d["pairs"]))
        tm.write_unlabeled(files["unlabeled"], d["unlabeled"])
        tm.write_unlabeled(files["test"], d["test"])
        counts = {"train": len(d["pairs"]), "unlabeled": len(d["unlabeled"]), "test": len(d["test"])}
    else:
        files["train"] = out / "train.jsonl"
        files["test"] = out / "test.jsonl"
        gt.write_tasks(files["train"], d["tasks"])
        gt.write_tasks(files["test"], d["test_tasks"])
        counts = {
            "train": len(d["tasks"]),
            "test": len(d["test_tasks"]),
            "given_per_task": cfg.data.n_given,
            "heldout_per_task": cfg.data.n_heldout,
        }
    manifest = {
        "domain": cfg.domain,
        "seed": cfg.seed,
        "counts": counts,
        "files": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in files.items()},
        "config": cfg.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_data(cfg: ExperimentConfig) -> RunData:
    """Read the configured data files, or synthesize anything without a path."""
    dc = cfg.data
    if cfg.domain == "gridlang":
        if (dc.labeled_path is None) != (dc.test_path is None):
            raise ConfigError("gridlang needs both labeled_path and test_path, or neither")
        if dc.labeled_path is not None:
            tasks, test_tasks = gt.read_tasks(dc.labeled_path), gt.read_tasks(dc.test_path)
        else:
            d = synthesize(cfg)
            tasks, test_tasks = d["tasks"], d["test_tasks"]
        if not tasks:
            raise ConfigError("gridlang training set is empty")
        pairs = [Pair(t.source, t.target) for t in tasks]
        extra = [t.source for t in test_tasks] if dc.transductive else []
        return RunData(Dataset(pairs, extra), [t.source for t in test_tasks], test_tasks)

    need_synth = dc.labeled_path is None or dc.test_path is None or (dc.unlabeled_path is None and dc.n_unlabeled)
    d = synthesize(cfg) if need_synth else {}
    pairs = tm.read_pairs(dc.labeled_path) if dc.labeled_path else d["pairs"]
    test = tm.read_unlabeled(dc.test_path) if dc.test_path else d["test"]
    unlabeled = tm.read_unlabeled(dc.unlabeled_path) if dc.unlabeled_path else d.get("unlabeled", [])
    if not pairs:
        raise ConfigError("training set is empty")
    for i, p in enumerate(pairs):
        bad = set(p.source + p.target) - set(tm.ALPHABET)
        if bad:
            raise ConfigError(f"training pair {i} uses symbols {sorted(bad)} outside the toymol alphabet")
    labels = tm.molecule_labels(Dataset(pairs))
    if cfg.mode == "unconditional":
        # no inputs: the training data is the set of targets
        return RunData(Dataset([Pair(None, p.target) for p in pairs]), [None], None, labels)
    pool = list(unlabeled)
    if dc.transductive:
        pool += list(test)
    return RunData(Dataset(pairs, pool), list(test), None, labels)


# -- components ------------------------------------------------------------------------


def make_model(cfg: ExperimentConfig) -> SeqModel:
    alphabet = tm.ALPHABET if cfg.domain == "toymol" else TOKENS
    m = cfg.model
    return SeqModel(
        alphabet, order=m.order, kappa=m.kappa, weights=None if m.weights is None else tuple(m.weights),
        max_len=m.max_len, featurizer=cfg.featurizer, shared_weight=m.shared_weight,
    )


def make_predictor(cfg: ExperimentConfig, labels, proxy: ProxyConfig | None = None):
    """F1 for the filter: ground truth on the oracle rung, else ridge on the labeled molecules."""
    pc = proxy or cfg.proxy
    if pc.oracle:
        return tm.GroundTruth()
    return tm.fit_proxy(
        labels, ridge=pc.ridge, seed=derive_seed(cfg.seed, "proxy"), holdout=pc.holdout,
        label_noise=pc.label_noise, subsample=pc.subsample, drop_features=pc.drop_features,
    )


def make_filters(cfg: ExperimentConfig, data: RunData):
    """(training/prediction filter, ground-truth evaluation filter, proxy RMSE)."""
    if cfg.domain == "gridlang":
        f = gt.ExecutionFilter()
        return f, None, None
    task = _task_spec(cfg)
    pred = make_predictor(cfg, data.proxy_labels)
    cond = cfg.mode == "conditional"
    return tm.make_filter(task, pred, cond), tm.make_filter(task, None, cond), pred.rmse


def _schedule(cfg: ExperimentConfig):
    aug = cfg.augment
    ab = cfg.ablation
    if ab in ("baseline", "test_only"):
        aug = replace(aug, n2=0)
    elif ab == "dupe":
        aug = replace(aug, dedupe=False)
    elif ab == "keep_targets":
        aug = replace(aug, keep_targets_across_epochs=True)
    return aug


def eval_L(cfg: ExperimentConfig) -> int:
    # gridlang's top-1 metric always decodes with the given-pair filter, as both paper models share decoding
    if cfg.domain == "gridlang":
        return cfg.eval.L
    return 1 if cfg.ablation in UNFILTERED_EVAL else cfg.eval.L


# -- train / eval ------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: SeqModel
    stats: list[EpochStats]
    proxy_rmse: float | None


def run_train(cfg: ExperimentConfig, data: RunData | None = None, workers: int = 1,
              on_epoch: Callable[[EpochStats], None] | None = None) -> TrainResult:
    data = data or load_data(cfg)
    filt, _, rmse = make_filters(cfg, data)
    proto = make_model(cfg)
    train_filter = AcceptAll() if cfg.ablation == "no_filter" else filt
    if cfg.ablation == "ideal":
        k = cfg.ideal_k
        stats: list[EpochStats] = []
        if k is None:
            _, ref = train(proto, data.train, filt, cfg.augment, cfg.seed, workers)
            k = ideal_k(ref, len(data.train.pairs) + len(data.train.unlabeled_sources))
            log.info("ideal: K'=%d from reference iterative run", k)
        if k < 1:
            model = proto.refit([(p.source, p.target) for p in data.train.pairs])
        else:
            model, stats = train_ideal(proto, data.train, filt, k, cfg.ideal_c, cfg.seed, workers, cfg.augment)
        for st in stats:
            if on_epoch:
                on_epoch(st)
        return TrainResult(model, stats, rmse)
    model, stats = train(proto, data.train, train_filter, _schedule(cfg), cfg.seed, workers, on_epoch)
    _check_stats(cfg, data, stats)
    return TrainResult(model, stats, rmse)


class PropertyViolation(AssertionError):
    """A run broke an invariant the engine promises (maps to CLI exit code 2)."""


def _check_stats(cfg: ExperimentConfig, data: RunData, stats: list[EpochStats]) -> None:
    for st in stats:
        if not 0.0 <= st.pass_rate <= 1.0:
            raise PropertyViolation(f"epoch {st.epoch}: pass rate {st.pass_rate} outside [0, 1]")
        if (st.phase == "augment" and cfg.mode == "conditional" and cfg.augment.pad_with_gold
                and not cfg.augment.keep_targets_across_epochs and cfg.augment.shard_fraction == 1.0):
            aug_unl = st.train_size - (cfg.augment.K + 1) * len(data.train.pairs)
            if aug_unl < 0:
                raise PropertyViolation(f"epoch {st.epoch}: augmented set smaller than (K+1)|D|")


def run_eval(cfg: ExperimentConfig, model, data: RunData | None = None, workers: int = 1) -> dict[str, float]:
    """Final metrics of ``model``; a pure function of (model, test set, config seed)."""
    data = data or load_data(cfg)
    filt, truth, _ = make_filters(cfg, data)
    seed = derive_seed(cfg.seed, "eval")
    L = eval_L(cfg)
    if cfg.domain == "gridlang":
        return {"top1": gt.top1_generalization(model, data.test_tasks, L, seed, workers)}
    if cfg.mode == "unconditional":
        n = cfg.eval.n_uniqueness
        outs = predict(None, model, filt, n, L, substream(seed, "uniqueness"))
        passing = [y for y in outs if truth.check(None, y).passed]
        return {"success": len(passing) / n, "uniqueness": len(set(passing)) / n}
    preds = predict_all(data.test_sources, model, filt, cfg.eval.Z, L, seed, workers)
    return {
        "success": success_rate(data.test_sources, preds, truth),
        "diversity": diversity(data.test_sources, preds, truth, tm.similarity),
    }


def run(cfg: ExperimentConfig, workers: int = 1, out_dir: str | Path | None = None) -> MetricsReport:
    """Train and evaluate; with ``out_dir`` also writes model, per-epoch CSV and the report."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    reports = []
    for r in range(cfg.repeats):
        c = cfg if r == 0 else replace(cfg, seed=derive_seed(cfg.seed, "repeat", r))
        data = load_data(c)
        sink = _EpochCsv(out / _suffixed("epochs.csv", r, cfg.repeats)) if out is not None else None
        try:
            res = run_train(c, data, workers, sink)
        finally:
            if sink is not None:
                sink.close()
        metrics = run_eval(c, res.model, data, workers)
        if out is not None:
            res.model.save(out / _suffixed("model.jsonl", r, cfg.repeats))
        reports.append(MetricsReport(c.to_dict(), c.seed, metrics, [s.as_record() for s in res.stats], res.proxy_rmse))
    report = reports[0] if len(reports) == 1 else _average(cfg, reports)
    if out is not None:
        report.save(out / "report.json")
    return report


def _suffixed(name: str, r: int, repeats: int) -> str:
    if repeats == 1:
        return name
    stem, ext = name.split(".", 1)
    return f"{stem}.r{r}.{ext}"


def _average(cfg: ExperimentConfig, reports: list[MetricsReport]) -> MetricsReport:
    keys = reports[0].metrics.keys()
    mean = {k: sum(r.metrics[k] for r in reports) / len(reports) for k in keys}
    rmses = [r.proxy_rmse for r in reports if r.proxy_rmse is not None]
    return MetricsReport(
        cfg.to_dict(), cfg.seed, mean,
        [{"repeat": i, **e} for i, r in enumerate(reports) for e in r.epochs],
        sum(rmses) / len(rmses) if rmses else None,
    )


class _EpochCsv:
    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.w = csv.DictWriter(self.fh, fieldnames=EPOCH_FIELDS)
        self.w.writeheader()

    def __call__(self, st: EpochStats) -> None:
        self.w.writerow(st.as_record())
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


# -- sweeps -------------------------------------------------------------------------------


def sweep_rungs(cfg: ExperimentConfig, kind: str) -> list[tuple[str, ExperimentConfig]]:
    if kind == "K":
        return [(f"K={k}", replace(cfg, augment=replace(cfg.augment, K=k, C=max(cfg.augment.C, k))))
                for k in cfg.sweep.K]
    if kind == "proxy":
        rungs = []
        for i, over in enumerate(cfg.sweep.proxy_ladder):
            pc = ProxyConfig(**{**asdict(cfg.proxy), **over})
            label = "oracle" if pc.oracle else ",".join(f"{k}={v}" for k, v in sorted(over.items())) or "base"
            rungs.append((f"{i}:{label}", replace(cfg, proxy=pc)))
        return rungs
    raise ConfigError(f"unknown sweep {kind!r}; choose K or proxy")


def run_sweep(cfg: ExperimentConfig, kind: str, workers: int = 1, out_dir: str | Path | None = None) -> list[dict]:
    """One train+eval per rung, all with the config's seed; rows of rung -> metrics."""
    if kind == "proxy" and cfg.domain != "toymol":
        raise ConfigError("the proxy sweep needs the toymol domain")
    rows = []
    for label, c in sweep_rungs(cfg, kind):
        sub = None if out_dir is None else Path(out_dir) / label.replace(":", "_").replace(",", "_")
        rep = run(c, workers, sub)
        rows.append({"rung": label, "proxy_rmse": rep.proxy_rmse, **rep.metrics})
    if out_dir is not None:
        write_rows(Path(out_dir) / f"sweep_{kind}.csv", rows)
    return rows


def write_rows(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def proxy_shape_ok(rows: list[dict], tol: float = 0.05) -> bool:
    """Success non-increasing in proxy RMSE, and the oracle rung within ``tol`` of the base rung."""
    ordered = sorted(rows, key=lambda r: r["proxy_rmse"])
    monotone = all(a["success"] >= b["success"] for a, b in zip(ordered, ordered[1:]))
    return monotone and abs(rows[0]["success"] - rows[1]["success"]) <= tol
