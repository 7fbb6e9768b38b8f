"""Experiment configuration (JSON on disk) and the metrics report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from . import __version__
from .core import AugmentConfig

DOMAINS = ("toymol", "gridlang")
MODES = ("conditional", "unconditional")
ABLATIONS = ("baseline", "test_only", "train_only", "full", "no_filter", "dupe", "keep_targets", "ideal")


@dataclass
class ModelConfig:
    order: int = 3
    kappa: float = 0.1
    weights: list[float] | None = None
    max_len: int = 40
    shared_weight: float = 0.0
    featurizer: str | None = None  # None: domain default ("const" when unconditional)


@dataclass
class DataConfig:
    n_pairs: int = 2000
    n_unlabeled: int = 0  # > 0 turns on the semi-supervised pool
    n_test: int = 400
    labeled_path: str | None = None
    unlabeled_path: str | None = None
    test_path: str | None = None
    transductive: bool = False
    # gridlang task generation
    n_given: int = 5
    n_heldout: int = 1
    grid: dict = field(default_factory=dict)
    program: dict = field(default_factory=dict)


@dataclass
class ProxyConfig:
    oracle: bool = False  # use F0 itself inside the filter (zero-RMSE rung)
    ridge: float = 1e-3
    holdout: float = 0.2
    label_noise: float = 0.0
    subsample: float = 1.0
    drop_features: float = 0.0


@dataclass
class EvalConfig:
    Z: int = 20
    L: int = 10
    n_uniqueness: int = 20000


@dataclass
class SweepConfig:
    K: list[int] = field(default_factory=lambda: [2, 4, 8])
    proxy_ladder: list[dict] = field(default_factory=lambda: [
        {"oracle": True},
        {},
        {"label_noise": 0.3},
        {"label_noise": 0.6},
    ])


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    domain: str = "toymol"
    mode: str = "conditional"
    task: str = "qed"
    ablation: str = "full"
    seed: int = 0
    repeats: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    ideal_k: int | None = None  # K' for the ideal ablation; None derives it from an iterative run
    ideal_c: int = 2000

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.data.transductive and self.mode != "conditional":
            raise ValueError("transductive augmentation requires conditional mode")
        if self.domain == "gridlang" and self.mode != "conditional":
            raise ValueError("gridlang is conditional only")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        # prediction settings live in the eval section; keep the engine config in step
        self.augment = replace(self.augment, Z=self.eval.Z, L=self.eval.L,
                               conditional=self.mode == "conditional")

    @property
    def featurizer(self) -> str:
        if self.model.featurizer is not None:
            return self.model.featurizer
        if self.mode == "unconditional":
            return "const"
        return self.domain

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        return _build(cls, obj, "config")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: invalid JSON: {e}") from e
        return cls.from_dict(obj)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _to_plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(o) for o in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


_NESTED = {
    "model": ModelConfig,
    "augment": AugmentConfig,
    "data": DataConfig,
    "proxy": ProxyConfig,
    "eval": EvalConfig,
    "sweep": SweepConfig,
}


def _build(cls, obj: dict, where: str):
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in obj.items():
        if cls is ExperimentConfig and k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ValueError(f"{where}: {e}") from e


# -- report ----------------------------------------------------------------------------


@dataclass
class MetricsReport:
    config: dict
    seed: int
    metrics: dict[str, float]
    epochs: list[dict] = field(default_factory=list)
    proxy_rmse: float | None = None
    version: str = __version__

    def __post_init__(self) -> None:
        for k, v in self.metrics.items():
            if k in FRACTIONS and not (0.0 <= v <= 1.0 and math.isfinite(v)):
                raise ValueError(f"metric {k}={v} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


FRACTIONS = ("success", "diversity", "uniqueness", "top1")
