"""Top-1 accuracy, hyperparameter selection and the variant comparison runner."""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, concat_features, load_features, load_labels, split, zscore_apply, zscore_fit
from .errors import DataError, ShapeError
from .network import VARIANTS, TrainConfig, classify, predict, train_variant
from .solvers import RidgeConfig

__all__ = [
    "DEFAULT_LAMBDAS",
    "GRID_NEURONS",
    "GRID_C_AE",
    "GRID_C_OUT",
    "RunReport",
    "DataSource",
    "ExperimentSpec",
    "top1_accuracy",
    "config_digest",
    "candidate_configs",
    "select_config",
    "run_compare",
    "write_reports",
    "read_reports",
]

DEFAULT_LAMBDAS = (0.1, 0.5, 1.0)
GRID_NEURONS = (500, 1000, 2000)
GRID_C_AE = (1e-3, 1.0, 1e3)
GRID_C_OUT = (1.0, 1e2, 1e4)


def top1_accuracy(scores, labels) -> float:
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"{scores.shape[0] if scores.ndim else 0} score rows for {labels.shape[0]} labels")
    return float(np.mean(classify(scores) == labels))


@dataclass(frozen=True)
class RunReport:
    model_name: str
    dataset_name: str
    top1: float
    train_seconds: float
    infer_seconds: float
    config_digest: str
    seed: int
    # the selected configuration; kept in memory only, not serialized
    config: TrainConfig | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "dataset_name": self.dataset_name,
            "top1": self.top1,
            "train_seconds": self.train_seconds,
            "infer_seconds": self.infer_seconds,
            "config_digest": self.config_digest,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class DataSource:
    """Feature files (fused by concatenation when several) plus a label file."""

    feature_paths: tuple
    label_path: str
    fmt: str | None = None

    def load(self) -> Dataset:
        parts = []
        for p in self.feature_paths:
            parts.append(load_features(p, self.fmt))
        x = concat_features(parts)
        y = load_labels(self.label_path)
        if y.shape[0] != x.shape[0]:
            raise DataError(f"{self.label_path}: {y.shape[0]} labels for {x.shape[0]} feature rows")
        return Dataset.from_arrays(x, y)


@dataclass(frozen=True)
class ExperimentSpec:
    """One comparison run: every variant sees the same split of one dataset."""

    variants: tuple
    source: Dataset | DataSource
    seed: int = 0
    lambdas: tuple = DEFAULT_LAMBDAS
    config: TrainConfig = field(default_factory=TrainConfig)
    dataset_name: str = "dataset"
    test_fraction: float = 0.2
    val_fraction: float = 0.1
    normalize: bool = False
    grid: bool = False


def config_digest(variant: str, cfg: TrainConfig) -> str:
    d = cfg.to_dict()
    d["variant"] = variant
    d.pop("batch_size", None)
    blob = json.dumps(d, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def candidate_configs(base: TrainConfig, variant: str, lambdas=DEFAULT_LAMBDAS, grid=False) -> list:
    """Configurations to choose among for one variant.

    The learning rate only matters after recomputation, so ``mls`` ignores
    ``lambdas``. With ``grid`` the neuron count (applied to every layer) and
    both regularization terms are swept as well.
    """
    if grid:
        shapes = [
            dict(hidden=(h,) * base.n_layers, ridge_ae=RidgeConfig(c_ae), ridge_out=RidgeConfig(c_out))
            for h, c_ae, c_out in itertools.product(GRID_NEURONS, GRID_C_AE, GRID_C_OUT)
        ]
    else:
        shapes = [{}]
    lams = [base.learning_rate] if variant == "mls" or not lambdas else list(lambdas)
    return [base.replace(learning_rate=float(lam), **s) for s in shapes for lam in lams]


def select_config(ds: Dataset, variant: str, candidates, val_fraction=0.1, seed=0) -> TrainConfig:
    """Pick the candidate with the best Top-1 on a held-out validation split.

    Ties go to the lower validation MSE, then to the earlier candidate.
    """
    candidates = list(candidates)
    if len(candidates) == 1:
        return candidates[0]
    fit_ds, val_ds = split(ds, val_fraction, seed)
    k = max(ds.k, 2)
    t_fit = np.eye(k)[fit_ds.labels]
    t_val = np.eye(k)[val_ds.labels]
    best = None
    for i, cfg in enumerate(candidates):
        model = train_variant(fit_ds.features, t_fit, cfg, variant)
        scores = predict(model, val_ds.features)
        key = (-top1_accuracy(scores, val_ds.labels), float(np.mean((scores - t_val) ** 2)), i)
        if best is None or key < best[0]:
            best = (key, cfg)
    return best[1]


def _run_variant(variant, train_ds, test_ds, spec: ExperimentSpec, dataset_name):
    k = max(train_ds.k, 2)
    t_train = np.eye(k)[train_ds.labels]
    t0 = time.perf_counter()
    cands = candidate_configs(spec.config, variant, spec.lambdas, spec.grid)
    cfg = select_config(train_ds, variant, cands, spec.val_fraction, spec.seed)
    model = train_variant(train_ds.features, t_train, cfg, variant)
    t1 = time.perf_counter()
    scores = predict(model, test_ds.features)
    t2 = time.perf_counter()
    return RunReport(
        model_name=variant,
        dataset_name=dataset_name,
        top1=top1_accuracy(scores, test_ds.labels),
        train_seconds=t1 - t0,
        infer_seconds=t2 - t1,
        config_digest=config_digest(variant, cfg),
        seed=spec.seed,
        config=cfg,
    )


def run_compare(spec: ExperimentSpec) -> list:
    """Train, select and evaluate each variant; reports come back in spec order."""
    if not spec.variants:
        raise ValueError("experiment names no model variants")
    for v in spec.variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown model variant {v!r}; expected one of {VARIANTS}")
    if isinstance(spec.source, DataSource):
        try:
            ds = spec.source.load()
        except DataError as exc:
            raise DataError(f"loading dataset {spec.dataset_name!r}: {exc}") from exc
    else:
        ds = spec.source
    train_ds, test_ds = split(ds, spec.test_fraction, spec.seed)
    if spec.normalize:
        stats = zscore_fit(train_ds.features)
        train_ds = Dataset(zscore_apply(stats, train_ds.features), train_ds.labels, train_ds.k)
        test_ds = Dataset(zscore_apply(stats, test_ds.features), test_ds.labels, test_ds.k)
    spec = dataclasses.replace(spec, config=spec.config.replace(seed=spec.seed))
    return [_run_variant(v, train_ds, test_ds, spec, spec.dataset_name) for v in spec.variants]


def write_reports(path, reports):
    Path(path).write_text("".join(r.to_json() + "\n" for r in reports), encoding="utf-8")


def read_reports(path) -> list:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(RunReport(**d))
    return out
