"""Command-line entry point: ``rmlmp {train,predict,compare}``.

Settings come from flags and, optionally, a flat ``key = value`` config file
given with ``--config`` (``#`` starts a comment). Flags override file values.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, concat_features, load_features, load_labels, save_labels, zscore_apply, zscore_fit
from .errors import DataError, NumericalError, RMLError
from .evaluation import DataSource, ExperimentSpec, candidate_configs, run_compare, select_config, top1_accuracy, write_reports
from .network import VARIANTS, TrainConfig, classify, predict, train_variant
from .persist import load_model, save_model
from .solvers import Activation, RidgeConfig, SparseConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("train", "predict", "compare")


class UsageError(RMLError):
    pass


@dataclass
class CliConfig:
    command: str
    features: list = field(default_factory=list)
    labels: str | None = None
    model: str = "rml-mp"
    aes: int = 2
    neurons: list = field(default_factory=lambda: [1000])
    c_ae: float = 4.0
    c_out: float = 4.0
    lambdas: list = field(default_factory=lambda: [0.1, 0.5, 1.0])
    activation: str = "sigmoid"
    sparse_c: float = 1e-3
    sparse_solver: str = "ijt"
    normalize: bool = False
    batch_size: int | None = None
    seed: int = 0
    out: str | None = None
    metrics: str | None = None
    grid: bool = False
    model_file: str | None = None
    format: str = "auto"
    dataset_name: str | None = None

    @property
    def variants(self) -> list:
        return [v.strip() for v in self.model.split(",") if v.strip()]

    def hidden(self) -> tuple:
        if len(self.neurons) == 1:
            return tuple(self.neurons) * self.aes
        if len(self.neurons) != self.aes:
            raise UsageError(f"--neurons lists {len(self.neurons)} sizes for {self.aes} autoencoders")
        return tuple(self.neurons)

    def train_config(self, variant: str | None = None) -> TrainConfig:
        sparse = None
        if variant == "srml-mp" or (variant is None and "srml-mp" in self.variants):
            solver = {"ijt": "ijt", "svd": "svd_shrink"}[self.sparse_solver]
            sparse = SparseConfig(c=self.sparse_c, solver=solver)
        return TrainConfig(
            hidden=self.hidden(),
            ridge_ae=RidgeConfig(self.c_ae),
            ridge_out=RidgeConfig(self.c_out),
            learning_rate=self.lambdas[0],
            activation=Activation(self.activation),
            seed=self.seed,
            sparse=sparse,
            batch_size=self.batch_size,
        )

    def effective(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambdas")
        d["hidden"] = list(self.hidden())
        if "srml-mp" in self.variants:
            d["sparse"] = asdict(self.train_config("srml-mp").sparse)
        return d


def _csv(conv):
    def parse(text):
        items = [t.strip() for t in str(text).split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]
    return parse


def _bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    s = str(text).strip().lower()
    return None if s in ("", "none") else int(s)


# key -> (converter, CliConfig field)
_KEYS = {
    "features": (_csv(str), "features"),
    "labels": (str, "labels"),
    "model": (str, "model"),
    "aes": (int, "aes"),
    "neurons": (_csv(int), "neurons"),
    "c_ae": (float, "c_ae"),
    "c_out": (float, "c_out"),
    "lambda": (_csv(float), "lambdas"),
    "activation": (str, "activation"),
    "sparse_c": (float, "sparse_c"),
    "sparse_solver": (str, "sparse_solver"),
    "normalize": (_bool, "normalize"),
    "batch_size": (_opt_int, "batch_size"),
    "seed": (int, "seed"),
    "out": (str, "out"),
    "metrics": (str, "metrics"),
    "grid": (_bool, "grid"),
    "model_file": (str, "model_file"),
    "format": (str, "format"),
    "dataset_name": (str, "dataset_name"),
}
_CHOICES = {
    "activation": ("sigmoid", "sine"),
    "sparse_solver": ("ijt", "svd"),
    "format": ("auto", "csv", "binary"),
}


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` document into raw string values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="rmlmp", description="Recomputation-based multilayer least-squares networks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="flat key = value file; flags take precedence")
        sp.add_argument("--features", help="feature file(s), comma-separated; several are concatenated")
        sp.add_argument("--labels", help="label file, one integer per line")
        sp.add_argument("--model", help="variant: mls, rml-mp or srml-mp (compare: comma list)")
        sp.add_argument("--aes", help="number of stacked autoencoders")
        sp.add_argument("--neurons", help="neurons per autoencoder (one value or one per layer)")
        sp.add_argument("--c-ae", dest="c_ae", help="regularization C of autoencoder solves")
        sp.add_argument("--c-out", dest="c_out", help="regularization C of the output layer")
        sp.add_argument("--lambda", dest="lambda", help="learning rate(s); several are selected on validation")
        sp.add_argument("--activation", help="sigmoid or sine")
        sp.add_argument("--sparse-c", dest="sparse_c", help="l1/2 penalty weight (srml-mp)")
        sp.add_argument("--sparse-solver", dest="sparse_solver", help="ijt or svd (srml-mp)")
        sp.add_argument("--normalize", action="store_const", const="true", help="z-score features")
        sp.add_argument("--batch-size", dest="batch_size", help="row batch size for Gram accumulation")
        sp.add_argument("--seed")
        sp.add_argument("--out", help="train: model file; predict: prediction file")
        sp.add_argument("--metrics", help="compare: metrics output (JSON lines)")
        sp.add_argument("--grid", action="store_const", const="true", help="compare: sweep neurons and C values")
        sp.add_argument("--model-file", dest="model_file", help="predict: model to load")
        sp.add_argument("--format", help="feature format: auto, csv or binary")
        sp.add_argument("--dataset-name", dest="dataset_name", help="name recorded in metrics")
    return p


def parse_config(argv) -> CliConfig:
    """Build the effective configuration: defaults, then config file, then flags."""
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        raise UsageError(f"missing command; expected one of {COMMANDS}")
    raw = {}
    cfg_path = ns.pop("config", None)
    if cfg_path is not None:
        try:
            text = Path(cfg_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config file {cfg_path}: {exc}") from exc
        raw.update(parse_config_text(text))
    raw.update(ns)

    values = {}
    for key, value in raw.items():
        conv, attr = _KEYS[key]
        try:
            values[attr] = conv(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r} ({exc})") from None
        if key in _CHOICES and values[attr] not in _CHOICES[key]:
            raise UsageError(f"{key} must be one of {_CHOICES[key]}, got {values[attr]!r}")
    cfg = CliConfig(command=command, **values)
    if command == "compare" and "model" not in values:
        cfg.model = ",".join(VARIANTS)
    _validate(cfg)
    return cfg


def _validate(cfg: CliConfig):
    for v in cfg.variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown model variant {v!r}; expected one of {VARIANTS}")
    if not cfg.variants:
        raise UsageError("no model variant given")
    if cfg.command == "train" and len(cfg.variants) != 1:
        raise UsageError("train takes exactly one --model variant")
    if not cfg.features:
        raise UsageError("--features is required")
    if cfg.command in ("train", "compare") and not cfg.labels:
        raise UsageError("--labels is required")
    if cfg.command == "predict" and not cfg.model_file:
        raise UsageError("predict requires --model-file")
    if cfg.command == "compare" and not cfg.metrics:
        raise UsageError("compare requires --metrics")
    if cfg.aes < 1:
        raise UsageError("--aes must be >= 1")
    if cfg.batch_size is not None and cfg.batch_size < 1:
        raise UsageError("--batch-size must be >= 1")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_x(cfg: CliConfig):
    fmt = None if cfg.format == "auto" else cfg.format
    return concat_features([load_features(p, fmt) for p in cfg.features])


def _load_dataset(cfg: CliConfig) -> Dataset:
    x = _load_x(cfg)
    y = load_labels(cfg.labels)
    if y.shape[0] != x.shape[0]:
        raise DataError(f"{cfg.labels}: {y.shape[0]} labels for {x.shape[0]} feature rows")
    return Dataset.from_arrays(x, y)


def _echo(obj):
    print(json.dumps(obj, sort_keys=True))


def _cmd_train(cfg: CliConfig):
    variant = cfg.variants[0]
    ds = _load_dataset(cfg)
    zs = None
    x = ds.features
    if cfg.normalize:
        zs = zscore_fit(x)
        x = zscore_apply(zs, x)
        ds = Dataset(x, ds.labels, ds.k)
    base = cfg.train_config(variant)
    cands = candidate_configs(base, variant, cfg.lambdas)
    chosen = select_config(ds, variant, cands, seed=cfg.seed)
    t = np.eye(max(ds.k, 2))[ds.labels]
    model = train_variant(x, t, chosen, variant)
    out = cfg.out or "model.rmlm"
    save_model(out, model, zs)
    _echo({
        "command": "train",
        "effective_config": cfg.effective(),
        "selected_lambda": chosen.learning_rate,
        "train_top1": top1_accuracy(predict(model, x), ds.labels),
        "stage": model.stage,
        "widths": list(model.widths),
        "model_file": out,
    })


def _cmd_predict(cfg: CliConfig):
    model, zs = load_model(cfg.model_file)
    x = _load_x(cfg)
    if x.shape[1] != model.in_dim:
        raise DataError(f"feature width {x.shape[1]} does not match model input dimension {model.in_dim}")
    if zs is not None:
        x = zscore_apply(zs, x)
    labels = classify(predict(model, x, batch_size=cfg.batch_size))
    if cfg.out:
        save_labels(cfg.out, labels)
        _echo({"command": "predict", "effective_config": cfg.effective(), "n_predictions": int(labels.shape[0])})
    else:
        sys.stdout.write("".join(f"{int(v)}\n" for v in labels))


def _cmd_compare(cfg: CliConfig):
    name = cfg.dataset_name or "+".join(Path(p).stem for p in cfg.features)
    fmt = None if cfg.format == "auto" else cfg.format
    spec = ExperimentSpec(
        variants=tuple(cfg.variants),
        source=DataSource(tuple(cfg.features), cfg.labels, fmt),
        seed=cfg.seed,
        lambdas=tuple(cfg.lambdas),
        config=cfg.train_config(),
        dataset_name=name,
        normalize=cfg.normalize,
        grid=cfg.grid,
    )
    reports = run_compare(spec)
    write_reports(cfg.metrics, reports)
    _echo({"command": "compare", "effective_config": cfg.effective(), "metrics_file": cfg.metrics})
    for r in reports:
        print(r.to_json())


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
        {"train": _cmd_train, "predict": _cmd_predict, "compare": _cmd_compare}[cfg.command](cfg)
    except UsageError as exc:
        print(f"rmlmp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"rmlmp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"rmlmp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rmlmp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
