"""Stacked LS autoencoder network with error pullback and weight recomputation.

Training runs in three stages:

1. Feed-forward initialization: autoencoders are stacked greedily and a ridge
   classification layer is fit on the last encoding. On its own this is the
   MLS baseline.
2. Pullback: the output error is pulled back to every hidden layer through
   regularized pseudoinverses of the (stage-1) weights.
3. Recomputation: layer by layer, an offset ``eta`` is fit from the updated
   previous encoding to the pulled-back target, added to the forward weight
   with step ``learning_rate``, and the classifier is refit.

Forward weights are stored as ``V`` of shape ``(h_{i-1}, h_i)`` so that the
encoding of layer ``i`` is ``act(Psi_{i-1} @ V_i)`` at every stage.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import AeLayer, encode, train_ae
from .errors import NumericalError, ShapeError
from .solvers import (
    Activation,
    RidgeConfig,
    SparseConfig,
    _as_2d,
    _check_finite,
    act_apply,
    act_inverse,
    ijt_solve,
    pinv_reg,
    ridge_solve,
    svd_shrink_solve,
)

__all__ = [
    "VARIANTS",
    "TrainConfig",
    "StackedModel",
    "FeedbackSet",
    "layer_seeds",
    "stage1_train",
    "encode_all",
    "pullback",
    "recompute",
    "predict",
    "classify",
    "train_variant",
]

VARIANTS = ("mls", "rml-mp", "srml-mp")
STAGES = ("initialized", "recomputed")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one network.

    ``hidden`` lists the neuron count of each stacked autoencoder; its length
    is the depth. ``sparse`` switches recomputation to the l1/2 update.
    ``batch_size`` routes every ridge solve through Gram accumulation over
    row chunks.
    """

    hidden: tuple = (1000, 1000)
    ridge_ae: RidgeConfig = field(default_factory=lambda: RidgeConfig(4.0))
    ridge_out: RidgeConfig = field(default_factory=lambda: RidgeConfig(4.0))
    learning_rate: float = 0.5
    activation: Activation = field(default_factory=Activation)
    seed: int = 0
    sparse: SparseConfig | None = None
    batch_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) < 1:
            raise ValueError("at least one autoencoder layer is required")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden sizes must be >= 1, got {self.hidden}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.hidden)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def layer_seeds(seed: int, n_layers: int) -> list:
    """Per-layer seeds for the random projections, derived from ``seed``."""
    state = np.random.SeedSequence(seed).generate_state(n_layers, dtype=np.uint32)
    return [int(s) for s in state]


@dataclass(frozen=True)
class StackedModel:
    layers: tuple
    output_weight: np.ndarray
    config: TrainConfig
    stage: str = "initialized"
    # how the classification layer was last fit: "ridge" or "sparse"
    output_solver: str = "ridge"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:]), start=1):
            if a.hidden_dim != b.in_dim:
                raise ShapeError(f"layer {i} outputs {a.hidden_dim} columns but layer {i + 1} expects {b.in_dim}")
        w = self.output_weight
        if w.ndim != 2 or w.shape[0] != self.layers[-1].hidden_dim:
            raise ShapeError(f"output weight shape {w.shape} does not follow last layer width {self.layers[-1].hidden_dim}")
        for i, layer in enumerate(self.layers, start=1):
            _check_finite(f"layer {i} weight", layer.forward_weight)
        _check_finite("output weight", w)
        w.setflags(write=False)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.output_weight.shape[1]

    @property
    def widths(self) -> tuple:
        return (self.in_dim,) + tuple(layer.hidden_dim for layer in self.layers) + (self.n_classes,)

    def predict(self, x, batch_size=None):
        return predict(self, x, batch_size=batch_size)


@dataclass(frozen=True)
class FeedbackSet:
    """Output error ``E`` and pulled-back offsets, ordered ``P^(M) ... P^(1)``."""

    error: np.ndarray
    offsets: tuple

    def for_layer(self, i: int):
        """Offset ``P^(i)`` for 1-based layer index ``i``."""
        m = len(self.offsets)
        if not 1 <= i <= m:
            raise IndexError(f"layer index {i} outside 1..{m}")
        return self.offsets[m - i]


def _check_xt(x, t):
    x = _as_2d("x", x)
    t = _as_2d("t", t)
    if x.shape[0] != t.shape[0]:
        raise ShapeError(f"x has {x.shape[0]} rows but targets have {t.shape[0]}")
    _check_finite("x", x)
    _check_finite("targets", t)
    return x, t


def stage1_train(x, t, cfg: TrainConfig) -> StackedModel:
    """Greedy layer-wise autoencoder stack plus a ridge classifier (MLS)."""
    x, t = _check_xt(x, t)
    if t.shape[1] < 2:
        raise ShapeError("targets need at least 2 classes")
    seeds = layer_seeds(cfg.seed, cfg.n_layers)
    layers = []
    psi = x
    for h, s in zip(cfg.hidden, seeds):
        layer = train_ae(psi, h, cfg.ridge_ae, cfg.activation, s, batch_size=cfg.batch_size)
        psi = encode(layer, psi)
        layers.append(layer)
    w_f = ridge_solve(psi, t, cfg.ridge_out, batch_size=cfg.batch_size)
    return StackedModel(tuple(layers), w_f, cfg, stage="initialized")


def encode_all(model: StackedModel, x) -> list:
    """Encodings ``[Psi^(1), ..., Psi^(M)]`` of ``x`` under the current weights."""
    x = _as_2d("x", x)
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, model expects {model.in_dim}")
    out = []
    psi = x
    for layer in model.layers:
        psi = encode(layer, psi)
        out.append(psi)
    return out


def pullback(model: StackedModel, x, t) -> FeedbackSet:
    """Pull the output error back through every layer.

    ``P^(M) = E pinv(W_f)`` and ``P^(i-1) = act^{-1}(P^(i) pinv(V^(i)))``,
    where ``pinv`` is the ``I/C``-regularized pseudoinverse.
    """
    if model.stage != "initialized":
        raise ValueError("pullback expects a stage-1 model; this one was already recomputed")
    x, t = _check_xt(x, t)
    if t.shape[1] != model.n_classes:
        raise ShapeError(f"targets have {t.shape[1]} columns, model outputs {model.n_classes}")
    cfg = model.config
    psi_m = encode_all(model, x)[-1]
    error = t - psi_m @ model.output_weight
    p = error @ pinv_reg(model.output_weight, cfg.ridge_out)
    offsets = [p]
    for layer in reversed(model.layers[1:]):
        p = act_inverse(cfg.activation, p @ pinv_reg(layer.forward_weight, cfg.ridge_ae))
        offsets.append(p)
    return FeedbackSet(error, tuple(offsets))


def _layer_offset(psi_prev, p, cfg: TrainConfig):
    sparse = cfg.sparse
    if sparse is None:
        return ridge_solve(psi_prev, p, cfg.ridge_ae, batch_size=cfg.batch_size)
    if sparse.solver == "ijt":
        return ijt_solve(psi_prev, p, sparse)
    # shrink the feedback, then map it into weight space through Psi's pseudoinverse
    return ridge_solve(psi_prev, svd_shrink_solve(p, sparse), cfg.ridge_ae, batch_size=cfg.batch_size)


def recompute(model: StackedModel, x, t, fb: FeedbackSet, return_offsets: bool = False):
    """Recompute every layer's weights from the pulled-back feedback.

    For ``i = 1..M``: ``eta_i`` is fit from the *updated* encoding
    ``Psi_hat^(i-1)`` to ``P^(i)`` (ridge, or the l1/2 solver when
    ``model.config.sparse`` is set), then ``V_hat_i = V_i + lambda * eta_i``
    and ``Psi_hat^(i) = act(Psi_hat^(i-1) V_hat_i)``. The classifier is
    finally refit on ``Psi_hat^(M)``.

    Returns the recomputed model, plus the list of ``eta`` matrices when
    ``return_offsets`` is true.
    """
    if model.stage != "initialized":
        raise ValueError("recompute expects a stage-1 model")
    x, t = _check_xt(x, t)
    cfg = model.config
    m = len(model.layers)
    if len(fb.offsets) != m or fb.error.shape != (x.shape[0], model.n_classes):
        raise ShapeError("feedback set does not match this model and data")
    for i, layer in enumerate(model.layers, start=1):
        if fb.for_layer(i).shape != (x.shape[0], layer.hidden_dim):
            raise ShapeError(f"feedback for layer {i} has shape {fb.for_layer(i).shape}")

    lam = cfg.learning_rate
    psi = x
    layers = []
    etas = []
    for i, layer in enumerate(model.layers, start=1):
        try:
            eta = _layer_offset(psi, fb.for_layer(i), cfg)
            v_hat = layer.forward_weight + lam * eta
            _check_finite("updated weight", v_hat)
            new_layer = layer.with_weight(v_hat)
            psi = encode(new_layer, psi)
        except NumericalError as exc:
            raise NumericalError(f"layer {i}: {exc}") from exc
        layers.append(new_layer)
        etas.append(eta)

    sparse = cfg.sparse
    try:
        if sparse is not None and sparse.solver == "ijt" and sparse.output_layer == "sparse":
            w_f = ijt_solve(psi, t, sparse)
            solver = "sparse"
        else:
            w_f = ridge_solve(psi, t, cfg.ridge_out, batch_size=cfg.batch_size)
            solver = "ridge"
    except NumericalError as exc:
        raise NumericalError(f"output layer: {exc}") from exc
    new = StackedModel(tuple(layers), w_f, cfg, stage="recomputed", output_solver=solver)
    if return_offsets:
        return new, etas
    return new


def predict(model: StackedModel, x, batch_size=None):
    """Network scores ``Psi^(M) @ W_f`` under the model's current weights."""
    x = _as_2d("x", x)
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, model expects {model.in_dim}")
    if batch_size is not None:
        chunks = [predict(model, x[s:s + batch_size]) for s in range(0, x.shape[0], batch_size)]
        return np.vstack(chunks) if chunks else np.zeros((0, model.n_classes))
    return encode_all(model, x)[-1] @ model.output_weight


def classify(scores):
    """Row-wise argmax; ties go to the lowest class index."""
    scores = _as_2d("scores", scores)
    if scores.shape[0] == 0 or scores.shape[1] == 0:
        raise ShapeError("cannot classify empty scores")
    return np.argmax(scores, axis=1)


def train_variant(x, t, cfg: TrainConfig, variant: str) -> StackedModel:
    """Train one named variant: ``mls``, ``rml-mp`` or ``srml-mp``.

    ``srml-mp`` uses ``cfg.sparse`` when set and the default
    :class:`SparseConfig` otherwise; ``rml-mp`` always takes the ridge path.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}; expected one of {VARIANTS}")
    if variant == "rml-mp":
        cfg = cfg.replace(sparse=None)
    elif variant == "srml-mp" and cfg.sparse is None:
        cfg = cfg.replace(sparse=SparseConfig())
    model = stage1_train(x, t, cfg)
    if variant == "mls":
        return model
    fb = pullback(model, x, t)
    return recompute(model, x, t, fb)
