"""Least-squares autoencoder trained in one closed-form solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .solvers import Activation, RidgeConfig, act_apply, orthonormal_random, ridge_solve, _as_2d, _check_finite

__all__ = ["AeLayer", "train_ae", "encode"]


@dataclass(frozen=True)
class AeLayer:
    """One encoding layer.

    ``forward_weight`` has shape ``(in_dim, hidden_dim)`` and is the
    transpose of the autoencoder's decoding weight. The random projection
    used during training is not kept; ``random_seed`` regenerates it.
    """

    forward_weight: np.ndarray
    random_seed: int
    activation: Activation

    def __post_init__(self):
        if self.forward_weight.ndim != 2:
            raise ShapeError("forward_weight must be a matrix")
        self.forward_weight.setflags(write=False)

    @property
    def in_dim(self) -> int:
        return self.forward_weight.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.forward_weight.shape[1]

    def with_weight(self, weight) -> "AeLayer":
        return AeLayer(np.array(weight, dtype=np.float64), self.random_seed, self.activation)


def train_ae(x, hidden: int, cfg: RidgeConfig, act: Activation, seed: int,
             batch_size: int | None = None) -> AeLayer:
    """Fit an LS autoencoder on ``x`` with ``hidden`` random features.

    The input is projected through a seeded orthonormal random matrix and
    activated; the decoder ``W_e`` is the ridge fit of ``x`` on those
    features, and the layer encodes with ``W_e^T``.
    """
    x = _as_2d("x", x)
    n, d = x.shape
    if n < 1 or d < 1 or hidden < 1:
        raise ShapeError(f"degenerate autoencoder dims: x {x.shape}, hidden {hidden}")
    _check_finite("x", x)
    w = orthonormal_random(d, hidden, seed)
    psi = act_apply(act, x @ w)
    w_e = ridge_solve(psi, x, cfg, batch_size=batch_size)
    return AeLayer(np.ascontiguousarray(w_e.T), int(seed), act)


def encode(layer: AeLayer, x):
    x = _as_2d("x", x)
    if x.shape[1] != layer.in_dim:
        raise ShapeError(f"encode: input has {x.shape[1]} columns, layer expects {layer.in_dim}")
    return act_apply(layer.activation, x @ layer.forward_weight)
