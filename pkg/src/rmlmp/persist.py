"""Binary model files.

Layout (all little-endian)::

    magic          4 bytes  b"RMLM"
    version        u16      currently 1
    activation     u8       0 = sigmoid, 1 = sine
    act_eps        f64
    c_ae, c_out    f64, f64
    learning_rate  f64
    seed           i64
    stage          u8       0 = initialized, 1 = recomputed
    output_solver  u8       0 = ridge, 1 = sparse
    has_sparse     u8
      [c f64, q f64, mu f64 (NaN = auto), max_iters u32, tol f64,
       solver u8 (0 = ijt, 1 = svd_shrink), output_layer u8 (0 = ridge, 1 = sparse)]
    has_zscore     u8
    n_layers       u32
    layer seeds    n_layers x i64
    matrices       V^(1) .. V^(M), W_f, then mean (1 x d) and std (1 x d) if has_zscore
                   each as u32 rows, u32 cols, rows*cols f64 row-major

Loading validates magic, version and the shape chain.
"""

from __future__ import annotations

import io
import math
import struct
from pathlib import Path

import numpy as np

from .autoencoder import AeLayer
from .data import ZScoreStats
from .errors import ModelFormatError, RMLError
from .network import StackedModel, TrainConfig
from .solvers import ACTIVATIONS, SPARSE_OUTPUT_LAYERS, SPARSE_SOLVERS, Activation, RidgeConfig, SparseConfig

__all__ = ["MAGIC", "VERSION", "save_model", "load_model", "dumps_model", "loads_model"]

MAGIC = b"RMLM"
VERSION = 1
_STAGES = ("initialized", "recomputed")
_OUT = ("ridge", "sparse")

_HEAD = struct.Struct("<4sHBddddqBBB")
_SPARSE = struct.Struct("<dddIdBB")
_MAT = struct.Struct("<II")


def _write_matrix(buf, m):
    m = np.ascontiguousarray(m, dtype="<f8")
    buf.write(_MAT.pack(*m.shape))
    buf.write(m.tobytes(order="C"))


def dumps_model(model: StackedModel, zscore: ZScoreStats | None = None) -> bytes:
    cfg = model.config
    buf = io.BytesIO()
    buf.write(_HEAD.pack(
        MAGIC, VERSION,
        ACTIVATIONS.index(cfg.activation.kind), cfg.activation.eps,
        cfg.ridge_ae.c, cfg.ridge_out.c, cfg.learning_rate, cfg.seed,
        _STAGES.index(model.stage), _OUT.index(model.output_solver),
        cfg.sparse is not None,
    ))
    if cfg.sparse is not None:
        s = cfg.sparse
        buf.write(_SPARSE.pack(
            s.c, s.q, math.nan if s.mu is None else s.mu, s.max_iters, s.tol,
            SPARSE_SOLVERS.index(s.solver), SPARSE_OUTPUT_LAYERS.index(s.output_layer),
        ))
    buf.write(struct.pack("<B", zscore is not None))
    buf.write(struct.pack("<I", len(model.layers)))
    buf.write(struct.pack(f"<{len(model.layers)}q", *(layer.random_seed for layer in model.layers)))
    for layer in model.layers:
        _write_matrix(buf, layer.forward_weight)
    _write_matrix(buf, model.output_weight)
    if zscore is not None:
        _write_matrix(buf, zscore.mean[None, :])
        _write_matrix(buf, zscore.std[None, :])
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes, name):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, st: struct.Struct):
        if self.pos + st.size > len(self.data):
            raise ModelFormatError(f"{self.name}: truncated at byte {self.pos}")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out

    def matrix(self):
        rows, cols = self.take(_MAT)
        n = 8 * rows * cols
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"{self.name}: truncated matrix at byte {self.pos}")
        m = np.frombuffer(self.data, dtype="<f8", count=rows * cols, offset=self.pos).reshape(rows, cols)
        self.pos += n
        return m.astype(np.float64)


def loads_model(data: bytes, name="<bytes>"):
    """Parse a model file; returns ``(model, zscore_or_None)``."""
    r = _Reader(data, name)
    head = r.take(_HEAD)
    magic, version = head[0], head[1]
    if magic != MAGIC:
        raise ModelFormatError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"{name}: unsupported model format version {version}")
    act_i, eps, c_ae, c_out, lam, seed, stage_i, out_i, has_sparse = head[2:]
    try:
        sparse = None
        if has_sparse:
            c, q, mu, max_iters, tol, solver_i, ol_i = r.take(_SPARSE)
            sparse = SparseConfig(
                c=c, q=q, mu=None if math.isnan(mu) else mu, max_iters=max_iters, tol=tol,
                solver=SPARSE_SOLVERS[solver_i], output_layer=SPARSE_OUTPUT_LAYERS[ol_i],
            )
        (has_z,) = r.take(struct.Struct("<B"))
        (m,) = r.take(struct.Struct("<I"))
        if m < 1:
            raise ModelFormatError(f"{name}: model has no layers")
        seeds = r.take(struct.Struct(f"<{m}q"))
        act = Activation(ACTIVATIONS[act_i], eps)
        weights = [r.matrix() for _ in range(m)]
        w_f = r.matrix()
        zscore = None
        if has_z:
            mean, std = r.matrix(), r.matrix()
            if mean.shape != (1, weights[0].shape[0]) or std.shape != mean.shape:
                raise ModelFormatError(f"{name}: normalization vectors do not match input width")
            zscore = ZScoreStats(mean[0], std[0])
        if r.pos != len(data):
            raise ModelFormatError(f"{name}: {len(data) - r.pos} trailing bytes")
        cfg = TrainConfig(
            hidden=tuple(w.shape[1] for w in weights), ridge_ae=RidgeConfig(c_ae), ridge_out=RidgeConfig(c_out),
            learning_rate=lam, activation=act, seed=seed, sparse=sparse,
        )
        layers = tuple(AeLayer(w, s, act) for w, s in zip(weights, seeds))
        model = StackedModel(layers, w_f, cfg, stage=_STAGES[stage_i], output_solver=_OUT[out_i])
    except ModelFormatError:
        raise
    except (RMLError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"{name}: invalid model: {exc}") from exc
    return model, zscore


def save_model(path, model: StackedModel, zscore: ZScoreStats | None = None):
    Path(path).write_bytes(dumps_model(model, zscore))


def load_model(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return loads_model(data, name=str(path))
