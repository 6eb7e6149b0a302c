"""Feature and label ingestion, fusion, normalization, splits and batching.

On-disk formats
---------------
CSV features
    One sample per line, comma-separated decimal floats, no header.
LSFM binary features
    ``b"LSFM"``, ``u32`` rows, ``u32`` cols, then ``rows * cols``
    little-endian ``float32`` values in row-major order.
Labels
    UTF-8 text, one base-10 integer per line.

Features are held as ``float64`` in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError

__all__ = [
    "Dataset",
    "ZScoreStats",
    "load_features",
    "save_features",
    "load_labels",
    "save_labels",
    "one_hot",
    "concat_features",
    "zscore_fit",
    "zscore_apply",
    "split",
    "batch_iter",
    "make_blobs",
]

LSFM_MAGIC = b"LSFM"
_LSFM_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ShapeError(f"features must be a nonempty matrix, got shape {f.shape}")
        if y.shape != (f.shape[0],):
            raise ShapeError(f"{y.shape[0] if y.ndim else 0} labels for {f.shape[0]} samples")
        if not np.issubdtype(y.dtype, np.integer):
            raise DataError("labels must be integers")
        if not np.all(np.isfinite(f)):
            raise DataError("features contain non-finite values")
        if self.k < 1 or y.min() < 0 or y.max() >= self.k:
            raise DataError(f"labels must lie in [0, {self.k})")
        f.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_arrays(cls, features, labels, k=None):
        labels = np.asarray(labels)
        if k is None:
            k = int(labels.max()) + 1 if labels.size else 0
        return cls(features, labels, int(k))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def targets(self):
        return one_hot(self.labels, max(self.k, 2))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.k)


# ---------------------------------------------------------------------------
# file I/O


def _parse_csv(text: str, path):
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: cannot parse float ({exc})") from None
        if not all(np.isfinite(row)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def _parse_lsfm(buf: bytes, path):
    if len(buf) < _LSFM_HEADER.size:
        raise DataError(f"{path}: truncated header ({len(buf)} bytes)")
    magic, rows, cols = _LSFM_HEADER.unpack_from(buf)
    if magic != LSFM_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {LSFM_MAGIC!r} (\"LSFM\")")
    expected = _LSFM_HEADER.size + 4 * rows * cols
    if len(buf) != expected:
        raise DataError(f"{path}: header declares {rows}x{cols} ({expected} bytes) but file has {len(buf)} bytes")
    data = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=_LSFM_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        offset = _LSFM_HEADER.size + 4 * int(bad[0])
        raise DataError(f"{path}: non-finite value at byte offset {offset}")
    return data.astype(np.float64).reshape(rows, cols)


def load_features(path, fmt: str | None = None):
    """Read a feature matrix from CSV or LSFM binary.

    ``fmt`` is ``"csv"`` or ``"binary"``; when omitted, files whose first
    bytes are the LSFM magic are read as binary and others as CSV.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read features from {path}: {exc}") from exc
    if fmt is None:
        fmt = "binary" if raw[:4] == LSFM_MAGIC else "csv"
    if fmt == "binary":
        return _parse_lsfm(raw, path)
    if fmt == "csv":
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: not UTF-8 text at byte offset {exc.start}") from None
        return _parse_csv(text, path)
    raise ValueError(f"unknown feature format {fmt!r}; expected 'csv' or 'binary'")


def save_features(path, x, fmt: str = "binary"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("features must be a matrix")
    path = Path(path)
    if fmt == "binary":
        rows, cols = x.shape
        path.write_bytes(_LSFM_HEADER.pack(LSFM_MAGIC, rows, cols) + x.astype("<f4").tobytes(order="C"))
    elif fmt == "csv":
        path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def load_labels(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read labels from {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            out.append(int(s, 10))
        except ValueError:
            raise DataError(f"{path}:{lineno}: not an integer label: {s!r}") from None
    if not out:
        raise DataError(f"{path}: no labels")
    return np.array(out, dtype=np.int64)


def save_labels(path, labels):
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels), encoding="utf-8")


# ---------------------------------------------------------------------------
# transforms


def one_hot(labels, k: int):
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("one_hot of empty label vector")
    if k < 2:
        raise DataError("one_hot needs k >= 2")
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def concat_features(parts):
    """Fuse per-sample features from several sources side by side."""
    parts = [np.asarray(p, dtype=np.float64) for p in parts]
    if not parts:
        raise DataError("concat_features needs at least one part")
    if len(parts) == 1:
        return parts[0]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"feature parts disagree on sample count: {[p.shape[0] for p in parts]}")
    return np.hstack(parts)


@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray


def zscore_fit(train) -> ZScoreStats:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise DataError("zscore_fit needs a nonempty training matrix")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return ZScoreStats(mean, std)


def zscore_apply(stats: ZScoreStats, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.mean.shape[0]:
        raise ShapeError(f"input has {x.shape[-1]} columns, statistics cover {stats.mean.shape[0]}")
    return (x - stats.mean) / stats.std


def split(ds: Dataset, test_fraction: float, seed: int):
    """Seeded shuffle split into ``(train, test)``.

    Best-effort class preservation: after the shuffle, a class that would
    be absent from the training side swaps one of its test rows with a
    training row of the most frequent training class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test > n - 1:
        raise DataError(f"cannot split {n} samples with test fraction {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = perm[:n_test].copy(), perm[n_test:].copy()
    for cls in np.unique(ds.labels[test_idx]):
        if np.any(ds.labels[train_idx] == cls):
            continue
        train_labels = ds.labels[train_idx]
        counts = np.bincount(train_labels, minlength=ds.k)
        donor_cls = int(np.argmax(counts))
        if counts[donor_cls] < 2:
            continue
        ti = int(np.flatnonzero(ds.labels[test_idx] == cls)[0])
        di = int(np.flatnonzero(train_labels == donor_cls)[0])
        test_idx[ti], train_idx[di] = train_idx[di], test_idx[ti]
    return ds.subset(np.sort(train_idx)), ds.subset(np.sort(test_idx))


def batch_iter(ds: Dataset, batch_size: int):
    """Yield ``(features, one_hot_targets)`` over contiguous row chunks."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    t = ds.targets()
    for start in range(0, len(ds), batch_size):
        yield ds.features[start:start + batch_size], t[start:start + batch_size]


def make_blobs(n: int, k: int, d: int, separation: float, seed: int) -> Dataset:
    """Isotropic unit-variance Gaussian classes with centers ``separation`` from the origin.

    Labels are balanced (``i % k``) and shuffled.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((k, d))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    y = np.arange(n) % k
    rng.shuffle(y)
    x = centers[y] + rng.standard_normal((n, d))
    return Dataset(x, y, k)
