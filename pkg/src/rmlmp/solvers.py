"""Closed-form and proximal solvers used by every layer of the network.

All matrices are dense ``float64`` numpy arrays with samples along rows.
Regularization follows the ``I/C`` convention throughout: the identity is
scaled by ``1/C`` before being added to a Gram matrix, so a larger ``C``
means *weaker* regularization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
from scipy import special

from .errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

__all__ = [
    "RidgeConfig",
    "SparseConfig",
    "Activation",
    "Thresholds",
    "SvdFactors",
    "IJTInfo",
    "GramState",
    "ridge_solve",
    "gram_absorb",
    "gram_finalize",
    "pinv_reg",
    "orthonormal_random",
    "act_apply",
    "act_inverse",
    "half_thresholds",
    "half_prox",
    "max_eigenvalue",
    "ijt_objective",
    "ijt_solve",
    "l1_ball_project",
    "svd_factors",
    "svd_shrink_solve",
]


def _as_2d(name, a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got ndim={a.ndim}")
    return a


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{name} contains non-finite entries")


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class RidgeConfig:
    """Regularization term ``C`` of a ridge / regularized-pseudoinverse solve."""

    c: float = 4.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"ridge C must be positive and finite, got {self.c!r}")


SPARSE_SOLVERS = ("ijt", "svd_shrink")
SPARSE_OUTPUT_LAYERS = ("ridge", "sparse")


@dataclass(frozen=True)
class SparseConfig:
    """Settings of the l1/2-penalized layer update.

    Parameters
    ----------
    c : float
        Sparsity weight of the ``C * ||eta||_{1/2}^{1/2}`` penalty.
    q : float
        Quasi-norm exponent. Only ``0.5`` is supported by :func:`half_prox`;
        :func:`half_thresholds` accepts any value in ``(0, 1)``.
    mu : float or None
        IJT step size. ``None`` selects ``0.99 / lambda_max(Psi^T Psi)``.
    max_iters, tol : int, float
        IJT stopping rule on the max-abs change between iterates.
    solver : {"ijt", "svd_shrink"}
        Iterative thresholding on the full objective, or the one-shot
        singular-value shrinkage of the feedback matrix.
    output_layer : {"ridge", "sparse"}
        How the classification layer is refit after recomputation.
        ``"sparse"`` runs IJT against the targets (only with ``solver="ijt"``).
    """

    c: float = 1e-3
    q: float = 0.5
    mu: float | None = None
    max_iters: int = 200
    tol: float = 1e-6
    solver: str = "ijt"
    output_layer: str = "ridge"

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"sparse C must be positive and finite, got {self.c!r}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")
        if self.mu is not None and not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.solver not in SPARSE_SOLVERS:
            raise ValueError(f"unknown sparse solver {self.solver!r}; expected one of {SPARSE_SOLVERS}")
        if self.output_layer not in SPARSE_OUTPUT_LAYERS:
            raise ValueError(
                f"unknown output layer mode {self.output_layer!r}; expected one of {SPARSE_OUTPUT_LAYERS}"
            )


ACTIVATIONS = ("sigmoid", "sine")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation and the clip margin used by its inverse."""

    kind: str = "sigmoid"
    eps: float = 1e-6

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {ACTIVATIONS}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps!r}")


class Thresholds(NamedTuple):
    tau: float
    psi: float


class SvdFactors(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


@dataclass
class IJTInfo:
    """Diagnostics of one :func:`ijt_solve` call."""

    mu: float
    n_iter: int = 0
    converged: bool = False
    objective: list = field(default_factory=list)
    # prox inputs mapped to exactly zero in the last iteration
    n_thresholded: int = 0


# ---------------------------------------------------------------------------
# ridge regression and Gram accumulation


def _solve_loaded(gram, rhs, c):
    p = gram.shape[0]
    a = gram + np.eye(p) / c
    try:
        return la.solve(a, rhs, assume_a="pos", check_finite=False)
    except (la.LinAlgError, ValueError):
        # only reachable with extreme magnitudes; fall back to a least-squares solve
        return la.lstsq(a, rhs, check_finite=False)[0]


def ridge_solve(psi, target, cfg: RidgeConfig, batch_size: int | None = None):
    """Solve ``(I/C + Psi^T Psi) W = Psi^T T`` for ``W``.

    Parameters
    ----------
    psi : ndarray, shape (N, p)
        Design matrix (hidden encodings).
    target : ndarray, shape (N, q)
        Right-hand side.
    cfg : RidgeConfig
        Regularization term.
    batch_size : int, optional
        Accumulate the normal equations over contiguous row chunks of this
        size through a :class:`GramState` instead of one product.

    Returns
    -------
    ndarray, shape (p, q)

    Notes
    -----
    When ``N < p`` the algebraically identical dual form
    ``Psi^T (I/C + Psi Psi^T)^{-1} T`` is used, which only factors an
    ``N x N`` matrix.
    """
    psi = _as_2d("psi", psi)
    target = _as_2d("target", target)
    if psi.shape[0] != target.shape[0]:
        raise ShapeError(f"row mismatch: psi has {psi.shape[0]} rows, target has {target.shape[0]}")
    _check_finite("psi", psi)
    _check_finite("target", target)
    n, p = psi.shape
    if batch_size is not None:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        state = GramState(p, target.shape[1])
        for start in range(0, n, batch_size):
            state.absorb(psi[start:start + batch_size], target[start:start + batch_size])
        return state.finalize(cfg)
    if n < p:
        return psi.T @ _solve_loaded(psi @ psi.T, target, cfg.c)
    return _solve_loaded(psi.T @ psi, psi.T @ target, cfg.c)


class GramState:
    """Running sums ``Psi^T Psi`` and ``Psi^T T`` over row batches.

    A state has a single writer. Shards built independently can be combined
    with :meth:`merge`.
    """

    def __init__(self, p: int, q: int):
        if p < 1 or q < 1:
            raise ShapeError("GramState dimensions must be >= 1")
        self.gram = np.zeros((p, p))
        self.cross = np.zeros((p, q))
        self.rows_seen = 0

    @property
    def shape(self):
        return self.cross.shape

    def absorb(self, psi_batch, target_batch):
        psi_batch = _as_2d("psi_batch", psi_batch)
        target_batch = _as_2d("target_batch", target_batch)
        p, q = self.shape
        if psi_batch.shape[1] != p or target_batch.shape[1] != q:
            raise ShapeError(
                f"batch shapes {psi_batch.shape}, {target_batch.shape} do not match state ({p}, {q})"
            )
        if psi_batch.shape[0] != target_batch.shape[0]:
            raise ShapeError("psi_batch and target_batch row counts differ")
        if psi_batch.shape[0] < 1:
            raise ShapeError("empty batch")
        _check_finite("psi_batch", psi_batch)
        _check_finite("target_batch", target_batch)
        self.gram += psi_batch.T @ psi_batch
        self.cross += psi_batch.T @ target_batch
        self.rows_seen += psi_batch.shape[0]
        return self

    def merge(self, other: "GramState"):
        if other.shape != self.shape:
            raise ShapeError("cannot merge Gram states of different shapes")
        self.gram += other.gram
        self.cross += other.cross
        self.rows_seen += other.rows_seen
        return self

    def finalize(self, cfg: RidgeConfig):
        if self.rows_seen < 1:
            raise ShapeError("cannot finalize an empty Gram state")
        _check_finite("accumulated gram", self.gram)
        _check_finite("accumulated cross", self.cross)
        gram = 0.5 * (self.gram + self.gram.T)
        return _solve_loaded(gram, self.cross, cfg.c)


def gram_absorb(state: GramState, psi_batch, target_batch) -> GramState:
    return state.absorb(psi_batch, target_batch)


def gram_finalize(state: GramState, cfg: RidgeConfig):
    return state.finalize(cfg)


def pinv_reg(w, cfg: RidgeConfig):
    """Regularized Moore-Penrose inverse ``(I/C + W^T W)^{-1} W^T``."""
    w = _as_2d("w", w)
    _check_finite("w", w)
    return _solve_loaded(w.T @ w, w.T, cfg.c)


def orthonormal_random(n_in: int, n_hidden: int, seed: int):
    """Seeded Gaussian matrix of shape ``(n_in, n_hidden)``, orthonormalized.

    Columns are orthonormal when ``n_hidden <= n_in``; otherwise ``W^T W = I``
    is infeasible and the rows are made orthonormal instead.
    """
    if n_in < 1 or n_hidden < 1:
        raise ShapeError(f"dimensions must be >= 1, got ({n_in}, {n_hidden})")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_in, n_hidden))
    if n_hidden <= n_in:
        q, _ = np.linalg.qr(g)
        return q
    q, _ = np.linalg.qr(g.T)
    return np.ascontiguousarray(q.T)


# ---------------------------------------------------------------------------
# activations


def act_apply(act: Activation, x):
    x = np.asarray(x, dtype=np.float64)
    _check_finite("activation input", x)
    if act.kind == "sigmoid":
        return special.expit(x)
    return np.sin(x)


def act_inverse(act: Activation, x, return_clipped: bool = False):
    """Inverse activation with out-of-domain entries clipped onto the domain.

    Sigmoid inverts on ``[eps, 1 - eps]``, sine on ``[-1 + eps, 1 - eps]``.
    The number of clipped entries is logged at DEBUG level and, with
    ``return_clipped=True``, returned alongside the result.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite("inverse-activation input", x)
    if act.kind == "sigmoid":
        lo, hi = act.eps, 1.0 - act.eps
    else:
        lo, hi = -1.0 + act.eps, 1.0 - act.eps
    clipped = np.clip(x, lo, hi)
    n_clipped = int(np.count_nonzero((x < lo) | (x > hi)))
    if n_clipped:
        logger.debug("act_inverse clipped %d of %d entries", n_clipped, x.size)
    out = special.logit(clipped) if act.kind == "sigmoid" else np.arcsin(clipped)
    if return_clipped:
        return out, n_clipped
    return out


# ---------------------------------------------------------------------------
# l1/2 proximal machinery


def half_thresholds(cfg: SparseConfig) -> Thresholds:
    """Jump threshold ``tau`` and landing magnitude ``psi`` of the l_q prox."""
    q, c, mu = cfg.q, cfg.c, cfg.mu
    if mu is None:
        raise ValueError("half_thresholds needs an explicit step size mu")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    psi = (c * mu * (1.0 - q)) ** (1.0 / (2.0 - q))
    tau = (2.0 - q) / (2.0 - 2.0 * q) * psi
    return Thresholds(tau=float(tau), psi=float(psi))


def _half_prox(z, weight):
    # argmin_x 1/2 (x - z)^2 + weight * |x|^{1/2}, closed-form half thresholding
    z = np.asarray(z, dtype=np.float64)
    lam = 2.0 * weight
    thresh = 1.5 * weight ** (2.0 / 3.0)
    out = np.zeros_like(z)
    keep = np.abs(z) > thresh
    if np.any(keep):
        zk = z[keep]
        arg = (lam / 8.0) * (np.abs(zk) / 3.0) ** -1.5
        phi = np.arccos(np.minimum(arg, 1.0))
        out[keep] = (2.0 / 3.0) * zk * (1.0 + np.cos(2.0 * np.pi / 3.0 - (2.0 / 3.0) * phi))
    return out, keep


def half_prox(z, cfg: SparseConfig):
    """Proximity operator of ``C * mu * |x|^{1/2}``.

    Returns ``argmin_x 0.5 * (x - z)**2 + C * mu * |x|**0.5`` elementwise.
    Inputs with ``|z| <= tau`` always map to 0, and every nonzero output has
    magnitude at least ``psi`` (see :func:`half_thresholds`).
    """
    if cfg.q != 0.5:
        raise ValueError("half_prox only implements q = 1/2")
    if cfg.mu is None:
        raise ValueError("half_prox needs an explicit step size mu")
    z_arr = np.asarray(z, dtype=np.float64)
    _check_finite("prox input", z_arr)
    out, _ = _half_prox(z_arr, cfg.c * cfg.mu)
    if np.ndim(z) == 0:
        return float(out)
    return out


def max_eigenvalue(psi, n_iter: int = 50, tol: float = 1e-6):
    """Largest eigenvalue of ``psi^T psi`` by power iteration.

    Falls back to a dense symmetric eigensolver when the power iteration has
    not settled to ``tol`` relative change within ``n_iter`` steps.
    """
    psi = _as_2d("psi", psi)
    p = psi.shape[1]
    v = np.random.default_rng(0).standard_normal(p)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(n_iter):
        w = psi.T @ (psi @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= tol * new:
            return new
        est = new
    gram = psi.T @ psi if psi.shape[0] >= p else psi @ psi.T
    k = gram.shape[0]
    return float(la.eigvalsh(gram, subset_by_index=[k - 1, k - 1])[0])


def ijt_objective(psi, p_target, eta, c):
    r = psi @ eta - p_target
    return 0.5 * float(np.sum(r * r)) + c * float(np.sum(np.sqrt(np.abs(eta))))


def ijt_solve(psi, p_target, cfg: SparseConfig, return_info: bool = False):
    """Minimize ``0.5 ||Psi eta - P||_F^2 + C sum |eta|^{1/2}`` by IJT.

    Iterative jumping thresholding: a proximal-gradient step
    ``eta <- prox(eta - mu Psi^T (Psi eta - P))`` with the half-thresholding
    prox, started from ``eta = 0``. The objective is non-increasing for any
    ``mu < 1 / lambda_max(Psi^T Psi)``.

    Parameters
    ----------
    psi : ndarray, shape (N, p)
    p_target : ndarray, shape (N, q)
    cfg : SparseConfig
    return_info : bool
        Also return an :class:`IJTInfo` with the objective history.

    Returns
    -------
    eta : ndarray, shape (p, q)
        Contains exact zeros wherever the prox thresholded.
    """
    psi = _as_2d("psi", psi)
    p_target = _as_2d("p_target", p_target)
    if psi.shape[0] != p_target.shape[0]:
        raise ShapeError(f"row mismatch: psi has {psi.shape[0]} rows, target has {p_target.shape[0]}")
    _check_finite("psi", psi)
    _check_finite("p_target", p_target)
    if cfg.q != 0.5:
        raise ValueError("ijt_solve only implements q = 1/2")

    eta = np.zeros((psi.shape[1], p_target.shape[1]))
    mu = cfg.mu
    if mu is None:
        lmax = max_eigenvalue(psi)
        if lmax == 0.0:
            info = IJTInfo(mu=0.0, converged=True, objective=[ijt_objective(psi, p_target, eta, cfg.c)])
            return (eta, info) if return_info else eta
        mu = 0.99 / lmax
    info = IJTInfo(mu=mu)
    weight = cfg.c * mu
    gram = psi.T @ psi
    cross = psi.T @ p_target
    info.objective.append(ijt_objective(psi, p_target, eta, cfg.c))
    for it in range(1, cfg.max_iters + 1):
        z = eta - mu * (gram @ eta - cross)
        new, keep = _half_prox(z, weight)
        change = float(np.max(np.abs(new - eta))) if new.size else 0.0
        eta = new
        info.n_iter = it
        info.n_thresholded = int(keep.size - np.count_nonzero(keep))
        info.objective.append(ijt_objective(psi, p_target, eta, cfg.c))
        if not np.all(np.isfinite(eta)):
            raise NumericalError("IJT iterate became non-finite; step size too large?")
        if change < cfg.tol:
            info.converged = True
            break
    return (eta, info) if return_info else eta


def l1_ball_project(v, radius: float = 1.0):
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` (sort-and-shift)."""
    v = np.asarray(v, dtype=np.float64)
    _check_finite("v", v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a.ravel())[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, u.size + 1)
    rho = np.nonzero(u - (css - radius) / ks > 0)[0][-1]
    theta = (css[rho] - radius) / (rho + 1)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def svd_factors(m) -> SvdFactors:
    m = _as_2d("matrix", m)
    _check_finite("matrix", m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdFactors(u, s, vt)


def svd_shrink_solve(p_target, cfg: SparseConfig):
    """One-shot singular-value shrinkage of a feedback matrix.

    With ``P = U diag(s) V^T`` returns
    ``U diag(s - sqrt(C) * proj_l1(s / sqrt(C))) V^T``, where ``proj_l1`` is
    the projection onto the unit l1 ball. The result has the shape of ``P``.
    """
    u, s, vt = svd_factors(p_target)
    root_c = np.sqrt(cfg.c)
    shrunk = s - root_c * l1_ball_project(s / root_c)
    return (u * shrunk) @ vt
