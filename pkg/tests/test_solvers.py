import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    best_one_sparse_support,
    dense_inverse_pinv,
    dense_inverse_ridge,
    l1_ball_grid_2d,
    mp_ridge,
    prox_grid,
)
from rmlmp.errors import NumericalError, ShapeError
from rmlmp.solvers import (
    Activation,
    GramState,
    RidgeConfig,
    SparseConfig,
    act_apply,
    act_inverse,
    gram_absorb,
    gram_finalize,
    half_prox,
    half_thresholds,
    ijt_objective,
    ijt_solve,
    l1_ball_project,
    max_eigenvalue,
    orthonormal_random,
    pinv_reg,
    ridge_solve,
    svd_factors,
    svd_shrink_solve,
)


# ---------------------------------------------------------------- ridge


def test_ridge_identity():
    w = ridge_solve(np.eye(2), np.eye(2), RidgeConfig(4.0))
    np.testing.assert_allclose(w, [[0.8, 0.0], [0.0, 0.8]], atol=1e-15)


def test_ridge_zero_target():
    rng = np.random.default_rng(1)
    w = ridge_solve(rng.standard_normal((5, 3)), np.zeros((5, 2)), RidgeConfig(4.0))
    assert w.shape == (3, 2)
    assert np.all(w == 0)


def test_ridge_matches_high_precision_oracle():
    rng = np.random.default_rng(7)
    psi = rng.standard_normal((6, 3))
    t = rng.standard_normal((6, 2))
    w = ridge_solve(psi, t, RidgeConfig(10.0))
    np.testing.assert_allclose(w, mp_ridge(psi, t, 10.0), rtol=0, atol=1e-9)


@pytest.mark.parametrize("n,p", [(40, 7), (5, 12)])
def test_ridge_normal_equation_residual(n, p):
    rng = np.random.default_rng(n * p)
    psi = rng.standard_normal((n, p))
    t = rng.standard_normal((n, 3))
    c = 4.0
    w = ridge_solve(psi, t, RidgeConfig(c))
    resid = (np.eye(p) / c + psi.T @ psi) @ w - psi.T @ t
    assert np.linalg.norm(resid) / max(1.0, np.linalg.norm(psi.T @ t)) < 1e-8


def test_ridge_errors():
    with pytest.raises(ShapeError):
        ridge_solve(np.ones((3, 2)), np.ones((4, 1)), RidgeConfig())
    with pytest.raises(NumericalError):
        ridge_solve(np.array([[np.nan, 1.0]]), np.ones((1, 1)), RidgeConfig())
    with pytest.raises(ValueError):
        RidgeConfig(0.0)
    with pytest.raises(ValueError):
        RidgeConfig(-1.0)


# ---------------------------------------------------------------- gram


def test_gram_single_batch_equals_ridge():
    rng = np.random.default_rng(2)
    psi, t = rng.standard_normal((9, 4)), rng.standard_normal((9, 2))
    st_ = gram_absorb(GramState(4, 2), psi, t)
    np.testing.assert_allclose(gram_finalize(st_, RidgeConfig(3.0)), ridge_solve(psi, t, RidgeConfig(3.0)), atol=1e-12)


def test_gram_duplicate_batch_equals_doubled_rows():
    rng = np.random.default_rng(3)
    psi, t = rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
    s = GramState(3, 2).absorb(psi, t).absorb(psi, t)
    assert s.rows_seen == 12
    doubled = ridge_solve(np.vstack([psi, psi]), np.vstack([t, t]), RidgeConfig(4.0))
    np.testing.assert_allclose(s.finalize(RidgeConfig(4.0)), doubled, atol=1e-12)


def test_gram_split_3_3_4_matches_one_shot():
    rng = np.random.default_rng(4)
    psi, t = rng.standard_normal((10, 4)), rng.standard_normal((10, 3))
    s = GramState(4, 3)
    for a, b in [(0, 3), (3, 6), (6, 10)]:
        s.absorb(psi[a:b], t[a:b])
    assert np.max(np.abs(s.gram - s.gram.T)) < 1e-10
    np.testing.assert_allclose(s.finalize(RidgeConfig(4.0)), ridge_solve(psi, t, RidgeConfig(4.0)), rtol=0, atol=1e-10)


def test_gram_merge_shards():
    rng = np.random.default_rng(5)
    psi, t = rng.standard_normal((12, 3)), rng.standard_normal((12, 2))
    a = GramState(3, 2).absorb(psi[:5], t[:5])
    b = GramState(3, 2).absorb(psi[5:], t[5:])
    np.testing.assert_allclose(a.merge(b).finalize(RidgeConfig()), ridge_solve(psi, t, RidgeConfig()), atol=1e-12)


def test_gram_errors():
    s = GramState(3, 2)
    with pytest.raises(ShapeError):
        s.finalize(RidgeConfig())
    with pytest.raises(ShapeError):
        s.absorb(np.ones((2, 4)), np.ones((2, 2)))
    with pytest.raises(NumericalError):
        s.absorb(np.full((2, 3), np.inf), np.ones((2, 2)))


def test_ridge_batch_size_path():
    rng = np.random.default_rng(6)
    psi, t = rng.standard_normal((17, 5)), rng.standard_normal((17, 2))
    np.testing.assert_allclose(
        ridge_solve(psi, t, RidgeConfig(), batch_size=4), ridge_solve(psi, t, RidgeConfig()), atol=1e-10
    )


# ---------------------------------------------------------------- pinv


def test_pinv_identity_large_c():
    np.testing.assert_allclose(pinv_reg(np.eye(3), RidgeConfig(1e12)), np.eye(3), atol=1e-6)


def test_pinv_zero():
    assert np.all(pinv_reg(np.zeros((4, 3)), RidgeConfig()) == 0)


def test_pinv_matches_oracle():
    w = np.random.default_rng(8).standard_normal((4, 3))
    np.testing.assert_allclose(pinv_reg(w, RidgeConfig(4.0)), dense_inverse_pinv(w, 4.0), rtol=0, atol=1e-10)


def test_pinv_converges_to_left_inverse():
    w = np.random.default_rng(9).standard_normal((7, 4))
    np.testing.assert_allclose(pinv_reg(w, RidgeConfig(1e12)) @ w, np.eye(4), atol=1e-5)
    np.testing.assert_allclose(pinv_reg(w, RidgeConfig(1e12)), np.linalg.pinv(w), atol=1e-6)


# ---------------------------------------------------------------- init


def test_orthonormal_tall():
    w = orthonormal_random(8, 4, seed=0)
    assert w.shape == (8, 4)
    np.testing.assert_allclose(w.T @ w, np.eye(4), atol=1e-10)


def test_orthonormal_wide():
    w = orthonormal_random(4, 8, seed=0)
    assert w.shape == (4, 8)
    np.testing.assert_allclose(w @ w.T, np.eye(4), atol=1e-10)


def test_orthonormal_deterministic():
    assert np.array_equal(orthonormal_random(6, 3, 42), orthonormal_random(6, 3, 42))
    assert not np.array_equal(orthonormal_random(6, 3, 42), orthonormal_random(6, 3, 43))


def test_orthonormal_rejects_zero_dims():
    with pytest.raises(ShapeError):
        orthonormal_random(0, 3, 0)


# ---------------------------------------------------------------- activations

SIG = Activation("sigmoid")
SINE = Activation("sine")


def test_activation_values():
    assert act_apply(SIG, np.array(0.0)) == 0.5
    assert act_apply(SINE, np.array(0.0)) == 0.0
    assert act_apply(SIG, np.array(10.0)) == pytest.approx(0.9999546, abs=1e-7)


def test_sigmoid_inverse():
    assert act_inverse(SIG, np.array(0.5)) == 0.0
    x = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(act_inverse(SIG, act_apply(SIG, x)), x, atol=1e-9)
    y, n = act_inverse(SIG, np.array([1.0]), return_clipped=True)
    assert n == 1
    assert y[0] == pytest.approx(13.8155, abs=1e-4)


def test_sine_inverse_roundtrip_and_clip():
    x = np.linspace(-1.5, 1.5, 61)
    np.testing.assert_allclose(act_inverse(SINE, act_apply(SINE, x)), x, atol=1e-9)
    y, n = act_inverse(SINE, np.array([-3.0, 0.2, 3.0]), return_clipped=True)
    assert n == 2
    assert y[0] == pytest.approx(np.arcsin(-1 + 1e-6))


def test_activation_validation():
    with pytest.raises(ValueError):
        Activation("relu")
    with pytest.raises(ValueError):
        Activation("sigmoid", eps=0.0)


# ---------------------------------------------------------------- thresholds and prox


def test_half_thresholds_values():
    th = half_thresholds(SparseConfig(c=1.0, mu=1.0))
    assert th.psi == pytest.approx(0.629961, abs=1e-6)
    assert th.tau == pytest.approx(0.944941, abs=1e-6)
    th = half_thresholds(SparseConfig(c=4.0, mu=1.0))
    assert th.psi == pytest.approx(1.587401, abs=1e-6)
    assert th.tau == pytest.approx(2.381102, abs=1e-6)


@given(
    st.floats(0.01, 0.99),
    st.floats(1e-3, 1e2),
    st.floats(1e-3, 10.0),
)
def test_threshold_ordering(q, c, mu):
    th = half_thresholds(SparseConfig(c=c, q=q, mu=mu))
    assert th.tau >= th.psi >= 0


def test_half_prox_examples():
    cfg = SparseConfig(c=1.0, mu=1.0)
    assert half_prox(0.0, cfg) == 0.0
    assert half_prox(0.9, cfg) == 0.0
    x = half_prox(2.0, cfg)
    assert x == pytest.approx(1.605, abs=1e-3)
    assert x == pytest.approx(prox_grid(2.0, 1.0), abs=1e-3)
    # stationarity of the nonzero branch
    assert 2.0 == pytest.approx(x + 0.5 * x ** -0.5, abs=1e-12)
    assert half_prox(-2.0, cfg) == pytest.approx(-x, abs=1e-15)


def test_half_prox_rejects_other_q():
    with pytest.raises(ValueError):
        half_prox(1.0, SparseConfig(c=1, q=0.3, mu=1))


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-2, 5.0), st.floats(1e-2, 2.0))
def test_half_prox_optimal_and_in_range(z, c, mu):
    cfg = SparseConfig(c=c, mu=mu)
    x = half_prox(z, cfg)
    th = half_thresholds(cfg)
    assert (x == 0.0) != (abs(x) >= th.psi)
    if abs(z) <= th.tau:
        assert x == 0.0
    w = c * mu
    f = lambda v: 0.5 * (v - z) ** 2 + w * np.sqrt(abs(v))
    # never beaten by the zero candidate or a dense grid, and within grid resolution
    ref = prox_grid(z, w, step=1e-3)
    assert f(x) <= f(ref) + 1e-9
    assert f(x) <= f(0.0) + 1e-12


# ---------------------------------------------------------------- IJT


def test_max_eigenvalue():
    psi = np.random.default_rng(10).standard_normal((20, 6))
    exact = np.linalg.eigvalsh(psi.T @ psi)[-1]
    assert max_eigenvalue(psi) == pytest.approx(exact, rel=1e-5)
    assert max_eigenvalue(np.zeros((3, 2))) == 0.0


def test_ijt_zero_target():
    psi = np.random.default_rng(11).standard_normal((8, 4))
    assert np.all(ijt_solve(psi, np.zeros((8, 2)), SparseConfig(c=0.1)) == 0)


def test_ijt_zero_matrix_returns_zeros():
    eta, info = ijt_solve(np.zeros((5, 3)), np.ones((5, 2)), SparseConfig(c=0.1), return_info=True)
    assert np.all(eta == 0) and info.converged


def test_ijt_full_thresholding():
    rng = np.random.default_rng(12)
    psi, p = rng.standard_normal((8, 4)), rng.standard_normal((8, 2))
    mu = 0.99 / np.linalg.eigvalsh(psi.T @ psi)[-1]
    zmax = np.max(np.abs(mu * psi.T @ p))
    # tau > max |prox input| at the first step keeps eta at the zero fixed point
    c = 2 * (2 * zmax / 1.5) ** 1.5 / mu
    assert half_thresholds(SparseConfig(c=c, mu=mu)).tau > zmax
    assert np.all(ijt_solve(psi, p, SparseConfig(c=c, mu=mu)) == 0)


def _unit_columns(rng, n, p):
    psi = rng.standard_normal((n, p))
    return psi / np.linalg.norm(psi, axis=0)


def test_ijt_recovers_one_sparse_support():
    rng = np.random.default_rng(13)
    psi = _unit_columns(rng, 8, 4)
    eta0 = np.zeros((4, 1))
    eta0[2] = 2.0
    p = psi @ eta0
    eta, info = ijt_solve(psi, p, SparseConfig(c=1e-3, max_iters=2000, tol=1e-10), return_info=True)
    assert best_one_sparse_support(psi, p) == 2
    assert set(np.flatnonzero(eta[:, 0])) == {2}
    assert eta[2, 0] == pytest.approx(2.0, abs=1e-2)
    assert np.all(np.diff(info.objective) <= 1e-8)


def test_ijt_objective_monotone_dense_problem():
    rng = np.random.default_rng(14)
    psi, p = rng.standard_normal((30, 10)), rng.standard_normal((30, 3))
    eta, info = ijt_solve(psi, p, SparseConfig(c=0.5, max_iters=300), return_info=True)
    obj = np.array(info.objective)
    assert np.all(np.diff(obj) <= 1e-8)
    assert obj[-1] == pytest.approx(ijt_objective(psi, p, eta, 0.5))
    assert np.any(eta == 0) and np.any(eta != 0)


def test_ijt_shape_errors():
    with pytest.raises(ShapeError):
        ijt_solve(np.ones((3, 2)), np.ones((4, 1)), SparseConfig())


# ---------------------------------------------------------------- l1 ball and SVD shrinkage


def test_l1_project_feasible_unchanged():
    v = np.array([0.2, -0.3, 0.1])
    assert np.array_equal(l1_ball_project(v), v)


@pytest.mark.parametrize("v,expected", [((1.5, 0.5), (1.0, 0.0)), ((0.6, -0.6), (0.5, -0.5))])
def test_l1_project_examples(v, expected):
    v = np.array(v)
    np.testing.assert_allclose(l1_ball_project(v), expected, atol=1e-12)
    np.testing.assert_allclose(l1_ball_grid_2d(v), expected, atol=2e-3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_l1_project_properties(vals):
    v = np.array(vals)
    x = l1_ball_project(v)
    assert np.sum(np.abs(x)) <= 1 + 1e-12
    assert np.all((x == 0) | (np.sign(x) == np.sign(v)))
    np.testing.assert_allclose(l1_ball_project(x), x, atol=1e-12)


def test_svd_shrink_examples():
    cfg = SparseConfig(c=4.0)
    np.testing.assert_allclose(svd_shrink_solve(np.diag([3.0, 1.0]), cfg), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(svd_shrink_solve(np.diag([0.5, 0.3]), cfg), np.zeros((2, 2)), atol=1e-12)
    assert np.all(svd_shrink_solve(np.zeros((3, 2)), cfg) == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1), st.floats(0.1, 20))
def test_svd_factors_and_shrink_spectrum(n, m, seed, c):
    p = np.random.default_rng(seed).standard_normal((n, m))
    u, s, vt = svd_factors(p)
    k = min(n, m)
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-8)
    np.testing.assert_allclose(vt @ vt.T, np.eye(k), atol=1e-8)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    np.testing.assert_allclose((u * s) @ vt, p, atol=1e-8 * max(1.0, np.linalg.norm(p)))
    out = svd_shrink_solve(p, SparseConfig(c=c))
    expected = s - np.sqrt(c) * l1_ball_project(s / np.sqrt(c))
    np.testing.assert_allclose(np.linalg.svd(out, compute_uv=False), np.sort(expected)[::-1], atol=1e-8)
