import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from rmtportfolio import InputError, SingularMatrixError
from rmtportfolio.moments import (
    ShrinkageConfig,
    WeightProfile,
    centered_weighted_cov,
    effective_T,
    effective_T_basis,
    sample_cov,
    sample_mean,
    shrink_cov,
    shrink_mean,
    weighted_cov,
    weighted_mean,
)

from conftest import random_spd


def test_sample_mean_constant_columns():
    np.testing.assert_array_equal(sample_mean([[1, 1], [2, 2]]), [1.0, 2.0])


def test_sample_mean_repeated_column():
    y = np.array([0.3, -1.2, 4.0])
    np.testing.assert_allclose(sample_mean(np.tile(y[:, None], 7)), y, rtol=1e-15)


def test_sample_mean_matches_loop(rng):
    Y = rng.standard_normal((3, 5))
    expected = [sum(Y[i, n] for n in range(5)) / 5 for i in range(3)]
    np.testing.assert_allclose(sample_mean(Y), expected, rtol=1e-14)


@pytest.mark.parametrize("shape", [(2, 1), (0, 5), (3,)])
def test_returns_shape_rejected(shape):
    with pytest.raises(InputError):
        sample_mean(np.zeros(shape))


def test_non_finite_rejected():
    Y = np.ones((2, 3))
    Y[1, 2] = np.nan
    with pytest.raises(InputError):
        sample_cov(Y)


def test_sample_cov_constant_is_zero():
    np.testing.assert_array_equal(sample_cov(np.full((3, 6), 2.5)), np.zeros((3, 3)))


def test_sample_cov_scalar_closed_form():
    np.testing.assert_allclose(sample_cov([[0.0, 2.0]]), [[1.0]])


def test_sample_cov_loop_oracle(rng):
    Y = rng.standard_normal((4, 50))
    mu = Y.mean(axis=1)
    S = np.zeros((4, 4))
    for n in range(50):
        d = Y[:, n] - mu
        S += np.outer(d, d)
    np.testing.assert_allclose(sample_cov(Y), S / 50, rtol=1e-12, atol=1e-14)


def test_weighted_mean_identity_and_point_mass(rng):
    Y = rng.standard_normal((3, 6))
    np.testing.assert_allclose(weighted_mean(Y, WeightProfile.uniform(6)), sample_mean(Y), rtol=1e-14)
    w = WeightProfile(np.array([6.0, 0, 0, 0, 0, 0]), np.ones(6))
    np.testing.assert_allclose(weighted_mean(Y, w), Y[:, 0], rtol=1e-14)


def test_weighted_mean_loop_oracle(rng):
    N = 9
    Y = rng.standard_normal((3, N))
    w_mu = rng.uniform(0, 2, N)
    w = WeightProfile(w_mu, np.ones(N), rescale=True)
    expected = sum(w.w_mu[n] * Y[:, n] for n in range(N)) / N
    np.testing.assert_allclose(weighted_mean(Y, w), expected, rtol=1e-13)


def test_unnormalized_weights_rejected():
    with pytest.raises(InputError, match="mean"):
        WeightProfile(np.full(4, 1.1), np.ones(4))
    w = WeightProfile(np.full(4, 1.1), np.ones(4), rescale=True)
    assert w.w_mu.mean() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("bad", [np.array([1.0, -0.5, 1.5]), np.array([1.0, np.inf, 1.0])])
def test_invalid_weight_entries(bad):
    with pytest.raises(InputError):
        WeightProfile(np.ones(3), bad)


def test_weighted_cov_identity_weights(rng):
    Y = rng.standard_normal((3, 8))
    np.testing.assert_allclose(weighted_cov(Y, WeightProfile.uniform(8)), sample_cov(Y), rtol=1e-12)


def test_weighted_cov_zero_sigma_weights(rng):
    Y = rng.standard_normal((3, 8))
    w = WeightProfile(np.ones(8), np.zeros(8))
    np.testing.assert_array_equal(weighted_cov(Y, w), np.zeros((3, 3)))


def test_weighted_cov_loop_and_matrix_forms_agree(rng):
    N = 20
    Y = rng.standard_normal((3, N))
    w = WeightProfile(rng.uniform(0, 2, N), rng.uniform(0, 2, N), rescale=True)
    mu_w = weighted_mean(Y, w)
    loop = sum(w.w_sigma[n] * np.outer(Y[:, n] - mu_w, Y[:, n] - mu_w) for n in range(N)) / N
    one = np.ones((N, 1))
    Wm, Ws = np.diag(w.w_mu), np.diag(w.w_sigma)
    matrix = Y @ (np.eye(N) - Wm @ one @ one.T / N) @ Ws @ (np.eye(N) - one @ one.T @ Wm / N) @ Y.T / N
    got = weighted_cov(Y, w)
    np.testing.assert_allclose(got, loop, rtol=1e-12, atol=1e-14)
    # the transposed projector pair in the printed matrix form
    np.testing.assert_allclose(got, matrix.T, rtol=1e-12, atol=1e-14)


def test_centered_weighted_cov_matrix_form(rng):
    N = 12
    Y = rng.standard_normal((4, N))
    w = WeightProfile.bimodal(N, 0.4)
    P = np.eye(N) - 1.0 / N
    np.testing.assert_allclose(
        centered_weighted_cov(Y, w), Y @ P @ np.diag(w.w_sigma) @ P @ Y.T / N, rtol=1e-12, atol=1e-14
    )


def test_shrink_mean_examples():
    cfg0 = ShrinkageConfig(0.1, 0.0, np.array([0.0, 2.0]), np.eye(2))
    cfg1 = ShrinkageConfig(0.1, 1.0, np.array([0.0, 2.0]), np.eye(2))
    cfgh = ShrinkageConfig(0.1, 0.5, np.array([0.0, 2.0]), np.eye(2))
    mu = np.array([2.0, 0.0])
    np.testing.assert_array_equal(shrink_mean(mu, cfg0), mu)
    np.testing.assert_array_equal(shrink_mean(mu, cfg1), [0.0, 2.0])
    np.testing.assert_array_equal(shrink_mean(mu, cfgh), [1.0, 1.0])


def test_shrinkage_config_validation():
    with pytest.raises(InputError):
        ShrinkageConfig.identity_target(3, 1.0)
    with pytest.raises(InputError):
        ShrinkageConfig(0.1, 0.0, np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(InputError):
        ShrinkageConfig(0.1, 0.0, np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    cfg = ShrinkageConfig.identity_target(3, 0.05, delta=0.2)
    assert cfg.alpha == pytest.approx(0.05 / 0.95, rel=1e-15)
    assert cfg.beta == pytest.approx(0.25, rel=1e-15)
    assert ShrinkageConfig.identity_target(3, 0.05, delta=1.0).beta == np.inf


def test_shrink_cov_examples(rng):
    cfg = ShrinkageConfig.identity_target(3, 0.5)
    np.testing.assert_array_equal(shrink_cov(np.zeros((3, 3)), cfg), 0.5 * np.eye(3))
    S = random_spd(rng, 3)
    np.testing.assert_allclose(shrink_cov(S, ShrinkageConfig.identity_target(3, 1e-300)), S, rtol=1e-14)


def test_shrink_cov_rho_elementwise(rng):
    S = random_spd(rng, 5)
    s0 = random_spd(rng, 5)
    cfg = ShrinkageConfig(0.05, 0.0, np.zeros(5), s0)
    out = shrink_cov(S, cfg)
    for i in range(5):
        for j in range(5):
            assert out[i, j] == pytest.approx(0.95 * S[i, j] + 0.05 * s0[i, j], rel=1e-13, abs=1e-15)


def test_shrink_cov_singular_rejected(rng):
    Y = rng.standard_normal((5, 3))
    with pytest.raises(SingularMatrixError):
        shrink_cov(sample_cov(Y), ShrinkageConfig.identity_target(5, 0.0))


def test_effective_T_uniform_is_projector_spectrum():
    t = effective_T(WeightProfile.uniform(10))
    np.testing.assert_allclose(t[:-1], 1.0, rtol=1e-12)
    assert t[-1] == 0.0


def test_effective_T_zero_weights():
    np.testing.assert_array_equal(effective_T(WeightProfile(np.ones(6), np.zeros(6))), np.zeros(6))


def test_effective_T_bimodal_dense_oracle():
    N = 20
    w = WeightProfile.bimodal(N, 0.75)
    assert np.count_nonzero(w.w_sigma == 0.75) == 10 and np.count_nonzero(w.w_sigma == 1.25) == 10
    P = np.eye(N) - np.ones((N, N)) / N
    oracle = np.sort(np.linalg.eigvals(P @ np.diag(w.w_sigma) @ P).real)[::-1]
    t = effective_T(w)
    assert np.all(np.diff(t) <= 0.0)
    np.testing.assert_allclose(t, np.maximum(oracle, 0.0), atol=1e-12)


def test_effective_T_basis_reconstructs(rng):
    N = 15
    w = WeightProfile(np.ones(N), rng.uniform(0, 2, N))
    t, U = effective_T_basis(w)
    P = np.eye(N) - 1.0 / N
    np.testing.assert_allclose((U * t) @ U.T, P @ np.diag(w.w_sigma) @ P, atol=1e-12)


def test_sample_cov_converges_with_N():
    rng = np.random.default_rng(3)
    sigma = random_spd(rng, 4)
    L = np.linalg.cholesky(sigma)
    errs = []
    for N in (20, 200, 2000):
        e = [np.linalg.norm(sample_cov(L @ rng.standard_normal((4, N))) - sigma) for _ in range(30)]
        errs.append(np.median(e))
    assert errs[0] > errs[1] > errs[2]


weights = hnp.arrays(np.float64, st.integers(2, 25), elements=st.floats(0.0, 3.0))


@settings(max_examples=60, deadline=None)
@given(weights)
def test_effective_T_trace_and_sign(w_sigma):
    w = WeightProfile(np.ones(w_sigma.size), w_sigma)
    t = effective_T(w)
    N = w_sigma.size
    P = np.eye(N) - 1.0 / N
    assert np.all(t >= 0.0)
    assert t.sum() == pytest.approx(np.trace(P @ np.diag(w_sigma) @ P), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.floats(1e-3, 0.99), st.integers(0, 2**31))
def test_shrink_cov_eigenvalue_floor(M, rho, seed):
    rng = np.random.default_rng(seed)
    s0 = random_spd(rng, M)
    S = sample_cov(rng.standard_normal((M, 3)))
    cfg = ShrinkageConfig(rho, 0.0, np.zeros(M), s0)
    lam_min = np.linalg.eigvalsh(shrink_cov(S, cfg))[0]
    assert lam_min >= rho * np.linalg.eigvalsh(s0)[0] - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(2, 12), st.integers(0, 2**31))
def test_identity_weights_reduce_to_sample_cov(M, N, seed):
    Y = np.random.default_rng(seed).standard_normal((M, N))
    ref = sample_cov(Y)
    got = weighted_cov(Y, WeightProfile.uniform(N))
    assert np.linalg.norm(got - ref) <= 1e-12 * max(np.linalg.norm(ref), 1e-300)
