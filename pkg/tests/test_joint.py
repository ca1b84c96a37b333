import numpy as np
import pytest

import comphyp.joint as joint_mod
from comphyp.core import PValueMatrix, config_bits, product_weights
from comphyp.errors import InvalidArgumentError, InvalidDataError
from comphyp.joint import (
    build_log_densities,
    e_step_posteriors,
    em_fit,
    fit_joint,
)
from comphyp.marginal import kde_fixed_point
from oracles import em_probability_space

LOG_STD_NORMAL_AT_0 = -0.9189385332046727


def _toy_marginals(n_points=60, seed=0):
    rng = np.random.default_rng(seed)
    fits = []
    for shift in (1.5, 2.5):
        x = np.concatenate(
            [rng.standard_normal(n_points), rng.normal(shift, 1.0, n_points)]
        )
        fits.append(kde_fixed_point(x, pi0=0.5, bandwidth=0.5))
    return fits


def _random_logf(n, q, seed=0, spread=2.0):
    """Synthetic log densities with well-behaved magnitudes."""
    rng = np.random.default_rng(seed)
    logf = rng.normal(-1.0, 0.5, size=(n, q, 2))
    logf[:, :, 1] += rng.normal(0.0, spread, size=(n, q))
    return logf


def test_build_log_densities_null_at_zero():
    fits = _toy_marginals()
    scores = np.zeros((4, 2))
    logf = build_log_densities(fits, scores)
    assert logf.shape == (4, 2, 2)
    np.testing.assert_allclose(logf[:, :, 0], LOG_STD_NORMAL_AT_0, rtol=1e-12)


def test_build_log_densities_floor_off_grid():
    fits = _toy_marginals()
    far = fits[0].grid[-1] + 50.0
    scores = np.array([[far, 0.0], [0.0, far]])
    logf = build_log_densities(fits, scores)
    assert logf[0, 0, 1] == pytest.approx(np.log(1e-300))
    assert np.isfinite(logf).all()


def test_build_log_densities_product_form():
    # log gamma for the all-null configuration is the sum of null logs
    fits = _toy_marginals()
    scores = np.zeros((1, 2))
    logf = build_log_densities(fits, scores)
    log_gamma_null = logf[0, :, 0].sum()
    assert log_gamma_null == pytest.approx(2 * LOG_STD_NORMAL_AT_0, rel=1e-12)
    assert np.exp(log_gamma_null) == pytest.approx(1.0 / (2.0 * np.pi), rel=1e-12)


def test_build_log_densities_shape_mismatch():
    fits = _toy_marginals()
    with pytest.raises(InvalidArgumentError):
        build_log_densities(fits, np.zeros((4, 3)))
    with pytest.raises(InvalidArgumentError):
        build_log_densities(fits, np.zeros(4))


def test_em_identical_components_keeps_init():
    # g1 == f0 makes every item uninformative: posteriors equal the
    # weights and the M-step is a fixed point
    n = 40
    logf = np.empty((n, 1, 2))
    logf[:, 0, 0] = np.linspace(-2.0, -0.5, n)
    logf[:, 0, 1] = logf[:, 0, 0]
    init = np.array([0.3, 0.7])
    fit = em_fit(logf, init=init)
    np.testing.assert_allclose(fit.weights, init, atol=1e-12)
    np.testing.assert_allclose(fit.posteriors, np.tile(init, (n, 1)), atol=1e-12)
    assert fit.converged


def test_em_matches_probability_space_oracle():
    for seed in range(6):
        n, q = 6, 2
        logf = _random_logf(n, q, seed=seed)
        bits = config_bits(q)
        # dense linear-space component densities for the oracle
        dens = np.exp(
            np.array(
                [[logf[i, np.arange(q), bits[c]].sum() for c in range(4)] for i in range(n)]
            )
        )
        w0 = np.full(4, 0.25)
        w_ref, post_ref, trace_ref, conv_ref = em_probability_space(dens, w0)
        fit = em_fit(logf, init="uniform")
        assert fit.converged == conv_ref
        assert fit.n_iter == trace_ref.size
        np.testing.assert_allclose(fit.weights, w_ref, atol=1e-6)
        np.testing.assert_allclose(fit.posteriors, post_ref, atol=1e-6)
        np.testing.assert_allclose(fit.loglik_trace, trace_ref, rtol=1e-9)


def test_em_oracle_q3():
    n, q = 50, 3
    logf = _random_logf(n, q, seed=11, spread=1.5)
    bits = config_bits(q)
    dens = np.exp(
        np.array(
            [[logf[i, np.arange(q), bits[c]].sum() for c in range(8)] for i in range(n)]
        )
    )
    pi0s = [0.6, 0.7, 0.8]
    w0 = product_weights(pi0s)
    w_ref, post_ref, _, _ = em_probability_space(dens, w0)
    fit = em_fit(logf, init="product", pi0s=pi0s)
    np.testing.assert_allclose(fit.weights, w_ref, atol=1e-6)
    np.testing.assert_allclose(fit.posteriors, post_ref, atol=1e-6)


def test_em_hand_computed_estep():
    # one E-step with fixed weights, checked against a direct recompute
    n, q = 3, 2
    logf = _random_logf(n, q, seed=3)
    w = np.array([0.4, 0.3, 0.2, 0.1])
    post = e_step_posteriors(logf, w)
    bits = config_bits(q)
    for i in range(n):
        gam = np.exp([logf[i, np.arange(q), bits[c]].sum() for c in range(4)])
        expected = w * gam / (w * gam).sum()
        np.testing.assert_allclose(post[i], expected, rtol=1e-10)


def test_em_trace_monotone_and_normalized():
    logf = _random_logf(400, 3, seed=21)
    fit = em_fit(logf, init="uniform")
    drops = np.diff(fit.loglik_trace)
    assert (drops >= -1e-8).all()
    np.testing.assert_allclose(fit.posteriors.sum(axis=1), 1.0, atol=1e-8)
    assert abs(fit.weights.sum() - 1.0) < 1e-10
    assert (fit.weights >= 0).all()


def test_em_uniform_init_trace_start():
    # the first trace entry is the log-likelihood at the init weights
    logf = _random_logf(30, 2, seed=9)
    fit = em_fit(logf, init="uniform", max_iter=1)
    bits = config_bits(2)
    dens = np.exp(
        np.array(
            [[logf[i, np.arange(2), bits[c]].sum() for c in range(4)] for i in range(30)]
        )
    )
    expected = float(np.log((dens * 0.25).sum(axis=1)).sum())
    assert fit.loglik_trace[0] == pytest.approx(expected, rel=1e-12)
    assert not fit.converged
    assert fit.n_iter == 1


def test_em_init_validation():
    logf = _random_logf(10, 2, seed=1)
    with pytest.raises(InvalidArgumentError, match="requires per-test pi0"):
        em_fit(logf, init="product")
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, init="bogus")
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, init=np.array([0.5, 0.5, 0.5, 0.5]) * 2)
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, init=np.array([0.5, 0.5]))
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, init=np.array([-0.1, 0.6, 0.3, 0.2]))
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, tol=0.0)
    with pytest.raises(InvalidArgumentError):
        em_fit(logf, max_iter=0)


def test_em_float32_regime_agrees(monkeypatch):
    logf = _random_logf(500, 2, seed=13)
    fit64 = em_fit(logf, init="uniform")
    monkeypatch.setattr(joint_mod, "FLOAT32_CELL_LIMIT", 100)
    fit32 = em_fit(logf, init="uniform")
    assert fit32.posteriors.dtype == np.float32
    assert fit64.posteriors.dtype == np.float64
    np.testing.assert_allclose(fit32.weights, fit64.weights, atol=1e-4)
    np.testing.assert_allclose(fit32.posteriors.sum(axis=1), 1.0, atol=1e-5)


def test_em_chunked_build_matches_single_chunk(monkeypatch):
    logf = _random_logf(200, 3, seed=17)
    fit_one = em_fit(logf, init="uniform")
    monkeypatch.setattr(joint_mod, "_CHUNK_CELLS", 64)
    fit_many = em_fit(logf, init="uniform")
    np.testing.assert_allclose(fit_one.weights, fit_many.weights, atol=1e-12)
    np.testing.assert_allclose(fit_one.posteriors, fit_many.posteriors, atol=1e-12)


def test_permutation_equivariance():
    rng = np.random.default_rng(29)
    n, q = 600, 3
    pv = rng.uniform(size=(n, q)) ** np.array([1.0, 2.0, 4.0])
    ids = np.array([f"i{k}" for k in range(n)])
    perm = [2, 0, 1]
    model = fit_joint(PValueMatrix(item_ids=ids, values=pv))
    model_p = fit_joint(PValueMatrix(item_ids=ids, values=pv[:, perm]))
    # transport configuration indices through the column permutation:
    # original config k has bits b, and the permuted model sees it as
    # the config with bits b[perm]
    bits = config_bits(q)
    powers = 2 ** np.arange(q - 1, -1, -1)
    mapping = bits[:, perm] @ powers
    np.testing.assert_allclose(model.weights, model_p.weights[mapping], atol=1e-8)
    np.testing.assert_allclose(
        model.posteriors, model_p.posteriors[:, mapping], atol=1e-8
    )


def test_fit_joint_uniform_pvalues_all_null():
    rng = np.random.default_rng(31)
    pv = rng.uniform(size=(10_000, 2))
    ids = np.array([f"i{k}" for k in range(10_000)])
    model = fit_joint(PValueMatrix(item_ids=ids, values=pv))
    assert model.weights[0] >= 0.9
    assert model.q == 2
    assert model.n == 10_000
    assert model.joint.converged


def test_fit_joint_recovers_structure():
    # two informative columns: the all-alternative weight should be
    # recovered within a few percent
    rng = np.random.default_rng(37)
    n = 5_000
    w_true = np.array([0.7, 0.1, 0.1, 0.1])
    z = rng.choice(4, size=n, p=w_true)
    bits = config_bits(2)[z]
    t = rng.standard_normal((n, 2)) + bits * 2.5
    from scipy.special import ndtr

    pv = ndtr(-t)
    ids = np.array([f"i{k}" for k in range(n)])
    model = fit_joint(PValueMatrix(item_ids=ids, values=pv))
    np.testing.assert_allclose(model.weights, w_true, atol=0.04)


def test_fit_joint_empty_columns_rejected():
    with pytest.raises(InvalidDataError):
        PValueMatrix(item_ids=np.array([]), values=np.empty((0, 0)))


def test_e_step_matches_final_em_posteriors():
    logf = _random_logf(80, 2, seed=41)
    fit = em_fit(logf, init="uniform")
    post = e_step_posteriors(logf, fit.weights)
    np.testing.assert_allclose(post, fit.posteriors, atol=1e-12)


def test_e_step_weight_shape_check():
    logf = _random_logf(10, 2, seed=43)
    with pytest.raises(InvalidArgumentError):
        e_step_posteriors(logf, np.array([0.5, 0.5]))


def test_jointfit_q_property():
    logf = _random_logf(12, 3, seed=47)
    fit = em_fit(logf, init="uniform")
    assert fit.q == 3
    assert fit.n == 12
