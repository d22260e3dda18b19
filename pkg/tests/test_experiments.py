import math

import mpmath
import numpy as np
import pytest

from pacbound.core import Dataset, LossSpec, empirical_risk, envelope, losses
from pacbound.errors import ConvergenceError, DimensionError, InvalidInputError
from pacbound.experiments import (
    CoverageTrial,
    LinRegConfig,
    LogisticMode,
    LogRegConfig,
    crossed_mean,
    derive_rng,
    fit_linreg,
    fit_logistic,
    gen_linreg_data,
    gen_logistic_data,
    linreg_coverage_builder,
    linreg_targets,
    logistic_gradient,
    logistic_objective,
    logistic_true_risk,
    normalize_trick,
    pi_digits,
    posterior_risk_table,
    run_linreg_experiment,
    run_logistic_experiment,
    verify_bound_coverage,
)
from pacbound.gaussian import IsotropicGaussian, McEstimate, kl_isotropic, mc_expect


# ---------------------------------------------------------------- linear regression data

def test_linreg_config_derived_constants():
    cfg = LinRegConfig(d=9)
    assert cfg.B == 30.0 and cfg.C == pytest.approx(math.sqrt(900))
    assert cfg.sigma0_sq(0.25, 16) == pytest.approx(0.5 * 4 / 900)


def test_linreg_data_in_range():
    cfg = LinRegConfig(d=7, m=500)
    data, h_star = gen_linreg_data(cfg, 0)
    assert np.linalg.norm(h_star) <= cfg.c * math.sqrt(cfg.d)
    assert np.all(np.linalg.norm(data.X, axis=1) <= cfg.e * math.sqrt(cfg.d))
    assert np.all(data.y >= 0) and data.y.max() <= cfg.C


def test_linreg_target_example():
    assert linreg_targets(np.array([4.0]), np.array([[1.0]]))[0] == 2.0
    assert linreg_targets(np.array([4.0]), np.array([[-1.0]]))[0] == 0.0


def test_linreg_envelope_scan():
    cfg = LinRegConfig(d=6, m=200)
    data, _ = gen_linreg_data(cfg, 1)
    H = np.random.default_rng(2).normal(0, 5, (10_000, 6))
    assert np.all(losses(cfg.loss, H, data.X, data.y).max(axis=1) <= envelope(cfg.loss, H))


def test_fit_linreg_exact_recovery():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 5))
    h0 = rng.normal(size=5)
    assert np.allclose(fit_linreg(Dataset(X, X @ h0)), h0, atol=1e-8, rtol=0)
    assert fit_linreg(Dataset(np.array([[1.0], [2.0]]), np.array([1.0, 2.0])))[0] == pytest.approx(1.0, abs=1e-8)


def test_fit_linreg_residual_minimal():
    cfg = LinRegConfig(d=8, m=120)
    data, _ = gen_linreg_data(cfg, 4)
    h_hat = fit_linreg(data)
    best = np.linalg.norm(data.X @ h_hat - data.y)
    for h in np.random.default_rng(5).normal(0, 1, (100, 8)):
        assert best <= np.linalg.norm(data.X @ h - data.y) + 1e-6


def _l1_improvement_rate(data, seed):
    """Share of radius-0.1 perturbations of the OLS fit with no smaller absolute risk."""
    h_hat = fit_linreg(data)
    spec = LossSpec.absolute_linear(1.0, 1.0)
    dirs = np.random.default_rng(seed).normal(size=(1000, data.d))
    perturbed = h_hat + 0.1 * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.mean(empirical_risk(spec, h_hat, data) <= empirical_risk(spec, perturbed, data))


def test_fit_linreg_l1_spot_check_symmetric_noise():
    rng = np.random.default_rng(7)
    X = rng.normal(0, 5, (200, 8))
    data = Dataset(X, X @ rng.normal(size=8) + rng.normal(size=200))
    assert _l1_improvement_rate(data, 8) >= 0.95


@pytest.mark.xfail(strict=True, reason="OLS is not a local L1 minimiser under the clamped square-root targets; "
                                       "see the decisions ledger")
def test_fit_linreg_l1_spot_check_linreg_law():
    data, _ = gen_linreg_data(LinRegConfig(d=8, m=200), 6)
    assert _l1_improvement_rate(data, 7) >= 0.95


# ---------------------------------------------------------------- logistic data

def test_pi_digits_against_mpmath():
    mpmath.mp.dps = 60
    reference = mpmath.nstr(mpmath.pi, 55, strip_zeros=False).replace(".", "")
    assert "".join(str(int(v)) for v in pi_digits(50)) == reference[:50]
    assert tuple(pi_digits(10)) == (3, 1, 4, 1, 5, 9, 2, 6, 5, 3)
    with pytest.raises(InvalidInputError):
        pi_digits(51)


def test_logistic_labels():
    cfg = LogRegConfig(d=10, m=10_000)
    data, h_star = gen_logistic_data(cfg, 0)
    assert set(np.unique(data.y)) <= {0.0, 1.0}
    assert 0.45 <= data.y.mean() <= 0.55
    assert losses(cfg.loss, h_star, h_star[None, :], np.array([1.0]))[0] == 0.0


def test_logreg_config_validation():
    with pytest.raises(InvalidInputError):
        LogRegConfig(lam=0.0)


def test_fit_logistic_separable_1d():
    data = Dataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([0.0, 0.0, 1.0, 1.0]))
    h = fit_logistic(data, 0.01)
    assert np.isfinite(h).all() and h[0] > 0
    assert np.linalg.norm(logistic_gradient(h, data, 0.01)) <= 1e-6


def test_fit_logistic_gradient_matches_finite_differences():
    cfg = LogRegConfig(d=5, m=80)
    data, _ = gen_logistic_data(cfg, 1)
    h = fit_logistic(data, 0.01)
    probe = h + np.random.default_rng(0).normal(0, 0.3, 5)
    g = logistic_gradient(probe, data, 0.01)
    eps = 1e-6
    fd = np.array([(logistic_objective(probe + eps * e, data, 0.01) - logistic_objective(probe - eps * e, data, 0.01))
                   / (2 * eps) for e in np.eye(5)])
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-9)


def test_fit_logistic_strong_regulariser_and_objective():
    cfg = LogRegConfig(d=4, m=60)
    data, _ = gen_logistic_data(cfg, 2)
    assert np.linalg.norm(fit_logistic(data, 1e4)) < 1e-4
    h = fit_logistic(data, 0.01)
    assert logistic_objective(h, data, 0.01) <= logistic_objective(np.zeros(4), data, 0.01)


def test_fit_logistic_convergence_error():
    data, _ = gen_logistic_data(LogRegConfig(d=3, m=50), 3)
    with pytest.raises(ConvergenceError) as info:
        fit_logistic(data, 0.01, max_iter=1)
    assert info.value.grad_norm > 1e-6


def test_normalize_trick():
    assert np.allclose(normalize_trick(np.array([3.0, 4.0])), [0.6, 0.8])
    with pytest.raises(InvalidInputError):
        normalize_trick(np.zeros(3))
    rng = np.random.default_rng(4)
    spec = LossSpec.zero_one()
    H = rng.normal(size=(1000, 3))
    X = rng.normal(size=(1000, 3))
    y = rng.integers(0, 2, 1000).astype(float)
    unit = H / np.linalg.norm(H, axis=1, keepdims=True)
    assert np.array_equal(np.abs((np.einsum("ij,ij->i", H, X) > 0) - y),
                          np.abs((np.einsum("ij,ij->i", unit, X) > 0) - y))
    assert np.allclose(np.linalg.norm(unit, axis=1), 1.0)


def test_normalize_shrinks_kl():
    rng = np.random.default_rng(5)
    p0 = IsotropicGaussian.centered(4, 0.5)
    for _ in range(100):
        h = rng.normal(0, 3, 4)
        if np.linalg.norm(h) <= 1:
            continue
        for var in (0.01, 0.5):
            assert kl_isotropic(IsotropicGaussian(normalize_trick(h), var), p0) <= \
                kl_isotropic(IsotropicGaussian(h, var), p0)


# ---------------------------------------------------------------- Monte-Carlo helpers

def test_posterior_risk_table_matches_direct_mc():
    cfg = LinRegConfig(d=6, m=40)
    data, _ = gen_linreg_data(cfg, 8)
    mean = fit_linreg(data)
    table = posterior_risk_table(cfg.loss, data, mean, [0.01, 0.1], 20_000, 9)
    for v, est in table.items():
        ref = mc_expect(IsotropicGaussian(mean, v), lambda H: empirical_risk(cfg.loss, H, data), 20_000, 10,
                        batched=True)
        assert abs(est.value - ref.value) <= 4 * math.hypot(est.std_error, ref.std_error)


def test_posterior_risk_table_zero_one():
    data, h_star = gen_logistic_data(LogRegConfig(d=3, m=50), 0)
    spec = LossSpec.zero_one()
    table = posterior_risk_table(spec, data, h_star, [1e-12], 100, 1)
    assert table[1e-12].value == pytest.approx(empirical_risk(spec, h_star, data), abs=1e-12)


def test_crossed_mean():
    L = np.arange(12.0).reshape(3, 4)
    est = crossed_mean(L)
    assert est.value == 5.5 and est.n == 12 and est.std_error > 0


def test_logistic_true_risk_angle():
    h_star = np.array([1.0, 0.0])
    q = IsotropicGaussian(np.array([0.0, 1.0]), 1e-12)
    assert logistic_true_risk(q, h_star, 10, 0).value == pytest.approx(0.5, abs=1e-6)


def test_derive_rng_independent_streams():
    a = derive_rng(1, 100, 0).random(3)
    assert np.array_equal(a, derive_rng(1, 100, 0).random(3))
    assert not np.array_equal(a, derive_rng(1, 100, 1).random(3))
    assert not np.array_equal(a, derive_rng(1, 200, 0).random(3))


# ---------------------------------------------------------------- pipelines

def test_run_linreg_requires_six_dimensions():
    with pytest.raises(DimensionError):
        run_linreg_experiment(LinRegConfig(d=5), [100])


def test_run_linreg_small_and_reproducible():
    cfg = LinRegConfig(d=6, n_mc=500, n_post=50, n_data=500, seed=3)
    curve = run_linreg_experiment(cfg, [64, 128])
    assert [p.m for p in curve] == [64, 128]
    for p in curve:
        assert p.bound_total == pytest.approx(sum(p.bound_terms.values()), rel=1e-12)
        assert set(p.bound_terms) == {"empirical", "kl", "c2", "envelope"}
        assert p.bound_total <= p.hyperparams["half_alpha_total"]
        assert p.chosen_alpha in [i / 8 for i in range(9)]
    again = run_linreg_experiment(cfg, [128])
    assert again[0].as_row() == curve[1].as_row()


def test_run_logistic_alpha_mode():
    cfg = LogRegConfig(d=5, n_mc=500, n_post=200, seed=1)
    half, opt = run_logistic_experiment(cfg, [40, 80], LogisticMode.ALPHA_COMPARISON)
    for a, b in zip(half, opt):
        assert a.chosen_alpha == 0.5
        assert b.bound_total <= a.bound_total
        assert a.chosen_sigma2 == b.chosen_sigma2


def test_run_logistic_informed_mode():
    cfg = LogRegConfig(d=5, n_mc=500, n_post=200, seed=1, informed_priors=True)
    naive, informed = run_logistic_experiment(cfg, [40, 80])
    for p in informed:
        assert {"alpha1", "alpha2", "kl1", "kl2"} <= set(p.hyperparams)
    for p in naive:
        assert set(p.bound_terms) == {"empirical", "kl", "moment"}
    with pytest.raises(InvalidInputError):
        run_logistic_experiment(cfg, [41])


def test_logistic_normalize_defaults():
    cfg = LogRegConfig()
    assert cfg.resolved_normalize(LogisticMode.ALPHA_COMPARISON)
    assert not cfg.resolved_normalize(LogisticMode.INFORMED_PRIOR)
    assert LogRegConfig(normalize=True).resolved_normalize("informed")


# ---------------------------------------------------------------- coverage harness

def test_coverage_trial_violation_rule():
    risk = McEstimate(1.0, 0.1, 100)
    assert not CoverageTrial(0.8, 0.0, risk).violated()        # 0.2 < 3 * 0.1
    assert CoverageTrial(0.6, 0.0, risk).violated()


def test_coverage_vacuous_and_corrupted():
    sure = lambda rng: CoverageTrial(1e9, 0.0, McEstimate(float(rng.random()), 0.01, 10))
    assert verify_bound_coverage(sure, 50, 0) == 0.0
    broken = lambda rng: CoverageTrial(-1.0, 0.0, McEstimate(float(rng.random()), 0.01, 10))
    assert verify_bound_coverage(broken, 50, 0) == 1.0
    with pytest.raises(InvalidInputError):
        verify_bound_coverage(sure, 49, 0)


def test_linreg_coverage_builder_runs():
    cfg = LinRegConfig(d=6, m=30, n_mc=300, n_post=30, n_data=300)
    t = linreg_coverage_builder(cfg)(np.random.default_rng(0))
    assert t.bound > t.risk.value
    t_bad = linreg_coverage_builder(cfg, offset=10 * cfg.C)(np.random.default_rng(0))
    assert t_bad.violated()
