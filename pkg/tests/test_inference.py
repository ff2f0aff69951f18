import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelqboot import (
    CovarianceEstimate,
    PanelDataset,
    boot_covariance,
    fit_feqr,
    percentile_ci,
    powell_variance,
    run_pwb,
    se_ci,
    wald_test,
)
from conftest import random_panel
from panelqboot.errors import NegativeVariance, SingularRestriction, TooFewDraws, ValidationError


def test_percentile_order_statistics():
    ci = percentile_ci(np.arange(1, 101, dtype=float), 0.90)
    assert (ci.lower, ci.upper) == (5.0, 95.0)
    ci = percentile_ci(np.full(50, 2.5), 0.95)
    assert (ci.lower, ci.upper) == (2.5, 2.5)
    with pytest.raises(TooFewDraws):
        percentile_ci(np.arange(19.0), 0.9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(0.1, 10), st.floats(0.5, 0.99))
def test_percentile_affine_equivariance(seed, a, c, level):
    d = np.random.default_rng(seed).normal(size=(60, 2))
    ci = percentile_ci(d, level, 1)
    cj = percentile_ci(a + c * d, level, 1)
    assert cj.lower == pytest.approx(a + c * ci.lower) and cj.upper == pytest.approx(a + c * ci.upper)


def test_boot_covariance_examples():
    b = np.array([1.0, 2.0])
    assert np.all(boot_covariance(np.tile(b, (5, 1)), b).sigma == 0)
    s = boot_covariance(np.array([[0.7], [1.3]]), [1.0]).sigma
    assert s[0, 0] == pytest.approx(0.09)
    with pytest.raises(TooFewDraws):
        boot_covariance(np.ones((1, 1)), [1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5))
def test_boot_covariance_is_centered_at_estimate(seed, c):
    rng = np.random.default_rng(seed)
    d, b = rng.normal(size=(40, 3)), rng.normal(size=3)
    s = boot_covariance(d, b).sigma
    np.testing.assert_allclose(boot_covariance(d[rng.permutation(40)], b).sigma, s, atol=1e-14)
    np.testing.assert_allclose(boot_covariance(b + c * (d - b), b).sigma, c**2 * s, rtol=1e-10)
    assert np.min(np.linalg.eigvalsh(s)) >= -1e-10
    # centered at b, not at the draw mean
    assert np.trace(s) >= np.trace(np.cov(d.T, bias=True)) - 1e-12


def test_boot_covariance_stabilizes_with_many_draws():
    d = random_panel(np.random.default_rng(0), 3, 30)
    res = run_pwb(d, 0.5, 3, 20000, seed=5)
    s1 = boot_covariance(res.beta_star[:10000], res.base_fit.beta).sigma[0, 0]
    s2 = boot_covariance(res.beta_star, res.base_fit.beta).sigma[0, 0]
    assert abs(s2 / s1 - 1) < 0.02


def test_se_interval_examples():
    sig = CovarianceEstimate(np.array([[0.01]]), "bootstrap")
    ci = se_ci([1.0], sig, 0.95)
    assert ci.lower == pytest.approx(0.8040, abs=5e-5) and ci.upper == pytest.approx(1.1960, abs=5e-5)
    ci0 = se_ci([1.0], CovarianceEstimate(np.zeros((1, 1)), "bootstrap"), 0.9)
    assert ci0.lower == ci0.upper == 1.0
    ci90 = se_ci([0.0], CovarianceEstimate(np.ones((1, 1)), "bootstrap"), 0.90)
    assert ci90.upper == pytest.approx(1.6449, abs=1e-4)
    with pytest.raises(NegativeVariance):
        se_ci([0.0], CovarianceEstimate(np.array([[-1e-3]]), "bootstrap"), 0.9)
    with pytest.raises(ValidationError):
        se_ci([0.0], sig, 1.0)


@given(st.floats(0.5, 0.98), st.floats(0.5, 0.98), st.floats(1e-4, 4))
def test_se_width_monotone(l1, l2, v):
    sig = CovarianceEstimate(np.array([[v]]), "bootstrap")
    big = CovarianceEstimate(np.array([[2 * v]]), "bootstrap")
    w1, w2 = se_ci([0], sig, l1).width, se_ci([0], sig, l2).width
    assert (w1 <= w2) == (l1 <= l2) or math.isclose(w1, w2)
    assert se_ci([0], big, l1).width > w1


def test_wald_examples():
    b = np.array([1.0, -0.5])
    sig = CovarianceEstimate(np.array([[0.04, 0.01], [0.01, 0.09]]), "bootstrap")
    W, p = wald_test(np.eye(2), b, b, sig)
    assert W == 0 and p == 1
    W, p = wald_test([[1.0, 0.0]], [0.6], b, sig)
    assert W == pytest.approx((0.4 / 0.2) ** 2)
    with pytest.raises(SingularRestriction):
        wald_test([[1.0, 2.0], [2.0, 4.0]], [0, 0], b, sig)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wald_invariant_to_reparameterization(seed):
    rng = np.random.default_rng(seed)
    A0 = rng.normal(size=(3, 3))
    sig = CovarianceEstimate(A0 @ A0.T + np.eye(3), "bootstrap")
    R, r, b = rng.normal(size=(2, 3)), rng.normal(size=2), rng.normal(size=3)
    A = rng.normal(size=(2, 2)) + 3 * np.eye(2)
    W1, _ = wald_test(R, r, b, sig)
    W2, _ = wald_test(A @ R, A @ r, b, sig)
    assert W2 == pytest.approx(W1, rel=1e-8)


def test_wald_null_pvalues_are_uniform():
    rng = np.random.default_rng(1)
    L = np.array([[1.0, 0.0], [0.6, 0.8]])
    sig = CovarianceEstimate(L @ L.T, "bootstrap")
    p = np.array([wald_test(np.eye(2), [0, 0], L @ rng.normal(size=2), sig)[1] for _ in range(4000)])
    hist = np.histogram(p, bins=10, range=(0, 1))[0] / p.size
    assert np.all(np.abs(hist - 0.1) < 0.1 * 0.1 + 0.015)


def test_powell_iid_normal_is_pi_over_two():
    rng = np.random.default_rng(2)
    N, T = 20, 2500
    x = rng.normal(size=(N, T))
    d = PanelDataset.from_arrays(x + rng.normal(size=(N, T)), x)
    f = fit_feqr(d, 0.5)
    s = powell_variance(f, d)
    assert s.source == "powell_iid"
    assert s.sigma[0, 0] * N * T == pytest.approx(math.pi / 2, rel=0.08)


def test_powell_is_smooth_in_bandwidth():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 300))
    d = PanelDataset.from_arrays(x + rng.normal(size=(5, 300)), x)
    f = fit_feqr(d, 0.5)
    hs = np.linspace(0.2, 0.4, 21)
    v = np.array([powell_variance(f, d, h).sigma[0, 0] for h in hs])
    assert np.max(np.abs(np.diff(v))) < 0.05 * v.mean()
    v2 = powell_variance(f, d, rule="bofinger").sigma[0, 0]
    assert 0.5 < v2 / powell_variance(f, d).sigma[0, 0] < 2
