import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelqboot import PanelDataset, SolverOptions, brute_force_fit, check_loss, fit_feqr, score_psi
from panelqboot.errors import AllWeightsZeroForUnit, SingularDesign, TooLarge, ValidationError
from panelqboot.qrsolver import fit_arrays, total_loss

from conftest import random_panel


def test_check_loss_and_score_values():
    assert check_loss(2.0, 0.25) == 0.5
    assert check_loss(-2.0, 0.25) == 1.5
    assert check_loss(0.0, 0.3) == 0.0
    assert score_psi(0.0, 0.3) == 0.3
    assert score_psi(-1e-300, 0.3) == pytest.approx(-0.7)
    np.testing.assert_array_equal(score_psi(np.array([-1.0, 1.0]), 0.5), [-0.5, 0.5])


@pytest.mark.parametrize("tau", [0.0, 1.0, 1.5, -0.2])
def test_tau_outside_unit_interval(tau):
    with pytest.raises(ValidationError, match=r"tau must be in \(0,1\)"):
        check_loss(1.0, tau)
    with pytest.raises(ValidationError):
        fit_feqr(random_panel(np.random.default_rng(0)), tau)


@given(st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
def test_check_loss_is_nonnegative_and_psi_is_a_subgradient(u, tau):
    assert check_loss(u, tau) >= 0
    # rho(u + d) >= rho(u) + psi(u) d for any d
    for d in (-1.0, 0.5, 3.0):
        assert check_loss(u + d, tau) >= check_loss(u, tau) + score_psi(u, tau) * d - 1e-9 * (1 + abs(u))


@pytest.mark.parametrize("seed", range(12))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    N, T = int(rng.integers(1, 4)), int(rng.integers(2, 8))
    tau = float(rng.uniform(0.1, 0.9))
    d = random_panel(rng, N, T)
    ipm, exact = fit_feqr(d, tau), brute_force_fit(d, tau)
    assert abs(ipm.objective - exact.objective) <= 1e-8 * (1 + exact.objective)


def test_vertex_has_exact_zero_residuals():
    d = random_panel(np.random.default_rng(3), 4, 20, 2)
    f = fit_feqr(d, 0.4)
    assert f.vertex
    assert np.sum(f.residuals == 0) >= d.N + d.p


def test_effects_only_fit_gives_unit_quantiles():
    rng = np.random.default_rng(7)
    y = rng.normal(size=(3, 9))
    f = fit_arrays(y, np.zeros((3, 9, 0)), 0.5)
    np.testing.assert_allclose(f.alpha, np.median(y, axis=1), atol=1e-9)
    assert f.beta.shape == (0,)


def test_equivariance():
    d = random_panel(np.random.default_rng(11), 3, 15, 2)
    f = fit_feqr(d, 0.3)
    g = np.array([0.5, -2.0])
    shifted = d.replace_y(d.y + d.x @ g)
    np.testing.assert_allclose(fit_feqr(shifted, 0.3).beta, f.beta + g, atol=1e-7)
    np.testing.assert_allclose(fit_feqr(d.replace_y(3.0 * d.y), 0.3).beta, 3.0 * f.beta, atol=1e-7)
    flipped = fit_feqr(d.replace_y(-d.y), 0.7)
    np.testing.assert_allclose(flipped.objective, f.objective, rtol=1e-8)


def test_weight_scale_does_not_move_minimizer():
    d = random_panel(np.random.default_rng(2), 3, 12)
    w = np.random.default_rng(5).uniform(0.5, 2.0, size=(3, 12))
    a = fit_feqr(d, 0.5, SolverOptions(obs_weights=w))
    b = fit_feqr(d, 0.5, SolverOptions(obs_weights=7.5 * w))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-8)


def test_integer_weights_equal_row_replication():
    rng = np.random.default_rng(9)
    d = random_panel(rng, 2, 5)
    w = np.array([[1, 2, 1, 3, 1], [2, 1, 1, 1, 2]], dtype=float)
    wf = fit_feqr(d, 0.5, SolverOptions(obs_weights=w))
    # replicate by hand and compare objectives with brute force on the expanded data
    exp_obj = total_loss(wf.residuals, 0.5, w)
    assert exp_obj == pytest.approx(wf.objective, rel=1e-10)
    for trial in range(30):
        beta = wf.beta + rng.normal(scale=0.3, size=1)
        res = d.y - d.x @ beta
        alpha = np.array([np.quantile(np.repeat(res[i], w[i].astype(int)), 0.5) for i in range(2)])
        other = total_loss(res - alpha[:, None], 0.5, w)
        assert other >= wf.objective - 1e-9


def test_zero_weight_unit_rejected():
    d = random_panel(np.random.default_rng(1), 2, 4)
    w = np.ones((2, 4))
    w[1] = 0
    with pytest.raises(AllWeightsZeroForUnit):
        fit_feqr(d, 0.5, SolverOptions(obs_weights=w))


def test_zero_weights_are_dropped_rows():
    rng = np.random.default_rng(4)
    d = random_panel(rng, 2, 6)
    w = np.ones((2, 6))
    w[0, 2] = w[1, 5] = 0.0
    f = fit_feqr(d, 0.5, SolverOptions(obs_weights=w))
    # any other slope does at least as well only if it ignores the dropped rows
    mask = w > 0
    for b in np.linspace(f.beta[0] - 1, f.beta[0] + 1, 21):
        res = d.y - d.x[:, :, 0] * b
        obj = sum(total_loss(res[i][mask[i]] - np.quantile(res[i][mask[i]], 0.5, method="inverted_cdf"), 0.5) for i in range(2))
        assert obj >= f.objective - 1e-9


def test_regressor_constant_within_unit_is_singular():
    y = np.random.default_rng(0).normal(size=(3, 5))
    x = np.repeat(np.array([1.0, 2.0, 3.0])[:, None, None], 5, axis=1)
    with pytest.raises(SingularDesign):
        fit_feqr(PanelDataset.from_arrays(y, x), 0.5)


def test_brute_force_guards():
    d = random_panel(np.random.default_rng(0), 5, 10)
    with pytest.raises(TooLarge):
        brute_force_fit(d, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_no_nearby_point_beats_the_fit(seed, tau):
    rng = np.random.default_rng(seed)
    d = random_panel(rng, 3, 10, 2)
    f = fit_feqr(d, tau)
    theta = np.concatenate([f.beta, f.alpha])
    for _ in range(20):
        t = theta + rng.normal(scale=0.05, size=theta.shape)
        res = d.y - d.x @ t[:2] - t[2:, None]
        assert total_loss(res, tau) >= f.objective - 1e-9 * (1 + f.objective)
