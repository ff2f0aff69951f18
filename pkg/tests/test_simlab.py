import math

import numpy as np
import pytest
from scipy import stats

from panelqboot import SimConfig, fit_feqr, gen_ar2, gen_panel, run_coverage, sigma_u2, stationary_quantile_oracle
from panelqboot._engine import stream
from panelqboot.errors import NonStationary, ValidationError
from panelqboot.simlab import true_beta0


def test_sigma_u2_values():
    assert sigma_u2(0.7, 0.1, 1) == pytest.approx(0.9 / (1.1 * 0.2 * 1.6), rel=1e-15)
    assert round(sigma_u2(0.7, 0.1, 1), 4) == 2.5568
    assert sigma_u2(0.0, 0.0, 1) == 1.0
    assert sigma_u2(0.7, 0.1, 3) == pytest.approx(7.6705, abs=1e-4)


@pytest.mark.parametrize("rho", [(0.5, 0.6), (1.0, 0.0), (0.0, -1.0), (-0.8, 0.3)])
def test_nonstationary_rejected(rho):
    with pytest.raises(NonStationary, match="non-stationary AR"):
        sigma_u2(*rho)
    with pytest.raises(NonStationary):
        gen_ar2(10, *rho, "normal", 200, stream(1))


def test_ar2_zero_coefficients_are_the_innovations():
    a = gen_ar2(50, 0.0, 0.0, "normal", 200, stream(5))
    b = stream(5).standard_normal(250)[200:]
    np.testing.assert_array_equal(a, b)


def test_ar2_moments():
    u = gen_ar2(1_000_000, 0.7, 0.1, "normal", 500, stream(6))
    assert np.var(u) == pytest.approx(sigma_u2(0.7, 0.1), rel=0.01)
    r1 = np.corrcoef(u[:-1], u[1:])[0, 1]
    assert r1 == pytest.approx(0.7 / 0.9, rel=0.01)


def test_ar2_is_deterministic():
    np.testing.assert_array_equal(
        gen_ar2(30, 0.7, 0.1, "t3", 300, stream(2)), gen_ar2(30, 0.7, 0.1, "t3", 300, stream(2))
    )


def test_true_slopes():
    assert true_beta0("normal", 0.7, 0.1, 0.25, 0.0) == 1.0
    assert true_beta0("normal", 0.7, 0.1, 0.5, 0.25) == 1.0
    expected = 1 + 0.25 * stats.norm.ppf(0.75) * math.sqrt(2.5568181818181817)
    assert true_beta0("normal", 0.7, 0.1, 0.75, 0.25) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.2696, abs=1e-4)


def test_quantile_oracle():
    q, se = stationary_quantile_oracle("normal", 0.7, 0.1, 0.75, n_draws=2_000_000, seed=3)
    assert abs(q - stats.norm.ppf(0.75) * math.sqrt(sigma_u2(0.7, 0.1))) < 3 * se
    q0, se0 = stationary_quantile_oracle("t3", 0.7, 0.1, 0.5, n_draws=2_000_000, seed=3)
    assert abs(q0) < 3 * se0
    qt, _ = stationary_quantile_oracle("t3", 0.7, 0.1, 0.75, n_draws=2_000_000, seed=3)
    assert qt > q
    with pytest.raises(ValidationError):
        stationary_quantile_oracle("normal", 0.7, 0.1, 0.5, n_draws=10)


def test_gen_panel_design():
    cfg = SimConfig(N=4, T=50, zeta=0.25, tau=0.75)
    d, b0 = gen_panel(cfg, stream(1))
    assert (d.N, d.T, d.p) == (4, 50, 1)
    assert b0 == pytest.approx(1.2696, abs=1e-4)
    d2, _ = gen_panel(SimConfig(N=4, T=50, alpha_mode="gaussian"), stream(1))
    assert not np.array_equal(d.y, d2.y)


def test_fe_qr_is_consistent_in_the_design():
    d, b0 = gen_panel(SimConfig(N=50, T=400), stream(9))
    assert abs(fit_feqr(d, 0.5).beta[0] - b0) < 0.05


def test_config_validation():
    with pytest.raises(NonStationary, match="non-stationary AR"):
        SimConfig(rho1_u=0.95, rho2_u=0.1)
    with pytest.raises(ValidationError):
        SimConfig(burn_in=100)
    with pytest.raises(ValidationError):
        SimConfig(methods=("pwb", "jackknife"))
    with pytest.raises(ValidationError):
        SimConfig.from_dict({"N": 5, "colour": 1})
    assert SimConfig.from_dict(SimConfig(N=7).to_dict()) == SimConfig(N=7)


def test_coverage_report_is_deterministic_and_consistent():
    cfg = SimConfig(N=3, T=40, mc_reps=6, B=25, seed=4)
    a = run_coverage(cfg)
    b = run_coverage(cfg, threads=3)
    assert a.to_json() == b.to_json()
    assert sum(a.length_histogram.values()) + a.selection_failures == cfg.mc_reps
    for m in cfg.methods:
        s = a.methods[m].to_dict()
        assert s["reps"] + s["failures"] == cfg.mc_reps
        assert 0 <= s["coverage_se_normal"] <= 1
    lines = a.table_csv().strip().split("\n")
    assert lines[0].startswith("N,T") or lines[0].startswith('"N,T"')
    assert len(lines) == 3
    assert a.histogram_csv().startswith("l_hat,count")
    assert "wall_clock_seconds" not in a.to_json() and "wall_clock_seconds" in a.to_json(True)


def test_independent_regime_pwb_coverage_smoke():
    # short version of the i.i.d. regime check: coverage should not collapse
    cfg = SimConfig(N=10, T=100, rho1_u=0, rho2_u=0, rho1_e=0, rho2_e=0, mc_reps=30, B=100, methods=("pwb",), seed=2)
    rep = run_coverage(cfg)
    assert rep.coverage("pwb") >= 0.7
