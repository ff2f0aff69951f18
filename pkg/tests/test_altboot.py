import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelqboot import TaperSpec, block_weights, fit_feqr, run_alt_bootstrap, web_weights
from panelqboot import altboot
from panelqboot._engine import stream
from panelqboot.errors import InvalidLength, ValidationError

from conftest import random_panel


class FixedStarts:
    """Stand-in generator returning prescribed 0-based block starts."""

    def __init__(self, starts):
        self.starts = np.asarray(starts)

    def integers(self, lo, hi, size=None):
        return self.starts


def test_taper_profiles():
    tri, rect = TaperSpec("triangular"), TaperSpec("rectangular")
    np.testing.assert_allclose(tri.omega(2), [0.5, 0.5])
    np.testing.assert_allclose(tri.omega(4), [0.25, 0.75, 0.75, 0.25])
    np.testing.assert_allclose(rect.omega(3), [1, 1, 1])
    t = np.linspace(0, 0.5, 11)
    assert np.all(np.diff(tri.w(t)) >= 0)
    np.testing.assert_allclose(tri.w(t), tri.w(1 - t))
    with pytest.raises(ValidationError):
        TaperSpec("hann")


@pytest.mark.parametrize(
    "shape,starts,expected",
    [
        ("rectangular", [0, 2], [0.25, 0.25, 0.25, 0.25]),
        ("rectangular", [0, 0], [0.5, 0.5, 0.0, 0.0]),
        ("triangular", [0, 2], [0.25, 0.25, 0.25, 0.25]),
    ],
)
def test_block_weight_examples(shape, starts, expected):
    np.testing.assert_allclose(block_weights(4, 2, TaperSpec(shape), FixedStarts(starts)), expected)


def test_block_length_validation():
    with pytest.raises(InvalidLength):
        block_weights(5, 0, TaperSpec(), stream(1))
    with pytest.raises(InvalidLength):
        block_weights(5, 6, TaperSpec(), stream(1))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 120).flatmap(lambda T: st.tuples(st.just(T), st.integers(1, T))), st.integers(0, 2**32 - 1))
def test_block_weights_sum_to_one_and_are_nonnegative(Tl, seed):
    T, l = Tl
    for shape in ("rectangular", "triangular"):
        pi = block_weights(T, l, TaperSpec(shape), stream(seed))
        assert np.all(pi >= 0)
        assert abs(math.fsum(pi) - 1.0) <= 4 * np.finfo(float).eps


def test_rectangular_etbb_reproduces_mbb_draws():
    a = block_weights(50, 7, TaperSpec("rectangular"), stream(3, 2, 0))
    b = block_weights(50, 7, altboot.RECTANGULAR, stream(3, 2, 0))
    np.testing.assert_array_equal(a, b)


def test_web_moments():
    w = web_weights(1_000_000, stream(8))
    se = 1 / math.sqrt(w.size)
    assert abs(w.mean() - 1) < 4 * se
    assert abs(w.var() - 1) < 4 * math.sqrt(8) * se
    np.testing.assert_array_equal(web_weights(5, stream(8)), web_weights(5, stream(8)))
    with pytest.raises(ValidationError):
        web_weights(0, stream(8))


def test_unit_weights_of_one_reproduce_base_fit(monkeypatch):
    d = random_panel(np.random.default_rng(0), 4, 25)
    base = fit_feqr(d, 0.5)
    monkeypatch.setattr(altboot, "web_weights", lambda N, rng: np.ones(N))
    res = run_alt_bootstrap("web", d, 0.5, None, 5, seed=1)
    np.testing.assert_allclose(res.beta_star, np.tile(base.beta, (5, 1)), atol=1e-9)


def test_mbb_with_full_length_block_is_degenerate():
    d = random_panel(np.random.default_rng(1), 3, 20)
    base = fit_feqr(d, 0.5)
    res = run_alt_bootstrap("mbb", d, 0.5, 20, 4, seed=2)
    np.testing.assert_allclose(res.beta_star, np.tile(base.beta, (4, 1)), atol=1e-9)


def test_methods_are_replayable_and_distinct():
    d = random_panel(np.random.default_rng(2), 4, 30)
    out = {}
    for m in ("mbb", "etbb", "web"):
        a = run_alt_bootstrap(m, d, 0.5, 5, 30, seed=4)
        b = run_alt_bootstrap(m, d, 0.5, 5, 30, seed=4, threads=3)
        np.testing.assert_array_equal(a.beta_star, b.beta_star)
        assert a.method == m and a.B == 30
        out[m] = a.beta_star
    assert not np.array_equal(out["mbb"], out["etbb"])


def test_alt_argument_errors():
    d = random_panel(np.random.default_rng(2), 2, 10)
    with pytest.raises(InvalidLength):
        run_alt_bootstrap("mbb", d, 0.5, None, 5, seed=1)
    with pytest.raises(InvalidLength):
        run_alt_bootstrap("etbb", d, 0.5, 11, 5, seed=1)
    with pytest.raises(ValidationError):
        run_alt_bootstrap("sieve", d, 0.5, 2, 5, seed=1)
