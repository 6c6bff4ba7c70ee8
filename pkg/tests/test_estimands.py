import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from switchps import THETA_REFERENCE, weibull
from switchps.estimands import (CURVE_HEADER, DEFAULT_S_VALUES, DEFAULT_Y_GRID, ace_ns, ace_sw,
                                cdce_sw, coarse_effects, dce_ns, dce_sw, itt_ace, itt_dce,
                                summarize, write_curves)
from switchps.model import Theta
from switchps.weibull import WeibullParams as W


def theta_with(**kw):
    return Theta.from_dict(THETA_REFERENCE.as_dict() | kw)


def random_theta(rng, kappa):
    d = THETA_REFERENCE.as_dict()
    for k in d:
        if k.startswith(("alpha", "nu")):
            d[k] = rng.uniform(0.8, 2.0)
        elif k.startswith(("beta", "gamma")):
            d[k] = rng.uniform(-2.0, 0.0)
    d["pi"], d["lambda"], d["kappa"] = rng.uniform(0.2, 0.8), rng.uniform(-1, 1), kappa
    return Theta.from_dict(d)


# -- ITT ------------------------------------------------------------------------------

def test_itt_examples():
    p = W(1.4, -0.7)
    assert itt_ace(p, p) == 0.0
    assert np.all(itt_dce(DEFAULT_Y_GRID, p, p) == 0.0)
    assert itt_ace(W(1, 0), W(1, math.log(2))) == pytest.approx(-0.5)
    assert itt_ace(W(1, math.log(2)), W(1, 0)) == pytest.approx(0.5)
    assert itt_dce(1.0, W(1, 0), W(2, 0)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("p0,p1", [(W(1.3, -1.0), W(1.1, -1.6)), (W(0.8, 0.2), W(2.5, -0.5))])
def test_itt_ace_is_integral_of_dce(p0, p1):
    val, _ = integrate.quad(lambda y: itt_dce(y, p0, p1), 0, np.inf, limit=400)
    assert val == pytest.approx(itt_ace(p0, p1), rel=1e-3)


# -- non-switchers ---------------------------------------------------------------------

def test_ace_ns_reference_value():
    assert ace_ns(THETA_REFERENCE) == pytest.approx(3.88 - 2.01, abs=0.02)


def test_ace_ns_vanishes_at_kappa_one_limit():
    th = theta_with(kappa=1.0, gamma_y_ns=40.0)
    assert abs(ace_ns(th)) < 1e-6


@pytest.mark.parametrize("k", range(3))
def test_ace_ns_monte_carlo(k):
    rng = np.random.default_rng(100 + k)
    th = random_theta(rng, rng.uniform(0, 1))
    n = 1_000_000
    y0 = weibull.sample(th.y0_ns, rng.random(n))
    y1 = th.kappa * y0 + weibull.sample(th.y1_ns, rng.random(n))
    d = y1 - y0
    assert abs(d.mean() - ace_ns(th)) < 3 * d.std() / math.sqrt(n)


def test_dce_ns_trivial_cases():
    th = theta_with(nu_y_ns=1.38, gamma_y_ns=-1.09)
    assert np.all(dce_ns(DEFAULT_Y_GRID, th) == 0.0)
    assert abs(dce_ns(1e-9, THETA_REFERENCE)) < 1e-6
    assert abs(dce_ns(1e-9, THETA_REFERENCE.with_kappa(0.5))) < 1e-6


def test_dce_ns_quadrature_at_half_kappa():
    th = THETA_REFERENCE.with_kappa(0.5)
    y = 2.0
    head, _ = integrate.quad(
        lambda t: math.exp(weibull.log_pdf(t, th.y0_ns) + weibull.log_survival(y - 0.5 * t, th.y1_ns)),
        0, 2 * y, limit=400)
    # beyond y / kappa the treated survival factor is 1
    g1 = head + math.exp(weibull.log_survival(2 * y, th.y0_ns))
    ref = g1 - math.exp(weibull.log_survival(y, th.y0_ns))
    assert dce_ns(y, th, mc_size=400_000, seed=3) == pytest.approx(ref, abs=1e-3)


def test_dce_ns_deterministic_given_seed():
    th = THETA_REFERENCE.with_kappa(0.3)
    a = dce_ns(DEFAULT_Y_GRID, th, 500, seed=4)
    assert np.array_equal(a, dce_ns(DEFAULT_Y_GRID, th, 500, seed=4))


def test_monte_carlo_variance_halves_when_size_doubles():
    th = THETA_REFERENCE.with_kappa(0.5)
    v = [np.var([dce_ns(1.5, th, m, seed=s) for s in range(600)], ddof=1) for m in (400, 800)]
    assert 1.6 < v[0] / v[1] < 2.5


# -- switchers -------------------------------------------------------------------------------

def test_ace_sw_reference_value():
    assert ace_sw(1.0, THETA_REFERENCE) == pytest.approx(5.18 - 4.74, abs=0.02)
    np.testing.assert_allclose(ace_sw(DEFAULT_S_VALUES, THETA_REFERENCE),
                               [ace_sw(s, THETA_REFERENCE) for s in DEFAULT_S_VALUES])


@pytest.mark.parametrize("kappa", [0.0, 0.5, 1.0])
def test_cdce_is_zero_before_switch(kappa):
    th = THETA_REFERENCE.with_kappa(kappa)
    assert cdce_sw(0.5, 1.0, th) == 0.0
    out = cdce_sw(DEFAULT_Y_GRID, 1.0, th)
    assert np.all(out[DEFAULT_Y_GRID <= 1.0] == 0.0)


@pytest.mark.parametrize("kappa", [0.0, 0.4, 1.0])
def test_dce_sw_before_switch_is_treated_survival_minus_one(kappa):
    th = THETA_REFERENCE.with_kappa(kappa)
    s = 1.5
    y = DEFAULT_Y_GRID[DEFAULT_Y_GRID <= s]
    d = dce_sw(y, s, th, mc_size=3000)
    assert np.all(d <= 0)
    if kappa == 0:
        p1 = np.exp(weibull.log_survival(y, W(th.y1_sw.shape, th.y1_sw.log_rate + th.lam * math.log(s))))
        np.testing.assert_allclose(d, p1 - 1.0, rtol=1e-12)


def test_cdce_matches_pair_simulation():
    th = THETA_REFERENCE.with_kappa(0.5)
    s, n = 0.8, 1_000_000
    rng = np.random.default_rng(5)
    p0 = W(th.y0_sw.shape, th.y0_sw.log_rate + th.lam * math.log(s))
    p1 = W(th.y1_sw.shape, th.y1_sw.log_rate + th.lam * math.log(s))
    y0 = s + weibull.sample(p0, rng.random(n))
    y1 = 0.5 * y0 + weibull.sample(p1, rng.random(n))
    keep = y1 >= s
    ys = np.array([1.0, 1.5, 2.5])
    ref = np.array([(y1[keep] > y).mean() - (y0[keep] > y).mean() for y in ys])
    np.testing.assert_allclose(cdce_sw(ys, s, th, mc_size=200_000, seed=1), ref, atol=5e-3)


def test_cdce_undefined_without_mass():
    # treated survival essentially zero beyond s, so the conditioning event is empty
    th = theta_with(nu_y_sw=5.0, gamma_y_sw=60.0)
    assert math.isnan(cdce_sw(3.0, 2.0, th))


@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), kappa=st.sampled_from([0.0, 0.3, 1.0]))
def test_distributional_effects_are_bounded(seed, kappa):
    th = random_theta(np.random.default_rng(seed), kappa)
    for arr in (dce_ns(DEFAULT_Y_GRID, th, 300), dce_sw(DEFAULT_Y_GRID, 1.0, th, 300),
                cdce_sw(DEFAULT_Y_GRID, 1.0, th, 300)):
        arr = arr[~np.isnan(arr)]
        assert np.all((arr >= -1) & (arr <= 1))


@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), s=st.sampled_from(list(DEFAULT_S_VALUES)))
def test_dominance_at_unit_kappa(seed, s):
    th = random_theta(np.random.default_rng(seed), 1.0)
    assert np.all(dce_sw(DEFAULT_Y_GRID, s, th, 500, seed=seed) >= 0)
    c = cdce_sw(DEFAULT_Y_GRID, s, th, 500, seed=seed)
    assert np.all(c[~np.isnan(c)] >= -1e-12)


# -- coarse strata -------------------------------------------------------------------------------

def test_coarse_ace_concentration_limit():
    s0, a = 1.2, 400.0
    th = theta_with(alpha_s=a, beta_s=math.log(math.log(2)) - a * math.log(s0))
    assert coarse_effects((0, math.inf), "ace", th, 4000) == pytest.approx(ace_sw(s0, th), abs=5e-3)


def test_coarse_ace_quadrature():
    th = THETA_REFERENCE
    mc = 20_000
    ref, _ = integrate.quad(lambda s: ace_sw(s, th) * math.exp(weibull.log_pdf(s, th.sw)),
                            0, np.inf, limit=400)
    s = weibull.quantile(np.random.default_rng(0).random(mc), th.sw)
    se = np.std(ace_sw(s, th)) / math.sqrt(mc)
    assert abs(coarse_effects((0, math.inf), "ace", th, mc, seed=0) - ref) < 2 * se


@pytest.mark.parametrize("kind", ["ace", "dce"])
def test_coarse_total_expectation(kind):
    th = THETA_REFERENCE.with_kappa(0.5)
    cut, mc = 1.0, 40_000
    w = -math.expm1(-weibull.cumulative_hazard(cut, th.sw))
    y = np.array([0.5, 1.5, 2.5])
    lo = coarse_effects((0, cut), kind, th, mc, y, seed=1)
    hi = coarse_effects((cut, math.inf), kind, th, mc, y, seed=2)
    full = coarse_effects((0, math.inf), kind, th, mc, y, seed=3)
    np.testing.assert_allclose(w * np.asarray(lo) + (1 - w) * np.asarray(hi), full, atol=0.03)


def test_coarse_errors():
    with pytest.raises(ValueError, match="zero probability"):
        coarse_effects((50.0, 60.0), "ace", THETA_REFERENCE)
    with pytest.raises(ValueError):
        coarse_effects((1.0, 1.0), "ace", THETA_REFERENCE)
    with pytest.raises(ValueError):
        coarse_effects((0.0, 1.0), "bogus", THETA_REFERENCE)


# -- summaries ------------------------------------------------------------------------------------

def test_summarize_examples():
    s = summarize([2.5] * 7)
    assert (s.median, s.lower, s.upper) == (2.5, 2.5, 2.5)
    s = summarize(np.arange(1, 101), keep_values=True)
    assert s.median == pytest.approx(50.5)
    assert (s.lower, s.upper) == pytest.approx((3.475, 97.525))
    assert s.values.size == 100
    with pytest.raises(ValueError):
        summarize([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_summary_ordering(xs):
    s = summarize(xs)
    assert s.lower <= s.median <= s.upper


def test_write_curves():
    buf = io.StringIO()
    write_curves([("ace_ns", None, None, 0.0, summarize([1.0, 2.0, 3.0]))], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == CURVE_HEADER == ["estimand", "s", "y", "kappa", "q025", "median", "q975"]
    assert lines[1].startswith("ace_ns,,,0.0,")
