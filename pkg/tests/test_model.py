import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from switchps import THETA_REFERENCE, GeneratorConfig, generate, weibull
from switchps.data import NON_SWITCHER, AugmentedUnit, Dataset, PatientRecord, SwitchStatus
from switchps.model import (PARAM_NAMES, PriorSpec, Theta, complete_loglik_terms, log_complete_posterior,
                            log_observed_likelihood, log_prior, unit_log_complete)
from switchps.weibull import WeibullParams as W


def theta_with(**kw):
    return Theta.from_dict(THETA_REFERENCE.as_dict() | kw)


def random_theta(rng, kappa=0.0):
    v = THETA_REFERENCE.to_vector()
    v = v + rng.normal(0, 0.1, v.size) * np.r_[0.5, np.ones(11)]
    v[0] = np.clip(v[0], 0.05, 0.95)
    return Theta.from_vector(v, kappa)


# -- Theta / priors ------------------------------------------------------------

def test_theta_vector_round_trip():
    v = THETA_REFERENCE.to_vector()
    assert np.array_equal(Theta.from_vector(v).to_vector(), v)
    assert list(THETA_REFERENCE.as_dict())[:12] == list(PARAM_NAMES)
    with pytest.raises(ValueError):
        Theta.from_vector(v, kappa=1.5)
    with pytest.raises(ValueError):
        Theta.from_vector(np.r_[1.0, v[1:]])


def test_beta_uniform_contributes_zero():
    p = PriorSpec()
    for x in (0.01, 0.38, 0.99):
        assert p.component_logpdf("pi", x) == pytest.approx(0.0, abs=1e-15)


def test_gamma_prior_support_edge():
    v = THETA_REFERENCE.to_vector()
    v[1] = 0.0
    assert log_prior(v) == -math.inf
    assert PriorSpec().component_logpdf("alpha_s", 0.0) == -math.inf


def test_full_prior_matches_component_oracle():
    mpmath.mp.dps = 40
    th = THETA_REFERENCE.as_dict()

    def lgamma_scale(x, a, scale):
        x, a, scale = map(mpmath.mpf, (x, a, scale))
        return (a - 1) * mpmath.log(x) - x / scale - a * mpmath.log(scale) - mpmath.loggamma(a)

    def lnorm(x, var):
        x, var = mpmath.mpf(x), mpmath.mpf(var)
        return -mpmath.log(2 * mpmath.pi * var) / 2 - x * x / (2 * var)

    ref = mpmath.mpf(0)  # Beta(1, 1)
    for k in ("alpha_s", "alpha_y_ns", "alpha_y_sw", "nu_y_sw"):
        ref += lgamma_scale(th[k], 1, 10)
    ref += lgamma_scale(th["nu_y_ns"], 125, "0.01")
    for k in ("beta_s", "beta_y_ns", "beta_y_sw", "lambda"):
        ref += lnorm(th[k], 1e4)
    for k in ("gamma_y_ns", "gamma_y_sw"):
        ref += lnorm(th[k], 1)
    assert log_prior(THETA_REFERENCE) == pytest.approx(float(ref), rel=1e-12)


def test_kappa_and_improper_lambda_add_no_mass():
    p = PriorSpec()
    assert log_prior(THETA_REFERENCE.with_kappa(0.7), p) == log_prior(THETA_REFERENCE, p)
    imp = p.with_lambda_prior("improper")
    diff = log_prior(THETA_REFERENCE, p) - log_prior(THETA_REFERENCE, imp)
    assert diff == pytest.approx(p.component_logpdf("lambda", 0.1))
    a = log_prior(theta_with(**{"lambda": 5.0}), imp)
    b = log_prior(theta_with(**{"lambda": -3.0}), imp)
    assert a == b


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec(pi_beta=(0.0, 1.0))
    with pytest.raises(ValueError):
        PriorSpec(lambda_prior_kind="flat")
    with pytest.raises(ValueError):
        PriorSpec().with_lambda_prior("normal", -1.0)


# -- complete-data densities -----------------------------------------------------

def test_control_nonswitcher_example():
    th = theta_with(pi=0.5, alpha_y_ns=1.0, beta_y_ns=0.0)
    r = PatientRecord(1, 0, 2.0, 2.0, 0, 1.0, 1)
    assert unit_log_complete(r, AugmentedUnit(NON_SWITCHER), th) == pytest.approx(math.log(0.5) - 1)


def test_treated_censored_shifted_example():
    th = theta_with(nu_y_ns=1.0, gamma_y_ns=0.0, kappa=0.5)
    r = PatientRecord(1, 1, 2.0, None, 0, 2.0, 0)
    got = unit_log_complete(r, AugmentedUnit(NON_SWITCHER, 1.0), th)
    assert got == pytest.approx(math.log(th.pi) - 1.5)


def test_infeasible_shift_is_minus_infinity():
    th = theta_with(kappa=1.0)
    r = PatientRecord(1, 1, 2.0, None, 0, 1.0, 1)
    assert unit_log_complete(r, AugmentedUnit(SwitchStatus.at(0.5), 1.2), th) == -math.inf


def test_empty_dataset_gives_prior():
    ds = Dataset((), 3.0)
    assert log_complete_posterior(ds, [], THETA_REFERENCE) == log_prior(THETA_REFERENCE)


def test_single_unit_additivity():
    r = PatientRecord(4, 0, 2.5, 0.9, 1, 2.0, 1)
    a = AugmentedUnit(SwitchStatus.at(0.9))
    ds = Dataset((r,), 3.0)
    expect = log_prior(THETA_REFERENCE) + unit_log_complete(r, a, THETA_REFERENCE)
    assert log_complete_posterior(ds, [a], THETA_REFERENCE) == pytest.approx(expect, rel=1e-14)


def _truth_aug(ds, truth):
    out = []
    for r, s0, y0 in zip(ds, truth.s0, truth.y0):
        if r.z == 0 and not np.isnan(s0) and not r.s_event:
            st_ = SwitchStatus.at(r.c)   # unobserved switch: only survival past c enters
        else:
            st_ = NON_SWITCHER if np.isnan(s0) else SwitchStatus.at(s0)
        out.append(AugmentedUnit(st_, float(y0) if r.z == 1 else r.y_tilde))
    return out


@pytest.mark.parametrize("kappa", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("latent", [False, True])
def test_ten_unit_posterior_is_sum_of_units(kappa, latent):
    th = THETA_REFERENCE.with_kappa(kappa)
    ds, truth = generate(GeneratorConfig(n=10, theta_true=th, seed=21))
    aug = _truth_aug(ds, truth)
    brute = math.fsum(unit_log_complete(r, a, th, latent) for r, a in zip(ds, aug))
    got = log_complete_posterior(ds, aug, th, latent_y0_density=latent) - log_prior(th)
    assert got == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("kappa", [0.0, 0.3, 1.0])
def test_vectorized_terms_match_scalar(kappa):
    rng = np.random.default_rng(5)
    th = random_theta(rng, kappa)
    ds, truth = generate(GeneratorConfig(n=150, theta_true=th, seed=8))
    aug = _truth_aug(ds, truth)
    s = np.array([np.nan if a.s_star.time is None else a.s_star.time for a in aug])
    y0 = np.array([a.y0_star for a in aug])
    for latent in (False, True):
        vec = complete_loglik_terms(ds, s, y0, th, latent)
        ref = [unit_log_complete(r, a, th, latent) for r, a in zip(ds, aug)]
        np.testing.assert_allclose(vec, ref, rtol=1e-12)


# -- observed-data likelihood ----------------------------------------------------------

def test_observed_known_nonswitcher():
    r = PatientRecord(1, 0, 2.5, 2.5, 0, 1.3, 1)
    ds = Dataset((r,), 3.0)
    expect = math.log(THETA_REFERENCE.pi) + weibull.log_pdf(1.3, THETA_REFERENCE.y0_ns)
    assert log_observed_likelihood(ds, THETA_REFERENCE) == pytest.approx(expect, rel=1e-14)


def test_observed_doubly_censored_symmetry():
    th = theta_with(pi=0.5, alpha_s=1.3, beta_s=-0.8, alpha_y_ns=1.3, beta_y_ns=-0.8)
    ds = Dataset((PatientRecord(1, 0, 2.2, 2.2, 0, 2.2, 0),), 3.0)
    expect = weibull.log_survival(2.2, th.sw)
    assert log_observed_likelihood(ds, th) == pytest.approx(expect, rel=1e-13)


def _treated_quadrature(rec, th):
    """Observed-data factor of one treated unit by adaptive quadrature."""
    def y1_factor(arg, p):
        if rec.y_event:
            return math.exp(weibull.log_pdf(arg, p)) if arg > 0 else 0.0
        return math.exp(weibull.log_survival(arg, p)) if arg > 0 else 1.0

    f_s = lambda s: math.exp(weibull.log_pdf(s, th.sw))  # noqa: E731

    def p_sw(s):
        return W(th.y1_sw.shape, th.y1_sw.log_rate + th.lam * math.log(s))

    def p0_sw(s):
        return W(th.y0_sw.shape, th.y0_sw.log_rate + th.lam * math.log(s))

    s_hi = weibull.quantile(1 - 1e-13, th.sw)
    if th.kappa == 0:
        ns = y1_factor(rec.y_tilde, th.y1_ns)
        sw, _ = integrate.quad(lambda s: f_s(s) * y1_factor(rec.y_tilde, p_sw(s)), 0, s_hi,
                               limit=200, epsrel=1e-10)
    else:
        k = th.kappa
        y_hi = weibull.quantile(1 - 1e-13, th.y0_ns)
        ns, _ = integrate.quad(lambda y0: math.exp(weibull.log_pdf(y0, th.y0_ns))
                               * y1_factor(rec.y_tilde - k * y0, th.y1_ns), 0, y_hi,
                               points=[rec.y_tilde / k], limit=200, epsrel=1e-10)

        def inner(s):
            p0 = p0_sw(s)
            r_hi = weibull.quantile(1 - 1e-12, p0)
            g = lambda r: math.exp(weibull.log_pdf(r, p0)) * y1_factor(rec.y_tilde - k * (s + r), p_sw(s))  # noqa: E731
            brk = rec.y_tilde / k - s
            pts = [brk] if 0 < brk < r_hi else None
            return integrate.quad(g, 0, r_hi, points=pts, limit=200, epsrel=1e-9)[0]

        sw, _ = integrate.quad(lambda s: f_s(s) * inner(s), 0, s_hi, limit=200, epsrel=1e-8)
    return math.log(th.pi * ns + (1 - th.pi) * sw)


@pytest.mark.parametrize("kappa", [0.0, 0.5])
@pytest.mark.parametrize("event", [0, 1])
def test_observed_treated_monte_carlo_vs_quadrature(kappa, event):
    th = THETA_REFERENCE.with_kappa(kappa)
    r = PatientRecord(1, 1, 2.4, None, 0, 1.1 if event else 2.4, event)
    ds = Dataset((r,), 3.0)
    if kappa == 0:
        mc = log_observed_likelihood(ds, th, mc_size=100_000, seed=3)
        assert mc == pytest.approx(_treated_quadrature(r, th), abs=1e-3)
    else:
        # the y0 integral adds Monte Carlo noise (sd about 1e-3 at 1e6 draws)
        mc = log_observed_likelihood(ds, th, mc_size=1_000_000, seed=3)
        assert mc == pytest.approx(_treated_quadrature(r, th), abs=4e-3)


def test_observed_deterministic_in_seed(small_trial):
    ds, _ = small_trial
    th = THETA_REFERENCE.with_kappa(0.5)
    assert log_observed_likelihood(ds, th, 512, seed=4) == log_observed_likelihood(ds, th, 512, seed=4)
    with pytest.raises(ValueError):
        log_observed_likelihood(ds, th, 0)


def test_observed_equals_complete_without_latent_units():
    ds, truth = generate(GeneratorConfig(n=400, theta_true=THETA_REFERENCE, seed=2))
    keep = [r for r in ds if r.z == 0 and (r.s_event or r.y_event)]
    sub = Dataset(tuple(keep), ds.c_max)
    aug = [AugmentedUnit(SwitchStatus.at(r.s_tilde) if r.s_event else NON_SWITCHER) for r in keep]
    comp = log_complete_posterior(sub, aug, THETA_REFERENCE) - log_prior(THETA_REFERENCE)
    obs = log_observed_likelihood(sub, THETA_REFERENCE)
    assert math.exp(obs - comp) == pytest.approx(1.0, rel=1e-10)


def test_complete_posterior_continuity(small_trial):
    ds, truth = small_trial
    aug = _truth_aug(ds, truth)
    rng = np.random.default_rng(0)
    for _ in range(5):
        th = random_theta(rng)
        v = th.to_vector()
        base = log_complete_posterior(ds, aug, th)
        for i in range(1, 12):
            for h in (1e-6, -1e-6):
                w = v.copy()
                w[i] += h
                moved = log_complete_posterior(ds, aug, Theta.from_vector(w))
                assert abs(moved - base) < 1e-2


@given(c=st.floats(0.5, 2.9), d=st.floats(1e-4, 0.1))
def test_censored_contribution_monotone(c, d):
    th = THETA_REFERENCE
    for z, s in ((0, NON_SWITCHER), (1, NON_SWITCHER), (1, SwitchStatus.at(0.7))):
        lo = PatientRecord(1, z, c, None if z else c, 0, c, 0)
        hi = PatientRecord(1, z, c + d, None if z else c + d, 0, c + d, 0)
        a = AugmentedUnit(s)
        assert unit_log_complete(hi, a, th) <= unit_log_complete(lo, a, th)
