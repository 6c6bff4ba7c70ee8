"""Causal estimands for the switching model and their posterior summaries.

Switcher estimands condition on a switching time ``s``; for ``kappa > 0``
they average over control-arm survival draws with common random numbers
(fixed by ``seed``), so curves are smooth across ``y`` and across posterior
draws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import weibull
from .model import Theta
from .weibull import WeibullParams

__all__ = [
    "DEFAULT_Y_GRID",
    "DEFAULT_S_VALUES",
    "itt_ace",
    "itt_dce",
    "ace_ns",
    "dce_ns",
    "ace_sw",
    "dce_sw",
    "cdce_sw",
    "coarse_effects",
    "EstimandSummary",
    "summarize",
    "CURVE_HEADER",
    "write_curves",
]

DEFAULT_Y_GRID = np.round(np.concatenate([np.arange(1, 61) * 0.05, 3.0 + np.arange(1, 21) * 0.25]), 10)
DEFAULT_S_VALUES = np.round(np.arange(1, 12) * 0.25, 10)
CURVE_HEADER = ["estimand", "s", "y", "kappa", "q025", "median", "q975"]


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def _surv(t, shape, log_rate):
    """Weibull survival with G(t) = 1 for t <= 0; broadcasts."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    with np.errstate(divide="ignore"):
        lt = np.log(np.where(pos, t, 1.0))
    return np.where(pos, np.exp(-np.exp(log_rate + shape * lt)), 1.0)


def _uniforms(mc_size: int, seed) -> np.ndarray:
    u = np.random.default_rng(seed).random(mc_size)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def _inv(u, shape, log_rate):
    return np.exp((np.log(-np.log(u)) - log_rate) / shape)


# -- intention to treat -----------------------------------------------------

def itt_ace(p0: WeibullParams, p1: WeibullParams) -> float:
    """Difference in mean survival between the treated (``p1``) and control arms."""
    return weibull.mean(p1) - weibull.mean(p0)


def itt_dce(y, p0: WeibullParams, p1: WeibullParams):
    y = np.asarray(y, dtype=float)
    return _ret(_surv(y, p1.shape, p1.log_rate) - _surv(y, p0.shape, p0.log_rate))


# -- non-switchers -------------------------------------------------------------

def ace_ns(theta: Theta) -> float:
    m0 = weibull.mean(theta.y0_ns)
    return theta.kappa * m0 + weibull.mean(theta.y1_ns) - m0


def dce_ns(y, theta: Theta, mc_size: int = 2000, seed=0):
    """P(Y(1) > y | non-switcher) - P(Y(0) > y | non-switcher)."""
    y = np.asarray(y, dtype=float)
    g0 = _surv(y, theta.y0_ns.shape, theta.y0_ns.log_rate)
    if theta.kappa == 0:
        g1 = _surv(y, theta.y1_ns.shape, theta.y1_ns.log_rate)
    else:
        y0 = _inv(_uniforms(mc_size, seed), theta.y0_ns.shape, theta.y0_ns.log_rate)
        arg = y[..., None] - theta.kappa * y0
        g1 = _surv(arg, theta.y1_ns.shape, theta.y1_ns.log_rate).mean(axis=-1)
    return _ret(g1 - g0)


# -- switchers -----------------------------------------------------------------

def _sw_params(s, theta: Theta):
    log_s = np.log(s)
    return (theta.y0_sw.log_rate + theta.lam * log_s,
            theta.y1_sw.log_rate + theta.lam * log_s)


def _mean_w(shape, log_rate):
    return np.exp(-log_rate / shape + gammaln(1.0 + 1.0 / shape))


def ace_sw(s, theta: Theta):
    """E[Y(1) - Y(0) | switcher at s]; vectorized over ``s``."""
    s = np.asarray(s, dtype=float)
    r0, r1 = _sw_params(s, theta)
    m0 = s + _mean_w(theta.y0_sw.shape, r0)
    return _ret(theta.kappa * m0 + _mean_w(theta.y1_sw.shape, r1) - m0)


def _y0_draws(s, theta: Theta, u):
    """Control-arm survival draws for switchers at ``s`` (shape ``s.shape + u.shape``)."""
    s = np.asarray(s, dtype=float)[..., None]
    r0, _ = _sw_params(s, theta)
    return s + _inv(u, theta.y0_sw.shape, r0)


def _dce_parts(y, s, theta: Theta, u):
    """Arrays (P1, P0) of shape ``(len(y), len(s))``."""
    y = np.asarray(y, dtype=float)[:, None]
    s = np.asarray(s, dtype=float)
    r0, r1 = _sw_params(s, theta)
    nu = theta.y1_sw.shape
    if theta.kappa == 0:
        p1 = _surv(y, nu, r1)
        p0 = _surv(y - s, theta.y0_sw.shape, r0)
        return p1, p0
    y0 = _y0_draws(s, theta, u)                          # (m, mc)
    arg = y[:, :, None] - theta.kappa * y0[None]          # (ny, m, mc)
    p1 = _surv(arg, nu, r1[:, None]).mean(axis=-1)
    p0 = (y0[None] > y[:, :, None]).mean(axis=-1)
    return p1, p0


def _cdce_parts(y, s, theta: Theta, u):
    """Numerators and denominator for the switch-conditioned probabilities.

    Returns ``(num1, num0, den)``; ``num*`` are ``(len(y), len(s))`` and
    ``den`` is ``(len(s),)``.
    """
    y = np.asarray(y, dtype=float)[:, None]
    s = np.asarray(s, dtype=float)
    r0, r1 = _sw_params(s, theta)
    nu = theta.y1_sw.shape
    top = np.maximum(y, s)
    if theta.kappa == 0:
        den = _surv(s, nu, r1)
        num1 = _surv(top, nu, r1)
        num0 = _surv(y - s, theta.y0_sw.shape, r0) * den
        return num1, num0, den
    y0 = _y0_draws(s, theta, u)                          # (m, mc)
    w = _surv(s[:, None] - theta.kappa * y0, nu, r1[:, None])
    den = w.mean(axis=-1)
    num1 = _surv(top[:, :, None] - theta.kappa * y0[None], nu, r1[None, :, None]).mean(axis=-1)
    num0 = ((y0[None] > y[:, :, None]) * w[None]).mean(axis=-1)
    return num1, num0, den


def dce_sw(y, s: float, theta: Theta, mc_size: int = 2000, seed=0):
    """P(Y(1) > y | s) - P(Y(0) > y | s) for a switcher at ``s``."""
    scalar = np.ndim(y) == 0
    u = None if theta.kappa == 0 else _uniforms(mc_size, seed)
    p1, p0 = _dce_parts(np.atleast_1d(y), np.atleast_1d(s), theta, u)
    out = (p1 - p0)[:, 0]
    return float(out[0]) if scalar else out


def cdce_sw(y, s: float, theta: Theta, mc_size: int = 2000, seed=0):
    """DCE for a switcher at ``s`` restricted to units with Y(1) >= s.

    Exactly 0 for ``y <= s``; ``nan`` when the conditioning event has no
    Monte Carlo mass.
    """
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    u = None if theta.kappa == 0 else _uniforms(mc_size, seed)
    num1, num0, den = _cdce_parts(yv, np.atleast_1d(s), theta, u)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den[0] > 0, (num1[:, 0] - num0[:, 0]) / den[0], np.nan)
    out = np.where(yv <= s, 0.0, out)
    return float(out[0]) if np.ndim(y) == 0 else out


# -- coarsened strata ----------------------------------------------------------

def _region_draws(region, theta: Theta, mc_size: int, rng):
    lo, hi = region
    if not (0 <= lo < hi):
        raise ValueError("region must satisfy 0 <= lo < hi")
    p = theta.sw
    f_lo = -np.expm1(-weibull.cumulative_hazard(lo, p))
    f_hi = 1.0 if np.isinf(hi) else -np.expm1(-weibull.cumulative_hazard(hi, p))
    mass = f_hi - f_lo
    if not mass > 0:
        raise ValueError("switching-time region has zero probability")
    u = f_lo + mass * rng.random(mc_size)
    u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return np.asarray(weibull.quantile(u, p), dtype=float)


def coarse_effects(region, kind: str, theta: Theta, mc_size: int = 2000,
                   y_grid: Optional[Sequence[float]] = None, seed=0):
    """Effects for switchers whose switching time falls in ``region = (lo, hi)``.

    ``kind`` is ``"ace"`` (returns a float), ``"dce"`` or ``"cdce"`` (return
    arrays over ``y_grid``).
    """
    rng = np.random.default_rng(seed)
    s = _region_draws(region, theta, mc_size, rng)
    if kind == "ace":
        return float(np.mean(ace_sw(s, theta)))
    y = DEFAULT_Y_GRID if y_grid is None else np.asarray(y_grid, dtype=float)
    # one control-arm survival draw per sampled switching time
    u = rng.random(mc_size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    if kind == "dce":
        if theta.kappa == 0:
            p1, p0 = _dce_parts(y, s, theta, None)
            return (p1 - p0).mean(axis=1)
        y0 = s + _inv(u, theta.y0_sw.shape, _sw_params(s, theta)[0])
        _, r1 = _sw_params(s, theta)
        p1 = _surv(y[:, None] - theta.kappa * y0, theta.y1_sw.shape, r1).mean(axis=1)
        p0 = (y0 > y[:, None]).mean(axis=1)
        return p1 - p0
    if kind == "cdce":
        if theta.kappa == 0:
            num1, num0, den = _cdce_parts(y, s, theta, None)
        else:
            r0, r1 = _sw_params(s, theta)
            y0 = s + _inv(u, theta.y0_sw.shape, r0)
            nu = theta.y1_sw.shape
            den = _surv(s - theta.kappa * y0, nu, r1)
            num1 = _surv(np.maximum(y[:, None], s) - theta.kappa * y0, nu, r1)
            num0 = (y0 > y[:, None]) * den
        d = den.mean()
        if not d > 0:
            return np.full(len(y), np.nan)
        return (num1.mean(axis=1) - num0.mean(axis=1)) / d
    raise ValueError(f"unknown coarse estimand kind {kind!r}")


# -- summaries -----------------------------------------------------------------

@dataclass(frozen=True)
class EstimandSummary:
    median: float
    lower: float
    upper: float
    mean: float
    values: Optional[np.ndarray] = None


def summarize(values, keep_values: bool = False) -> EstimandSummary:
    """Median, central 95% interval (linear-interpolation quantiles) and mean."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise ValueError("need at least one non-missing draw")
    lo, med, hi = np.quantile(v, [0.025, 0.5, 0.975])
    # guard against rounding putting the median outside its interval
    lo, hi = min(lo, med), max(hi, med)
    return EstimandSummary(float(med), float(lo), float(hi), float(v.mean()),
                           v.copy() if keep_values else None)


def write_curves(rows: Iterable, fh) -> None:
    """Rows are ``(estimand, s, y, kappa, EstimandSummary)``; ``s``/``y`` may be None."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    f = lambda x: "" if x is None else repr(float(x))  # noqa: E731
    for name, s, y, kappa, summ in rows:
        w.writerow([name, f(s), f(y), f(kappa), repr(summ.lower), repr(summ.median),
                    repr(summ.upper)])
