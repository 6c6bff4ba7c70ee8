"""Parameter vector, priors and log-density evaluations for the switching model.

Augmented switching statuses are passed around in array form as ``s_star``
(``nan`` marks a non-switcher) and ``y0_star`` (``nan`` when absent).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from . import weibull
from .data import AugmentedUnit, Dataset, PatientRecord
from .weibull import WeibullParams

__all__ = [
    "PARAM_NAMES",
    "SHAPE_NAMES",
    "Theta",
    "PriorSpec",
    "log_prior",
    "unit_log_complete",
    "log_complete_posterior",
    "complete_loglik_terms",
    "log_observed_likelihood",
    "THETA_REFERENCE",
]

PARAM_NAMES = (
    "pi",
    "alpha_s", "beta_s",
    "alpha_y_ns", "beta_y_ns",
    "alpha_y_sw", "beta_y_sw",
    "nu_y_ns", "gamma_y_ns",
    "nu_y_sw", "gamma_y_sw",
    "lambda",
)
SHAPE_NAMES = ("alpha_s", "alpha_y_ns", "alpha_y_sw", "nu_y_ns", "nu_y_sw")
LOCATION_NAMES = ("beta_s", "beta_y_ns", "beta_y_sw", "gamma_y_ns", "gamma_y_sw", "lambda")


@dataclass(frozen=True)
class Theta:
    """Full parameter vector. ``kappa`` is fixed for a run and never updated."""

    pi: float
    sw: WeibullParams
    y0_ns: WeibullParams
    y0_sw: WeibullParams
    y1_ns: WeibullParams
    y1_sw: WeibullParams
    lam: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise ValueError(f"pi must lie in (0, 1), got {self.pi!r}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa!r}")
        if not np.isfinite(self.lam):
            raise ValueError("lambda must be finite")

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.pi,
            self.sw.shape, self.sw.log_rate,
            self.y0_ns.shape, self.y0_ns.log_rate,
            self.y0_sw.shape, self.y0_sw.log_rate,
            self.y1_ns.shape, self.y1_ns.log_rate,
            self.y1_sw.shape, self.y1_sw.log_rate,
            self.lam,
        ])

    @classmethod
    def from_vector(cls, v: Sequence[float], kappa: float = 0.0) -> "Theta":
        v = [float(x) for x in v]
        if len(v) != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got {len(v)}")
        W = WeibullParams
        return cls(v[0], W(v[1], v[2]), W(v[3], v[4]), W(v[5], v[6]),
                   W(v[7], v[8]), W(v[9], v[10]), v[11], float(kappa))

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, self.to_vector().tolist())) | {"kappa": self.kappa}

    @classmethod
    def from_dict(cls, d: dict) -> "Theta":
        return cls.from_vector([d[k] for k in PARAM_NAMES], d.get("kappa", 0.0))

    def with_kappa(self, kappa: float) -> "Theta":
        return replace(self, kappa=float(kappa))


# posterior means reported for the application (kappa = 0)
THETA_REFERENCE = Theta.from_vector(
    [0.38, 1.56, -1.29, 1.38, -1.09, 0.94, -1.21, 1.29, -1.85, 1.30, -2.24, 0.10], kappa=0.0)


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters. Gamma priors are (shape, scale); normals are (mean, variance)."""

    pi_beta: tuple = (1.0, 1.0)
    shape_gammas: dict = field(default_factory=lambda: {
        "alpha_s": (1.0, 10.0),
        "alpha_y_ns": (1.0, 10.0),
        "alpha_y_sw": (1.0, 10.0),
        "nu_y_ns": (125.0, 0.01),
        "nu_y_sw": (1.0, 10.0),
    })
    location_normals: dict = field(default_factory=lambda: {
        "beta_s": (0.0, 1e4),
        "beta_y_ns": (0.0, 1e4),
        "beta_y_sw": (0.0, 1e4),
        "gamma_y_ns": (0.0, 1.0),
        "gamma_y_sw": (0.0, 1.0),
        "lambda": (0.0, 1e4),
    })
    lambda_prior_kind: str = "normal"

    def __post_init__(self):
        a, b = self.pi_beta
        if a <= 0 or b <= 0:
            raise ValueError("Beta hyperparameters must be positive")
        if set(self.shape_gammas) != set(SHAPE_NAMES):
            raise ValueError(f"shape_gammas needs keys {SHAPE_NAMES}")
        if set(self.location_normals) != set(LOCATION_NAMES):
            raise ValueError(f"location_normals needs keys {LOCATION_NAMES}")
        for k, (sh, sc) in self.shape_gammas.items():
            if sh <= 0 or sc <= 0:
                raise ValueError(f"Gamma hyperparameters for {k} must be positive")
        for k, (_, var) in self.location_normals.items():
            if var <= 0:
                raise ValueError(f"normal variance for {k} must be positive")
        if self.lambda_prior_kind not in ("normal", "improper"):
            raise ValueError("lambda_prior_kind must be 'normal' or 'improper'")

    def with_lambda_prior(self, kind: str, variance: Optional[float] = None) -> "PriorSpec":
        loc = dict(self.location_normals)
        if variance is not None:
            loc["lambda"] = (loc["lambda"][0], float(variance))
        return replace(self, location_normals=loc, lambda_prior_kind=kind)

    def component_logpdf(self, name: str, x: float) -> float:
        """Log prior density of one named component (``-inf`` off support)."""
        if name == "pi":
            if not 0.0 < x < 1.0:
                return -np.inf
            return float(stats.beta.logpdf(x, *self.pi_beta))
        if name in self.shape_gammas:
            if not x > 0.0:
                return -np.inf
            a, scale = self.shape_gammas[name]
            return float((a - 1.0) * np.log(x) - x / scale - a * np.log(scale) - gammaln(a))
        if name == "lambda" and self.lambda_prior_kind == "improper":
            return 0.0
        mu, var = self.location_normals[name]
        return float(-0.5 * np.log(2.0 * np.pi * var) - 0.5 * (x - mu) ** 2 / var)


def log_prior(theta, prior: PriorSpec = PriorSpec()) -> float:
    """Sum of component log densities. Accepts a :class:`Theta` or a raw 12-vector."""
    v = theta.to_vector() if isinstance(theta, Theta) else np.asarray(theta, dtype=float)
    total = 0.0
    for name, x in zip(PARAM_NAMES, v):
        lp = prior.component_logpdf(name, float(x))
        if lp == -np.inf:
            return -np.inf
        total += lp
    return total


# -- complete-data densities ----------------------------------------------

def _block(arg, event, p: WeibullParams, log_rate_shift=0.0):
    """Weibull density (event) or survival (censored) at a shifted argument."""
    rate = p.log_rate + log_rate_shift
    if event:
        if not arg > 0:
            return -np.inf
        la = np.log(arg)
        return float(np.log(p.shape) + (p.shape - 1.0) * la + rate - np.exp(rate + p.shape * la))
    if arg <= 0:
        return 0.0
    return float(-np.exp(rate + p.shape * np.log(arg)))


def _status_time(aug: AugmentedUnit):
    return aug.s_star.time


def unit_log_complete(rec: PatientRecord, aug: AugmentedUnit, theta: Theta,
                      latent_y0_density: bool = False) -> float:
    """One unit's factor of the complete-data posterior kernel.

    With ``latent_y0_density`` set, treated units under ``kappa > 0`` also
    carry the density of their imputed control-arm survival time; the
    sampler needs it, the default leaves it out.
    """
    s = _status_time(aug)
    if rec.z == 0:
        if s is None:
            # censored survival has y_tilde == c
            return float(np.log(theta.pi)) + _block(rec.y_tilde, rec.y_event, theta.y0_ns)
        out = float(np.log1p(-theta.pi))
        if not rec.s_event:
            # switching after censoring: only the switching-time survival is observed
            return out + _block(s, 0, theta.sw)
        out += _block(s, 1, theta.sw)
        shift = theta.lam * np.log(s)
        if rec.y_event:
            return out + _block(rec.y_tilde - s, 1, theta.y0_sw, shift)
        return out + _block(rec.c - s, 0, theta.y0_sw, shift)

    y0 = aug.y0_star if theta.kappa > 0 else 0.0
    if theta.kappa > 0 and y0 is None:
        raise ValueError("treated units need y0_star when kappa > 0")
    arg = rec.y_tilde - theta.kappa * y0
    if s is None:
        out = float(np.log(theta.pi)) + _block(arg, rec.y_event, theta.y1_ns)
        if latent_y0_density and theta.kappa > 0:
            out += _block(y0, 1, theta.y0_ns)
        return out
    shift = theta.lam * np.log(s)
    out = float(np.log1p(-theta.pi)) + _block(s, 1, theta.sw) \
        + _block(arg, rec.y_event, theta.y1_sw, shift)
    if latent_y0_density and theta.kappa > 0:
        out += _block(y0 - s, 1, theta.y0_sw, shift)
    return out


def _arr_block(arg, event, shape, log_rate):
    """Vectorized :func:`_block`; ``log_rate`` may be per-unit."""
    event = np.asarray(event, dtype=bool)
    arg = np.asarray(arg, dtype=float)
    pos = arg > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.log(np.where(pos, arg, 1.0))
        cum = np.where(pos, np.exp(log_rate + shape * la), 0.0)
        dens = np.log(shape) + (shape - 1.0) * la + log_rate - cum
    return np.where(event, np.where(pos, dens, -np.inf), -cum)


def complete_loglik_terms(data: Dataset, s_star, y0_star, theta: Theta,
                          latent_y0_density: bool = False) -> np.ndarray:
    """Per-unit complete-data log contributions, vectorized."""
    col = data.columns
    s_star = np.asarray(s_star, dtype=float)
    n = len(col.z)
    if n == 0:
        return np.zeros(0)
    is_sw = ~np.isnan(s_star)
    s_safe = np.where(is_sw, s_star, 1.0)
    log_s = np.log(s_safe)
    lp, l1p = np.log(theta.pi), np.log1p(-theta.pi)
    ctrl = col.z == 0
    out = np.empty(n)

    # controls
    ns_term = lp + _arr_block(np.where(col.y_event == 1, col.y_tilde, col.c), col.y_event,
                              theta.y0_ns.shape, theta.y0_ns.log_rate)
    obs_s = col.s_event == 1
    y_arg = np.where(col.y_event == 1, col.y_tilde, col.c) - s_safe
    sw_obs = (_arr_block(s_safe, True, theta.sw.shape, theta.sw.log_rate)
              + _arr_block(y_arg, col.y_event, theta.y0_sw.shape,
                           theta.y0_sw.log_rate + theta.lam * log_s))
    sw_unobs = _arr_block(s_safe, False, theta.sw.shape, theta.sw.log_rate)
    sw_term = l1p + np.where(obs_s, sw_obs, sw_unobs)
    out[ctrl] = np.where(is_sw, sw_term, ns_term)[ctrl]

    # treated
    tr = ~ctrl
    if np.any(tr):
        if theta.kappa > 0:
            y0 = np.asarray(y0_star, dtype=float)
            if np.any(np.isnan(y0[tr])):
                raise ValueError("treated units need y0_star when kappa > 0")
        else:
            y0 = np.zeros(n)
        arg = col.y_tilde - theta.kappa * np.where(tr, y0, 0.0)
        t_ns = lp + _arr_block(arg, col.y_event, theta.y1_ns.shape, theta.y1_ns.log_rate)
        t_sw = (l1p + _arr_block(s_safe, True, theta.sw.shape, theta.sw.log_rate)
                + _arr_block(arg, col.y_event, theta.y1_sw.shape,
                             theta.y1_sw.log_rate + theta.lam * log_s))
        if latent_y0_density and theta.kappa > 0:
            y0s = np.where(tr, y0, 1.0)
            t_ns = t_ns + _arr_block(y0s, True, theta.y0_ns.shape, theta.y0_ns.log_rate)
            t_sw = t_sw + _arr_block(y0s - s_safe, True, theta.y0_sw.shape,
                                     theta.y0_sw.log_rate + theta.lam * log_s)
        out[tr] = np.where(is_sw, t_sw, t_ns)[tr]
    return out


def _aug_arrays(aug: Sequence[AugmentedUnit]):
    s = np.array([np.nan if a.s_star.time is None else a.s_star.time for a in aug], dtype=float)
    y0 = np.array([np.nan if a.y0_star is None else a.y0_star for a in aug], dtype=float)
    return s, y0


def log_complete_posterior(data: Dataset, aug, theta: Theta, prior: PriorSpec = PriorSpec(),
                           latent_y0_density: bool = False) -> float:
    """``log_prior`` plus the sum of unit contributions.

    ``aug`` is either a sequence of :class:`AugmentedUnit` or a pair of arrays
    ``(s_star, y0_star)``.
    """
    lp = log_prior(theta, prior)
    if len(data) == 0 or lp == -np.inf:
        return lp
    if isinstance(aug, tuple) and len(aug) == 2 and isinstance(aug[0], np.ndarray):
        s, y0 = aug
    else:
        if len(aug) != len(data):
            raise ValueError("augmentation length does not match dataset")
        s, y0 = _aug_arrays(aug)
    return lp + float(np.sum(complete_loglik_terms(data, s, y0, theta, latent_y0_density)))


# -- observed-data likelihood ---------------------------------------------

def _control_observed_terms(col, idx, theta: Theta) -> np.ndarray:
    lp, l1p = np.log(theta.pi), np.log1p(-theta.pi)
    z = col.z[idx]
    if np.any(z != 0):
        raise ValueError("expected control units only")
    se, ye = col.s_event[idx] == 1, col.y_event[idx] == 1
    c, y, s = col.c[idx], col.y_tilde[idx], col.s_tilde[idx]
    s_safe = np.where(se, s, 1.0)
    out = np.empty(len(idx))
    known_ns = ~se & ye
    out[known_ns] = lp + _arr_block(y[known_ns], True, theta.y0_ns.shape, theta.y0_ns.log_rate)
    amb = ~se & ~ye
    a = lp + _arr_block(c[amb], False, theta.y0_ns.shape, theta.y0_ns.log_rate)
    b = l1p + _arr_block(c[amb], False, theta.sw.shape, theta.sw.log_rate)
    out[amb] = np.logaddexp(a, b)
    sw = se
    rate = theta.y0_sw.log_rate + theta.lam * np.log(s_safe[sw])
    arg = np.where(ye[sw], y[sw], c[sw]) - s_safe[sw]
    out[sw] = (l1p + _arr_block(s_safe[sw], True, theta.sw.shape, theta.sw.log_rate)
               + _arr_block(arg, ye[sw], theta.y0_sw.shape, rate))
    return out


def _latent_pool(theta: Theta, mc_size: int, seed):
    rng = np.random.default_rng(seed)

    def draw(shape, rate):
        u = rng.random(mc_size)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return np.exp((np.log(-np.log(u)) - rate) / shape)

    s = draw(theta.sw.shape, theta.sw.log_rate)
    y0_ns = draw(theta.y0_ns.shape, theta.y0_ns.log_rate)
    y0_sw = s + draw(theta.y0_sw.shape, theta.y0_sw.log_rate + theta.lam * np.log(s))
    return s, y0_ns, y0_sw


def _treated_observed_terms(col, idx, theta: Theta, mc_size: int, seed, chunk=256):
    s, y0_ns, y0_sw = _latent_pool(theta, mc_size, seed)
    lp, l1p = np.log(theta.pi), np.log1p(-theta.pi)
    log_m = np.log(mc_size)
    rate_sw = theta.y1_sw.log_rate + theta.lam * np.log(s)
    out = np.empty(len(idx))
    for lo in range(0, len(idx), chunk):
        j = idx[lo:lo + chunk]
        y = col.y_tilde[j][:, None]
        ev = (col.y_event[j] == 1)[:, None]
        if theta.kappa > 0:
            a_ns = _arr_block(y - theta.kappa * y0_ns, ev, theta.y1_ns.shape, theta.y1_ns.log_rate)
            a_ns = logsumexp(a_ns, axis=1) - log_m
        else:
            a_ns = _arr_block(y[:, 0], ev[:, 0], theta.y1_ns.shape, theta.y1_ns.log_rate)
        a_sw = _arr_block(y - theta.kappa * y0_sw, ev, theta.y1_sw.shape, rate_sw)
        a_sw = logsumexp(a_sw, axis=1) - log_m
        out[lo:lo + chunk] = np.logaddexp(lp + a_ns, l1p + a_sw)
    return out


def log_observed_likelihood(data: Dataset, theta: Theta, mc_size: int = 4096, seed=0) -> float:
    """Observed-data log likelihood.

    Controls are exact. Each treated unit integrates its survival factor over
    the latent (switching time, control survival) pair by Monte Carlo using a
    shared pool of ``mc_size`` prior draws; the result is deterministic in
    ``seed``.
    """
    if mc_size < 1:
        raise ValueError("mc_size must be >= 1")
    if len(data) == 0:
        return 0.0
    col = data.columns
    ctrl = np.flatnonzero(col.z == 0)
    trt = np.flatnonzero(col.z == 1)
    total = float(np.sum(_control_observed_terms(col, ctrl, theta))) if len(ctrl) else 0.0
    if len(trt):
        total += float(np.sum(_treated_observed_terms(col, trt, theta, mc_size, seed)))
    return total
