"""Weibull primitives in the (shape, log-rate) parameterization.

A Weibull variable with shape ``a`` and log-rate ``b`` has

    f(t) = a t^(a-1) exp(b - e^b t^a),   G(t) = exp(-e^b t^a).

Everything is computed in the log domain and ``t^a`` is always formed as
``exp(a log t)``.  Functions accept scalars or arrays for ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "WeibullParams",
    "log_pdf",
    "log_survival",
    "hazard",
    "cumulative_hazard",
    "mean",
    "sample",
    "quantile",
    "censored_loglik",
]


@dataclass(frozen=True)
class WeibullParams:
    """Shape ``alpha`` > 0 and log-rate ``beta`` (rate ``eta = exp(beta)``)."""

    shape: float
    log_rate: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"Weibull shape must be positive and finite, got {self.shape!r}")
        if not np.isfinite(self.log_rate):
            raise ValueError(f"Weibull log-rate must be finite, got {self.log_rate!r}")


def _as_positive(t, strict):
    t = np.asarray(t, dtype=float)
    bad = (t <= 0) if strict else (t < 0)
    if np.any(bad | np.isnan(t)):
        op = ">" if strict else ">="
        raise ValueError(f"time argument must be {op} 0")
    return t


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def cumulative_hazard(t, p: WeibullParams):
    """``e^b t^a``; defined for ``t >= 0``."""
    t = _as_positive(t, strict=False)
    with np.errstate(divide="ignore"):
        log_t = np.log(t)
    return _ret(np.exp(p.log_rate + p.shape * log_t))


def log_survival(t, p: WeibullParams):
    return _ret(-np.asarray(cumulative_hazard(t, p)))


def log_pdf(t, p: WeibullParams):
    t = _as_positive(t, strict=True)
    log_t = np.log(t)
    return _ret(np.log(p.shape) + (p.shape - 1.0) * log_t + p.log_rate
                - np.exp(p.log_rate + p.shape * log_t))


def hazard(t, p: WeibullParams):
    t = _as_positive(t, strict=True)
    return _ret(np.exp(np.log(p.shape) + (p.shape - 1.0) * np.log(t) + p.log_rate))


def mean(p: WeibullParams) -> float:
    """``exp(-b/a) Gamma(1 + 1/a)``."""
    return float(np.exp(-p.log_rate / p.shape + gammaln(1.0 + 1.0 / p.shape)))


def quantile(q, p: WeibullParams):
    q = np.asarray(q, dtype=float)
    return _ret(np.exp((np.log(-np.log1p(-q)) - p.log_rate) / p.shape))


def sample(p: WeibullParams, u):
    """Inverse-CDF draw: ``u`` is a uniform(0, 1) variate (or array of them).

    The returned value satisfies ``log_survival(sample(p, u), p) == log(u)``.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1) | np.isnan(u)):
        raise ValueError("uniform variate must lie in (0, 1)")
    return _ret(np.exp((np.log(-np.log(u)) - p.log_rate) / p.shape))


def censored_loglik(log_t, event, shape, log_rate):
    """Sum of right-censored Weibull log-likelihood terms.

    ``log_t`` holds log times (``-inf`` allowed for censored zero times),
    ``event`` is 0/1, ``log_rate`` may be a scalar or a per-unit array.
    Events contribute ``log f``, censored units ``log G``.
    """
    cum = np.exp(log_rate + shape * log_t)
    dens = np.log(shape) + (shape - 1.0) * log_t + log_rate
    return float(np.sum(np.where(event, dens, 0.0)) - np.sum(cum))
