"""Product-limit survival estimator for right-censored data."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["KmCurve", "km_fit", "km_eval", "write_km"]


@dataclass(frozen=True)
class KmCurve:
    """Step function jumping at each distinct observed time.

    ``times`` holds every distinct observed time (events and censorings);
    ``survival[k]`` is the estimate on ``[times[k], times[k+1])``.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray


def km_fit(times, events) -> KmCurve:
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(bool)
    if t.size == 0:
        raise ValueError("km_fit needs at least one observation")
    if t.shape != e.shape:
        raise ValueError("times and events must have equal length")
    if np.any(~(t > 0)):
        raise ValueError("times must be positive")
    uniq, inv = np.unique(t, return_inverse=True)
    d = np.bincount(inv, weights=e, minlength=len(uniq))
    n_at = np.bincount(inv, minlength=len(uniq))
    # at risk just before each time: everyone observed at or after it, so an
    # event tied with a censoring still counts the censored unit as at risk
    at_risk = n_at[::-1].cumsum()[::-1]
    surv = np.cumprod(1.0 - d / at_risk)
    return KmCurve(uniq, surv, at_risk.astype(np.int64), d.astype(np.int64))


def km_eval(curve: KmCurve, t):
    """Right-continuous evaluation; 1 before the first time, last value after."""
    t = np.asarray(t, dtype=float)
    k = np.searchsorted(curve.times, t, side="right")
    out = np.where(k == 0, 1.0, curve.survival[np.maximum(k - 1, 0)])
    return float(out) if out.ndim == 0 else out


def write_km(curve: KmCurve, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "survival", "at_risk", "events"])
    for row in zip(curve.times, curve.survival, curve.at_risk, curve.events):
        w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])
