"""Convergence diagnostics and posterior predictive checks.

Discrepancies act on *complete* data: a :class:`~switchps.data.Dataset`
together with a switching-status array ``s_star`` (``nan`` = non-switcher;
control switchers whose switch was not observed carry ``s_star = c``).
The predictive checks are defined for ``kappa = 0`` fits only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, draw_potential_outcomes, observe
from .kaplan_meier import km_eval, km_fit
from .model import PARAM_NAMES, Theta, complete_loglik_terms

__all__ = [
    "gelman_rubin",
    "rhat_table",
    "impute_statuses",
    "replicate_data",
    "disc_bic",
    "disc_deviance_y",
    "disc_deviance_s",
    "disc_km",
    "disc_signal_noise",
    "pppv",
    "PppvReport",
    "run_ppc",
    "DEFAULT_KM_GRID",
    "KM_GROUPS",
    "SN_GROUPS",
]

DEFAULT_KM_GRID = np.round(np.arange(1, 301) * 0.01, 10)
KM_GROUPS = ("survival_ns", "survival_sw", "switching")
SN_GROUPS = ("survival_ns", "survival_sw", "switching")
N_PARAMS = 12


# -- convergence ---------------------------------------------------------------

def gelman_rubin(chains) -> float:
    """Potential scale reduction for an ``(m, n)`` array of draws.

    Returns ``nan`` when the within-chain variance is zero.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least 2 chains of length >= 2")
    n = x.shape[1]
    w = x.var(axis=1, ddof=1).mean()
    b = n * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return float("nan")
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def rhat_table(theta_array) -> dict:
    """R-hat per parameter for an ``(m, n, 12)`` draw array."""
    a = np.asarray(theta_array)
    return {name: gelman_rubin(a[:, :, i]) for i, name in enumerate(PARAM_NAMES)}


# -- complete data ---------------------------------------------------------------

def _surv_term(t, ev, shape, log_rate):
    """Log survival or log density, vectorized, with G(t<=0) = 1."""
    pos = t > 0
    la = np.log(np.where(pos, t, 1.0))
    cum = np.where(pos, np.exp(log_rate + shape * la), 0.0)
    dens = np.log(shape) + (shape - 1.0) * la + log_rate - cum
    return np.where(ev, np.where(pos, dens, -np.inf), -cum)


def impute_statuses(data: Dataset, theta: Theta, rng, max_rounds: int = 100_000) -> np.ndarray:
    """Exact draw of latent switching statuses given ``theta`` (``kappa = 0``).

    Ambiguous controls use their closed-form membership probability; treated
    units use rejection sampling from the status prior.
    """
    if theta.kappa != 0:
        raise ValueError("status imputation for predictive checks requires kappa = 0")
    col = data.columns
    n = len(col.z)
    s = np.full(n, np.nan)
    ctrl = col.z == 0
    obs = ctrl & (col.s_event == 1)
    s[obs] = col.s_tilde[obs]
    amb = np.flatnonzero(ctrl & (col.s_event == 0) & (col.y_event == 0))
    c = col.c[amb]
    lc = np.log(c)
    a = np.log(theta.pi) - np.exp(theta.y0_ns.log_rate + theta.y0_ns.shape * lc)
    b = np.log1p(-theta.pi) - np.exp(theta.sw.log_rate + theta.sw.shape * lc)
    p_ns = np.exp(a - np.logaddexp(a, b))
    s[amb] = np.where(rng.random(len(amb)) < p_ns, np.nan, c)

    trt = np.flatnonzero(~ctrl)
    y = col.y_tilde[trt]
    ev = col.y_event[trt] == 1
    nu, g = theta.y1_sw.shape, theta.y1_sw.log_rate
    # envelope for the survival factor over all statuses and switching times
    log_ns = _surv_term(y, ev, theta.y1_ns.shape, theta.y1_ns.log_rate)
    log_sw_max = np.where(ev, np.log(nu) - np.log(y) - 1.0, 0.0)
    log_m = np.maximum(log_ns, log_sw_max)
    todo = np.arange(len(trt))
    out = np.full(len(trt), np.nan)
    for _ in range(max_rounds):
        if todo.size == 0:
            break
        k = todo.size
        is_ns = rng.random(k) < theta.pi
        u = rng.random(k)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        sw = np.exp((np.log(-np.log(u)) - theta.sw.log_rate) / theta.sw.shape)
        lh = np.where(is_ns, log_ns[todo],
                      _surv_term(y[todo], ev[todo], nu, g + theta.lam * np.log(sw)))
        acc = np.log(rng.random(k)) < lh - log_m[todo]
        out[todo[acc]] = np.where(is_ns[acc], np.nan, sw[acc])
        todo = todo[~acc]
    else:
        raise RuntimeError("status rejection sampler did not finish")
    s[trt] = out
    return s


def replicate_data(theta: Theta, data: Dataset, rng):
    """Redraw statuses and outcomes from ``theta`` keeping Z and C fixed.

    Returns ``(replicated Dataset, s_star)`` where ``s_star`` follows the
    complete-data convention of this module.
    """
    col = data.columns
    n = len(col.z)
    _, s0, y0, y1 = draw_potential_outcomes(theta, n, rng)
    s_tilde, s_event, y_tilde, y_event = observe(col.z, col.c, s0, y0, y1)
    rep = Dataset.from_columns(data.c_max, id=col.id, z=col.z, c=col.c, s_tilde=s_tilde,
                               s_event=s_event, y_tilde=y_tilde, y_event=y_event)
    hidden = (col.z == 0) & ~np.isnan(s0) & (s_event == 0)
    s_star = np.where(hidden, col.c, s0)
    return rep, s_star


# -- discrepancies ----------------------------------------------------------------

def disc_bic(data: Dataset, s_star, theta: Theta, n: int | None = None) -> float:
    """``-2 (L + 12 log n)`` with L the complete-data log likelihood."""
    n = len(data) if n is None else n
    ll = float(np.sum(complete_loglik_terms(data, s_star, None, theta)))
    return -2.0 * (ll + N_PARAMS * np.log(n))


def _deviance(delta, cumhaz) -> float:
    delta = np.asarray(delta, dtype=float)
    lam = np.asarray(cumhaz, dtype=float)
    m = delta - lam
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(delta > 0, np.log(np.where(delta > 0, lam, 1.0)), 0.0)
    return float(-2.0 * np.sum(m + delta * log_term))


def _cumhaz(t, shape, log_rate):
    pos = t > 0
    return np.where(pos, np.exp(log_rate + shape * np.log(np.where(pos, t, 1.0))), 0.0)


def disc_deviance_y(data: Dataset, s_star, theta: Theta) -> float:
    """Deviance of the survival outcome over arm-by-status groups."""
    col = data.columns
    s_star = np.asarray(s_star, dtype=float)
    is_sw = ~np.isnan(s_star)
    s_safe = np.where(is_sw, s_star, 1.0)
    log_s = np.log(s_safe)
    ctrl = col.z == 0
    y = col.y_tilde
    lam = np.empty(len(y))
    m = ctrl & ~is_sw
    lam[m] = _cumhaz(y[m], theta.y0_ns.shape, theta.y0_ns.log_rate)
    m = ctrl & is_sw
    lam[m] = _cumhaz(y[m] - s_safe[m], theta.y0_sw.shape,
                     theta.y0_sw.log_rate + theta.lam * log_s[m])
    m = ~ctrl & ~is_sw
    lam[m] = _cumhaz(y[m], theta.y1_ns.shape, theta.y1_ns.log_rate)
    m = ~ctrl & is_sw
    lam[m] = _cumhaz(y[m], theta.y1_sw.shape, theta.y1_sw.log_rate + theta.lam * log_s[m])
    return _deviance(col.y_event, lam)


def disc_deviance_s(data: Dataset, s_star, theta: Theta) -> float:
    """Deviance of the switching time among control switchers."""
    col = data.columns
    s_star = np.asarray(s_star, dtype=float)
    m = (col.z == 0) & ~np.isnan(s_star)
    t = np.where(col.s_event[m] == 1, col.s_tilde[m], col.c[m])
    return _deviance(col.s_event[m], _cumhaz(t, theta.sw.shape, theta.sw.log_rate))


def _km_groups(data: Dataset, s_star):
    col = data.columns
    is_sw = ~np.isnan(np.asarray(s_star, dtype=float))
    ctl_sw = (col.z == 0) & is_sw
    s_t = np.where(col.s_event == 1, col.s_tilde, col.c)
    return {
        "survival_ns": (col.y_tilde[~is_sw], col.y_event[~is_sw]),
        "survival_sw": (col.y_tilde[is_sw], col.y_event[is_sw]),
        "switching": (s_t[ctl_sw], col.s_event[ctl_sw]),
    }


def disc_km(data: Dataset, s_star, t_grid=DEFAULT_KM_GRID) -> dict:
    """Kaplan-Meier curves on ``t_grid`` for each group (all ones if a group is empty)."""
    out = {}
    grid = np.asarray(t_grid, dtype=float)
    for name, (t, e) in _km_groups(data, s_star).items():
        out[name] = np.ones(len(grid)) if len(t) == 0 else np.asarray(km_eval(km_fit(t, e), grid))
    return out


def _signal_noise_two(a, b):
    if len(a) < 2 or len(b) < 2:
        return (np.nan, np.nan, np.nan)
    signal = abs(np.mean(b) - np.mean(a))
    noise = np.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b))
    return (signal, noise, signal / noise if noise > 0 else np.nan)


def disc_signal_noise(data: Dataset, s_star) -> dict:
    """``{group: (signal, noise, ratio)}``; ``nan`` entries mark undefined groups."""
    col = data.columns
    is_sw = ~np.isnan(np.asarray(s_star, dtype=float))
    dead = col.y_event == 1
    out = {}
    for name, mask in (("survival_ns", ~is_sw), ("survival_sw", is_sw)):
        g0 = col.y_tilde[dead & mask & (col.z == 0)]
        g1 = col.y_tilde[dead & mask & (col.z == 1)]
        out[name] = _signal_noise_two(g0, g1)
    sw = col.s_tilde[(col.z == 0) & (col.s_event == 1)]
    if len(sw) < 2:
        out["switching"] = (np.nan, np.nan, np.nan)
    else:
        sig = float(np.mean(sw))
        noise = float(np.sqrt(np.var(sw, ddof=1) / len(sw)))
        out["switching"] = (sig, noise, sig / noise if noise > 0 else np.nan)
    return out


def pppv(d_obs, d_rep) -> float:
    """Fraction of draws with replicated discrepancy >= observed; ``nan`` pairs dropped."""
    o = np.asarray(d_obs, dtype=float)
    r = np.asarray(d_rep, dtype=float)
    if o.shape != r.shape or o.size == 0:
        raise ValueError("need paired, nonempty discrepancy sequences")
    ok = ~(np.isnan(o) | np.isnan(r))
    if not ok.any():
        return float("nan")
    return float(np.mean(r[ok] >= o[ok]))


# -- battery ----------------------------------------------------------------------

@dataclass
class PppvReport:
    values: dict                      # discrepancy name -> PPPV
    n_used: dict                      # discrepancy name -> draws with defined values
    km_grid: np.ndarray
    km: dict = field(default_factory=dict)   # group -> PPPV per grid time
    n_replicates: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "n_replicates": self.n_replicates,
            "pppv": self.values,
            "n_used": self.n_used,
            "km": {g: v.tolist() for g, v in self.km.items()},
            "km_grid": self.km_grid.tolist(),
        }, indent=2, allow_nan=True)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["discrepancy", "pppv", "n_used"])
        for k, v in self.values.items():
            w.writerow([k, repr(v), self.n_used[k]])

    def write_km_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "group", "pppv"])
        for g, vals in self.km.items():
            for t, p in zip(self.km_grid, vals):
                w.writerow([repr(float(t)), g, repr(float(p))])


def _discrepancies(data, s_star, theta, grid):
    out = {
        "bic": disc_bic(data, s_star, theta),
        "deviance_survival": disc_deviance_y(data, s_star, theta),
        "deviance_switching": disc_deviance_s(data, s_star, theta),
    }
    for g, (sig, noi, rat) in disc_signal_noise(data, s_star).items():
        out[f"signal_{g}"] = sig
        out[f"noise_{g}"] = noi
        out[f"ratio_{g}"] = rat
    return out, disc_km(data, s_star, grid)


def run_ppc(data: Dataset, thetas, seed=0, t_grid=DEFAULT_KM_GRID) -> PppvReport:
    """One replicate per posterior draw; refuses fits with ``kappa != 0``."""
    thetas = list(thetas)
    if not thetas:
        raise ValueError("no posterior draws supplied")
    if any(th.kappa != 0 for th in thetas):
        raise ValueError("posterior predictive checks are defined for kappa = 0 fits only")
    grid = np.asarray(t_grid, dtype=float)
    seeds = np.random.SeedSequence(seed).spawn(len(thetas))
    obs_d, rep_d = {}, {}
    obs_km = {g: [] for g in KM_GROUPS}
    rep_km = {g: [] for g in KM_GROUPS}
    for th, ss in zip(thetas, seeds):
        rng = np.random.default_rng(ss)
        s_obs = impute_statuses(data, th, rng)
        rep, s_rep = replicate_data(th, data, rng)
        do, ko = _discrepancies(data, s_obs, th, grid)
        dr, kr = _discrepancies(rep, s_rep, th, grid)
        for k in do:
            obs_d.setdefault(k, []).append(do[k])
            rep_d.setdefault(k, []).append(dr[k])
        for g in KM_GROUPS:
            obs_km[g].append(ko[g])
            rep_km[g].append(kr[g])
    values, n_used = {}, {}
    for k in obs_d:
        o, r = np.array(obs_d[k]), np.array(rep_d[k])
        values[k] = pppv(o, r)
        n_used[k] = int(np.sum(~(np.isnan(o) | np.isnan(r))))
    km = {g: np.mean(np.array(rep_km[g]) >= np.array(obs_km[g]), axis=0) for g in KM_GROUPS}
    return PppvReport(values, n_used, grid, km, len(thetas))
