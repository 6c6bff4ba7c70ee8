"""Data-augmentation MCMC for the switching model.

Each sweep imputes the latent quantities (treated control-arm survival
times when ``kappa > 0``, then switching statuses), draws ``pi`` from its
Beta full conditional, and runs one Metropolis-Hastings step per Weibull
parameter and for ``lambda`` in a fixed order.

Latent switching statuses are stored as a float array ``s_star`` with
``nan`` meaning non-switcher.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import weibull
from .data import (NON_SWITCHER, Dataset, ObservedPattern, PatientRecord, SwitchStatus,
                   classify)
from .model import PARAM_NAMES, SHAPE_NAMES, PriorSpec, Theta
from .weibull import WeibullParams

__all__ = [
    "McmcConfig",
    "ChainDraws",
    "Draws",
    "BLOCKS",
    "SNAPSHOT_NAMES",
    "pi_non_switcher",
    "impute_ambiguous_control",
    "propose_switch_status",
    "mh_switch_acceptance",
    "impute_treated_y0",
    "gibbs_pi",
    "gamma_proposal_logpdf",
    "mh_update_parameter",
    "BlockTarget",
    "initial_theta",
    "run_chain",
    "run_chains",
    "write_draws",
    "read_draws",
    "ItTConfig",
    "fit_itt",
]

BLOCKS = PARAM_NAMES[1:]
SNAPSHOT_NAMES = ("ey0_ns", "ey1_ns", "ace_ns")
_IDX = {name: i for i, name in enumerate(PARAM_NAMES)}

DEFAULT_SCALES = {
    "alpha_s": 0.05, "beta_s": 0.08,
    "alpha_y_ns": 0.05, "beta_y_ns": 0.08,
    "alpha_y_sw": 0.05, "beta_y_sw": 0.1,
    "nu_y_ns": 0.05, "gamma_y_ns": 0.08,
    "nu_y_sw": 0.05, "gamma_y_sw": 0.1,
    "lambda": 0.05,
}


@dataclass(frozen=True)
class McmcConfig:
    """Chain schedule and proposal settings.

    ``blocks`` restricts which parameter blocks are updated (all by default);
    ``init`` overrides starting values by parameter name.
    """

    n_iter: int = 125_000
    burn_in: int = 25_000
    thin: int = 20
    n_chains: int = 3
    seed: int = 0
    proposal_scales: dict = field(default_factory=lambda: dict(DEFAULT_SCALES))
    adapt_burnin: bool = True
    target_accept: float = 0.35
    blocks: Optional[tuple] = None
    init: Optional[dict] = None
    jitter: float = 0.2

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        unknown = set(self.proposal_scales) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown proposal scale keys: {sorted(unknown)}")
        if any(not (v > 0) for v in self.proposal_scales.values()):
            raise ValueError("proposal scales must be positive")
        if self.blocks is not None and set(self.blocks) - set(PARAM_NAMES):
            raise ValueError("unknown block names")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def scales(self) -> dict:
        return DEFAULT_SCALES | dict(self.proposal_scales)


@dataclass
class ChainDraws:
    theta: np.ndarray          # (n_keep, 12)
    snapshots: np.ndarray      # (n_keep, 3)
    iters: np.ndarray          # (n_keep,) 1-based iteration index
    accepted: dict             # post burn-in accept counts per block
    proposed: int              # post burn-in proposals per block
    scales: dict               # final (frozen) proposal scales

    def acceptance_rates(self) -> dict:
        if self.proposed == 0:
            return {k: float("nan") for k in self.accepted}
        return {k: v / self.proposed for k, v in self.accepted.items()}


@dataclass
class Draws:
    kappa: float
    chains: list

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_keep(self) -> int:
        return len(self.chains[0].iters) if self.chains else 0

    def theta_array(self) -> np.ndarray:
        """Shape ``(n_chains, n_keep, 12)``."""
        return np.stack([c.theta for c in self.chains])

    def pooled(self) -> np.ndarray:
        return np.concatenate([c.theta for c in self.chains]) if self.chains else np.zeros((0, 12))

    def pooled_snapshots(self) -> np.ndarray:
        return np.concatenate([c.snapshots for c in self.chains])

    def thetas(self):
        return [Theta.from_vector(v, self.kappa) for v in self.pooled()]

    def param(self, name: str) -> np.ndarray:
        """``(n_chains, n_keep)`` draws of one parameter."""
        return self.theta_array()[:, :, _IDX[name]]


# -- single-unit steps -----------------------------------------------------

def pi_non_switcher(c: float, theta: Theta) -> float:
    """P(non-switcher | survived and unswitched through ``c``)."""
    a = np.log(theta.pi) + weibull.log_survival(c, theta.y0_ns)
    b = np.log1p(-theta.pi) + weibull.log_survival(c, theta.sw)
    return float(np.exp(a - np.logaddexp(a, b)))


def impute_ambiguous_control(rec: PatientRecord, theta: Theta, u: float) -> SwitchStatus:
    if classify(rec) is not ObservedPattern.AMBIGUOUS_CONTROL:
        raise ValueError("unit is not an ambiguous control")
    return NON_SWITCHER if u < pi_non_switcher(rec.c, theta) else SwitchStatus.at(rec.c)


def propose_switch_status(theta: Theta, u1: float, u2: float) -> SwitchStatus:
    if u1 < theta.pi:
        return NON_SWITCHER
    return SwitchStatus.at(weibull.sample(theta.sw, u2))


def mh_switch_acceptance(current: SwitchStatus, cand: SwitchStatus, r: float, theta: Theta,
                         y0_star: Optional[float] = None) -> float:
    """Acceptance probability for a treated unit's switching-status proposal.

    ``r`` is the ratio of complete-data unit factors (candidate over current).
    """
    if theta.kappa > 0 and cand.is_switcher and y0_star is not None and cand.time > y0_star:
        return 0.0
    if not r > 0:
        return 0.0
    log_p = np.log(r)
    lpi, l1p = np.log(theta.pi), np.log1p(-theta.pi)
    if not current.is_switcher and cand.is_switcher:
        log_p += lpi - l1p - weibull.log_pdf(cand.time, theta.sw)
    elif current.is_switcher and not cand.is_switcher:
        log_p += l1p + weibull.log_pdf(current.time, theta.sw) - lpi
    elif current.is_switcher and cand.is_switcher:
        log_p += weibull.log_pdf(current.time, theta.sw) - weibull.log_pdf(cand.time, theta.sw)
    return float(min(1.0, np.exp(min(log_p, 0.0))))


def _y0_prior(s_star: SwitchStatus, theta: Theta):
    if s_star.is_switcher:
        s = s_star.time
        return s, WeibullParams(theta.y0_sw.shape, theta.y0_sw.log_rate + theta.lam * np.log(s))
    return 0.0, theta.y0_ns


def _y1_block(rec: PatientRecord, s_star: SwitchStatus, y0: float, theta: Theta) -> float:
    arg = rec.y_tilde - theta.kappa * y0
    if s_star.is_switcher:
        p = WeibullParams(theta.y1_sw.shape, theta.y1_sw.log_rate + theta.lam * np.log(s_star.time))
    else:
        p = theta.y1_ns
    if rec.y_event:
        return weibull.log_pdf(arg, p) if arg > 0 else -np.inf
    return weibull.log_survival(arg, p) if arg > 0 else 0.0


def impute_treated_y0(rec: PatientRecord, s_star: SwitchStatus, theta: Theta,
                      current: float, cand: float, u: float) -> float:
    """One MH step for a treated unit's control-arm survival time.

    ``cand`` must come from the prior sub-model for ``s_star``; the prior
    density then cancels and only the survival factor ratio remains.
    """
    if rec.z != 1 or theta.kappa <= 0:
        raise ValueError("y0 imputation applies to treated units with kappa > 0")
    if rec.y_event and cand > rec.y_tilde / theta.kappa:
        return current
    if cand == current:
        return current
    shift, p = _y0_prior(s_star, theta)
    if cand <= shift:
        return current
    log_r = (_y1_block(rec, s_star, cand, theta) + weibull.log_pdf(cand - shift, p)
             - _y1_block(rec, s_star, current, theta) - weibull.log_pdf(current - shift, p))
    log_p = log_r + weibull.log_pdf(current - shift, p) - weibull.log_pdf(cand - shift, p)
    return cand if np.log(u) < log_p else current


def gibbs_pi(n_ns: int, n_sw: int, prior_ab=(1.0, 1.0), rng=None) -> float:
    if n_ns < 0 or n_sw < 0:
        raise ValueError("counts must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    a, b = prior_ab
    return float(rng.beta(a + n_ns, b + n_sw))


def gamma_proposal_logpdf(x: float, center: float, scale: float) -> float:
    """Gamma density with mean ``center`` and standard deviation ``scale``."""
    k = (center / scale) ** 2
    rate = center / scale ** 2
    return float(k * np.log(rate) - gammaln(k) + (k - 1.0) * np.log(x) - rate * x)


# -- vectorized sub-model likelihoods -------------------------------------

class _Weib:
    """Right-censored Weibull log likelihood with log rate ``base + lam * log_s``.

    Censored units at time zero contribute nothing and are dropped.
    """

    __slots__ = ("log_t", "log_s", "d", "s_lt", "s_ls", "empty")

    def __init__(self, t, event, log_s=None):
        t = np.asarray(t, dtype=float)
        event = np.asarray(event, dtype=bool)
        if np.any(event & ~(t > 0)):
            raise ValueError("event at a nonpositive time has zero density")
        keep = t > 0
        self.log_t = np.log(t[keep])
        ev = event[keep]
        self.log_s = None if log_s is None else np.asarray(log_s, dtype=float)[keep]
        self.d = float(ev.sum())
        self.s_lt = float(self.log_t[ev].sum())
        self.s_ls = 0.0 if self.log_s is None else float(self.log_s[ev].sum())
        self.empty = self.log_t.size == 0

    def loglik(self, shape, rate, lam=0.0) -> float:
        if self.empty:
            return 0.0
        x = shape * self.log_t
        if self.log_s is not None and lam != 0.0:
            x = x + lam * self.log_s
        cum = np.exp(rate + x).sum()
        return self.d * (np.log(shape) + rate) + (shape - 1.0) * self.s_lt + lam * self.s_ls - cum


# which sub-models each block touches: (sub-model key, shape idx, rate idx, uses lambda)
_SUBMODELS = {
    "sw": (1, 2, False),
    "y0_ns": (3, 4, False),
    "y0_sw": (5, 6, True),
    "y1_ns": (7, 8, False),
    "y1_sw": (9, 10, True),
}
_BLOCK_MODELS = {
    "alpha_s": ("sw",), "beta_s": ("sw",),
    "alpha_y_ns": ("y0_ns",), "beta_y_ns": ("y0_ns",),
    "alpha_y_sw": ("y0_sw",), "beta_y_sw": ("y0_sw",),
    "nu_y_ns": ("y1_ns",), "gamma_y_ns": ("y1_ns",),
    "nu_y_sw": ("y1_sw",), "gamma_y_sw": ("y1_sw",),
    "lambda": ("y0_sw", "y1_sw"),
}


class _Layout:
    """Static index sets of a dataset."""

    def __init__(self, data: Dataset):
        col = data.columns
        self.n = len(col.z)
        self.col = col
        ctrl = col.z == 0
        self.ctrl_sw_obs = np.flatnonzero(ctrl & (col.s_event == 1))
        self.ctrl_known_ns = np.flatnonzero(ctrl & (col.s_event == 0) & (col.y_event == 1))
        self.ctrl_amb = np.flatnonzero(ctrl & (col.s_event == 0) & (col.y_event == 0))
        self.trt = np.flatnonzero(~ctrl)
        self.y_t = col.y_tilde[self.trt]
        self.ev_t = col.y_event[self.trt] == 1
        s = col.s_tilde[self.ctrl_sw_obs]
        y = col.y_tilde[self.ctrl_sw_obs]
        dead = col.y_event[self.ctrl_sw_obs] == 1
        tie = dead & (y <= s)
        if np.any(tie):
            bad = col.id[self.ctrl_sw_obs][tie][0]
            raise ValueError(f"unit {bad}: switch and death at the same time has zero density "
                             "under the model")


class BlockTarget:
    """Sub-model likelihoods for a fixed augmentation.

    ``log_target(name, v)`` is the parameter-block log full conditional
    (up to a constant) at the 12-vector ``v``.
    """

    def __init__(self, layout: _Layout, s_star, y0_star, kappa: float, prior: PriorSpec):
        L = layout
        col = L.col
        self.prior = prior
        s_star = np.asarray(s_star, dtype=float)
        amb_sw = L.ctrl_amb[~np.isnan(s_star[L.ctrl_amb])]
        amb_ns = L.ctrl_amb[np.isnan(s_star[L.ctrl_amb])]
        st = s_star[L.trt]
        t_sw = ~np.isnan(st)
        so = col.s_tilde[L.ctrl_sw_obs]

        # switching time
        t = np.concatenate([so, col.c[amb_sw], st[t_sw]])
        e = np.concatenate([np.ones(len(so)), np.zeros(len(amb_sw)), np.ones(t_sw.sum())])
        sw = _Weib(t, e)

        # control-arm survival
        y_ns_t = [col.y_tilde[L.ctrl_known_ns], col.c[amb_ns]]
        y_ns_e = [np.ones(len(L.ctrl_known_ns)), np.zeros(len(amb_ns))]
        y_sw_t = [np.where(col.y_event[L.ctrl_sw_obs] == 1, col.y_tilde[L.ctrl_sw_obs],
                           col.c[L.ctrl_sw_obs]) - so]
        y_sw_e = [col.y_event[L.ctrl_sw_obs]]
        y_sw_ls = [np.log(so)]
        if kappa > 0:
            y0t = np.asarray(y0_star, dtype=float)[L.trt]
            y_ns_t.append(y0t[~t_sw])
            y_ns_e.append(np.ones((~t_sw).sum()))
            y_sw_t.append(y0t[t_sw] - st[t_sw])
            y_sw_e.append(np.ones(t_sw.sum()))
            y_sw_ls.append(np.log(st[t_sw]))
            arg = L.y_t - kappa * y0t
        else:
            arg = L.y_t
        y0_ns = _Weib(np.concatenate(y_ns_t), np.concatenate(y_ns_e))
        y0_sw = _Weib(np.concatenate(y_sw_t), np.concatenate(y_sw_e), np.concatenate(y_sw_ls))

        # treated-arm survival
        y1_ns = _Weib(arg[~t_sw], L.ev_t[~t_sw])
        y1_sw = _Weib(arg[t_sw], L.ev_t[t_sw], np.log(st[t_sw]))
        self.models = {"sw": sw, "y0_ns": y0_ns, "y0_sw": y0_sw, "y1_ns": y1_ns, "y1_sw": y1_sw}
        self.n_ns = int(len(L.ctrl_known_ns) + len(amb_ns) + (~t_sw).sum())
        self.n_sw = int(len(L.ctrl_sw_obs) + len(amb_sw) + t_sw.sum())

    def loglik(self, key: str, v) -> float:
        i, j, uses_lam = _SUBMODELS[key]
        return self.models[key].loglik(v[i], v[j], v[11] if uses_lam else 0.0)

    def log_target(self, name: str, v) -> float:
        x = v[_IDX[name]]
        lp = self.prior.component_logpdf(name, float(x))
        if lp == -np.inf:
            return -np.inf
        return lp + sum(self.loglik(k, v) for k in _BLOCK_MODELS[name])


def _mh_block(target: BlockTarget, v: np.ndarray, name: str, scale: float, rng,
              cur_lt: Optional[float] = None):
    """One MH step for parameter ``name``; returns (accepted, new log target)."""
    i = _IDX[name]
    cur = v[i]
    if cur_lt is None:
        cur_lt = target.log_target(name, v)
    if name in SHAPE_NAMES:
        k = (cur / scale) ** 2
        cand = rng.gamma(k, scale ** 2 / cur)
        if not cand > 0:
            return False, cur_lt
        corr = gamma_proposal_logpdf(cur, cand, scale) - gamma_proposal_logpdf(cand, cur, scale)
    else:
        cand = cur + scale * rng.standard_normal()
        corr = 0.0
    v[i] = cand
    cand_lt = target.log_target(name, v)
    log_a = cand_lt - cur_lt + corr
    if np.log(rng.random()) < log_a:
        return True, cand_lt
    v[i] = cur
    return False, cur_lt


def mh_update_parameter(block: str, theta: Theta, data: Dataset, aug, prior: PriorSpec,
                        scale: float, rng):
    """One MH update of ``block`` given data and augmentation.

    ``aug`` is a pair ``(s_star, y0_star)`` of arrays. Returns
    ``(new_theta, accepted)``.
    """
    if block not in BLOCKS:
        raise ValueError(f"unknown parameter block {block!r}")
    s_star, y0_star = aug
    target = BlockTarget(_Layout(data), s_star, y0_star, theta.kappa, prior)
    v = theta.to_vector()
    accepted, _ = _mh_block(target, v, block, scale, rng)
    return Theta.from_vector(v, theta.kappa), accepted


# -- initialization ----------------------------------------------------------

def _mom_fit(t) -> tuple:
    """Weibull (shape, log rate) from the first two moments of log time."""
    t = np.asarray(t, dtype=float)
    t = t[t > 0]
    if t.size < 3 or np.std(np.log(t)) == 0:
        return 1.0, 0.0
    lt = np.log(t)
    shape = np.pi / (np.sqrt(6.0) * np.std(lt, ddof=1))
    return float(shape), float(-np.euler_gamma - shape * lt.mean())


def initial_theta(data: Dataset, prior: PriorSpec) -> np.ndarray:
    col = data.columns
    ctrl = col.z == 0
    so = ctrl & (col.s_event == 1)
    a_s, b_s = _mom_fit(col.s_tilde[so])
    a_n, b_n = _mom_fit(col.y_tilde[ctrl & (col.s_event == 0) & (col.y_event == 1)])
    dead = so & (col.y_event == 1)
    a_w, b_w = _mom_fit(col.y_tilde[dead] - col.s_tilde[dead])
    a1, b1 = _mom_fit(col.y_tilde[(col.z == 1) & (col.y_event == 1)])
    a, b = prior.pi_beta
    return np.array([a / (a + b), a_s, b_s, a_n, b_n, a_w, b_w, a1, b1, a1, b1, 0.0])


def _jitter(v: np.ndarray, frac: float, rng) -> np.ndarray:
    out = v * (1.0 + rng.uniform(-frac, frac, v.size))
    out[11] = v[11] + rng.uniform(-frac, frac)
    out[0] = np.clip(out[0], 0.02, 0.98)
    return out


# -- chain -----------------------------------------------------------------

def _snapshot(v: np.ndarray, kappa: float) -> np.ndarray:
    m0 = weibull.mean(WeibullParams(v[3], v[4]))
    m1 = kappa * m0 + weibull.mean(WeibullParams(v[7], v[8]))
    return np.array([m0, m1, m1 - m0])


class _ChainState:
    def __init__(self, data: Dataset, prior: PriorSpec, kappa: float, v0: np.ndarray, rng):
        self.L = _Layout(data)
        self.prior = prior
        self.kappa = float(kappa)
        self.rng = rng
        self.v = np.array(v0, dtype=float)
        n = self.L.n
        self.s = np.full(n, np.nan)
        self.s[self.L.ctrl_sw_obs] = self.L.col.s_tilde[self.L.ctrl_sw_obs]
        self.y0 = np.full(n, np.nan)
        if self.kappa > 0:
            self.y0[self.L.trt] = 0.5 * self.L.y_t

    def _draw(self, shape, rate, size):
        u = self.rng.random(size)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return np.exp((np.log(-np.log(u)) - rate) / shape)

    def _y1_terms(self, arg, s):
        """Treated survival factor for statuses ``s`` (nan = non-switcher)."""
        v = self.v
        ev = self.L.ev_t
        is_sw = ~np.isnan(s)
        log_s = np.log(np.where(is_sw, s, 1.0))
        shape = np.where(is_sw, v[9], v[7])
        rate = np.where(is_sw, v[10] + v[11] * log_s, v[8])
        pos = arg > 0
        la = np.log(np.where(pos, arg, 1.0))
        cum = np.where(pos, np.exp(rate + shape * la), 0.0)
        dens = np.log(shape) + (shape - 1.0) * la + rate - cum
        return np.where(ev, np.where(pos, dens, -np.inf), -cum)

    def _y0_terms(self, y0, s):
        """Treated control-arm survival density at imputed ``y0``."""
        v = self.v
        is_sw = ~np.isnan(s)
        s_safe = np.where(is_sw, s, 0.0)
        log_s = np.log(np.where(is_sw, s, 1.0))
        arg = y0 - s_safe
        shape = np.where(is_sw, v[5], v[3])
        rate = np.where(is_sw, v[6] + v[11] * log_s, v[4])
        pos = arg > 0
        la = np.log(np.where(pos, arg, 1.0))
        dens = np.log(shape) + (shape - 1.0) * la + rate - np.exp(rate + shape * la)
        return np.where(pos, dens, -np.inf)

    def impute_y0(self):
        L, v, k = self.L, self.v, self.kappa
        s = self.s[L.trt]
        is_sw = ~np.isnan(s)
        m = len(L.trt)
        log_s = np.log(np.where(is_sw, s, 1.0))
        shape = np.where(is_sw, v[5], v[3])
        rate = np.where(is_sw, v[6] + v[11] * log_s, v[4])
        cand = np.where(is_sw, s, 0.0) + self._draw(shape, rate, m)
        cur = self.y0[L.trt]
        log_a = self._y1_terms(L.y_t - k * cand, s) - self._y1_terms(L.y_t - k * cur, s)
        with np.errstate(invalid="ignore"):
            acc = np.log(self.rng.random(m)) < log_a
        self.y0[L.trt] = np.where(acc, cand, cur)

    def impute_controls(self):
        L, v = self.L, self.v
        c = L.col.c[L.ctrl_amb]
        lc = np.log(c)
        a = np.log(v[0]) - np.exp(v[4] + v[3] * lc)
        b = np.log1p(-v[0]) - np.exp(v[2] + v[1] * lc)
        p_ns = np.exp(a - np.logaddexp(a, b))
        u = self.rng.random(len(c))
        self.s[L.ctrl_amb] = np.where(u < p_ns, np.nan, c)

    def impute_treated_status(self):
        L, v, k = self.L, self.v, self.kappa
        m = len(L.trt)
        u1 = self.rng.random(m)
        s_prop = self._draw(v[1], v[2], m)
        cand = np.where(u1 < v[0], np.nan, s_prop)
        cur = self.s[L.trt]
        if k > 0:
            y0 = self.y0[L.trt]
            arg = L.y_t - k * y0
            log_a = (self._y1_terms(arg, cand) + self._y0_terms(y0, cand)
                     - self._y1_terms(arg, cur) - self._y0_terms(y0, cur))
        else:
            log_a = self._y1_terms(L.y_t, cand) - self._y1_terms(L.y_t, cur)
        with np.errstate(invalid="ignore"):
            acc = np.log(self.rng.random(m)) < log_a
        self.s[L.trt] = np.where(acc, cand, cur)

    def impute(self):
        if self.kappa > 0:
            self.impute_y0()
        self.impute_controls()
        self.impute_treated_status()

    def target(self) -> BlockTarget:
        return BlockTarget(self.L, self.s, self.y0, self.kappa, self.prior)


def run_chain(data: Dataset, prior: PriorSpec, config: McmcConfig, kappa: float = 0.0,
              seed=0, v0: Optional[np.ndarray] = None) -> ChainDraws:
    """Run one chain. ``seed`` may be an int or a ``SeedSequence``."""
    rng = np.random.default_rng(seed)
    if v0 is None:
        v0 = initial_theta(data, prior)
        if config.init:
            for name, val in config.init.items():
                v0[_IDX[name]] = val
        v0 = _jitter(v0, config.jitter, rng)
    st = _ChainState(data, prior, kappa, v0, rng)
    st.impute()

    blocks = BLOCKS if config.blocks is None else tuple(b for b in BLOCKS if b in config.blocks)
    update_pi = config.blocks is None or "pi" in config.blocks
    log_scale = {b: np.log(config.scales()[b]) for b in blocks}
    accepted = {b: 0 for b in blocks}
    n_keep = config.n_keep
    theta_out = np.empty((n_keep, 12))
    snap_out = np.empty((n_keep, len(SNAPSHOT_NAMES)))
    iters = np.empty(n_keep, dtype=np.int64)
    a_pi, b_pi = prior.pi_beta
    kept = 0
    for it in range(1, config.n_iter + 1):
        st.impute()
        target = st.target()
        if update_pi:
            st.v[0] = rng.beta(a_pi + target.n_ns, b_pi + target.n_sw)
        burning = it <= config.burn_in
        for b in blocks:
            ok, _ = _mh_block(target, st.v, b, float(np.exp(log_scale[b])), rng)
            if burning:
                if config.adapt_burnin:
                    log_scale[b] += it ** -0.6 * (float(ok) - config.target_accept)
            elif ok:
                accepted[b] += 1
        if not burning and (it - config.burn_in) % config.thin == 0:
            theta_out[kept] = st.v
            snap_out[kept] = _snapshot(st.v, st.kappa)
            iters[kept] = it
            kept += 1
    return ChainDraws(theta_out, snap_out, iters, accepted, config.n_iter - config.burn_in,
                      {b: float(np.exp(s)) for b, s in log_scale.items()})


def _chain_job(args):
    return run_chain(*args)


def run_chains(data: Dataset, prior: PriorSpec, config: McmcConfig, kappa: float = 0.0,
               threads: Optional[int] = None) -> Draws:
    """Run ``config.n_chains`` independent chains seeded from ``config.seed``.

    Results do not depend on ``threads``.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(data, prior, config, kappa, s) for s in seeds]
    threads = min(config.n_chains, threads or os.cpu_count() or 1)
    if threads <= 1:
        chains = [_chain_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            chains = list(ex.map(_chain_job, jobs))
    return Draws(float(kappa), chains)


# -- draws CSV ---------------------------------------------------------------

DRAWS_HEADER = ["chain", "iter", *PARAM_NAMES, *SNAPSHOT_NAMES, "kappa"]


def write_draws(draws: Draws, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DRAWS_HEADER)
    for ci, ch in enumerate(draws.chains):
        for it, th, sn in zip(ch.iters, ch.theta, ch.snapshots):
            w.writerow([ci, int(it), *map(repr, th.tolist()), *map(repr, sn.tolist()),
                        repr(draws.kappa)])


def read_draws(fh) -> Draws:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    reader = csv.reader(fh)
    header = next(reader)
    if header != DRAWS_HEADER:
        raise ValueError("unexpected draws header")
    rows = [r for r in reader if r]
    if not rows:
        raise ValueError("draws file holds no draws")
    arr = np.array([[float(x) for x in r] for r in rows])
    kappa = float(arr[0, -1])
    chains = []
    for ci in np.unique(arr[:, 0]).astype(int):
        a = arr[arr[:, 0] == ci]
        chains.append(ChainDraws(a[:, 2:14].copy(), a[:, 14:17].copy(), a[:, 1].astype(np.int64),
                                 {}, 0, {}))
    return Draws(kappa, chains)


# -- intention-to-treat Weibull fit -------------------------------------------

@dataclass(frozen=True)
class ItTConfig:
    """Vague priors for the arm-wise Weibull fit: Gamma(shape, scale) and N(0, var)."""

    shape_gamma: tuple = (1.0, 1e4)
    rate_var: float = 1e4


def _itt_arm_chain(model: _Weib, x0, logprior, config: McmcConfig, rng) -> np.ndarray:
    x = np.array(x0, dtype=float)
    cur = logprior(*x) + model.loglik(x[0], x[1])
    log_scale = np.log([0.05, 0.08])
    out = np.empty((config.n_keep, 2))
    kept = 0
    for it in range(1, config.n_iter + 1):
        for j in (0, 1):
            sc = float(np.exp(log_scale[j]))
            y = x.copy()
            if j == 0:
                y[0] = rng.gamma((x[0] / sc) ** 2, sc ** 2 / x[0])
                if not y[0] > 0:
                    ok = False
                    new = -np.inf
                else:
                    corr = gamma_proposal_logpdf(x[0], y[0], sc) - gamma_proposal_logpdf(y[0], x[0], sc)
                    new = logprior(*y) + model.loglik(y[0], y[1])
                    ok = np.log(rng.random()) < new - cur + corr
            else:
                y[1] = x[1] + sc * rng.standard_normal()
                new = logprior(*y) + model.loglik(y[0], y[1])
                ok = np.log(rng.random()) < new - cur
            if ok:
                x, cur = y, new
            if it <= config.burn_in and config.adapt_burnin:
                log_scale[j] += it ** -0.6 * (float(ok) - config.target_accept)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            out[kept] = x
            kept += 1
    return out


def fit_itt(data: Dataset, config: McmcConfig, itt: ItTConfig = ItTConfig()) -> np.ndarray:
    """Posterior draws of per-arm Weibull parameters ignoring switching.

    Returns an array ``(n_chains, n_keep, 4)`` with columns
    ``alpha0, beta0, alpha1, beta1``.
    """
    col = data.columns
    seeds = np.random.SeedSequence([config.seed, 0x177]).spawn(config.n_chains)
    a_g, s_g = itt.shape_gamma

    def logprior(a, b):
        if a <= 0:
            return -np.inf
        return (a_g - 1.0) * np.log(a) - a / s_g - 0.5 * b * b / itt.rate_var

    out = np.empty((config.n_chains, config.n_keep, 4))
    for ci, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        for arm in (0, 1):
            m = col.z == arm
            if not np.any(m):
                raise ValueError(f"arm {arm} has no units")
            model = _Weib(col.y_tilde[m], col.y_event[m] == 1)
            x0 = np.array(_mom_fit(col.y_tilde[m & (col.y_event == 1)]))
            x0 *= 1.0 + rng.uniform(-config.jitter, config.jitter, 2)
            out[ci, :, 2 * arm:2 * arm + 2] = _itt_arm_chain(model, x0, logprior, config, rng)
    return out
