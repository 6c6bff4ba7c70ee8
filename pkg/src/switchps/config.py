"""YAML run configuration for the command-line workflows."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml

from .data import GeneratorConfig
from .model import PARAM_NAMES, THETA_REFERENCE, PriorSpec, Theta
from .sampler import DEFAULT_SCALES, McmcConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "dump_config", "config_hash"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    path: Optional[str] = None
    c_max: float = 3.0


@dataclass(frozen=True)
class GeneratorSection:
    n: int = 1000
    p_treat: float = 0.5
    c_min: float = 1.5
    c_max: float = 3.0
    theta: dict = field(default_factory=lambda: THETA_REFERENCE.as_dict())


@dataclass(frozen=True)
class McmcSection:
    n_iter: int = 125_000
    burn_in: int = 25_000
    thin: int = 20
    n_chains: int = 3
    adapt_burnin: bool = True
    target_accept: float = 0.35
    proposal_scales: dict = field(default_factory=lambda: dict(DEFAULT_SCALES))


@dataclass(frozen=True)
class LambdaPrior:
    name: str
    kind: str = "normal"
    variance: Optional[float] = None


@dataclass(frozen=True)
class EstimandSection:
    kinds: tuple = ("itt", "ns", "sw", "coarse")
    y_grid: Optional[tuple] = None
    s_values: Optional[tuple] = None
    regions: tuple = ((0.0, 1.0), (1.0, math.inf), (0.0, math.inf))
    mc_size: int = 2000
    max_draws: int = 300


@dataclass(frozen=True)
class PpcSection:
    max_draws: int = 500
    t_grid: Optional[tuple] = None


def _default_lambda_priors():
    return (LambdaPrior("normal_var1", "normal", 1.0),
            LambdaPrior("normal_var10", "normal", 10.0),
            LambdaPrior("normal_var1e4", "normal", 1e4),
            LambdaPrior("improper", "improper", None))


@dataclass(frozen=True)
class RunConfig:
    run_id: str = "run"
    output_dir: str = "out"
    seed: int = 0
    kappa: float = 0.0
    kappa_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    rhat_threshold: float = 1.1
    data: DataSection = DataSection()
    generator: GeneratorSection = GeneratorSection()
    prior: dict = field(default_factory=lambda: _prior_to_dict(PriorSpec()))
    mcmc: McmcSection = McmcSection()
    lambda_priors: tuple = field(default_factory=_default_lambda_priors)
    estimands: EstimandSection = EstimandSection()
    ppc: PpcSection = PpcSection()

    # -- derived objects ------------------------------------------------------
    def prior_spec(self) -> PriorSpec:
        p = self.prior
        return PriorSpec(
            pi_beta=tuple(p["pi_beta"]),
            shape_gammas={k: tuple(v) for k, v in p["shape_gammas"].items()},
            location_normals={k: tuple(v) for k, v in p["location_normals"].items()},
            lambda_prior_kind=p["lambda_prior_kind"],
        )

    def mcmc_config(self, seed: Optional[int] = None) -> McmcConfig:
        m = self.mcmc
        return McmcConfig(n_iter=m.n_iter, burn_in=m.burn_in, thin=m.thin, n_chains=m.n_chains,
                          seed=self.seed if seed is None else seed,
                          proposal_scales=dict(m.proposal_scales), adapt_burnin=m.adapt_burnin,
                          target_accept=m.target_accept)

    def generator_config(self) -> GeneratorConfig:
        g = self.generator
        theta = Theta.from_dict(g.theta)
        return GeneratorConfig(n=g.n, theta_true=theta, p_treat=g.p_treat, c_min=g.c_min,
                               c_max=g.c_max, seed=self.seed)

    def validate(self) -> "RunConfig":
        try:
            for k in (self.kappa, *self.kappa_grid):
                if not 0.0 <= k <= 1.0:
                    raise ConfigError(f"kappa values must lie in [0, 1], got {k}")
            if not self.run_id or "/" in self.run_id:
                raise ConfigError("run_id must be a nonempty name without '/'")
            self.prior_spec()
            self.mcmc_config()
            if self.data.path is None:
                self.generator_config()
            for lp in self.lambda_priors:
                if lp.kind not in ("normal", "improper"):
                    raise ConfigError(f"unknown lambda prior kind {lp.kind!r}")
                if lp.kind == "normal" and not (lp.variance and lp.variance > 0):
                    raise ConfigError(f"lambda prior {lp.name!r} needs a positive variance")
            e = self.estimands
            if e.mc_size < 1 or e.max_draws < 1:
                raise ConfigError("estimand mc_size and max_draws must be >= 1")
            for grid in (e.y_grid, e.s_values, self.ppc.t_grid):
                if grid is not None and (len(grid) == 0 or any(b <= a for a, b in zip(grid, grid[1:]))):
                    raise ConfigError("grids must be nonempty and strictly increasing")
            for lo, hi in e.regions:
                if not 0 <= lo < hi:
                    raise ConfigError(f"bad switching-time region ({lo}, {hi})")
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self


def _prior_to_dict(p: PriorSpec) -> dict:
    return {
        "pi_beta": list(p.pi_beta),
        "shape_gammas": {k: list(v) for k, v in p.shape_gammas.items()},
        "location_normals": {k: list(v) for k, v in p.location_normals.items()},
        "lambda_prior_kind": p.lambda_prior_kind,
    }


def _to_plain(obj):
    if isinstance(obj, tuple):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, list):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(_to_plain(asdict(cfg)), sort_keys=False)


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    kw = {}
    for k, v in raw.items():
        kw[k] = v if isinstance(v, dict) else _tuplify(v)
    return cls(**kw)


def _floatify(d: dict) -> dict:
    return {k: float(v) for k, v in d.items()}


def load_config(text: str) -> RunConfig:
    """Parse YAML text; missing keys take their defaults."""
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    top = {f.name for f in fields(RunConfig)}
    extra = set(raw) - top
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    try:
        kw = {}
        for k in ("run_id", "output_dir"):
            if k in raw:
                kw[k] = str(raw[k])
        if "seed" in raw:
            kw["seed"] = int(raw["seed"])
        if "kappa" in raw:
            kw["kappa"] = float(raw["kappa"])
        if "kappa_grid" in raw:
            kw["kappa_grid"] = tuple(float(x) for x in raw["kappa_grid"])
        if "rhat_threshold" in raw:
            kw["rhat_threshold"] = float(raw["rhat_threshold"])
        kw["data"] = _section(DataSection, raw.get("data"), "data")
        gen = _section(GeneratorSection, raw.get("generator"), "generator")
        theta = THETA_REFERENCE.as_dict() | dict(gen.theta)
        unknown = set(theta) - set(PARAM_NAMES) - {"kappa"}
        if unknown:
            raise ConfigError(f"unknown generator.theta keys: {sorted(unknown)}")
        kw["generator"] = GeneratorSection(gen.n, gen.p_treat, gen.c_min, gen.c_max,
                                           _floatify(theta))
        prior = _prior_to_dict(PriorSpec())
        for k, v in (raw.get("prior") or {}).items():
            if k not in prior:
                raise ConfigError(f"unknown prior key {k!r}")
            prior[k] = (prior[k] | v) if isinstance(prior[k], dict) else v
        kw["prior"] = prior
        mc = _section(McmcSection, raw.get("mcmc"), "mcmc")
        kw["mcmc"] = McmcSection(mc.n_iter, mc.burn_in, mc.thin, mc.n_chains, mc.adapt_burnin,
                                 mc.target_accept, DEFAULT_SCALES | dict(mc.proposal_scales))
        if "lambda_priors" in raw:
            kw["lambda_priors"] = tuple(LambdaPrior(**lp) for lp in raw["lambda_priors"])
        est = _section(EstimandSection, raw.get("estimands"), "estimands")
        kw["estimands"] = EstimandSection(
            kinds=tuple(est.kinds),
            y_grid=None if est.y_grid is None else tuple(float(x) for x in est.y_grid),
            s_values=None if est.s_values is None else tuple(float(x) for x in est.s_values),
            regions=tuple((float(a), float(b)) for a, b in est.regions),
            mc_size=int(est.mc_size), max_draws=int(est.max_draws))
        ppc = _section(PpcSection, raw.get("ppc"), "ppc")
        kw["ppc"] = PpcSection(int(ppc.max_draws),
                               None if ppc.t_grid is None else tuple(float(x) for x in ppc.t_grid))
        cfg = RunConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()
