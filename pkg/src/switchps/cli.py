"""Command-line workflows: generate, fit, estimands, ppc, diagnose, sensitivity.

Outputs go to ``<output_dir>/<run_id>/``. Per-kappa results live in
``kappa=<v>/`` subdirectories (``lambda=<name>/kappa=<v>/`` for the
lambda-prior sensitivity runs), each with a ``manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import estimands as est
from .config import ConfigError, RunConfig, config_hash, dump_config, load_config
from .data import generate, read_dataset, serialize_latent, write_dataset
from .diagnostics import rhat_table, run_ppc
from .model import PARAM_NAMES, Theta
from .sampler import Draws, fit_itt, read_draws, run_chains, write_draws
from .weibull import WeibullParams

log = logging.getLogger("switchps")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class RuntimeFailure(RuntimeError):
    pass


# -- layout ------------------------------------------------------------------------

def run_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir) / cfg.run_id


def kappa_dir(base: Path, kappa: float) -> Path:
    return base / f"kappa={kappa:g}"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: Path, cfg: RunConfig, command: str, files, extra=None) -> None:
    manifest = {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"switchps": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "files": {p.name: _sha(p) for p in files},
    }
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- data ----------------------------------------------------------------------------

def load_data(cfg: RunConfig):
    """Dataset from ``data.path`` or, failing that, the run's generated data."""
    if cfg.data.path:
        return read_dataset(cfg.data.path, cfg.data.c_max)
    path = run_dir(cfg) / "data.csv"
    if path.exists():
        return read_dataset(path, cfg.generator.c_max)
    log.info("no dataset configured; generating one from the generator section")
    return cmd_generate(cfg)


def cmd_generate(cfg: RunConfig):
    out = run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ds, truth = generate(cfg.generator_config())
    data_path, latent_path = out / "data.csv", out / "latent.csv"
    write_dataset(ds, data_path)
    latent_path.write_text(serialize_latent(truth), encoding="utf-8")
    (out / "config.yaml").write_text(dump_config(cfg))
    write_manifest(out, cfg, "generate", [data_path, latent_path, out / "config.yaml"])
    return ds


# -- fit ----------------------------------------------------------------------------

SUMMARY_HEADER = ["parameter", "mean", "sd", "q2.5", "q25", "q50", "q75", "q97.5", "rhat"]


def summary_rows(draws: Draws):
    pooled = draws.pooled()
    rh = rhat_table(draws.theta_array()) if draws.n_chains >= 2 and draws.n_keep >= 2 else {}
    rows = []
    for i, name in enumerate(PARAM_NAMES):
        x = pooled[:, i]
        q = np.quantile(x, [0.025, 0.25, 0.5, 0.75, 0.975])
        rows.append([name, x.mean(), x.std(ddof=1) if len(x) > 1 else 0.0, *q,
                     rh.get(name, float("nan"))])
    return rows


def _write_summary(path: Path, rows) -> None:
    lines = [",".join(SUMMARY_HEADER)]
    for r in rows:
        lines.append(",".join([r[0], *(f"{v:.6g}" for v in r[1:])]))
    path.write_text("\n".join(lines) + "\n")


def fit_one(cfg: RunConfig, data, kappa: float, out: Path, prior=None, threads=None,
            strict=False, label="fit") -> Draws:
    out.mkdir(parents=True, exist_ok=True)
    prior = cfg.prior_spec() if prior is None else prior
    draws = run_chains(data, prior, cfg.mcmc_config(), kappa, threads=threads)
    draws_path = out / "draws.csv"
    with open(draws_path, "w", newline="") as fh:
        write_draws(draws, fh)
    rows = summary_rows(draws)
    summary_path = out / "summary.csv"
    _write_summary(summary_path, rows)
    acc = {f"chain{i}": c.acceptance_rates() for i, c in enumerate(draws.chains)}
    acc_path = out / "acceptance.json"
    acc_path.write_text(json.dumps(acc, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg, label, [draws_path, summary_path, acc_path], {"kappa": kappa})
    bad = [r[0] for r in rows if not r[-1] < cfg.rhat_threshold]
    if bad:
        log.warning("R-hat at or above %.3g (or undefined) for: %s", cfg.rhat_threshold,
                    ", ".join(bad))
        if strict:
            raise RuntimeFailure(f"convergence check failed for {', '.join(bad)}")
    return draws


def cmd_fit(cfg: RunConfig, threads=None, strict=False) -> Draws:
    data = load_data(cfg)
    return fit_one(cfg, data, cfg.kappa, kappa_dir(run_dir(cfg), cfg.kappa), threads=threads,
                   strict=strict)


# -- estimands -------------------------------------------------------------------------

def _subsample(thetas, max_draws: int):
    if len(thetas) <= max_draws:
        return thetas
    idx = np.linspace(0, len(thetas) - 1, max_draws).round().astype(int)
    return [thetas[i] for i in idx]


def estimand_rows(thetas, kappa: float, cfg: RunConfig, itt_draws=None):
    """Curve rows for every configured estimand family."""
    e = cfg.estimands
    y = est.DEFAULT_Y_GRID if e.y_grid is None else np.asarray(e.y_grid)
    svals = est.DEFAULT_S_VALUES if e.s_values is None else np.asarray(e.s_values)
    mc, seed = e.mc_size, cfg.seed
    rows = []

    def curve(name, s, values):
        v = np.asarray(values)
        for j, yy in enumerate(y):
            rows.append((name, s, yy, kappa, est.summarize(v[:, j])))

    if "itt" in e.kinds and itt_draws is not None:
        p = [(WeibullParams(a0, b0), WeibullParams(a1, b1)) for a0, b0, a1, b1 in itt_draws]
        rows.append(("itt_ace", None, None, kappa, est.summarize([est.itt_ace(*q) for q in p])))
        curve("itt_dce", None, [est.itt_dce(y, *q) for q in p])
    if "ns" in e.kinds:
        rows.append(("ace_ns", None, None, kappa, est.summarize([est.ace_ns(t) for t in thetas])))
        curve("dce_ns", None, [est.dce_ns(y, t, mc, seed) for t in thetas])
    if "sw" in e.kinds:
        for s in svals:
            rows.append(("ace_sw", s, None, kappa,
                         est.summarize([est.ace_sw(s, t) for t in thetas])))
            curve("dce_sw", s, [est.dce_sw(y, s, t, mc, seed) for t in thetas])
            curve("cdce_sw", s, [est.cdce_sw(y, s, t, mc, seed) for t in thetas])
    if "coarse" in e.kinds:
        for lo, hi in e.regions:
            tag = f"[{lo:g},{hi:g})".replace("inf", "Inf")
            vals = [est.coarse_effects((lo, hi), "ace", t, mc, seed=seed) for t in thetas]
            rows.append((f"coarse_ace{tag}", None, None, kappa, est.summarize(vals)))
            for kind in ("dce", "cdce"):
                curve(f"coarse_{kind}{tag}", None,
                      [est.coarse_effects((lo, hi), kind, t, mc, y, seed) for t in thetas])
    return rows


def estimands_one(cfg: RunConfig, data, kdir: Path, draws: Draws | None = None, label="estimands"):
    if draws is None:
        path = kdir / "draws.csv"
        if not path.exists():
            raise RuntimeFailure(f"no draws at {path}; run 'fit' first")
        with open(path) as fh:
            draws = read_draws(fh)
    if draws.n_chains == 0 or draws.n_keep == 0:
        raise RuntimeFailure("draws file holds no kept draws")
    thetas = _subsample(draws.thetas(), cfg.estimands.max_draws)
    itt = None
    if "itt" in cfg.estimands.kinds:
        itt = fit_itt(data, cfg.mcmc_config()).reshape(-1, 4)
        itt = np.asarray(_subsample(list(itt), cfg.estimands.max_draws))
    rows = estimand_rows(thetas, draws.kappa, cfg, itt)
    path = kdir / "curves.csv"
    with open(path, "w", newline="") as fh:
        est.write_curves(rows, fh)
    write_manifest(kdir, cfg, label, [p for p in (kdir / "draws.csv", path) if p.exists()],
                   {"kappa": draws.kappa, "n_draws_used": len(thetas)})
    return rows


def cmd_estimands(cfg: RunConfig):
    data = load_data(cfg)
    return estimands_one(cfg, data, kappa_dir(run_dir(cfg), cfg.kappa))


# -- ppc / diagnose ---------------------------------------------------------------------

def cmd_ppc(cfg: RunConfig):
    if cfg.kappa != 0:
        raise RuntimeFailure("posterior predictive checks are defined for kappa = 0 fits only")
    kdir = kappa_dir(run_dir(cfg), cfg.kappa)
    path = kdir / "draws.csv"
    if not path.exists():
        raise RuntimeFailure(f"no draws at {path}; run 'fit' first")
    with open(path) as fh:
        draws = read_draws(fh)
    if draws.kappa != 0:
        raise RuntimeFailure("draws were fitted with kappa != 0; predictive checks need kappa = 0")
    data = load_data(cfg)
    thetas = _subsample(draws.thetas(), cfg.ppc.max_draws)
    grid = cfg.ppc.t_grid
    report = run_ppc(data, thetas, seed=cfg.seed,
                     **({} if grid is None else {"t_grid": np.asarray(grid)}))
    files = [kdir / "ppc.json", kdir / "ppc.csv", kdir / "ppc_km.csv"]
    files[0].write_text(report.to_json() + "\n")
    with open(files[1], "w", newline="") as fh:
        report.write_csv(fh)
    with open(files[2], "w", newline="") as fh:
        report.write_km_csv(fh)
    write_manifest(kdir, cfg, "ppc", [path, *files], {"kappa": 0.0})
    return report


def cmd_diagnose(cfg: RunConfig, strict=False):
    kdir = kappa_dir(run_dir(cfg), cfg.kappa)
    path = kdir / "draws.csv"
    if not path.exists():
        raise RuntimeFailure(f"no draws at {path}; run 'fit' first")
    with open(path) as fh:
        draws = read_draws(fh)
    rows = summary_rows(draws)
    _write_summary(kdir / "summary.csv", rows)
    width = max(len(n) for n in PARAM_NAMES)
    print(f"{'parameter':<{width}}  {'mean':>9} {'sd':>8} {'q2.5':>9} {'q97.5':>9} {'rhat':>7}")
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]:9.4f} {r[2]:8.4f} {r[3]:9.4f} {r[7]:9.4f} {r[8]:7.4f}")
    bad = [r[0] for r in rows if not r[-1] < cfg.rhat_threshold]
    if bad and strict:
        raise RuntimeFailure(f"convergence check failed for {', '.join(bad)}")
    return rows


def cmd_sensitivity(cfg: RunConfig, threads=None, strict=False):
    """Fit and summarize over the kappa grid, then over the lambda-prior variants at kappa."""
    data = load_data(cfg)
    base = run_dir(cfg)
    for k in cfg.kappa_grid:
        kdir = kappa_dir(base, k)
        draws = fit_one(cfg, data, k, kdir, threads=threads, strict=strict, label="sensitivity")
        estimands_one(cfg, data, kdir, draws, label="sensitivity")
    prior = cfg.prior_spec()
    for lp in cfg.lambda_priors:
        kdir = kappa_dir(base / f"lambda={lp.name}", cfg.kappa)
        p = prior.with_lambda_prior(lp.kind, lp.variance)
        draws = fit_one(cfg, data, cfg.kappa, kdir, prior=p, threads=threads, strict=strict,
                        label="sensitivity")
        estimands_one(cfg, data, kdir, draws, label="sensitivity")


# -- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchps", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="override the master seed")
    common.add_argument("--threads", type=int, metavar="N", help="cap on worker processes")
    common.add_argument("--strict", action="store_true",
                        help="fail when any R-hat reaches the configured threshold")
    common.add_argument("--kappa", type=float, help="override the fitted kappa")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("generate", "simulate a trial dataset and its latent truth"),
                        ("fit", "run the MCMC chains"),
                        ("estimands", "posterior summaries of the causal estimands"),
                        ("ppc", "posterior predictive checks (kappa = 0)"),
                        ("diagnose", "R-hat and posterior summary table"),
                        ("sensitivity", "kappa grid and lambda-prior variants"),
                        ("show-config", "print the effective configuration")]:
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = load_config(text)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.kappa is not None:
        cfg = replace(cfg, kappa=args.kappa)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "fit":
            cmd_fit(cfg, args.threads, args.strict)
        elif args.command == "estimands":
            cmd_estimands(cfg)
        elif args.command == "ppc":
            cmd_ppc(cfg)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, args.strict)
        elif args.command == "sensitivity":
            cmd_sensitivity(cfg, args.threads, args.strict)
        elif args.command == "show-config":
            sys.stdout.write(dump_config(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
