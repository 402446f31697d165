"""Command line entry point: ``zeronoise {run,stationary,sweep,response,montecarlo,abstract,fit}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiment
from .config import ExperimentConfig, load
from .errors import ConfigError, UnsupportedError, ValidationError
from .response import FitResult, fit_exponent, lipschitz_diagnostics, read_sweep_csv, write_sweep_csv

log = logging.getLogger("zeronoise")

COMMAND_MODES = {"stationary": "stationary", "sweep": "sweep", "response": "sweep",
                 "montecarlo": "montecarlo", "abstract": "abstract"}


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.backend is not None and args.backend != cfg.backend:
        cfg.backend = args.backend
        cfg.resolution = 128 if args.backend == "fourier" else 4096
    if args.resolution is not None:
        if args.resolution < 1:
            raise ConfigError("--resolution must be positive")
        cfg.resolution = args.resolution
    if args.out is not None:
        cfg.out = args.out
    if cfg.out is None:
        cfg.out = str(Path("results") / cfg.name)
    return cfg


def _fits_text(fits: dict[str, FitResult]) -> str:
    lines = []
    for name, fit in fits.items():
        for line in fit.as_text().splitlines():
            lines.append(f"{name}.{line}")
        lines.append(f"{name}.n_points={fit.n_points}")
    return "\n".join(lines) + ("\n" if lines else "")


def _report_text(cfg: ExperimentConfig, command: str, outcome: experiment.Outcome) -> str:
    lines = [f"experiment: {cfg.name}", f"command: {command}", f"mode: {cfg.mode}"]
    if cfg.map_spec:
        lines.append(f"backend: {cfg.backend} (resolution {cfg.resolution})")
    lines.append(f"seed: {cfg.seed}")
    lines.append("")
    if outcome.checks:
        lines.append("checks:")
        lines += ["  " + c.line() for c in outcome.checks]
        lines.append("")
    if outcome.fits:
        lines.append("fits:")
        for name, fit in outcome.fits.items():
            lines.append(f"  {name}: model={fit.model} exponent={fit.exponent:.6f} "
                         f"prefactor={fit.prefactor:.6g} r^2={fit.r_squared:.6f} points={fit.n_points}")
        lines.append("")
    for t in outcome.tables:
        lines.append(t)
    lines.append("")
    n_fail = sum(not c.passed for c in outcome.checks)
    lines.append(f"overall: {'PASS' if n_fail == 0 else 'FAIL'} "
                 f"({len(outcome.checks) - n_fail}/{len(outcome.checks)} checks passed)")
    return "\n".join(lines) + "\n"


def write_outputs(cfg: ExperimentConfig, command: str, outcome: experiment.Outcome) -> Path:
    out = Path(cfg.out)
    (out / "densities").mkdir(parents=True, exist_ok=True)
    if outcome.records:
        write_sweep_csv(outcome.records, out / "sweep.csv")
    (out / "fits.txt").write_text(_fits_text(outcome.fits))
    for name, g in outcome.densities.items():
        g.to_csv(out / "densities" / f"{name}.csv")
    (out / "report.txt").write_text(_report_text(cfg, command, outcome))
    return out


def _abstract_fits(outcome: experiment.Outcome, cfg: ExperimentConfig):
    """Log-log slopes of the deviation tables so fits.txt is populated in abstract mode."""
    from .markov import bundled_family, verify_linear_response, verify_quadratic_response
    if cfg.family != "bundled" or len(cfg.abstract_deltas) < 2:
        return
    fam = bundled_family()
    for label, fn in (("linear_deviation", verify_linear_response),
                      ("quadratic_deviation", verify_quadratic_response)):
        tab = fn(fam, cfg.abstract_deltas)
        slope, icpt = np.polyfit(np.log(tab.deltas), np.log(tab.deviations), 1)
        pred = slope * np.log(tab.deltas) + icpt
        ss = np.sum((np.log(tab.deviations) - pred) ** 2)
        tot = np.sum((np.log(tab.deviations) - np.log(tab.deviations).mean()) ** 2)
        r2 = 1.0 - ss / tot if tot > 0 else 1.0
        outcome.fits[label] = FitResult("power", float(slope), float(np.exp(icpt)), float(r2),
                                        len(tab.deltas))


def run_config(cfg: ExperimentConfig, command: str, threads: int = 1) -> experiment.Outcome:
    mode = cfg.mode if command == "run" else COMMAND_MODES[command]
    cfg.mode = mode
    if mode in ("sweep", "stationary", "montecarlo") and not cfg.map_spec:
        raise ConfigError("this command needs a [map] section")
    if mode == "sweep":
        if command == "response" and cfg.backend != "fourier":
            raise ConfigError("the response command needs the Fourier backend")
        outcome = experiment.run_sweep(cfg, threads=threads)
        if command == "response":
            keep = {"resolution", "quadratic_coefficient"}
            outcome.checks = [c for c in outcome.checks if c.name in keep]
    elif mode == "stationary":
        outcome = experiment.run_stationary(cfg)
    elif mode == "montecarlo":
        outcome = experiment.run_montecarlo(cfg)
    else:
        outcome = experiment.run_abstract(cfg)
        _abstract_fits(outcome, cfg)
    return outcome


def _cmd_fit(args) -> int:
    path = Path(args.sweep)
    try:
        records = read_sweep_csv(path)
    except (OSError, KeyError, ValueError) as err:
        print(f"error: cannot read sweep file {path}: {err}", file=sys.stderr)
        return 2
    fits: dict[str, FitResult] = {}
    fields = [args.field] if args.field else ["dist_L1", "dist_W11"]
    for name in fields:
        try:
            fits[name] = fit_exponent(records, name, args.model)
        except ValueError as err:
            log.info("skipping %s: %s", name, err)
    try:
        fits["lip_hdelta"] = lipschitz_diagnostics(records)
    except ValueError:
        pass
    if not fits:
        print("error: no field of the sweep file could be fitted", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "fits.txt").write_text(_fits_text(fits))
    sys.stdout.write(_fits_text(fits))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeronoise",
                                description="Zero-noise limit and response experiments for circle maps.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiment described by the config"),
                        ("stationary", "solve one stationary density per delta"),
                        ("sweep", "full delta sweep with exponent fits and checks"),
                        ("response", "quadratic response coefficient and its residuals"),
                        ("montecarlo", "noisy-orbit histogram against the Ulam fixed point"),
                        ("abstract", "linear and quadratic response on a finite Markov family")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True,
                       help="config file, or a bundled name such as smooth_quadratic")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, default=1, help="worker threads for per-delta solves")
        s.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        s.add_argument("--backend", choices=("ulam", "fourier"))
        s.add_argument("--resolution", type=int, help="Ulam bins or Fourier cutoff N")
    f = sub.add_parser("fit", help="re-fit an existing sweep.csv")
    f.add_argument("sweep", help="path to sweep.csv")
    f.add_argument("--field", choices=("dist_L1", "dist_W11", "response_residual"))
    f.add_argument("--model", choices=("power", "power_log"), default="power")
    f.add_argument("--out", help="directory for fits.txt (default: next to the sweep)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit":
        return _cmd_fit(args)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = _apply_overrides(load(args.config), args)
        outcome = run_config(cfg, args.command, threads=args.threads)
    except ConfigError as err:
        print(f"config error in {args.config}: {err}", file=sys.stderr)
        return 2
    except (ValidationError, UnsupportedError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out = write_outputs(cfg, args.command, outcome)
    for c in outcome.checks:
        print(c.line())
    print(f"outputs written to {out}")
    return 0 if outcome.passed else 1


if __name__ == "__main__":
    sys.exit(main())
