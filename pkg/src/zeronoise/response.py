"""Zero-noise sweeps, response coefficients and convergence-exponent fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ResolutionError, UnsupportedError
from .kernels import NoiseKernel, moments
from .maps import CircleMap, SmoothMap, shift_fold_density
from .operators import (
    FOURIER,
    ULAM,
    DensityGrid,
    TransferMatrix,
    assemble_convolution,
    assemble_fourier,
    assemble_ulam,
    compose_noisy,
    l1_norm,
    norms,
    sobolev_norm,
)
from .solver import SolveReport, resolvent_apply, stationary_density

SWEEP_COLUMNS = ["delta", "dist_L1", "dist_W11", "response_residual", "lip_hdelta",
                 "iterations", "flagged"]


@dataclass
class SweepRecord:
    delta: float
    dist_L1: float
    dist_W11: float
    response_residual: float
    lip_hdelta: float
    solver_report: Optional[SolveReport] = None
    flagged: bool = False

    def row(self) -> list[str]:
        it = self.solver_report.iterations if self.solver_report else 0
        vals = [self.delta, self.dist_L1, self.dist_W11, self.response_residual, self.lip_hdelta]
        return [f"{v:.17g}" for v in vals] + [str(it), str(int(self.flagged))]


@dataclass
class FitResult:
    model: str
    exponent: float
    prefactor: float
    r_squared: float
    n_points: int = 0
    notes: list[str] = field(default_factory=list)

    def as_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in
                         (("model", self.model), ("exponent", f"{self.exponent:.17g}"),
                          ("prefactor", f"{self.prefactor:.17g}"),
                          ("r_squared", f"{self.r_squared:.17g}")))


@dataclass
class SweepConfig:
    backend: str = FOURIER
    resolution: Optional[int] = None
    tol: float = 1e-12
    max_iter: int = 100_000
    quad_points: Optional[int] = None

    def __post_init__(self):
        if self.resolution is None:
            self.resolution = 128 if self.backend == FOURIER else 4096


@dataclass
class ZeroNoiseSystem:
    """Deterministic operator, its fixed point and (smooth case) the quadratic coefficient."""

    LT: TransferMatrix
    h0: DensityGrid
    R: Optional[DensityGrid]
    sigma2: float


def unperturbed(cmap: CircleMap, kernel: NoiseKernel, config: SweepConfig) -> ZeroNoiseSystem:
    if config.backend == FOURIER:
        LT = assemble_fourier(cmap, config.resolution, config.quad_points)
    else:
        LT = assemble_ulam(cmap, config.resolution)
    h0, _ = stationary_density(LT, tol=config.tol, max_iter=config.max_iter)
    sigma2 = moments(kernel)[2]
    R = quadratic_coefficient(LT, h0, sigma2) if config.backend == FOURIER else None
    return ZeroNoiseSystem(LT, h0, R, sigma2)


def quadratic_coefficient(LT: TransferMatrix, h0: DensityGrid, sigma2: float) -> DensityGrid:
    """Second-order zero-noise response ``(sigma2 / 2) (I - L_T)^{-1} h0''``."""
    if LT.representation != FOURIER:
        raise UnsupportedError("the quadratic coefficient needs the Fourier backend")
    return resolvent_apply(LT, h0.derivative(2)) * (0.5 * sigma2)


def zero_noise_sweep(cmap: CircleMap, kernel: NoiseKernel, deltas: Sequence[float],
                     config: Optional[SweepConfig] = None,
                     system: Optional[ZeroNoiseSystem] = None) -> list[SweepRecord]:
    """Solve ``h_delta`` for each noise amplitude and record its distance to ``h_0``.

    In Fourier mode the record also holds the W^{1,1} distance and the
    residual ``||(h_delta - h_0)/delta^2 - R||_{W^{1,1}}``; in Ulam mode those
    two fields are NaN (``h_0`` need not be weakly differentiable).
    Under-resolved amplitudes are flagged.
    """
    config = config or SweepConfig()
    deltas = [float(d) for d in deltas]
    if any(not 0 < d <= 0.25 for d in deltas):
        raise ValueError("deltas must lie in (0, 0.25]")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    sys = system or unperturbed(cmap, kernel, config)
    smooth = config.backend == FOURIER
    out = []
    for d in deltas:
        Q = assemble_convolution(kernel, d, config.backend, config.resolution)
        hd, rep = stationary_density(compose_noisy(sys.LT, Q), tol=config.tol,
                                     max_iter=config.max_iter)
        diff = hd - sys.h0
        nm = norms(hd)
        if smooth:
            w11 = sobolev_norm(diff, 1)
            resid = sobolev_norm(diff / d ** 2 - sys.R, 1)
        else:
            w11 = resid = math.nan
        out.append(SweepRecord(d, l1_norm(diff), w11, resid, nm.Lip, rep,
                               bool(Q.metadata.get("under_resolved"))))
    return out


def refinement_check(cmap: CircleMap, kernel: NoiseKernel, delta: float,
                     config: SweepConfig) -> float:
    """Discrepancy between ``h_delta`` at the configured and doubled resolution.

    Returned relative to ``||h_delta - h_0||`` at the same resolution (W^{1,1}
    in Fourier mode, L^1 in Ulam mode), so values well below one mean the
    discretization error is small against the signal the sweep measures.
    """
    coarse = SweepConfig(config.backend, config.resolution, config.tol, config.max_iter,
                         config.quad_points)
    fine = SweepConfig(config.backend, 2 * config.resolution, config.tol, config.max_iter,
                       None if config.quad_points is None else 2 * config.quad_points)
    results = []
    for cfg in (coarse, fine):
        sys = unperturbed(cmap, kernel, cfg)
        Q = assemble_convolution(kernel, delta, cfg.backend, cfg.resolution)
        hd, _ = stationary_density(compose_noisy(sys.LT, Q), tol=cfg.tol, max_iter=cfg.max_iter)
        results.append((sys.h0, hd))
    (h0c, hc), (_, hf) = results
    if config.backend == FOURIER:
        hf = hf.to_fourier(config.resolution)
        return sobolev_norm(hf - hc, 1) / sobolev_norm(hc - h0c, 1)
    hf = hf.to_ulam(config.resolution)
    return l1_norm(hf - hc) / l1_norm(hc - h0c)


def validate_resolution(cmap, kernel, deltas, config, threshold: float = 0.05) -> float:
    """Refinement-doubling check at the smallest amplitude; raises ResolutionError above ``threshold``."""
    err = refinement_check(cmap, kernel, min(deltas), config)
    if not err <= threshold:
        raise ResolutionError(
            f"{config.backend} resolution {config.resolution}: doubling changes h_delta by "
            f"{err:.3g} of the measured distance at delta={min(deltas):g}")
    return err


# --- fits ----------------------------------------------------------------------

def _linfit(u: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([u, np.ones_like(u)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - (slope * u + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(icpt), r2


def fit_exponent(records, field_name: str = "dist_L1", model: str = "power",
                 values: Optional[Sequence[float]] = None) -> FitResult:
    """Least-squares fit of ``value ~ C delta^p`` (``power``) or ``C (delta |log delta|)^p`` (``power_log``).

    ``records`` is a list of SweepRecord, or a plain sequence of deltas when
    ``values`` is given. Flagged records and non-positive values are
    excluded with a note; at least four points must remain.
    """
    notes = []
    if values is not None:
        pairs = list(zip(map(float, records), map(float, values)))
    else:
        pairs = []
        for r in records:
            if r.flagged:
                notes.append(f"delta={r.delta:g} flagged (under-resolved), excluded")
                continue
            pairs.append((r.delta, float(getattr(r, field_name))))
    kept = []
    for d, v in pairs:
        if not (v > 0 and math.isfinite(v)):
            notes.append(f"delta={d:g}: non-positive value {v!r} excluded")
            continue
        kept.append((d, v))
    if len(kept) < 4:
        raise ValueError(f"need >= 4 usable points for a fit, have {len(kept)}")
    d = np.array([k[0] for k in kept])
    y = np.log([k[1] for k in kept])
    if model == "power":
        u = np.log(d)
    elif model == "power_log":
        u = np.log(d * np.abs(np.log(d)))
    else:
        raise ValueError(f"unknown model {model!r}")
    slope, icpt, r2 = _linfit(u, y)
    return FitResult(model, slope, float(np.exp(icpt)), r2, len(kept), notes)


def lipschitz_diagnostics(records) -> FitResult:
    """Fit ``lip_hdelta ~ C' delta^{-q}``; the result's ``exponent`` is ``q``."""
    fit = fit_exponent(records, "lip_hdelta", "power")
    return FitResult("inverse_power", -fit.exponent, fit.prefactor, fit.r_squared,
                     fit.n_points, fit.notes)


# --- operator-level checks -----------------------------------------------------

def trig_suite(N: int, k_max: int = 4) -> list[DensityGrid]:
    """Zero-mean trigonometric test functions normalized to unit W^{3,1} norm."""
    suite = []
    for k in range(1, k_max + 1):
        for kind in ("cos", "sin"):
            suite.append(DensityGrid.trig(FOURIER, N, k, kind))
    suite.append(DensityGrid.trig(FOURIER, N, 1) + DensityGrid.trig(FOURIER, N, 2, "sin") * 0.5)
    suite.append(DensityGrid.trig(FOURIER, N, 1, "sin") - DensityGrid.trig(FOURIER, N, 3) * 0.25)
    return [g / sobolev_norm(g, 3) for g in suite]


def derivative_operator_decay(cmap: SmoothMap, kernel: NoiseKernel, deltas: Iterable[float],
                              test_suite: Optional[Sequence[DensityGrid]] = None,
                              N: int = 128, LT: Optional[TransferMatrix] = None) -> list[tuple[float, float]]:
    """``sup_f ||(L_delta - L_0) f||_{W^{1,1}} / (delta ||f||_{W^{3,1}})`` over a test suite."""
    LT = LT or assemble_fourier(cmap, N)
    N = LT.resolution
    suite = list(test_suite) if test_suite is not None else trig_suite(N)
    pushed = [LT @ f for f in suite]
    strong = [sobolev_norm(f, 3) for f in suite]
    out = []
    for d in deltas:
        Q = assemble_convolution(kernel, d, FOURIER, N)
        best = 0.0
        for g, s in zip(pushed, strong):
            if s == 0:
                continue
            best = max(best, sobolev_norm((Q @ g) - g, 1) / (d * s))
        out.append((float(d), best))
    return out


def second_derivative_check(cmap: SmoothMap, kernel: NoiseKernel, deltas: Iterable[float],
                            N: int = 128, system: Optional[ZeroNoiseSystem] = None) -> list[tuple[float, float]]:
    """``||(L_delta - L_0) h_0 / delta^2 - (sigma2/2) h_0''||_{W^{1,1}}`` per amplitude."""
    if system is None:
        LT = assemble_fourier(cmap, N)
        h0, _ = stationary_density(LT)
        sigma2 = moments(kernel)[2]
    else:
        LT, h0, sigma2 = system.LT, system.h0, system.sigma2
    N = LT.resolution
    target = h0.derivative(2) * (0.5 * sigma2)
    base = LT @ h0
    out = []
    for d in deltas:
        Q = assemble_convolution(kernel, d, FOURIER, N)
        out.append((float(d), sobolev_norm(((Q @ base) - base) / d ** 2 - target, 1)))
    return out


def best_lipschitz_bound(a: float, n: int = 8192) -> tuple[float, DensityGrid]:
    """Optimal ``a``-Lipschitz L^1 approximation of the shift-fold density jump at 1/2.

    Returns ``1/(9a)`` and the bin-averaged ramp ``f_a``: 2/3 left of
    ``1/2 - 1/(3a)``, 4/3 right of ``1/2 + 1/(3a)``, slope ``a`` in between.
    """
    if not a > 2.0 / 3.0:
        raise UnsupportedError("the ramp of width 2/(3a) only fits in [0, 1] for a > 2/3")
    w = 1.0 / (3.0 * a)

    def f(x):
        return np.clip(1.0 + a * (x - 0.5), 2.0 / 3.0, 4.0 / 3.0)

    fa = DensityGrid.from_function(f, ULAM, n, breakpoints=(0.5 - w, 0.5 + w))
    return 1.0 / (9.0 * a), fa


def shift_fold_h0(n: int) -> DensityGrid:
    return DensityGrid.from_function(shift_fold_density, ULAM, n, breakpoints=(0.5,))


def lower_bound_chain(records: Sequence[SweepRecord]) -> list[float]:
    """``dist_L1 * lip_hdelta`` per unflagged record (bounded below by 1/9 for the shift-fold map)."""
    return [r.dist_L1 * r.lip_hdelta for r in records if not r.flagged]


# --- I/O -------------------------------------------------------------------------

def write_sweep_csv(records: Sequence[SweepRecord], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_sweep_csv(path) -> list[SweepRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rep = SolveReport(int(row["iterations"]), math.nan, math.nan)
            out.append(SweepRecord(float(row["delta"]), float(row["dist_L1"]),
                                   float(row["dist_W11"]), float(row["response_residual"]),
                                   float(row["lip_hdelta"]), rep, row["flagged"] == "1"))
    return out
