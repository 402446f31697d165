"""Fixed points, resolvents and mixing-rate estimates for :class:`TransferMatrix`."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SpectralGapError
from .operators import FOURIER, ULAM, DensityGrid, TransferMatrix, l1_norm, sobolev_norm

log = logging.getLogger(__name__)

DENSE_LIMIT = 2048


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    normalization_defect: float
    method: str = "power"
    contraction_ratio: float = float("nan")
    clip_magnitude: float = 0.0


def _mass_vector(op: TransferMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Constant density ``e`` and mass functional ``m`` (as a row vector)."""
    n = op.size
    if op.representation == ULAM:
        return np.ones(n), np.full(n, 1.0 / n)
    e = np.zeros(n, dtype=complex)
    e[op.resolution] = 1.0
    return e, e.copy()


def _l1(op: TransferMatrix, v: np.ndarray) -> float:
    return l1_norm(DensityGrid(op.representation, v))


def _deflated_solve(op: TransferMatrix, rhs: np.ndarray, x0=None) -> np.ndarray:
    """Solve ``(I - P + e m^T) u = rhs``."""
    e, m = _mass_vector(op)
    n = op.size
    if n <= DENSE_LIMIT or op.representation == FOURIER:
        A = np.eye(n) - op.matrix + np.outer(e, m)
        try:
            with warnings.catch_warnings():
                # singularity is detected below and reported as SpectralGapError
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(A, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as err:
            raise SpectralGapError(f"deflated system is singular: {err}") from None
        if np.min(np.abs(np.diag(lu[0]))) < 1e-13 * np.max(np.abs(np.diag(lu[0]))):
            raise SpectralGapError("deflated system is numerically singular (no spectral gap)")
        return scipy.linalg.lu_solve(lu, rhs)
    dtype = complex if op.representation == FOURIER else float
    A = spla.LinearOperator((n, n), matvec=lambda u: u - op.matvec(u) + e * (m @ u), dtype=dtype)
    u, info = spla.gmres(A, rhs, x0=x0, rtol=1e-14, atol=0.0, restart=200, maxiter=50)
    if info != 0:
        raise SpectralGapError(f"GMRES on the deflated system did not converge (info={info})")
    return u


def stationary_density(op: TransferMatrix, tol: float = 1e-12, max_iter: int = 100_000,
                       fallback: bool = True) -> tuple[DensityGrid, SolveReport]:
    """Mass-one fixed point of ``op`` by power iteration from the constant density.

    The iteration switches to a direct deflated solve when the measured
    contraction ratio is too close to one to reach ``tol`` within
    ``max_iter`` steps. Raises ConvergenceError (report attached) otherwise.
    """
    if tol < 1e-13:
        raise ValueError("tol must be >= 1e-13")
    e, m = _mass_vector(op)
    v = e.copy()
    res_hist = []
    ratio = float("nan")
    it = 0
    converged = False
    while it < max_iter:
        w = op.matvec(v)
        it += 1
        res = _l1(op, w - v)
        res_hist.append(res)
        mass = (m @ w).real
        v = w / mass
        if res < tol:
            converged = True
            break
        if it >= 20 and it % 10 == 0:
            prev = res_hist[-11]
            ratio = (res / prev) ** 0.1 if prev > 0 else 0.0
            if ratio >= 1.0 or (ratio > 0.0 and
                                it + np.log(tol / res) / np.log(ratio) > max_iter):
                break
            if ratio > 0.999 and fallback:
                break
    method = "power"
    if not converged:
        if not fallback:
            report = SolveReport(it, res_hist[-1], abs(m @ v - 1), method, ratio)
            raise ConvergenceError(
                f"power iteration stalled after {it} steps (contraction ratio {ratio:.4g})", report)
        log.info("power iteration ratio %.4g; switching to deflated direct solve", ratio)
        v = _deflated_solve(op, e, x0=v)
        v = v / (m @ v).real
        method = "direct"
    if op.representation == FOURIER:
        # keep the truncation exactly real
        N = op.resolution
        v = 0.5 * (v + np.conj(v[::-1]))
        v[N] = 1.0
    res = _l1(op, op.matvec(v) - v)
    clip = 0.0
    if op.representation == ULAM:
        lo = float(v.min())
        if lo < -1e-9:
            report = SolveReport(it, res, abs((m @ v).real - 1), method, ratio, -lo)
            raise ConvergenceError(f"fixed point has negative mass {lo:.3g}", report)
        if lo < 0:
            clip = -lo
            v = np.maximum(v, 0.0)
            v = v / (m @ v)
    else:
        clip = max(0.0, -float(DensityGrid(FOURIER, v).sample()[1].min()))
    report = SolveReport(it, res, abs(float((m @ v).real) - 1.0), method, ratio, clip)
    if res > tol:
        raise ConvergenceError(f"fixed-point residual {res:.3g} exceeds tol {tol:.3g}", report)
    return DensityGrid(op.representation, v), report


def resolvent_apply(op: TransferMatrix, g: DensityGrid, return_report: bool = False):
    """Zero-mass ``u`` with ``(I - op) u = g``, for zero-mass ``g``.

    Solved as ``(I - op + e m^T) u = g`` with ``e`` the constant density
    and ``m`` the mass functional; on zero-mass data this agrees with the
    Neumann series ``sum_i op^i g``.
    """
    if abs(g.mass) > 1e-9:
        raise ValueError(f"resolvent needs a zero-mass argument, got mass {g.mass:.3g}")
    e, m = _mass_vector(op)
    rhs = g.values.astype(complex if op.representation == FOURIER else float)
    u = _deflated_solve(op, rhs)
    u = u - e * (m @ u)
    if op.representation == FOURIER:
        u = 0.5 * (u + np.conj(u[::-1]))
    out = DensityGrid(op.representation, u)
    res = _l1(op, u - op.matvec(u) - g.values)
    if res > 1e-9:
        log.warning("resolvent residual %.3g exceeds 1e-9", res)
    if return_report:
        return out, SolveReport(1, res, abs(out.mass), "direct")
    return out


@dataclass
class RateEstimate:
    rate: float
    prefactor: float
    diagnostic: str = ""


def _test_functions(op: TransferMatrix, trials: int) -> list[DensityGrid]:
    out = []
    for t in range(trials):
        a = 0.6 + 0.4 * t
        phase = 0.37 * t

        def f(x, a=a, phase=phase):
            return np.exp(a * np.cos(2 * np.pi * (x - phase))) + 0.5 * np.sin(2 * np.pi * (t + 2) * x)

        g = DensityGrid.from_function(f, op.representation, op.resolution)
        out.append(g - DensityGrid.constant(op.representation, op.resolution, g.mass))
    return out


def equilibrium_rate(op: TransferMatrix, trials: int = 4, n_max: int = 30,
                     norm: Optional[str] = None, reference_norm: Optional[str] = None,
                     floor: float = 1e-12) -> RateEstimate:
    """Fit ``||op^n g|| ~ C rate^n`` over ``n <= n_max`` for zero-mass test functions.

    ``norm`` defaults to W^{1,1} for Fourier operators and L^1 for Ulam;
    ``reference_norm`` (default W^{3,1} / BV) normalizes ``g``. The reported
    rate is the worst case over trials; norms below ``floor * ||g||`` are
    dropped from the fit (finite-time extinction counts as fast decay).
    """
    if trials < 3:
        raise ValueError("trials must be >= 3")
    fourier = op.representation == FOURIER

    def measure(g, which):
        if which == "L1":
            return l1_norm(g)
        if which == "BV":
            return l1_norm(g) + float(np.abs(np.roll(g.values, -1) - g.values).sum()) \
                if g.representation == ULAM else sobolev_norm(g, 1)
        return sobolev_norm(g, int(which[1]))

    norm = norm or ("W11" if fourier else "L1")
    reference_norm = reference_norm or ("W31" if fourier else "BV")
    worst, pref = 0.0, 0.0
    seqs = []
    for g in _test_functions(op, trials):
        ref = measure(g, reference_norm)
        a = []
        v = g
        for _ in range(n_max + 1):
            a.append(measure(v, norm))
            v = op @ v
        a = np.asarray(a)
        seqs.append((a, ref))
        keep = a > floor * a[0]
        # only the leading run counts; later floating-point noise is ignored
        run = int(np.argmin(keep)) if not keep.all() else keep.size
        if run < 2:
            r = 0.0
        else:
            n = np.arange(run)
            slope = np.polyfit(n, np.log(a[:run]), 1)[0]
            r = float(np.exp(slope))
        worst = max(worst, r)
    diag = ""
    if worst >= 1.0 - 1e-9:
        diag = "no decay: norms do not contract (operator not mixing on zero-mass functions)"
        worst = max(worst, 1.0)
    for a, ref in seqs:
        n = np.arange(a.size)
        keep = a > floor * a[0]
        if worst > 0:
            pref = max(pref, float(np.max(a[keep] / (worst ** n[keep] * ref))))
        else:
            pref = max(pref, float(a[0] / ref))
    return RateEstimate(worst, pref, diag)
