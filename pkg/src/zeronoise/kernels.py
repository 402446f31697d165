"""Noise kernels: mean-zero probability densities on [-1, 1].

A kernel ``rho`` is rescaled to amplitude ``delta`` by
``rho_delta(x) = rho(x / delta) / delta``; the rescaled kernel is again a
:class:`NoiseKernel` (its support shrinks to ``delta * support``), so every
operation below applies to both.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnsupportedError, ValidationError

MASS_TOL = 1e-6
MEAN_TOL = 1e-6
ANALYTIC_TOL = 1e-8


@dataclass(frozen=True)
class NoiseKernel:
    """Probability density supported in ``support`` (a subinterval of [-1, 1]).

    ``breakpoints`` lists points where the density is not smooth (support
    endpoints are added automatically); quadrature panels are split there so
    that piecewise-polynomial kernels integrate exactly.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-1.0, 1.0)
    name: str = "custom"
    analytic_moments: Optional[tuple[float, float, float]] = None
    analytic_variation: Optional[float] = None
    breakpoints: tuple[float, ...] = ()
    scale: float = 1.0
    base: Optional["NoiseKernel"] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = self.support
        if not (-1.0 - 1e-15 <= lo < hi <= 1.0 + 1e-15):
            raise ValidationError(f"support {self.support} is not a subinterval of [-1, 1]")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.support
        inside = (z >= lo) & (z <= hi)
        out = np.zeros_like(z)
        if np.any(inside):
            out[inside] = self.evaluator(z[inside])
        return out

    def knots(self) -> np.ndarray:
        lo, hi = self.support
        pts = [lo, hi] + [b for b in self.breakpoints if lo < b < hi]
        return np.unique(np.asarray(pts, dtype=float))

    @property
    def sigma2(self) -> float:
        return moments(self)[2]


def _gauss_nodes(kernel: NoiseKernel, order: int, panels_per_piece: int = 1):
    """Composite Gauss-Legendre nodes and weights over the kernel support."""
    x, w = np.polynomial.legendre.leggauss(order)
    knots = kernel.knots()
    edges = []
    for a, b in zip(knots[:-1], knots[1:]):
        edges.append(np.linspace(a, b, panels_per_piece + 1))
    edges = np.unique(np.concatenate(edges))
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def moments(kernel: NoiseKernel, quadrature_order: int = 32) -> tuple[float, float, float]:
    """Return ``(mass, mean, sigma2)`` of the kernel by Gauss-Legendre quadrature.

    Raises ValidationError if the kernel is not normalized, or if the
    computed moments disagree with ``analytic_moments``.
    """
    if quadrature_order < 16:
        raise ValueError("quadrature_order must be >= 16")
    z, w = _gauss_nodes(kernel, quadrature_order, panels_per_piece=4)
    rho = kernel(z)
    mass = float(np.sum(w * rho))
    mean = float(np.sum(w * z * rho))
    sigma2 = float(np.sum(w * z * z * rho))
    if abs(mass - 1.0) > MASS_TOL:
        raise ValidationError(f"kernel {kernel.name!r} has mass {mass!r}, expected 1")
    if kernel.analytic_moments is not None:
        for label, num, ref in zip(("mass", "mean", "sigma2"), (mass, mean, sigma2),
                                   kernel.analytic_moments):
            if abs(num - ref) > ANALYTIC_TOL * max(1.0, abs(ref)):
                raise ValidationError(
                    f"kernel {kernel.name!r}: quadrature {label} {num!r} != analytic {ref!r}")
    return mass, mean, sigma2


def validate(kernel: NoiseKernel) -> NoiseKernel:
    """Check normalization, zero mean, positive variance and non-negativity."""
    mass, mean, sigma2 = moments(kernel)
    if abs(mean) > MEAN_TOL:
        raise ValidationError(f"kernel {kernel.name!r} has mean {mean!r}, expected 0")
    if sigma2 <= 0:
        raise ValidationError(f"kernel {kernel.name!r} has non-positive second moment")
    lo, hi = kernel.support
    if np.any(kernel(np.linspace(lo, hi, 4097)) < 0):
        raise ValidationError(f"kernel {kernel.name!r} takes negative values")
    return kernel


def rescale(kernel: NoiseKernel, delta: float) -> NoiseKernel:
    """Kernel of amplitude ``delta``: ``x -> kernel(x / delta) / delta`` on ``delta * support``."""
    if not 0 < delta <= 1:
        raise UnsupportedError("rescale needs 0 < delta <= 1; delta = 0 is the identity (Dirac) case")
    base = kernel.base if kernel.base is not None else kernel
    scale = kernel.scale * delta
    f = base.evaluator
    am = None
    if base.analytic_moments is not None:
        m0, m1, m2 = base.analytic_moments
        am = (m0, scale * m1, scale * scale * m2)
    av = None if base.analytic_variation is None else base.analytic_variation / scale
    lo, hi = base.support
    return NoiseKernel(
        evaluator=lambda x: f(np.asarray(x) / scale) / scale,
        support=(lo * scale, hi * scale),
        name=f"{base.name}@{scale:g}",
        analytic_moments=am,
        analytic_variation=av,
        breakpoints=tuple(b * scale for b in base.breakpoints),
        scale=scale,
        base=base,
    )


def total_variation(kernel: NoiseKernel, grid_size: int = 4096) -> float:
    """Discrete total variation on ``grid_size + 1`` uniform points of [-1, 1].

    The kernel is extended by zero outside its support, so jumps at the
    support boundary count.
    """
    if grid_size < 1024:
        raise ValueError("grid_size must be >= 1024")
    z = np.linspace(-1.0, 1.0, grid_size + 1)
    v = np.concatenate(([0.0], kernel(z), [0.0]))
    return float(np.sum(np.abs(np.diff(v))))


def fourier_multiplier(kernel: NoiseKernel, delta: float, k_max: int) -> np.ndarray:
    """Fourier coefficients ``int rho_delta(x) exp(-2 pi i k x) dx`` for ``k = -k_max..k_max``.

    ``delta = 0`` gives the Dirac multiplier (all ones).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    ks = np.arange(-k_max, k_max + 1)
    if delta == 0:
        return np.ones(ks.size, dtype=complex)
    # at most ~half an oscillation per panel of 32 nodes
    lo, hi = kernel.support
    panels = max(4, int(math.ceil(2 * k_max * delta * (hi - lo))))
    z, w = _gauss_nodes(kernel, 32, panels_per_piece=panels)
    wr = w * kernel(z)
    phase = np.exp(-2j * np.pi * np.outer(ks, delta * z))
    out = phase @ wr
    out /= out[k_max].real
    return out


def sampler(kernel: NoiseKernel, knots: int = 2 ** 14) -> Callable[[np.ndarray], np.ndarray]:
    """Inverse-CDF sampler: maps uniforms in [0, 1) to kernel-distributed values.

    The CDF is the cumulative trapezoid rule on ``knots`` points of the
    support, inverted by monotone linear interpolation.
    """
    lo, hi = kernel.support
    z = np.linspace(lo, hi, knots)
    rho = kernel(z)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(z))))
    cdf /= cdf[-1]
    # drop flat stretches so the inverse is well defined
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    cdf, z = cdf[keep], z[keep]

    def draw(u):
        return np.interp(u, cdf, z)

    return draw


def uniform() -> NoiseKernel:
    return NoiseKernel(
        evaluator=lambda z: np.full_like(z, 0.5),
        name="uniform",
        analytic_moments=(1.0, 0.0, 1.0 / 3.0),
        analytic_variation=1.0,
    )


def triangular() -> NoiseKernel:
    return NoiseKernel(
        evaluator=lambda z: 1.0 - np.abs(z),
        name="triangular",
        analytic_moments=(1.0, 0.0, 1.0 / 6.0),
        analytic_variation=2.0,
        breakpoints=(0.0,),
    )


def epanechnikov() -> NoiseKernel:
    return NoiseKernel(
        evaluator=lambda z: 0.75 * (1.0 - z * z),
        name="epanechnikov",
        analytic_moments=(1.0, 0.0, 0.2),
        analytic_variation=1.5,
    )


def skewed_step() -> NoiseKernel:
    """Asymmetric mean-zero step kernel: 1/3 on [-1, 0), 4/3 on [0, 1/2].

    Second moment 1/6 (same as the triangular kernel), third moment -1/16.
    """
    return NoiseKernel(
        evaluator=lambda z: np.where(z < 0, 1.0 / 3.0, 4.0 / 3.0),
        support=(-1.0, 0.5),
        name="skewed_step",
        analytic_moments=(1.0, 0.0, 1.0 / 6.0),
        analytic_variation=8.0 / 3.0,
        breakpoints=(0.0,),
    )


def tabulated(z: np.ndarray, rho: np.ndarray, name: str = "tabulated") -> NoiseKernel:
    """Piecewise-linear kernel through ``(z, rho)`` samples on a uniform grid."""
    z = np.asarray(z, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if z.ndim != 1 or z.shape != rho.shape or z.size < 2:
        raise ValidationError("tabulated kernel needs two equal-length 1-d arrays")
    steps = np.diff(z)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, steps.mean()):
        raise ValidationError("tabulated kernel requires a strictly increasing uniform grid")
    if np.any(rho < 0):
        raise ValidationError("tabulated kernel takes negative values")
    zc, rc = z.copy(), rho.copy()
    return validate(NoiseKernel(
        evaluator=lambda x: np.interp(x, zc, rc),
        support=(float(z[0]), float(z[-1])),
        name=name,
        breakpoints=tuple(z[1:-1]),
    ))


def load_kernel_csv(path, name: Optional[str] = None) -> NoiseKernel:
    """Read a tabulated kernel from a two-column ``z,rho`` CSV (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise ValidationError(f"{path}: non-numeric row {row!r}")
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return tabulated(arr[:, 0], arr[:, 1], name=name or str(path))


KERNELS = {
    "uniform": uniform,
    "triangular": triangular,
    "epanechnikov": epanechnikov,
    "skewed_step": skewed_step,
}


def get_kernel(name: str) -> NoiseKernel:
    try:
        return KERNELS[name]()
    except KeyError:
        raise ValidationError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
