"""Discretized densities and transfer operators on the circle.

Two discretizations are supported:

``ulam``
    bin averages on ``n`` uniform bins; operators are column-stochastic
    bin-transition matrices.
``fourier``
    Fourier coefficients ``c_k``, ``|k| <= N``, of ``f(x) = sum c_k e^{2 pi i k x}``
    (stored in the order ``k = -N..N``); operators are Galerkin truncations.

Ulam operators are kept factored: the deterministic part is a sparse matrix
and the noise convolution a circulant applied by FFT, since a dense
``8192 x 8192`` composition is neither needed nor affordable.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import AssemblyError, RepresentationError, ResolutionError
from .kernels import NoiseKernel, fourier_multiplier
from .maps import CircleMap, SmoothMap

ULAM = "ulam"
FOURIER = "fourier"


def _sample_size(N: int) -> int:
    m = 4096
    while m < 16 * (2 * N + 1):
        m *= 2
    return m


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """A function on the circle in one of the two discretizations."""

    representation: str
    values: np.ndarray

    def __post_init__(self):
        if self.representation not in (ULAM, FOURIER):
            raise RepresentationError(f"unknown representation {self.representation!r}")
        v = np.asarray(self.values)
        if self.representation == FOURIER:
            v = v.astype(complex)
            if v.size % 2 != 1:
                raise RepresentationError("Fourier coefficient vector must have odd length 2N+1")
        else:
            v = v.astype(float)
        object.__setattr__(self, "values", v)

    # construction -----------------------------------------------------------

    @classmethod
    def from_function(cls, f: Callable, representation: str, resolution: int,
                      breakpoints: Sequence[float] = ()) -> "DensityGrid":
        """Discretize ``f``: exact-order bin averages (Ulam) or FFT coefficients (Fourier).

        For Ulam, every bin is split at ``breakpoints`` and integrated with
        8-point Gauss-Legendre, so piecewise cubics aligned with those points
        are averaged exactly.
        """
        if representation == ULAM:
            return cls(ULAM, bin_averages(f, resolution, breakpoints))
        N = resolution
        m = _sample_size(N)
        x = np.arange(m) / m
        c = np.fft.fft(f(x)) / m
        ks = np.arange(-N, N + 1)
        return cls(FOURIER, c[ks % m])

    @classmethod
    def constant(cls, representation: str, resolution: int, value: float = 1.0) -> "DensityGrid":
        if representation == ULAM:
            return cls(ULAM, np.full(resolution, float(value)))
        c = np.zeros(2 * resolution + 1, dtype=complex)
        c[resolution] = value
        return cls(FOURIER, c)

    @classmethod
    def trig(cls, representation: str, resolution: int, k: int, kind: str = "cos") -> "DensityGrid":
        """``cos(2 pi k x)`` or ``sin(2 pi k x)``; Ulam values are exact bin averages."""
        if representation == FOURIER:
            N = resolution
            if abs(k) > N:
                raise RepresentationError(f"mode {k} exceeds truncation N={N}")
            c = np.zeros(2 * N + 1, dtype=complex)
            if kind == "cos":
                c[N + k] += 0.5
                c[N - k] += 0.5
            else:
                c[N + k] += -0.5j
                c[N - k] += 0.5j
            return cls(FOURIER, c)
        n = resolution
        edges = np.arange(n + 1) / n
        w = 2 * np.pi * k
        if kind == "cos":
            prim = np.sin(w * edges) / w
        else:
            prim = -np.cos(w * edges) / w
        return cls(ULAM, np.diff(prim) * n)

    # basic properties -----------------------------------------------------

    @property
    def resolution(self) -> int:
        if self.representation == ULAM:
            return self.values.size
        return (self.values.size - 1) // 2

    @property
    def mass(self) -> float:
        if self.representation == ULAM:
            return float(np.mean(self.values))
        return float(self.values[self.resolution].real)

    def _check(self, other: "DensityGrid"):
        if self.representation != other.representation or self.resolution != other.resolution:
            raise RepresentationError(
                f"cannot combine {self.representation}[{self.resolution}] with "
                f"{other.representation}[{other.resolution}]")

    def __add__(self, other):
        self._check(other)
        return DensityGrid(self.representation, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return DensityGrid(self.representation, self.values - other.values)

    def __mul__(self, a):
        return DensityGrid(self.representation, self.values * a)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return DensityGrid(self.representation, self.values / a)

    def __neg__(self):
        return DensityGrid(self.representation, -self.values)

    # evaluation and conversion --------------------------------------------

    def sample(self, m: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Point values on a uniform grid: bin centres (Ulam) or ``j/m`` (Fourier)."""
        if self.representation == ULAM:
            n = self.resolution
            return (np.arange(n) + 0.5) / n, self.values.copy()
        N = self.resolution
        m = m or _sample_size(N)
        buf = np.zeros(m, dtype=complex)
        ks = np.arange(-N, N + 1)
        buf[ks % m] = self.values
        return np.arange(m) / m, np.fft.ifft(buf).real * m

    def derivative(self, order: int = 1) -> "DensityGrid":
        """Exact derivative of the truncation (Fourier) or periodic centered differences (Ulam)."""
        if order == 0:
            return self
        if self.representation == FOURIER:
            ks = np.arange(-self.resolution, self.resolution + 1)
            return DensityGrid(FOURIER, self.values * (2j * np.pi * ks) ** order)
        v = self.values
        n = v.size
        for _ in range(order):
            v = (np.roll(v, -1) - np.roll(v, 1)) * (0.5 * n)
        return DensityGrid(ULAM, v)

    def to_ulam(self, n: int) -> "DensityGrid":
        """Bin averages on ``n`` bins; mass is preserved exactly."""
        if self.representation == ULAM:
            if n == self.resolution:
                return self
            if n % self.resolution == 0:
                return DensityGrid(ULAM, np.repeat(self.values, n // self.resolution))
            if self.resolution % n == 0:
                return DensityGrid(ULAM, self.values.reshape(n, -1).mean(axis=1))
            raise RepresentationError("Ulam resolutions must divide one another")
        N = self.resolution
        if N >= n:
            raise RepresentationError(f"need n > N to bin-average exactly (n={n}, N={N})")
        ks = np.arange(-N, N + 1)
        # bin average of e^{2 pi i k x} over [j/n, (j+1)/n]
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(ks == 0, 1.0 + 0j,
                           (np.exp(2j * np.pi * ks / n) - 1) / (2j * np.pi * ks / n))
        buf = np.zeros(n, dtype=complex)
        buf[ks % n] = self.values * fac
        return DensityGrid(ULAM, np.fft.ifft(buf).real * n)

    def to_fourier(self, N: int) -> "DensityGrid":
        """Fourier coefficients ``|k| <= N`` of the function; mass is preserved exactly."""
        if self.representation == FOURIER:
            M = self.resolution
            out = np.zeros(2 * N + 1, dtype=complex)
            K = min(M, N)
            out[N - K:N + K + 1] = self.values[M - K:M + K + 1]
            return DensityGrid(FOURIER, out)
        n = self.resolution
        ks = np.arange(-N, N + 1)
        fv = np.fft.fft(self.values) / n
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(ks == 0, 1.0 + 0j,
                           (1 - np.exp(-2j * np.pi * ks / n)) / (2j * np.pi * ks / n))
        return DensityGrid(FOURIER, fv[ks % n] * fac)

    def to_csv(self, path, m: Optional[int] = None):
        x, y = self.sample(m)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for a, b in zip(x, y):
                w.writerow([f"{a:.17g}", f"{b:.17g}"])


def bin_averages(f: Callable, n: int, breakpoints: Sequence[float] = (), order: int = 8) -> np.ndarray:
    """Exact-order bin averages of ``f`` over ``n`` uniform bins of [0, 1)."""
    edges = np.arange(n + 1) / n
    cuts = np.unique(np.concatenate([edges, [b for b in breakpoints if 0 < b < 1]]))
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = cuts[:-1], cuts[1:]
    nodes = 0.5 * (b - a)[:, None] * xg[None, :] + 0.5 * (a + b)[:, None]
    integrals = (0.5 * (b - a)[:, None] * wg[None, :] * f(nodes)).sum(axis=1)
    owner = np.minimum((0.5 * (a + b) * n).astype(int), n - 1)
    out = np.zeros(n)
    np.add.at(out, owner, integrals)
    return out * n


# --- norms --------------------------------------------------------------------

@dataclass(frozen=True)
class Norms:
    L1: float
    W11: float
    W21: float
    W31: float
    BV: float
    Lip: float


def l1_norm(g: DensityGrid) -> float:
    if g.representation == ULAM:
        return float(np.mean(np.abs(g.values)))
    return float(np.mean(np.abs(g.sample()[1])))


def sobolev_norm(g: DensityGrid, k: int) -> float:
    """``sum_{j <= k} ||g^{(j)}||_{L^1}``."""
    return sum(l1_norm(g.derivative(j)) for j in range(k + 1))


def norms(g: DensityGrid) -> Norms:
    """L1, W^{1,1}, W^{2,1}, W^{3,1}, total variation and Lipschitz constant of ``g``.

    Ulam: L1 is the mean of ``|values|``, BV the periodic sum of jumps and
    Lip the largest jump over the bin width. Fourier: quadrature of the
    inverse transform and exact spectral derivatives.
    """
    d = [l1_norm(g.derivative(j)) for j in range(4)]
    if g.representation == ULAM:
        jumps = np.abs(np.roll(g.values, -1) - g.values)
        bv = float(jumps.sum())
        lip = float(jumps.max() * g.resolution)
    else:
        bv = d[1]
        lip = float(np.max(np.abs(g.derivative(1).sample()[1])))
    return Norms(L1=d[0], W11=d[0] + d[1], W21=d[0] + d[1] + d[2], W31=sum(d), BV=bv, Lip=lip)


# --- operators ---------------------------------------------------------------

class Circulant:
    """Circulant matrix ``C[i, j] = column[(i - j) mod n]`` applied by FFT."""

    def __init__(self, column: np.ndarray):
        self.column = np.asarray(column, dtype=float)
        self._hat = np.fft.rfft(self.column)
        self.shape = (self.column.size, self.column.size)

    def __matmul__(self, v):
        v = np.asarray(v)
        return np.fft.irfft(self._hat * np.fft.rfft(v), n=self.column.size)

    def rmatvec(self, v):
        return np.fft.irfft(np.conj(self._hat) * np.fft.rfft(v), n=self.column.size)

    def toarray(self):
        return scipy.linalg.circulant(self.column)


class Diagonal:
    def __init__(self, diag: np.ndarray):
        self.diag = np.asarray(diag)
        self.shape = (self.diag.size, self.diag.size)

    def __matmul__(self, v):
        return self.diag * v

    def rmatvec(self, v):
        return self.diag * v

    def toarray(self):
        return np.diag(self.diag)


def _dense(f):
    if isinstance(f, np.ndarray):
        return f
    return f.toarray()


def _rmatvec(f, v):
    if isinstance(f, (Circulant, Diagonal)):
        return f.rmatvec(v)
    return f.T @ v


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Finite Markov operator acting on :class:`DensityGrid` values.

    ``factors`` are applied left to right, so ``factors=(L_T, Q)`` is the
    product ``Q @ L_T``. ``kind`` is one of ``deterministic``,
    ``convolution``, ``composed``.
    """

    representation: str
    kind: str
    resolution: int
    factors: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.resolution if self.representation == ULAM else 2 * self.resolution + 1

    def matvec(self, v: np.ndarray) -> np.ndarray:
        for f in self.factors:
            v = f @ v
        return v

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        for f in reversed(self.factors):
            v = _rmatvec(f, v)
        return v

    def __matmul__(self, g):
        if isinstance(g, DensityGrid):
            if g.representation != self.representation or g.resolution != self.resolution:
                raise RepresentationError("density and operator discretizations differ")
            return DensityGrid(self.representation, self.matvec(g.values))
        return self.matvec(np.asarray(g))

    def apply(self, g: DensityGrid) -> DensityGrid:
        return self @ g

    @property
    def matrix(self) -> np.ndarray:
        """Dense matrix of the product (materialized on demand)."""
        out = None
        for f in self.factors:
            d = _dense(f)
            out = d if out is None else d @ out
        return out

    def column_sums(self) -> np.ndarray:
        """``1^T M`` (Ulam); for Fourier, the mass row ``M[k=0, :]``."""
        if self.representation == ULAM:
            return self.rmatvec(np.ones(self.size))
        e0 = np.zeros(self.size, dtype=complex)
        e0[self.resolution] = 1.0
        return self.rmatvec(e0)

    def is_markov(self, tol: float = 1e-9) -> bool:
        s = self.column_sums()
        if self.representation == ULAM:
            return bool(np.max(np.abs(s - 1.0)) <= tol)
        target = np.zeros(self.size)
        target[self.resolution] = 1.0
        return bool(np.max(np.abs(s - target)) <= tol)

    def to_csv(self, path):
        M = self.matrix
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in M:
                if np.iscomplexobj(row):
                    w.writerow([f"{complex(z).real:.17g}{complex(z).imag:+.17g}j" for z in row])
                else:
                    w.writerow([f"{z:.17g}" for z in row])


def _merge_close(pts: np.ndarray, tol: float) -> np.ndarray:
    pts = np.sort(pts)
    keep = np.concatenate(([True], np.diff(pts) > tol))
    return pts[keep]


def assemble_ulam(cmap: CircleMap, n: int) -> TransferMatrix:
    """Ulam matrix: entry ``(i, j)`` is the fraction of bin ``j`` that ``T`` sends into bin ``i``.

    Each monotone branch is cut at the bin edges and at the preimages of the
    bin edges, so every sub-interval maps into a single bin and the
    fractions are exact up to the accuracy of the branch inverse.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rows, cols, vals = [], [], []
    for br in cmap.branches():
        a, b = br.image
        lo, hi = min(a, b), max(a, b)
        jl, jh = int(np.ceil(br.lo * n)), int(np.floor(br.hi * n))
        src_edges = np.arange(jl, jh + 1) / n
        ml, mh = int(np.ceil(lo * n)), int(np.floor(hi * n))
        targets = np.arange(ml, mh + 1) / n
        pre = br.invert(targets) if targets.size else np.empty(0)
        pts = np.concatenate(([br.lo, br.hi], src_edges, pre))
        pts = pts[(pts >= br.lo) & (pts <= br.hi)]
        pts = _merge_close(pts, 1e-15)
        mids = 0.5 * (pts[:-1] + pts[1:])
        lengths = np.diff(pts)
        img = br.lift(mids)
        if not np.all(np.isfinite(img)):
            bad = int(np.floor(mids[~np.isfinite(img)][0] * n))
            raise AssemblyError(f"map {getattr(cmap, 'name', '?')!r} is not finite on bin {bad}")
        src = np.minimum((mids * n).astype(int), n - 1)
        tgt = np.minimum((np.mod(img, 1.0) * n).astype(int), n - 1)
        rows.append(tgt)
        cols.append(src)
        vals.append(lengths * n)
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    M.sum_duplicates()
    return TransferMatrix(ULAM, "deterministic", n, (M,), {"map": getattr(cmap, "name", "?")})


def _fourier_block(cmap: SmoothMap, N: int, M: int) -> np.ndarray:
    ks = np.arange(-N, N + 1)
    x = np.arange(M) / M
    phase = np.exp(-2j * np.pi * np.outer(ks, cmap.lift(x)))
    F = np.fft.ifft(phase, axis=1)
    return F[:, ks % M]


def assemble_fourier(cmap: SmoothMap, N: int, quad_points: Optional[int] = None,
                     check_aliasing: bool = True) -> TransferMatrix:
    """Galerkin matrix ``A[k, m] = int exp(-2 pi i k T(x)) exp(2 pi i m x) dx``, ``|k|, |m| <= N``.

    Entries use the trapezoidal rule on ``quad_points`` nodes (spectrally
    accurate for analytic lifts); the rule is re-run at twice the nodes and
    a discrepancy above ``1e-8`` raises ResolutionError.
    """
    if not isinstance(cmap, SmoothMap):
        raise RepresentationError("the Fourier backend needs a smooth map")
    if N < 1:
        raise ValueError("N must be positive")
    quad_points = quad_points or 8 * N
    if quad_points < 8 * N:
        raise ResolutionError(f"quad_points={quad_points} < 8N={8 * N}")
    A = _fourier_block(cmap, N, quad_points)
    if check_aliasing:
        B = _fourier_block(cmap, N, 2 * quad_points)
        err = float(np.max(np.abs(A - B)))
        if err > 1e-8:
            raise ResolutionError(f"Fourier assembly aliasing {err:.3g} at {quad_points} nodes")
        A = B
    # exact mass row: only the k = 0 row touches the mean
    A[N, :] = 0.0
    A[N, N] = 1.0
    return TransferMatrix(FOURIER, "deterministic", N, (A,), {"map": cmap.name})


def convolution_stencil(kernel: NoiseKernel, delta: float, n: int, order: int = 6) -> np.ndarray:
    """Circulant column of the Ulam convolution: ``c_m = int rho_delta(z) hat(z/h - m) dz``.

    ``hat`` is the unit tent, i.e. ``c_m`` is the probability that a point
    uniform in a bin lands ``m`` bins away after the noise step.
    """
    h = 1.0 / n
    lo, hi = kernel.support
    lo, hi = lo * delta, hi * delta
    cuts = [lo, hi] + [b * delta for b in kernel.breakpoints if lo < b * delta < hi]
    grid = np.arange(np.floor(lo / h), np.ceil(hi / h) + 1) * h
    cuts = np.unique(np.concatenate([cuts, grid[(grid > lo) & (grid < hi)]]))
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = cuts[:-1], cuts[1:]
    z = (0.5 * (b - a)[:, None] * xg[None, :] + 0.5 * (a + b)[:, None]).ravel()
    w = (0.5 * (b - a)[:, None] * wg[None, :]).ravel()
    rho = kernel(z / delta) / delta
    t = z / h
    m0 = np.floor(t)
    frac = t - m0
    col = np.zeros(n)
    np.add.at(col, m0.astype(int) % n, w * rho * (1.0 - frac))
    np.add.at(col, (m0.astype(int) + 1) % n, w * rho * frac)
    return col / col.sum()


def assemble_convolution(kernel: NoiseKernel, delta: float, representation: str,
                         resolution: int) -> TransferMatrix:
    """Noise operator ``f -> rho_delta * f`` on the circle; ``delta = 0`` is the identity.

    Ulam: doubly stochastic circulant. Fourier: diagonal multiplier
    ``rho_hat_delta(k)``. In Ulam mode a kernel narrower than a quarter
    bin sets ``metadata['under_resolved']`` and emits a warning.
    """
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    meta = {"kernel": kernel.name, "delta": delta, "under_resolved": False}
    if representation == ULAM:
        n = resolution
        if delta == 0:
            op = sp.identity(n, format="csr")
        else:
            if delta < 0.25 / n:
                meta["under_resolved"] = True
                warnings.warn(f"delta={delta:g} is below a quarter bin (n={n}); refine the grid",
                              stacklevel=2)
            op = Circulant(convolution_stencil(kernel, delta, n))
        return TransferMatrix(ULAM, "convolution", n, (op,), meta)
    if representation == FOURIER:
        N = resolution
        return TransferMatrix(FOURIER, "convolution", N,
                              (Diagonal(fourier_multiplier(kernel, delta, N)),), meta)
    raise RepresentationError(f"unknown representation {representation!r}")


def compose_noisy(LT: TransferMatrix, Q: TransferMatrix) -> TransferMatrix:
    """``L_delta = Q @ L_T`` (noise applied after the deterministic step)."""
    if LT.representation != Q.representation or LT.resolution != Q.resolution:
        raise RepresentationError(
            f"cannot compose {LT.representation}[{LT.resolution}] with "
            f"{Q.representation}[{Q.resolution}]")
    meta = {**LT.metadata, **Q.metadata}
    if LT.representation == FOURIER:
        (A,) = LT.factors
        (D,) = Q.factors
        return TransferMatrix(FOURIER, "composed", LT.resolution, (D.diag[:, None] * _dense(A),), meta)
    return TransferMatrix(ULAM, "composed", LT.resolution, LT.factors + Q.factors, meta)


def identity(representation: str, resolution: int) -> TransferMatrix:
    size = resolution if representation == ULAM else 2 * resolution + 1
    if representation == FOURIER:
        return TransferMatrix(FOURIER, "deterministic", resolution, (np.eye(size, dtype=complex),))
    return TransferMatrix(ULAM, "deterministic", resolution, (sp.identity(size, format="csr"),))
