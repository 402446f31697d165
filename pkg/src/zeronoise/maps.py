"""Expanding and piecewise expanding maps of the circle R/Z.

Both map types expose their monotone pieces as :class:`Branch` objects
(a smooth degree-``d`` map is a single branch whose lift covers ``d`` turns),
which is all the transfer-operator assembly needs.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError

BREAK_TOL = 1e-12


@dataclass(frozen=True)
class Branch:
    """Monotone C^2 piece ``lift: [lo, hi] -> R``; values are taken mod 1 on the circle."""

    lo: float
    hi: float
    lift: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def image(self) -> tuple[float, float]:
        a = float(self.lift(np.array([self.lo]))[0])
        b = float(self.lift(np.array([self.hi]))[0])
        return a, b

    def invert(self, y: np.ndarray) -> np.ndarray:
        """Solve ``lift(x) = y`` for lifted targets inside the branch image."""
        y = np.asarray(y, dtype=float)
        if self.inverse is not None:
            return np.clip(self.inverse(y), self.lo, self.hi)
        a, b = self.image
        increasing = b > a
        lo = np.full_like(y, self.lo)
        hi = np.full_like(y, self.hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self.lift(mid) < y
            if not increasing:
                below = ~below
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = 0.5 * (lo + hi)
        # one Newton polish step, kept only where it stays in the bracket
        d = self.deriv(x)
        xn = x - (self.lift(x) - y) / d
        ok = (xn >= self.lo) & (xn <= self.hi) & np.isfinite(xn)
        return np.where(ok, xn, x)


@dataclass(frozen=True)
class SmoothMap:
    """Smooth expanding circle map given by its lift.

    ``derivatives[j]`` is the ``(j+1)``-th derivative of the lift. The lift
    satisfies ``lift(x + 1) = lift(x) + degree``.
    """

    lift: Callable[[np.ndarray], np.ndarray]
    derivatives: tuple[Callable[[np.ndarray], np.ndarray], ...]
    degree: int
    name: str = "smooth"
    analytic: bool = False

    def __call__(self, x):
        return np.mod(self.lift(np.asarray(x, dtype=float)), 1.0)

    def evaluate(self, x, return_flags: bool = False):
        y = self(x)
        if return_flags:
            return y, np.zeros(np.shape(y), dtype=bool)
        return y

    def derivative(self, x, order: int = 1):
        return self.derivatives[order - 1](np.asarray(x, dtype=float))

    def branches(self) -> list[Branch]:
        return [Branch(0.0, 1.0, self.lift, self.derivatives[0])]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0, 1.0)

    def min_expansion(self, grid: int = 4096) -> float:
        x = np.arange(grid) / grid
        return float(np.min(np.abs(self.derivative(x))))

    def validate(self, alpha_inv: Optional[float] = None, grid: int = 4096) -> "SmoothMap":
        m = self.min_expansion(grid)
        bound = 1.0 if alpha_inv is None else alpha_inv
        if alpha_inv is not None and alpha_inv <= 1:
            raise ValidationError("declared expansion constant must exceed 1")
        if m < bound or m <= 1:
            raise ValidationError(f"map {self.name!r}: min |T'| = {m:.6g} on the grid, need > {bound}")
        xs = np.linspace(0.0, 1.0, 17)
        jump = self.lift(xs + 1.0) - self.lift(xs)
        if np.max(np.abs(jump - self.degree)) > 1e-10:
            raise ValidationError(f"map {self.name!r}: lift(x+1) - lift(x) != degree {self.degree}")
        return self


@dataclass(frozen=True)
class PiecewiseMap:
    """Piecewise C^2 circle map on the partition ``0 = d_1 < ... < d_n = 1``.

    Branches are right-continuous: a point equal to ``d_i`` uses branch ``i``.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[Callable, Callable], ...]
    inverses: tuple[Optional[Callable], ...] = ()
    name: str = "piecewise"
    analytic: bool = False
    _interior: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.asarray(self.breakpoints, dtype=float)
        if d.size < 2 or d[0] != 0.0 or d[-1] != 1.0 or np.any(np.diff(d) <= 0):
            raise ValidationError("breakpoints must increase strictly from 0 to 1")
        if len(self.pieces) != d.size - 1:
            raise ValidationError("need one branch per partition interval")
        if self.inverses and len(self.inverses) != len(self.pieces):
            raise ValidationError("inverses must match branches")
        object.__setattr__(self, "_interior", d[1:-1])

    def _index(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _apply(self, x, which: int):
        x = np.asarray(x, dtype=float)
        idx = self._index(x)
        out = np.empty_like(x)
        for i, piece in enumerate(self.pieces):
            sel = idx == i
            if np.any(sel):
                out[sel] = piece[which](x[sel])
        return out

    def lift(self, x):
        return self._apply(x, 0)

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def evaluate(self, x, return_flags: bool = False):
        """``T(x) mod 1``; with ``return_flags`` also a mask of points sitting on a breakpoint."""
        x = np.asarray(x, dtype=float)
        y = self(x)
        if return_flags:
            d = np.asarray(self.breakpoints[:-1])
            flags = np.any(np.abs(x[..., None] - d) <= BREAK_TOL, axis=-1)
            return y, flags
        return y

    def derivative(self, x, order: int = 1):
        if order != 1:
            raise ValueError("piecewise maps expose first derivatives only")
        return self._apply(x, 1)

    def branches(self) -> list[Branch]:
        d = self.breakpoints
        invs = self.inverses or (None,) * len(self.pieces)
        return [Branch(d[i], d[i + 1], p[0], p[1], invs[i]) for i, p in enumerate(self.pieces)]

    def one_sided(self, x: float) -> list[float]:
        """Images of ``x`` under the branch ending at ``x`` and the one starting there."""
        d = self.breakpoints
        out = []
        for i, (f, _) in enumerate(self.pieces):
            lo, hi = d[i], d[i + 1]
            for end in (lo, hi):
                if abs(_circ(x - end)) <= BREAK_TOL:
                    out.append(float(np.mod(f(np.array([end]))[0], 1.0)))
        return _dedupe(out)

    def turning_points(self) -> list[float]:
        """Partition points where the circle map is not C^1 (0 and 1 identified)."""
        d = self.breakpoints
        tps = []
        for i in range(len(self.pieces)):
            left = self.pieces[i - 1]  # branch ending at d_i (wraps to the last one at 0)
            right = self.pieces[i]
            xl = np.array([d[i] if i > 0 else 1.0])
            xr = np.array([d[i]])
            same_value = abs(_circ(left[0](xl)[0] - right[0](xr)[0])) <= 1e-12
            same_slope = abs(left[1](xl)[0] - right[1](xr)[0]) <= 1e-12
            if not (same_value and same_slope):
                tps.append(float(d[i]))
        # interior points first; 0 is a turning point only through the identification 0 ~ 1
        return sorted(tps, key=lambda t: (t == 0.0, t))


CircleMap = Union[SmoothMap, PiecewiseMap]


def _circ(d):
    """Signed circular difference in [-1/2, 1/2)."""
    return (np.asarray(d) + 0.5) % 1.0 - 0.5


def _dedupe(points: Sequence[float], tol: float = 1e-12) -> list[float]:
    out: list[float] = []
    for p in points:
        if all(abs(_circ(p - q)) > tol for q in out):
            out.append(p)
    return out


def evaluate(cmap: CircleMap, x, return_flags: bool = False):
    return cmap.evaluate(x, return_flags=return_flags)


@dataclass
class Preimages:
    points: list[tuple[float, float]]
    at_endpoint: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def branch_preimages(cmap: CircleMap, y: float) -> Preimages:
    """All ``x`` with ``T(x) = y`` (mod 1), paired with ``|T'(x)|``.

    ``at_endpoint`` is set when ``y`` coincides with the image of a branch
    endpoint; both adjacent branches then report their preimage.
    """
    y = float(y) % 1.0
    pts = []
    flag = False
    for br in cmap.branches():
        a, b = br.image
        lo, hi = min(a, b), max(a, b)
        for m in range(int(np.floor(lo - y)) - 1, int(np.ceil(hi - y)) + 2):
            t = y + m
            if t < lo - BREAK_TOL or t > hi + BREAK_TOL:
                continue
            if min(abs(t - lo), abs(t - hi)) <= BREAK_TOL:
                flag = True
            x = float(br.invert(np.array([min(max(t, lo), hi)]))[0])
            slope = float(abs(br.deriv(np.array([x]))[0]))
            pts.append((x % 1.0, slope))
    pts.sort()
    uniq: list[tuple[float, float]] = []
    for p in pts:
        if not uniq or abs(_circ(p[0] - uniq[-1][0])) > 1e-12:
            uniq.append(p)
    return Preimages(uniq, flag)


def expansion_constant(cmap: CircleMap, k: int = 1, grid: int = 8192) -> tuple[float, int]:
    """Grid infimum of ``|(T^k)'|`` and the number of skipped grid points.

    Orbits passing within ``1e-12`` of a breakpoint have no derivative and
    are skipped.
    """
    if not 1 <= k <= 8:
        raise ValueError("k must lie in 1..8")
    x = (np.arange(grid) + 0.5) / grid
    d = np.asarray(cmap.breakpoints[:-1]) if isinstance(cmap, PiecewiseMap) else np.empty(0)
    prod = np.ones(grid)
    bad = np.zeros(grid, dtype=bool)
    for _ in range(k):
        if d.size:
            bad |= np.any(np.abs(_circ(x[:, None] - d[None, :])) <= BREAK_TOL, axis=1)
        prod *= np.abs(cmap.derivative(x))
        x = cmap(x)
    good = ~bad
    if not np.any(good):
        raise ValueError("every grid orbit hits a breakpoint")
    return float(np.min(prod[good])), int(bad.sum())


def has_periodic_turning_point(cmap: CircleMap, max_period: int = 32) -> tuple[bool, list[float]]:
    """Search for a turning point whose forward orbit returns to it.

    Whenever an orbit lands on a breakpoint, both one-sided continuations
    are followed. Returns ``(True, orbit)`` for the first hit, with the orbit
    starting and ending at the turning point.
    """
    if max_period > 32:
        raise ValueError("max_period must be <= 32")
    if not isinstance(cmap, PiecewiseMap):
        return False, []
    d = np.asarray(cmap.breakpoints[:-1])

    def successors(p):
        if np.min(np.abs(_circ(p - d))) <= BREAK_TOL:
            return cmap.one_sided(float(d[np.argmin(np.abs(_circ(p - d)))]))
        return [float(cmap(np.array([p]))[0])]

    for tp in cmap.turning_points():
        frontier = [[tp]]
        for _ in range(max_period):
            nxt = []
            for path in frontier:
                for q in successors(path[-1]):
                    if abs(_circ(q - tp)) <= 1e-9:
                        return True, path + [tp]
                    nxt.append(path + [q])
            # branching only happens on breakpoints; cap the tree defensively
            frontier = nxt[:4096]
            if not frontier:
                break
    return False, []


def doubling_map() -> SmoothMap:
    return SmoothMap(
        lift=lambda x: 2.0 * x,
        derivatives=(lambda x: np.full_like(x, 2.0), lambda x: np.zeros_like(x),
                     lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)),
        degree=2,
        name="doubling",
        analytic=True,
    )


def perturbed_doubling_map(eps: float = 0.1) -> SmoothMap:
    """``x -> 2x + eps sin(2 pi x)``; expanding for ``|eps| < 1/(2 pi)``."""
    tp = 2.0 * np.pi
    return SmoothMap(
        lift=lambda x: 2.0 * x + eps * np.sin(tp * x),
        derivatives=(
            lambda x: 2.0 + eps * tp * np.cos(tp * x),
            lambda x: -eps * tp ** 2 * np.sin(tp * x),
            lambda x: -eps * tp ** 3 * np.cos(tp * x),
            lambda x: eps * tp ** 4 * np.sin(tp * x),
        ),
        degree=2,
        name=f"perturbed_doubling(eps={eps:g})",
        analytic=True,
    ).validate()


def shift_fold_map() -> PiecewiseMap:
    """``x -> x + 1/2`` on [0, 1/2), ``x -> 2(1 - x)`` on [1/2, 1).

    Its invariant density is 2/3 on [0, 1/2] and 4/3 on (1/2, 1].
    """
    return PiecewiseMap(
        breakpoints=(0.0, 0.5, 1.0),
        pieces=(
            (lambda x: x + 0.5, lambda x: np.ones_like(x)),
            (lambda x: 2.0 * (1.0 - x), lambda x: np.full_like(x, -2.0)),
        ),
        inverses=(lambda y: y - 0.5, lambda y: 1.0 - 0.5 * y),
        name="shift_fold",
        analytic=False,
    )


def shift_fold_density(x):
    """Invariant density of :func:`shift_fold_map`."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.5, 2.0 / 3.0, 4.0 / 3.0)


# --- expression-defined maps -------------------------------------------------

_FUNCS = {"sin", "cos", "exp", "sqrt"}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def _check_syntax(expr: str):
    """Reject anything but arithmetic on ``x``, ``pi`` and the whitelisted functions."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as err:
        raise ValidationError(f"cannot parse map expression {expr!r}: {err.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ValidationError(f"expression {expr!r} uses unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                                               and len(node.args) == 1 and not node.keywords):
            raise ValidationError(f"expression {expr!r}: only {sorted(_FUNCS)} of one argument may be called")
        if isinstance(node, ast.Name) and node.id not in _FUNCS | {"x", "pi"}:
            raise ValidationError(f"expression {expr!r} has unknown name {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValidationError(f"expression {expr!r} contains a non-numeric constant")


def _compile(expr: str, order: int):
    import sympy

    _check_syntax(expr)

    x = sympy.Symbol("x", real=True)
    allowed = {"x": x, "pi": sympy.pi, "sin": sympy.sin, "cos": sympy.cos,
               "exp": sympy.exp, "sqrt": sympy.sqrt}
    try:
        e = sympy.sympify(expr, locals=allowed, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as err:
        raise ValidationError(f"cannot parse map expression {expr!r}: {err}") from None
    extra = e.free_symbols - {x}
    if extra:
        raise ValidationError(f"expression {expr!r} has unknown symbols {sorted(map(str, extra))}")
    fns = []
    for j in range(order + 1):
        f = sympy.lambdify(x, sympy.diff(e, x, j), "numpy")
        fns.append(lambda t, f=f: np.broadcast_to(np.asarray(f(t), dtype=float), np.shape(t)).copy())
    return fns


def map_from_expression(expr: str, name: Optional[str] = None) -> SmoothMap:
    """Smooth map from a lift expression in ``x``, e.g. ``"2*x + 0.1*sin(2*pi*x)"``.

    Derivatives up to order 4 come from symbolic differentiation.
    """
    fns = _compile(expr, 4)
    lift = fns[0]
    deg = float(lift(np.array([1.0]))[0] - lift(np.array([0.0]))[0])
    if abs(deg - round(deg)) > 1e-9 or round(deg) == 0:
        raise ValidationError(f"lift {expr!r} does not close up on the circle (degree {deg:.6g})")
    return SmoothMap(lift=lift, derivatives=tuple(fns[1:]), degree=int(round(deg)),
                     name=name or expr).validate()


def piecewise_from_expressions(pieces: Sequence[tuple[float, str]], name: Optional[str] = None) -> PiecewiseMap:
    """Piecewise map from ``[(d_1, expr_1), (d_2, expr_2), ...]`` with ``d_1 = 0``."""
    starts = [float(p[0]) for p in pieces]
    fns = [_compile(p[1], 1) for p in pieces]
    return PiecewiseMap(
        breakpoints=tuple(starts) + (1.0,),
        pieces=tuple((f[0], f[1]) for f in fns),
        name=name or "; ".join(p[1] for p in pieces),
    )


MAPS = {
    "doubling": doubling_map,
    "perturbed_doubling": perturbed_doubling_map,
    "shift_fold": shift_fold_map,
}


def get_map(name: str, **params) -> CircleMap:
    try:
        factory = MAPS[name]
    except KeyError:
        raise ValidationError(f"unknown map {name!r}; choose from {sorted(MAPS)}") from None
    return factory(**params)
