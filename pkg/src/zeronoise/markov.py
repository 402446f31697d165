"""Linear and quadratic response checked exactly on finite Markov families.

Matrices are column-stochastic and act on probability column vectors. A
family is ``L(delta) = L0 + delta A + delta^2 B`` with ``A``, ``B`` of zero
column sums, so every member preserves total mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SpectralGapError, UnsupportedError, ValidationError


@dataclass(frozen=True)
class MarkovFamily:
    L0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    delta_max: float = 0.1

    def __post_init__(self):
        L0, A, B = (np.asarray(m, dtype=float) for m in (self.L0, self.A, self.B))
        d = L0.shape[0]
        if L0.shape != (d, d) or A.shape != (d, d) or B.shape != (d, d):
            raise ValidationError("L0, A, B must be square matrices of equal size")
        for name, M in (("A", A), ("B", B)):
            if np.max(np.abs(M.sum(axis=0))) > 1e-12:
                raise ValidationError(f"{name} must have zero column sums")
        for delta in np.linspace(0.0, self.delta_max, 21):
            L = self.at(delta, L0, A, B)
            if L.min() < -1e-14 or np.max(np.abs(L.sum(axis=0) - 1)) > 1e-12:
                raise ValidationError(f"L(delta) is not stochastic at delta={delta:g}")
        object.__setattr__(self, "L0", L0)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if leading_gap(L0) < 1e-8:
            raise UnsupportedError("L0 has no simple leading eigenvalue")

    def at(self, delta, L0=None, A=None, B=None) -> np.ndarray:
        L0 = self.L0 if L0 is None else L0
        A = self.A if A is None else A
        B = self.B if B is None else B
        return L0 + delta * A + delta * delta * B

    @property
    def dim(self) -> int:
        return self.L0.shape[0]


def leading_gap(L: np.ndarray) -> float:
    """``1 - |lambda_2|`` for a stochastic matrix."""
    ev = np.sort(np.abs(np.linalg.eigvals(L)))[::-1]
    return float(1.0 - ev[1]) if ev.size > 1 else 1.0


def stationary_vector(L: np.ndarray) -> np.ndarray:
    """Probability vector fixed by ``L``, from ``(I - L + u 1^T) h = u`` with ``u`` uniform."""
    d = L.shape[0]
    u = np.full(d, 1.0 / d)
    M = np.eye(d) - L + np.outer(u, np.ones(d))
    try:
        h = np.linalg.solve(M, u)
    except np.linalg.LinAlgError:
        raise SpectralGapError("stationary vector is not unique") from None
    return h / h.sum()


def resolvent(L0: np.ndarray, g: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """``(I - L0)^{-1} g`` on zero-sum vectors, via ``(I - L0 + h0 1^T)``."""
    d = L0.shape[0]
    if abs(g.sum()) > 1e-10 * max(1.0, np.abs(g).sum()):
        raise ValueError("resolvent argument must have zero coordinate sum")
    u = np.linalg.solve(np.eye(d) - L0 + np.outer(h0, np.ones(d)), g)
    return u - h0 * u.sum()


@dataclass
class ResponseTerms:
    h0: np.ndarray
    first: np.ndarray
    second: np.ndarray


def response_terms(fam: MarkovFamily) -> ResponseTerms:
    """``h0``, ``(I-L0)^{-1} A h0`` and ``(I-L0)^{-1} [B h0 + A (I-L0)^{-1} A h0]``."""
    h0 = stationary_vector(fam.L0)
    first = resolvent(fam.L0, fam.A @ h0, h0)
    second = resolvent(fam.L0, fam.B @ h0 + fam.A @ first, h0)
    return ResponseTerms(h0, first, second)


@dataclass
class DeviationTable:
    deltas: np.ndarray
    deviations: np.ndarray

    @property
    def max(self) -> float:
        return float(self.deviations.max())

    def ratios(self) -> np.ndarray:
        """Successive deviation ratios ``dev[i+1] / dev[i]``."""
        return self.deviations[1:] / self.deviations[:-1]

    def table(self, label: str) -> str:
        lines = [f"{label}: delta, deviation"]
        lines += [f"  {d:.3e}  {v:.6e}" for d, v in zip(self.deltas, self.deviations)]
        return "\n".join(lines)


def _check(fam, deltas):
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0) or np.any(deltas > fam.delta_max):
        raise ValueError(f"deltas must lie in (0, {fam.delta_max}]")
    return deltas


def verify_linear_response(fam: MarkovFamily, deltas: Sequence[float]) -> DeviationTable:
    """L1 deviation of ``(h_delta - h0)/delta`` from the linear response term."""
    deltas = _check(fam, deltas)
    terms = response_terms(fam)
    dev = [np.abs((stationary_vector(fam.at(d)) - terms.h0) / d - terms.first).sum() for d in deltas]
    return DeviationTable(deltas, np.asarray(dev))


def verify_quadratic_response(fam: MarkovFamily, deltas: Sequence[float]) -> DeviationTable:
    """L1 deviation of the second-order Taylor quotient from the quadratic response term."""
    deltas = _check(fam, deltas)
    terms = response_terms(fam)
    dev = []
    for d in deltas:
        h = stationary_vector(fam.at(d))
        dev.append(np.abs((h - terms.h0 - d * terms.first) / d ** 2 - terms.second).sum())
    return DeviationTable(deltas, np.asarray(dev))


def random_family(dim: int, seed: int, strength: float = 0.5, delta_max: float = 0.1) -> MarkovFamily:
    """Family ``L0 + delta A + delta^2 B`` with ``A = s (P1 - L0)``, ``B = s (P2 - L0)``.

    ``L0``, ``P1``, ``P2`` are random positive column-stochastic matrices, so
    each member is a convex combination of them while ``delta`` stays small.
    """
    rng = np.random.default_rng(seed)

    def stoch():
        M = rng.uniform(0.05, 1.0, size=(dim, dim))
        return M / M.sum(axis=0, keepdims=True)

    L0, P1, P2 = stoch(), stoch(), stoch()
    return MarkovFamily(L0, strength * (P1 - L0), strength * (P2 - L0), delta_max)


def bundled_family() -> MarkovFamily:
    """The six-state family used by the acceptance run and the ``abstract`` command."""
    return random_family(6, seed=20240611)


def load_family_csv(l0_path, a_path, b_path, delta_max: float = 0.1) -> MarkovFamily:
    load = lambda p: np.loadtxt(p, delimiter=",", ndmin=2)  # noqa: E731
    return MarkovFamily(load(l0_path), load(a_path), load(b_path), delta_max)
