"""Path simulation of ``X_{n+1} = T(X_n) + Omega_n mod 1`` as an independent density estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import NoiseKernel, sampler
from .maps import CircleMap
from .operators import ULAM, DensityGrid


@dataclass(frozen=True)
class SimulationConfig:
    n_steps: int = 1000
    burn_in: int = 100
    n_chains: int = 11_112
    seed: int = 12345
    bins: int = 64

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("need 0 <= burn_in < n_steps")
        if self.bins < 16:
            raise ValueError("bins must be >= 16")
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")

    @property
    def samples(self) -> int:
        return (self.n_steps - self.burn_in) * self.n_chains


def config_for_samples(samples: int, n_steps: int = 1000, burn_in: int = 100, **kw) -> SimulationConfig:
    chains = -(-samples // (n_steps - burn_in))
    return SimulationConfig(n_steps=n_steps, burn_in=burn_in, n_chains=chains, **kw)


def simulate_histogram(cmap: CircleMap, kernel: NoiseKernel, delta: float, cfg: SimulationConfig,
                       block: int = 4096) -> DensityGrid:
    """Normalized histogram of post-burn-in states pooled over independent chains.

    Chains are processed in fixed blocks, each with its own Philox stream
    spawned from ``cfg.seed``, so the result depends only on the seed and
    the block size.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    draw = sampler(kernel)
    counts = np.zeros(cfg.bins, dtype=np.int64)
    n_blocks = -(-cfg.n_chains // block)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    for b, ss in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(ss))
        m = min(block, cfg.n_chains - b * block)
        x = rng.random(m)
        for step in range(cfg.n_steps):
            x = np.mod(cmap(x) + delta * draw(rng.random(m)), 1.0)
            if step >= cfg.burn_in:
                idx = np.minimum((x * cfg.bins).astype(np.int64), cfg.bins - 1)
                counts += np.bincount(idx, minlength=cfg.bins)
    total = counts.sum()
    return DensityGrid(ULAM, counts * (cfg.bins / total))


def histogram_csv(hist: DensityGrid, path):
    hist.to_csv(path)
