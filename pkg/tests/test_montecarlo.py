import numpy as np
import pytest

from zeronoise import kernels, maps
from zeronoise.montecarlo import SimulationConfig, config_for_samples, histogram_csv, simulate_histogram
from zeronoise.operators import ULAM, DensityGrid, l1_norm


def test_doubling_map_histogram_is_uniform():
    cfg = config_for_samples(10_000_000, seed=7)
    assert cfg.samples >= 10_000_000
    hist = simulate_histogram(maps.doubling_map(), kernels.uniform(), 0.1, cfg)
    assert hist.mass == pytest.approx(1.0, abs=1e-14)
    assert l1_norm(hist - DensityGrid.constant(ULAM, 64)) <= 0.01


def test_same_seed_same_histogram():
    cfg = SimulationConfig(n_steps=60, burn_in=10, n_chains=5000, seed=99)
    a = simulate_histogram(maps.shift_fold_map(), kernels.triangular(), 0.05, cfg, block=1024)
    b = simulate_histogram(maps.shift_fold_map(), kernels.triangular(), 0.05, cfg, block=1024)
    assert np.array_equal(a.values, b.values)
    c = simulate_histogram(maps.shift_fold_map(), kernels.triangular(), 0.05,
                           SimulationConfig(n_steps=60, burn_in=10, n_chains=5000, seed=100), block=1024)
    assert not np.array_equal(a.values, c.values)


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(n_steps=10, burn_in=10)
    with pytest.raises(ValueError):
        SimulationConfig(bins=8)
    with pytest.raises(ValueError):
        simulate_histogram(maps.doubling_map(), kernels.uniform(), 0.0, SimulationConfig(n_chains=1))


def test_histogram_csv(tmp_path):
    cfg = SimulationConfig(n_steps=20, burn_in=5, n_chains=100, bins=16)
    h = simulate_histogram(maps.doubling_map(), kernels.uniform(), 0.2, cfg)
    histogram_csv(h, tmp_path / "h.csv")
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "x,value" and len(rows) == 17
    assert float(rows[1].split(",")[0]) == pytest.approx(1 / 32)


def test_doubling_samples_shrinks_error_like_sqrt():
    from zeronoise.operators import assemble_convolution, assemble_ulam, compose_noisy
    from zeronoise.solver import stationary_density

    T, k, d = maps.shift_fold_map(), kernels.uniform(), 0.05
    h, _ = stationary_density(compose_noisy(assemble_ulam(T, 4096), assemble_convolution(k, d, ULAM, 4096)))
    h = h.to_ulam(64)

    def mean_dist(samples):
        # averaging over independent seeds tames the spread of single-run L1 errors
        return np.mean([l1_norm(simulate_histogram(T, k, d, config_for_samples(
            samples, n_steps=200, burn_in=50, seed=1000 + s)) - h) for s in range(8)])

    ratio = mean_dist(200_000) / mean_dist(400_000)
    assert 1.2 <= ratio <= 2.0
