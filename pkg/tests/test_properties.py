"""Randomized invariants of the noise and transfer operators."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from zeronoise import kernels, maps
from zeronoise.operators import (
    FOURIER,
    ULAM,
    DensityGrid,
    assemble_convolution,
    assemble_fourier,
    assemble_ulam,
    compose_noisy,
    l1_norm,
    norms,
    sobolev_norm,
)

N_BINS = 256
N_MODES = 24
LT_ULAM = {name: assemble_ulam(m, N_BINS) for name, m in
           (("shift_fold", maps.shift_fold_map()), ("perturbed", maps.perturbed_doubling_map(0.1)))}
LT_FOURIER = assemble_fourier(maps.perturbed_doubling_map(0.1), N_MODES)

kernel_names = st.sampled_from(sorted(kernels.KERNELS))
deltas = st.floats(0.01, 0.25)
values = st.lists(st.floats(-5, 5), min_size=N_BINS, max_size=N_BINS).map(np.array)


@st.composite
def trig_polys(draw):
    c = np.zeros(2 * N_MODES + 1, dtype=complex)
    for k in range(1, 7):
        z = draw(st.floats(-1, 1)) + 1j * draw(st.floats(-1, 1))
        c[N_MODES + k] = z
        c[N_MODES - k] = np.conj(z)
    c[N_MODES] = draw(st.floats(-1, 1))
    return DensityGrid(FOURIER, c)


@settings(max_examples=40, deadline=None)
@given(values, kernel_names, deltas)
def test_noise_is_l1_and_bv_contraction(v, name, d):
    g = DensityGrid(ULAM, v)
    Qg = assemble_convolution(kernels.get_kernel(name), d, ULAM, N_BINS) @ g
    assert l1_norm(Qg) <= l1_norm(g) + 1e-9
    assert norms(Qg).BV <= norms(g).BV + 1e-9
    assert abs(Qg.mass - g.mass) <= 1e-12 * (1 + np.abs(v).max())


@settings(max_examples=40, deadline=None)
@given(values, st.sampled_from(sorted(LT_ULAM)), kernel_names, deltas)
def test_noisy_ulam_operator_is_markov(v, map_name, name, d):
    L = compose_noisy(LT_ULAM[map_name], assemble_convolution(kernels.get_kernel(name), d, ULAM, N_BINS))
    g = DensityGrid(ULAM, v)
    Lg = L @ g
    assert l1_norm(Lg) <= l1_norm(g) + 1e-9
    assert abs(Lg.mass - g.mass) <= 1e-12 * (1 + np.abs(v).max())
    pos = DensityGrid(ULAM, np.abs(v))
    assert (L @ pos).values.min() >= -1e-15


@settings(max_examples=40, deadline=None)
@given(trig_polys(), kernel_names, deltas)
def test_spectral_noise_does_not_increase_sobolev_norms(g, name, d):
    Q = assemble_convolution(kernels.get_kernel(name), d, FOURIER, N_MODES)
    f = LT_FOURIER @ g
    for k in range(4):
        assert sobolev_norm(Q @ f, k) <= sobolev_norm(f, k) * (1 + 1e-9) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.99))
def test_branch_preimages_map_back(y):
    T = maps.perturbed_doubling_map(0.1)
    for x, s in maps.branch_preimages(T, y).points:
        assert abs(((T(x) - y + 0.5) % 1.0) - 0.5) < 1e-12
        assert s > 1
    assert len(maps.branch_preimages(T, y).points) == 2
