import numpy as np
import pytest
from scipy.integrate import quad

from zeronoise import kernels
from zeronoise.errors import UnsupportedError, ValidationError


def quad_moment(k, p):
    lo, hi = k.support
    pts = [b for b in k.breakpoints if lo < b < hi]
    return quad(lambda z: z ** p * float(k(np.array([z]))[0]), lo, hi, points=pts or None,
                epsabs=1e-14, epsrel=1e-14)[0]


@pytest.mark.parametrize("name, sigma2", [("uniform", 1 / 3), ("triangular", 1 / 6),
                                          ("epanechnikov", 1 / 5), ("skewed_step", 1 / 6)])
def test_moments_match_analytic_and_adaptive_quadrature(name, sigma2):
    k = kernels.get_kernel(name)
    mass, mean, s2 = kernels.moments(k)
    assert mass == pytest.approx(1.0, abs=1e-13)
    assert mean == pytest.approx(0.0, abs=1e-13)
    assert s2 == pytest.approx(sigma2, abs=1e-13)
    assert s2 == pytest.approx(quad_moment(k, 2), abs=1e-12)
    assert kernels.validate(k) is k


def test_skewed_kernel_is_asymmetric():
    k = kernels.skewed_step()
    assert quad_moment(k, 3) == pytest.approx(-1 / 16, abs=1e-12)


def test_unnormalized_kernel_rejected():
    k = kernels.NoiseKernel(lambda z: np.ones_like(z), name="double")
    with pytest.raises(ValidationError):
        kernels.moments(k)


def test_quadrature_order_floor():
    with pytest.raises(ValueError):
        kernels.moments(kernels.uniform(), quadrature_order=4)


def test_off_center_kernel_fails_validation():
    k = kernels.NoiseKernel(lambda z: np.full_like(z, 1.0), support=(0.0, 1.0), name="shifted")
    with pytest.raises(ValidationError):
        kernels.validate(k)


def test_rescale_values_and_mass():
    assert kernels.rescale(kernels.uniform(), 0.5)(np.array([0.0]))[0] == pytest.approx(1.0)
    assert kernels.rescale(kernels.triangular(), 0.1)(np.array([0.0]))[0] == pytest.approx(10.0)
    for name in kernels.KERNELS:
        r = kernels.rescale(kernels.get_kernel(name), 0.03)
        lo, hi = r.support
        assert quad(lambda z: float(r(np.array([z]))[0]), lo, hi, points=[0.0],
                    epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-10)
        assert kernels.moments(r)[2] == pytest.approx(0.03 ** 2 * kernels.moments(kernels.get_kernel(name))[2],
                                                      rel=1e-12)


def test_rescale_composes():
    r = kernels.rescale(kernels.rescale(kernels.triangular(), 0.5), 0.2)
    assert r.support == pytest.approx((-0.1, 0.1))
    assert r(np.array([0.0]))[0] == pytest.approx(10.0)


@pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
def test_rescale_rejects_out_of_range(delta):
    with pytest.raises(UnsupportedError):
        kernels.rescale(kernels.uniform(), delta)


@pytest.mark.parametrize("name, var", [("uniform", 1.0), ("triangular", 2.0),
                                       ("epanechnikov", 1.5), ("skewed_step", 8 / 3)])
def test_total_variation(name, var):
    k = kernels.get_kernel(name)
    assert kernels.total_variation(k) == pytest.approx(var, abs=1e-3)
    assert k.analytic_variation == pytest.approx(var)


def test_total_variation_converges_for_narrow_support():
    k = kernels.rescale(kernels.triangular(), 0.05)
    a, b = kernels.total_variation(k, 4096), kernels.total_variation(k, 8192)
    assert abs(a - b) / b < 1e-3
    assert b == pytest.approx(2 / 0.05, rel=1e-2)


def test_uniform_multiplier_is_sinc():
    d, K = 0.07, 12
    m = kernels.fourier_multiplier(kernels.uniform(), d, K)
    ks = np.arange(-K, K + 1)
    assert np.allclose(m, np.sinc(2 * ks * d), atol=1e-13)


def test_multiplier_against_adaptive_quadrature():
    k = kernels.skewed_step()
    d = 0.3
    m = kernels.fourier_multiplier(k, d, 5)
    for kk in (1, 3, 5):
        re = quad(lambda z: float(k(np.array([z]))[0]) * np.cos(2 * np.pi * kk * d * z), -1, 0.5, points=[0.0])[0]
        im = -quad(lambda z: float(k(np.array([z]))[0]) * np.sin(2 * np.pi * kk * d * z), -1, 0.5, points=[0.0])[0]
        assert m[5 + kk] == pytest.approx(re + 1j * im, abs=1e-12)


def test_multiplier_trivial_cases():
    for name in kernels.KERNELS:
        k = kernels.get_kernel(name)
        assert np.all(kernels.fourier_multiplier(k, 0.0, 4) == 1)
        assert kernels.fourier_multiplier(k, 0.2, 4)[4] == 1


def test_sampler_reproduces_moments():
    rng = np.random.default_rng(1)
    for name in kernels.KERNELS:
        k = kernels.get_kernel(name)
        z = kernels.sampler(k)(rng.random(400_000))
        assert z.min() >= k.support[0] and z.max() <= k.support[1]
        assert z.mean() == pytest.approx(0.0, abs=5e-3)
        assert (z ** 2).mean() == pytest.approx(kernels.moments(k)[2], rel=1e-2)


def test_tabulated_csv_roundtrip(tmp_path):
    z = np.linspace(-1, 1, 201)
    rho = 1 - np.abs(z)
    p = tmp_path / "tri.csv"
    np.savetxt(p, np.column_stack([z, rho]), delimiter=",", header="z,rho", comments="")
    k = kernels.load_kernel_csv(p)
    assert kernels.moments(k)[2] == pytest.approx(1 / 6, abs=1e-12)


def test_tabulated_requires_uniform_grid():
    z = np.array([-1.0, -0.2, 0.0, 1.0])
    with pytest.raises(ValidationError):
        kernels.tabulated(z, 1 - np.abs(z))


def test_unknown_kernel():
    with pytest.raises(ValidationError):
        kernels.get_kernel("cauchy")


@pytest.mark.parametrize("name", sorted(kernels.KERNELS))
@pytest.mark.parametrize("delta", [0.5, 0.1])
def test_variation_scales_inversely_with_delta(name, delta):
    k = kernels.get_kernel(name)
    scaled = kernels.total_variation(kernels.rescale(k, delta)) * delta
    assert scaled == pytest.approx(kernels.total_variation(k), rel=0.02)


@pytest.mark.parametrize("delta", [0.01, 0.1, 0.37, 1.0])
def test_uniform_multiplier_high_modes(delta):
    ks = np.arange(-64, 65)
    assert np.abs(kernels.fourier_multiplier(kernels.uniform(), delta, 64) - np.sinc(2 * ks * delta)).max() < 1e-8
