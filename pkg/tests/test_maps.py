import numpy as np
import pytest

from zeronoise import maps
from zeronoise.errors import ValidationError


def test_evaluate_examples():
    assert maps.doubling_map()(0.3) == pytest.approx(0.6)
    T = maps.shift_fold_map()
    assert T(0.25) == pytest.approx(0.75)
    assert T(0.75) == pytest.approx(0.5)


def test_evaluate_flags_breakpoints():
    T = maps.shift_fold_map()
    _, flags = T.evaluate(np.array([0.2, 0.5, 0.5 + 1e-14]), return_flags=True)
    assert list(flags) == [False, True, True]


def _preimage_set(p):
    return sorted((round(x, 12), round(s, 12)) for x, s in p.points)


def test_branch_preimages():
    assert _preimage_set(maps.branch_preimages(maps.doubling_map(), 0.5)) == [(0.25, 2.0), (0.75, 2.0)]
    T = maps.shift_fold_map()
    assert _preimage_set(maps.branch_preimages(T, 0.25)) == [(0.875, 2.0)]
    assert _preimage_set(maps.branch_preimages(T, 0.75)) == [(0.25, 1.0), (0.625, 2.0)]


def test_preimage_at_branch_endpoint_flagged():
    p = maps.branch_preimages(maps.shift_fold_map(), 0.5)
    assert p.at_endpoint


def test_preimages_brute_force_perturbed():
    T = maps.perturbed_doubling_map(0.1)
    y = 0.37
    x = np.linspace(0, 1, 2_000_001)
    lift = 2 * x + 0.1 * np.sin(2 * np.pi * x) - y
    crossings = x[:-1][np.diff(np.floor(lift)) != 0]
    got = sorted(p[0] for p in maps.branch_preimages(T, y).points)
    assert len(got) == 2
    assert np.allclose(got, crossings, atol=1e-6)
    for xi, s in maps.branch_preimages(T, y).points:
        assert T(xi) == pytest.approx(y, abs=1e-13)
        assert s == pytest.approx(2 + 0.2 * np.pi * np.cos(2 * np.pi * xi), rel=1e-12)


def test_expansion_constants():
    assert maps.expansion_constant(maps.doubling_map())[0] == pytest.approx(2.0)
    T = maps.shift_fold_map()
    assert maps.expansion_constant(T, 1)[0] == pytest.approx(1.0)
    lam2, skipped = maps.expansion_constant(T, 2)
    assert lam2 == pytest.approx(2.0)
    assert skipped >= 0
    eps = 0.1
    assert maps.expansion_constant(maps.perturbed_doubling_map(eps))[0] == pytest.approx(
        2 - 2 * np.pi * eps, rel=1e-5)


def test_periodic_turning_point_of_shift_fold():
    found, orbit = maps.has_periodic_turning_point(maps.shift_fold_map())
    assert found
    assert orbit[0] == orbit[-1]
    assert {round(p % 1.0, 12) for p in orbit} <= {0.0, 0.5}
    assert 0.5 in [round(p, 12) for p in orbit]


def test_no_turning_points_for_smooth_map():
    assert maps.has_periodic_turning_point(maps.doubling_map()) == (False, [])


def test_generic_three_branch_map_has_no_periodic_turning_point():
    a, b = 1 / np.sqrt(7), 1 / np.e + 0.2
    pieces = [(0.0, f"3*x + {np.pi / 10}"), (a, f"3*x + {np.sqrt(2) / 5}"), (b, f"3*x + {np.sqrt(3) / 7}")]
    T = maps.piecewise_from_expressions(pieces)
    found, _ = maps.has_periodic_turning_point(T, max_period=16)
    # direct oracle: forward orbits of turning points never return within 16 steps
    tps = T.turning_points()
    assert tps
    for t in tps:
        x = t
        for _ in range(16):
            x = float(T(x))
            assert min(abs(x - s) for s in tps + [0.0, 1.0]) > 1e-9
    assert not found


def test_turning_points_of_shift_fold():
    assert sorted(maps.shift_fold_map().turning_points()) == pytest.approx([0.0, 0.5])


def test_shift_fold_density_is_invariant():
    # pushforward of h0 via the explicit preimage formula
    T = maps.shift_fold_map()
    y = np.random.default_rng(0).random(1000)
    y = y[np.abs(y - 0.5) > 1e-6]
    push = np.zeros_like(y)
    for i, yi in enumerate(y):
        for x, s in maps.branch_preimages(T, yi).points:
            push[i] += maps.shift_fold_density(x) / s
    assert np.allclose(push, maps.shift_fold_density(y), atol=1e-13)


def test_smooth_map_validation():
    with pytest.raises(ValidationError):
        maps.perturbed_doubling_map(0.2)
    with pytest.raises(ValidationError):
        maps.map_from_expression("x + 0.1*sin(2*pi*x)")


def test_expression_map_matches_builtin():
    T = maps.map_from_expression("2*x + 0.1*sin(2*pi*x)")
    U = maps.perturbed_doubling_map(0.1)
    x = np.linspace(0, 1, 101)
    assert T.degree == 2
    assert np.allclose(T(x), U(x), atol=1e-14)
    for k in (1, 2, 3, 4):
        assert np.allclose(T.derivative(x, k), U.derivative(x, k), atol=1e-10)


def test_expression_whitelist():
    with pytest.raises(ValidationError):
        maps.map_from_expression("__import__('os').system('true')")


def test_piecewise_expressions_match_shift_fold():
    T = maps.piecewise_from_expressions([(0.0, "x + 1/2"), (0.5, "2*(1 - x)")])
    U = maps.shift_fold_map()
    x = np.random.default_rng(3).random(500)
    assert np.allclose(T(x), U(x))


def test_get_map():
    assert maps.get_map("perturbed_doubling", eps=0.05).name.startswith("perturbed")
    with pytest.raises(ValidationError):
        maps.get_map("tent")


def test_expansion_bound_on_grid():
    T = maps.perturbed_doubling_map(0.1)
    x = np.linspace(0, 1, 100_001)
    assert np.abs(T.derivative(x)).min() >= 2 - 0.2 * np.pi - 1e-12
    assert T.validate(alpha_inv=1.3) is T
    with pytest.raises(ValidationError):
        T.validate(alpha_inv=1.5)


def test_preimage_counts():
    rng = np.random.default_rng(11)
    smooth = maps.perturbed_doubling_map(0.1)
    piecewise = maps.shift_fold_map()
    for y in rng.random(200):
        assert len(maps.branch_preimages(smooth, y).points) == smooth.degree
        assert 1 <= len(maps.branch_preimages(piecewise, y).points) <= len(piecewise.branches())
