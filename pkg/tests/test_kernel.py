import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from fraccheeger import FracParams, assemble_kernel, assemble_weights, build_grid, seminorm_p, weak_action
from fraccheeger.kernel import (cache_key, cached_weights, cell_integrals, cube_exterior_integral,
                                load_weights, save_weights, touching_pair_integral)


def square_tail(x, alpha):
    """Exterior integral of |x - y|^-alpha over the complement of the unit
    square, in polar coordinates about x."""
    def dist(theta):
        c, s = np.cos(theta), np.sin(theta)
        ts = []
        for comp, d in ((c, x[0]), (s, x[1])):
            if comp > 1e-15:
                ts.append((1 - d) / comp)
            elif comp < -1e-15:
                ts.append(-d / comp)
        return min(ts)
    corners = sorted(np.mod(np.arctan2(np.array([0, 0, 1, 1]) - x[1],
                                       np.array([0, 1, 0, 1]) - x[0]), 2 * np.pi))
    pts = [0.0] + corners + [2 * np.pi]
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        if b > a:
            total += quad(lambda t: dist(t) ** (2 - alpha) / (alpha - 2), a, b, epsabs=0, epsrel=1e-13)[0]
    return total


def test_cube_exterior_closed_forms():
    a, alpha = 0.3, 1.7
    assert cube_exterior_integral(1, alpha, a) == pytest.approx(2 * a ** (1 - alpha) / (alpha - 1), rel=1e-14)
    alpha = 2.6
    polar = quad(lambda t: (a / max(abs(np.cos(t)), abs(np.sin(t)))) ** (2 - alpha) / (alpha - 2),
                 0, 2 * np.pi, limit=200, points=[np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4])[0]
    assert cube_exterior_integral(2, alpha, a) == pytest.approx(polar, rel=1e-11)


@pytest.mark.parametrize("offset", [(2, 0), (1, 2), (3, 3), (5, 1)])
def test_cell_integrals_against_dblquad(offset):
    alpha = 2.5
    ref = dblquad(lambda y, x: ((x - offset[0]) ** 2 + (y - offset[1]) ** 2) ** (-alpha / 2),
                  -0.5, 0.5, -0.5, 0.5, epsabs=0, epsrel=1e-12)[0]
    got = cell_integrals(np.array([offset]), alpha, 2)[0]
    assert got == pytest.approx(ref, rel=1e-11)


def test_one_dimensional_fixture():
    g = build_grid("interval", 4, 1)
    W = assemble_weights(g, FracParams(1, 0.5, 2.0, strict=False), refine=False)
    assert W.pair_weights[0, 1] == pytest.approx(1.0)
    assert W.tail[0] == pytest.approx(9.142857142857142, rel=1e-12)
    ind = np.array([1.0, 0, 0, 0])
    assert seminorm_p(W, ind) == pytest.approx(7.29365, rel=1e-5)
    pw = assemble_weights(g, FracParams(1, 0.5, 2.0, strict=False), "perimeter")
    np.testing.assert_allclose(pw.tail, [7.79494, 5.79581, 5.79581, 7.79494], rtol=1e-5)


@pytest.mark.parametrize("alpha", [1.3, 1.5, 1.9])
def test_interval_tails_closed_form(alpha):
    g = build_grid("interval", 8, 1)
    x = g.nodes[:, 0]
    ref = (x ** (1 - alpha) + (1 - x) ** (1 - alpha)) / (alpha - 1)
    got = assemble_kernel(g, alpha).tail
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_square_tails_against_polar_quadrature():
    g = build_grid("square", 4, 2)
    alpha = 2.5
    W = assemble_kernel(g, alpha, "energy")
    for i in (0, 1, 5):
        assert W.tail[i] == pytest.approx(square_tail(g.nodes[i], alpha), rel=1e-9)


def test_refinement_dominates_midpoint():
    for alpha in (1.5, 2.5):
        dim = 1 if alpha < 2 else 2
        key = (0, 1) if dim == 2 else (1,)
        refined = touching_pair_integral(key, alpha, depth=2)
        assert refined >= 1.0
        if dim == 2:
            assert touching_pair_integral((1, 1), alpha) >= 2 ** (-alpha / 2)


def test_weights_symmetric_and_positive():
    g = build_grid("l_shape", 8, 2)
    W = assemble_weights(g, FracParams(2, 0.3, 1.7))
    P = W.pair_weights
    np.testing.assert_array_equal(P, P.T)
    assert np.all(np.diag(P) == 0)
    assert np.all(P[~np.eye(g.size, dtype=bool)] > 0)
    assert np.all(W.tail > 0)


def test_truncation_radius_validation():
    g = build_grid("square", 4, 2)
    with pytest.raises(ValueError):
        assemble_kernel(g, 2.5, truncation_radius=0.5 * g.diameter)
    with pytest.raises(ValueError):
        assemble_kernel(g, 2.0)
    a = assemble_kernel(g, 2.5, truncation_radius=2 * g.diameter)
    b = assemble_kernel(g, 2.5, truncation_radius=8 * g.diameter)
    np.testing.assert_allclose(a.tail, b.tail, rtol=1e-12)


def test_family_guard():
    g = build_grid("square", 4, 2)
    pw = assemble_weights(g, FracParams(2, 0.5, 1.5), "perimeter")
    with pytest.raises(ValueError):
        seminorm_p(pw, np.ones(g.size))
    with pytest.raises(ValueError):
        assemble_weights(g, FracParams(1, 0.5, 1.5))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.1, 2.0), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3),
       st.integers(0, 2 ** 32 - 1))
def test_seminorm_homogeneity(p, c, seed):
    g = build_grid("square", 4, 2)
    W = assemble_weights(g, FracParams(2, 0.4, p))
    u = np.random.default_rng(seed).standard_normal(g.size)
    lhs = seminorm_p(W, c * u)
    assert lhs == pytest.approx(abs(c) ** p * seminorm_p(W, u), rel=1e-12)


def test_lattice_symmetry_invariance(rng):
    g = build_grid("square", 6, 2)
    W = assemble_weights(g, FracParams(2, 0.5, 1.4))
    u = rng.standard_normal(g.size)
    lat = g.to_lattice(u)
    for image in (lat.T, lat[::-1], lat[:, ::-1], np.rot90(lat)):
        v = image[tuple(g.lattice.T)]
        assert seminorm_p(W, v) == pytest.approx(seminorm_p(W, u), rel=1e-12)


def test_weak_action_matches_form(rng):
    g = build_grid("interval", 12, 1)
    W = assemble_weights(g, FracParams(1, 0.3, 1.6))
    u = rng.standard_normal(g.size)
    assert weak_action(W, u, u) == pytest.approx(seminorm_p(W, u), rel=1e-13)


def test_weight_cache_roundtrip(tmp_path):
    g = build_grid("square", 5, 2)
    params = FracParams(2, 0.5, 1.5)
    first = cached_weights(tmp_path, g, params)
    again = cached_weights(tmp_path, g, params)
    assert np.array_equal(first.pair_weights, again.pair_weights)
    assert np.array_equal(first.tail, again.tail)
    path = tmp_path / "w.npz"
    save_weights(first, path)
    R = first.truncation_radius
    assert load_weights(path, g, params.with_p(1.4), "energy", R) is None
    assert load_weights(tmp_path / "missing.npz", g, params, "energy", R) is None
    assert cache_key(g, params, "energy", R)["p"] == 1.5
