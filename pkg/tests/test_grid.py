import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fraccheeger import FracParams, build_grid, measure, orbit_spread, subset
from fraccheeger.grid import grid_from_mask_file, orbit_average, read_mask, write_mask


def test_params_validation():
    FracParams(2, 0.5, 1.5)
    with pytest.raises(ValueError):
        FracParams(3, 0.5, 1.5)
    with pytest.raises(ValueError):
        FracParams(2, 1.0, 1.5)
    with pytest.raises(ValueError):
        FracParams(2, 0.5, 1.0)
    with pytest.raises(ValueError, match="strict"):
        FracParams(1, 0.8, 1.5)
    loose = FracParams(1, 0.8, 1.5, strict=False)
    assert not loose.in_standard_range
    assert loose.energy_exponent == pytest.approx(1 + 0.8 * 1.5)
    assert loose.perimeter_exponent == pytest.approx(1.8)
    assert loose.with_p(1.1).p == 1.1


def test_interval_and_square():
    g = build_grid("interval", 8, 1)
    assert g.size == 8 and g.h == 0.125 and g.dim == 1
    np.testing.assert_allclose(g.nodes[:, 0], (np.arange(8) + 0.5) / 8)
    sq = build_grid("square", 5, 2, extent=2.0)
    assert sq.size == 25 and sq.volume == pytest.approx(4.0)


def test_l_shape_and_ball():
    L = build_grid("l_shape", 8, 2)
    assert L.size == 48
    assert not np.any((L.nodes[:, 0] > 0.5) & (L.nodes[:, 1] > 0.5))
    B = build_grid("ball", 16, 2)
    assert np.all(np.sum(B.nodes ** 2, axis=1) < 1.0)
    assert abs(B.volume - np.pi) < 0.15
    B1 = build_grid("ball", 10, 1)
    assert B1.size == 10 and B1.volume == pytest.approx(2.0)


def test_shape_errors():
    with pytest.raises(ValueError):
        build_grid("interval", 8, 2)
    with pytest.raises(ValueError):
        build_grid("square", 8, 1)
    with pytest.raises(ValueError):
        build_grid("square", 1, 2)
    with pytest.raises(ValueError):
        build_grid("hexagon", 8, 2)
    with pytest.raises(ValueError):
        build_grid("custom_mask", 4, 2, mask=np.ones((2, 2)))
    with pytest.raises(ValueError):
        build_grid("custom_mask", 4, 2, mask=np.zeros((2, 2)), h=0.5)


def test_orbits_of_small_grids():
    assert build_grid("square", 4, 2).n_orbits == 3
    assert build_grid("interval", 4, 1).n_orbits == 2
    assert build_grid("interval", 5, 1).n_orbits == 3
    L = build_grid("l_shape", 4, 2)
    # only the diagonal reflection survives
    assert L.n_orbits == (L.size + 2) // 2


def test_custom_mask_keeps_caller_array():
    mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
    g = build_grid("custom_mask", 3, 2, mask=mask, h=0.1)
    assert mask.flags.writeable
    assert g.size == 5 and g.volume == pytest.approx(0.05)


def test_subset_and_measure():
    g = build_grid("square", 4, 2)
    lat = np.zeros((4, 4), dtype=bool)
    lat[:2, :2] = True
    E = subset(g, lat)
    assert E.count == 4 and E.measure == pytest.approx(0.25)
    assert measure(g, E.member_mask) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        E.quotient
    np.testing.assert_array_equal(g.lattice_mask(E.member_mask), lat)
    with pytest.raises(ValueError):
        subset(g, np.ones(3, dtype=bool))


@settings(max_examples=40, deadline=None)
@given(arrays(bool, (5, 6), elements=st.booleans()).filter(lambda m: m.any()))
def test_orbit_average_is_invariant(mask):
    g = build_grid("custom_mask", 6, 2, mask=mask, h=0.2)
    u = np.arange(g.size, dtype=float) ** 1.5
    avg = orbit_average(g, u)[g.orbit_index]
    assert orbit_spread(g, avg) == 0.0
    assert np.sum(avg) == pytest.approx(np.sum(u))


@settings(max_examples=25, deadline=None)
@given(arrays(bool, (4, 7), elements=st.booleans()).filter(lambda m: m.any()),
       st.floats(1e-3, 1.0))
def test_mask_file_roundtrip(tmp_path_factory, mask, h):
    path = tmp_path_factory.mktemp("mask") / "m.txt"
    write_mask(path, mask, h)
    dim, h2, back = read_mask(path)
    assert dim == 2 and h2 == h
    np.testing.assert_array_equal(back, mask)
    g = grid_from_mask_file(path)
    assert g.size == mask.sum()


def test_mask_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n1 0\n")
    with pytest.raises(ValueError):
        read_mask(bad)
    bad.write_text("2 0.1\n1 2\n")
    with pytest.raises(ValueError):
        read_mask(bad)
    one = tmp_path / "one.txt"
    one.write_text("1 0.25\n1 1 1\n")
    g = grid_from_mask_file(one)
    assert g.dim == 1 and g.size == 3
