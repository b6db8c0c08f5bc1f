import csv

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from fraccheeger import (ConvergenceError, FracParams, SolverConfig, assemble_weights, build_grid,
                         energy, gradient, orbit_spread, seminorm_p, solve_dirichlet,
                         torsion_function)


def weights(shape="square", n=8, s=0.5, p=1.5):
    g = build_grid(shape, n, 1 if shape == "interval" else 2)
    return assemble_weights(g, FracParams(g.dim, s, p, strict=False))


def test_zero_right_hand_side():
    W = weights()
    res = solve_dirichlet(W, np.zeros(W.size))
    assert res.iterations <= 1
    assert not np.any(res.phi)


def test_p2_matches_linear_solve():
    W = weights("interval", 16, 0.4, 2.0)
    g = W.grid
    A = 2.0 * (np.diag(W.pair_weights.sum(axis=1)) - W.pair_weights) + np.diag(2 * g.cell_volume * W.tail)
    f = np.linspace(0.2, 1.0, g.size)
    ref = sla.solve(A, g.cell_volume * f)
    got = solve_dirichlet(W, f).phi
    np.testing.assert_allclose(got, ref, atol=1e-10 * np.abs(ref).max(), rtol=0)


def test_gradient_matches_finite_differences(rng):
    W = weights("l_shape", 6, 0.3, 1.7)
    for _ in range(10):
        u, f, d = (rng.standard_normal(W.size) for _ in range(3))
        eps = 1e-6
        fd = (energy(W, u + eps * d, f) - energy(W, u - eps * d, f)) / (2 * eps)
        assert fd == pytest.approx(float(gradient(W, u, f) @ d), rel=1e-6)


@pytest.mark.parametrize("p", [2.0, 1.5, 1.1])
def test_torsion_identity_and_energy(p):
    W = weights(p=p)
    res = torsion_function(W)
    assert abs(seminorm_p(W, res.phi) - res.l1_norm) <= 1e-6 * res.l1_norm
    assert res.energy_value == pytest.approx(-(1 - 1 / p) * res.l1_norm, rel=1e-6)
    assert res.energy_value < 0
    assert res.m_value == pytest.approx(res.l1_norm ** (1 - p))
    assert np.all(res.phi >= 0)
    assert res.phi is res.u


def test_minimality_over_l1_normalised_fields(rng):
    W = weights("square", 6, 0.5, 1.5)
    h_n = W.grid.cell_volume
    res = torsion_function(W)
    best = seminorm_p(W, res.phi / res.l1_norm)
    for _ in range(100):
        v = rng.standard_normal(W.size) + rng.random() * 2
        v /= h_n * np.abs(v).sum()
        assert seminorm_p(W, v) >= best - 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.2, 5.0))
def test_comparison_scaling(seed, F):
    W = weights("square", 6, 0.5, 1.6)
    phi = torsion_function(W).phi
    f = np.random.default_rng(seed).random(W.size)
    f *= F / f.max()
    u = solve_dirichlet(W, f).phi
    assert np.all(F ** (-1 / 0.6) * u <= phi + 1e-8 * phi.max())


def test_warm_start_with_solution():
    W = weights(p=1.3)
    res = torsion_function(W)
    again = torsion_function(W, cfg=SolverConfig(warm_start=res.phi))
    assert again.iterations <= 2
    np.testing.assert_allclose(again.phi, res.phi, rtol=1e-6)


def test_ball_solution_is_symmetric():
    W = weights("ball", 16, 0.5, 1.4)
    res = torsion_function(W)
    assert orbit_spread(W.grid, res.phi) <= 1e-8 * res.sup_norm
    full = torsion_function(W, cfg=SolverConfig(use_symmetry=False))
    np.testing.assert_allclose(full.phi, res.phi, rtol=1e-6)


def test_lbfgs_agrees_with_newton():
    W = weights("square", 6, 0.5, 1.5)
    a = torsion_function(W).phi
    b = torsion_function(W, cfg=SolverConfig(method="lbfgs")).phi
    np.testing.assert_allclose(b, a, rtol=1e-6)


def test_lbfgs_failure_is_raised_not_reported():
    # at p this close to 1 the limited-memory search gives up; it must say so
    W = weights("square", 6, 0.5, 1.05)
    ref = torsion_function(W).phi
    try:
        got = torsion_function(W, cfg=SolverConfig(method="lbfgs")).phi
    except ConvergenceError:
        return
    np.testing.assert_allclose(got, ref, rtol=1e-6)


def test_trace_energies_decrease(tmp_path):
    W = weights(p=1.25)
    path = tmp_path / "trace.csv"
    torsion_function(W, cfg=SolverConfig(trace_path=str(path)))
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"iteration", "energy", "grad_norm"}
    e = np.array([float(r["energy"]) for r in rows])
    assert np.all(np.diff(e) <= 1e-14 * np.abs(e[:-1]))


def test_iteration_budget_raises():
    W = weights(p=1.3)
    with pytest.raises(ConvergenceError) as info:
        torsion_function(W, cfg=SolverConfig(max_iters=1))
    assert info.value.iterations == 1
    assert info.value.u is not None


def test_input_validation():
    W = weights()
    with pytest.raises(ValueError):
        solve_dirichlet(W, np.ones(3))
    with pytest.raises(ValueError):
        solve_dirichlet(W, np.full(W.size, np.nan))
    with pytest.raises(ValueError):
        solve_dirichlet(W, np.ones(W.size), p=1.0)
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(method="cg")
    pw = assemble_weights(W.grid, W.params, "perimeter")
    with pytest.raises(ValueError):
        torsion_function(pw)
