"""Discrete fractional Dirichlet problems by convex energy minimisation.

The weak solution of ``(-Delta)_p^s u = f`` in the domain, ``u = 0`` outside,
is the minimiser of ``S_p(u)/p - h^N sum_i f_i u_i``. Right-hand sides that are
invariant under the grid symmetries are solved on orbit-constant fields, which
is exact by uniqueness and keeps symmetric nodes bit-identical.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .grid import orbit_average, orbit_spread
from .kernel import KernelWeights, PairOperator, _energy_family, _field

log = logging.getLogger(__name__)

_ROUNDOFF = 1e-14


class ConvergenceError(RuntimeError):
    """Raised when a solve stops without reaching a stationary point."""

    def __init__(self, message: str, residual: float, iterations: int, u=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.u = u


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-8
    energy_rel_tol: float = 1e-12
    max_iters: int = 20000
    armijo: float = 1e-4
    shrink: float = 0.5
    warm_start: np.ndarray | None = None
    method: str = "newton"
    memory: int = 10
    # A stalled solve is accepted only if ray stationarity holds to this level.
    identity_tol: float = 1e-6
    stall_patience: int = 5
    use_symmetry: bool = True
    trace_path: str | None = None

    def __post_init__(self):
        if self.grad_tol <= 0 or self.energy_rel_tol <= 0 or self.identity_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise ValueError("line search parameters must lie in (0, 1)")
        if self.method not in ("newton", "lbfgs"):
            raise ValueError("method must be 'newton' or 'lbfgs'")


@dataclass(frozen=True, eq=False)
class TorsionResult:
    phi: np.ndarray
    l1_norm: float
    sup_norm: float
    energy_value: float
    m_value: float
    iterations: int
    residual: float
    status: str = "gradient"

    @property
    def u(self) -> np.ndarray:
        return self.phi


def energy(weights: KernelWeights, u, f, p: float | None = None) -> float:
    _energy_family(weights)
    p = weights.params.p if p is None else p
    u, f = _field(weights, u), _field(weights, f)
    op = weights.operator
    return op.form(u, p) / p - float(op.mass @ (f * u))


def gradient(weights: KernelWeights, u, f, p: float | None = None) -> np.ndarray:
    _energy_family(weights)
    p = weights.params.p if p is None else p
    u, f = _field(weights, u), _field(weights, f)
    op = weights.operator
    return op.action(u, p) - op.mass * f


class _Problem:
    """Energy of one solve in the coordinates of a PairOperator."""

    def __init__(self, op: PairOperator, b: np.ndarray, p: float):
        self.op, self.b, self.p = op, b, p

    def energy(self, v):
        return self.op.form(v, self.p) / self.p - float(self.b @ v)

    def grad(self, v):
        return self.op.action(v, self.p) - self.b

    def scaled(self, g):
        return float(np.max(np.abs(g) / self.op.mass))

    def ray_scale(self, d):
        """Exact minimiser t > 0 of the energy along the ray t*d, or None."""
        bd = float(self.b @ d)
        sd = self.op.form(d, self.p)
        if not bd > 0 or not sd > 0:
            return None
        return (bd / sd) ** (1.0 / (self.p - 1.0))

    def ray_residual(self, v, g):
        """|<grad E(v), v>| / |<b, v>|, zero at any stationary point."""
        bv = float(self.b @ v)
        return abs(float(g @ v)) / abs(bv) if bv != 0 else np.inf


def _line_search(prob: _Problem, v, e0, g, d, cfg: SolverConfig):
    slope = float(g @ d)
    if not slope < 0:
        return None
    step = 1.0
    for _ in range(80):
        trial = v + step * d
        e1 = prob.energy(trial)
        if np.isnan(e1):
            raise FloatingPointError("NaN energy in line search")
        if e1 < e0 and e1 <= e0 + cfg.armijo * step * slope:
            return trial, e1
        step *= cfg.shrink
    return None


def _newton_direction(prob: _Problem, v, g):
    floor = 1e-13 * max(float(np.max(np.abs(v))), 1e-300)
    H = prob.op.hessian(v, prob.p, floor)
    try:
        return -sla.cho_solve(sla.cho_factor(H, check_finite=True), g)
    except (sla.LinAlgError, ValueError):
        shift = 1e-12 * np.abs(np.diag(H)).max() + 1e-300
        return -np.linalg.solve(H + shift * np.eye(len(v)), g)


class _LBFGS:
    def __init__(self, mass, memory):
        self.mass, self.memory = mass, memory
        self.pairs = []

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if self.pairs:
            s, y, _ = self.pairs[-1]
            gamma = (s @ y) / (y @ (y / self.mass))
        else:
            gamma = 1.0
        r = gamma * q / self.mass
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            r += s * (a - rho * (y @ r))
        return -r

    def update(self, s, y):
        sy = float(s @ y)
        if sy > 1e-300:
            self.pairs.append((s, y, 1.0 / sy))
            del self.pairs[:-self.memory]

    def reset(self):
        self.pairs.clear()


def _minimise(prob: _Problem, v, cfg: SolverConfig, trace):
    e = prob.energy(v)
    g = prob.grad(v)
    lbfgs = _LBFGS(prob.op.mass, cfg.memory) if cfg.method == "lbfgs" else None
    stalls = 0
    for it in range(cfg.max_iters + 1):
        res = prob.scaled(g)
        if trace is not None:
            trace.append((it, e, res))
        if res <= cfg.grad_tol:
            return v, it, res, "gradient"
        if it == cfg.max_iters:
            break
        if lbfgs is None:
            d = _newton_direction(prob, v, g)
        else:
            d = lbfgs.direction(g)
            if not float(g @ d) < 0:
                lbfgs.reset()
                d = lbfgs.direction(g)
        found = _line_search(prob, v, e, g, d, cfg)
        if found is None and lbfgs is not None and lbfgs.pairs:
            lbfgs.reset()
            d = lbfgs.direction(g)
            found = _line_search(prob, v, e, g, d, cfg)
        if found is None and lbfgs is None:
            # Near the minimiser the energy decrease drops below round-off;
            # accept the full Newton step when it still reduces the gradient.
            trial = v + d
            e1 = prob.energy(trial)
            if e1 <= e + _ROUNDOFF * abs(e):
                g1 = prob.grad(trial)
                if prob.scaled(g1) < res:
                    found = (trial, min(e1, e))
        if found is None and lbfgs is not None:
            # a failed search from a fresh steepest-descent direction says
            # nothing about stationarity, so do not report a stall
            raise ConvergenceError(f"line search failed (residual {res:.3e})", res, it, v)
        if found is None:
            stalls = cfg.stall_patience
        else:
            v_new, e_new = found
            g_new = prob.grad(v_new)
            if lbfgs is not None:
                lbfgs.update(v_new - v, g_new - g)
            drop = e - e_new
            stalls = stalls + 1 if drop <= cfg.energy_rel_tol * abs(e_new) else 0
            v, e, g = v_new, e_new, g_new
        if stalls >= cfg.stall_patience:
            # No further decrease is resolvable in floating point. This is the
            # expected end state for p close to 1, where the gradient is only
            # Holder continuous of order p - 1.
            ray = prob.ray_residual(v, g)
            if ray <= cfg.identity_tol:
                # Exact line minimisation along the ray through v; never
                # raises the energy.
                t = prob.ray_scale(v)
                if t is not None and prob.energy(t * v) <= e:
                    v = t * v
                    g = prob.grad(v)
                    if trace is not None:
                        trace.append((it + 1, prob.energy(v), prob.scaled(g)))
                return v, it + 1, prob.scaled(g), "energy"
            raise ConvergenceError(
                f"solver stalled with residual {prob.scaled(g):.3e} and ray residual {ray:.3e}",
                prob.scaled(g), it + 1, v)
    raise ConvergenceError(f"no convergence within {cfg.max_iters} iterations "
                           f"(residual {prob.scaled(g):.3e})", prob.scaled(g), cfg.max_iters, v)


def _write_trace(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "energy", "grad_norm"])
        for it, e, r in rows:
            out.writerow([it, format(e, ".17g"), format(r, ".17g")])


def _symmetric(weights: KernelWeights, *fields) -> bool:
    grid = weights.grid
    for fld in fields:
        if fld is None:
            continue
        scale = float(np.max(np.abs(fld))) if fld.size else 0.0
        if orbit_spread(grid, fld) > 1e-14 * scale:
            return False
    return True


def solve_dirichlet(weights: KernelWeights, f, p: float | None = None,
                    cfg: SolverConfig | None = None) -> TorsionResult:
    """Minimise the discrete Dirichlet energy for right-hand side ``f``.

    The default method is a damped Newton iteration with Armijo backtracking;
    ``cfg.method = "lbfgs"`` selects a limited-memory quasi-Newton iteration.
    Iteration starts from ``cfg.warm_start`` (or the p = 2 solution), rescaled
    to the energy minimiser along its ray.
    """
    _energy_family(weights)
    cfg = cfg or SolverConfig()
    p = weights.params.p if p is None else float(p)
    if not p > 1:
        raise ValueError("p must exceed 1")
    f = _field(weights, f)
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side must be finite")
    warm = None if cfg.warm_start is None else _field(weights, cfg.warm_start)
    grid = weights.grid
    h_n = grid.cell_volume

    if not np.any(f):
        zero = np.zeros(grid.size)
        return TorsionResult(zero, 0.0, 0.0, 0.0, np.inf, 0, 0.0)

    reduced = cfg.use_symmetry and grid.n_orbits < grid.size and _symmetric(weights, f, warm)
    if reduced:
        op = weights.reduced_operator
        f_c = orbit_average(grid, f)
        warm_c = None if warm is None else orbit_average(grid, warm)
    else:
        op = weights.operator
        f_c, warm_c = f, warm
    prob = _Problem(op, op.mass * f_c, p)

    start = None
    if warm_c is not None and np.any(warm_c):
        t = prob.ray_scale(warm_c)
        if t is not None:
            start = t * warm_c
    if start is None:
        d = sla.solve(op.linear_matrix(), prob.b, assume_a="pos")
        start = prob.ray_scale(d) * d

    trace = [] if cfg.trace_path else None
    try:
        v, iters, res, status = _minimise(prob, start, cfg, trace)
    finally:
        if trace is not None:
            _write_trace(cfg.trace_path, trace)
    u = v[grid.orbit_index] if reduced else v
    l1 = h_n * float(np.abs(u).sum())
    sup = float(np.max(np.abs(u)))
    e = prob.energy(v)
    m_value = l1 ** (1.0 - p) if l1 > 0 else np.inf
    log.debug("dirichlet solve p=%g: %d iterations, residual %.3e (%s)", p, iters, res, status)
    return TorsionResult(u, l1, sup, e, m_value, iters, res, status)


def torsion_function(weights: KernelWeights, p: float | None = None,
                     cfg: SolverConfig | None = None) -> TorsionResult:
    """Solution of the problem with f = 1, i.e. the (s,p)-torsion function."""
    cfg = cfg or SolverConfig()
    res = solve_dirichlet(weights, np.ones(weights.size), p, cfg)
    phi = res.phi
    if np.any(phi < -cfg.grad_tol * res.sup_norm):
        raise ConvergenceError("torsion function has significantly negative values",
                               res.residual, res.iterations, phi)
    if np.any(phi < 0):
        phi = np.maximum(phi, 0.0)
        l1 = weights.grid.cell_volume * float(phi.sum())
        p = weights.params.p if p is None else float(p)
        res = replace(res, phi=phi, l1_norm=l1, m_value=l1 ** (1.0 - p))
    return res
