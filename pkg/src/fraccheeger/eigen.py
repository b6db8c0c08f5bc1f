"""First Dirichlet eigenpair of the discrete fractional p-Laplacian.

The eigenvalue is the minimum of the Rayleigh quotient ``S_p(u) / ||u||_p^p``.
It is reached by a nonlinear inverse power iteration whose inner problems are
the convex Dirichlet solves of :mod:`fraccheeger.dirichlet`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dirichlet import ConvergenceError, SolverConfig, solve_dirichlet, torsion_function
from .kernel import KernelWeights, _energy_family, _field, seminorm_p

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenConfig:
    rel_tol: float = 1e-10
    max_iters: int = 500
    # Allowed relative increase of the quotient, absorbing inner-solve round-off.
    slack: float = 1e-12
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: np.ndarray | None = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.slack < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambda1: float
    eigenfunction: np.ndarray
    rayleigh_history: tuple
    iterations: int
    status: str = "converged"


def _p_norm_p(weights: KernelWeights, u: np.ndarray, p: float) -> float:
    return weights.grid.cell_volume * float(np.sum(np.abs(u) ** p))


def rayleigh_quotient(weights: KernelWeights, u, p: float | None = None) -> float:
    _energy_family(weights)
    p = weights.params.p if p is None else float(p)
    u = _field(weights, u)
    denom = _p_norm_p(weights, u, p)
    if denom == 0:
        raise ValueError("Rayleigh quotient of the zero field")
    return seminorm_p(weights, u, p) / denom


def _step(weights, u, p, cfg: SolverConfig):
    if np.any(u < 0) or not np.any(u):
        raise ValueError("inverse power step needs a nonnegative, nonzero field")
    norm_p = _p_norm_p(weights, u, p)
    f = u ** (p - 1.0) / norm_p ** ((p - 1.0) / p)
    w = np.maximum(solve_dirichlet(weights, f, p, cfg).phi, 0.0)
    if not np.any(w):
        raise ConvergenceError("inverse power step returned the zero field", np.inf, 0, w)
    return w / _p_norm_p(weights, w, p) ** (1.0 / p), w


def inverse_power_step(weights: KernelWeights, u_k, p: float | None = None,
                       cfg: SolverConfig | None = None) -> np.ndarray:
    """One step u -> solution for f = u^(p-1)/||u||_p^(p-1), renormalised to
    unit p-norm."""
    _energy_family(weights)
    p = weights.params.p if p is None else float(p)
    return _step(weights, _field(weights, u_k), p, cfg or SolverConfig())[0]


def first_eigenpair(weights: KernelWeights, p: float | None = None,
                    cfg: EigenConfig | None = None) -> EigenResult:
    """Inverse power iteration seeded by the torsion function.

    Stops once the Rayleigh quotient decreases by less than ``cfg.rel_tol``
    relatively. A step that raises the quotient beyond ``cfg.slack`` means the
    inner solves have reached their resolution; the best iterate is kept.
    """
    _energy_family(weights)
    cfg = cfg or EigenConfig()
    p = weights.params.p if p is None else float(p)
    scfg = cfg.solver
    if cfg.seed is not None:
        u = np.maximum(_field(weights, cfg.seed), 0.0)
    else:
        u = torsion_function(weights, p, scfg).phi
    u = u / _p_norm_p(weights, u, p) ** (1.0 / p)
    best = rayleigh_quotient(weights, u, p)
    history = [best]
    warm = None
    status = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        nxt, raw = _step(weights, u, p, replace(scfg, warm_start=warm))
        q = rayleigh_quotient(weights, nxt, p)
        if q >= best:
            # No resolvable decrease left; keep the best iterate.
            status = "converged" if q <= best * (1.0 + cfg.slack) else "resolution"
            it -= 1
            break
        decrease = (best - q) / best
        history.append(q)
        u, warm, best = nxt, raw, q
        if decrease < cfg.rel_tol:
            status = "converged"
            break
    else:
        raise ConvergenceError(f"eigen iteration did not settle in {cfg.max_iters} steps",
                               np.inf, cfg.max_iters, u)
    e = u / float(np.max(u))
    log.debug("eigenpair p=%g: lambda=%.15g after %d steps (%s)", p, best, it, status)
    return EigenResult(best, e, tuple(history), it, status)
