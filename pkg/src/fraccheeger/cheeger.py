"""Discrete s-perimeters, Cheeger quotients and the p -> 1 continuation.

Three quantities approach the s-Cheeger constant as p decreases to 1: the
first eigenvalue, ``|phi|_inf^(1-p)`` and ``|phi|_1^(1-p)`` for the torsion
function ``phi``. :func:`continuation_estimates` tracks all three along a
schedule of p values and compares them with direct subset searches.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checks import CheckReport, inequality
from .dirichlet import ConvergenceError, SolverConfig, torsion_function
from .eigen import EigenConfig, first_eigenpair
from .grid import DomainGrid, FracParams, SubsetCandidate, build_grid, subset
from .kernel import KernelWeights, assemble_weights, seminorm_p

log = logging.getLogger(__name__)

ORACLE_LIMIT = 20
_ORACLE_BATCH = 1 << 15
_TIE_RTOL = 1e-12

ANCHORS = {
    "bracket": "|phi|_inf^(1-p) <= lambda_1 <= (|Omega| / |phi|_1)^(p-1)",
    "ratio": "|phi|_inf/|phi|_1 <= |B_1|^-1 C^C (lambda(Omega)/lambda(B_1))^(N/(sp)), "
             "C = (sp + N(p-1))/(sp)",
    "levelset_linfty": "|u|_inf/|u|_1 <= |B_1|^-1 C^C (|f|_inf / (lambda(B_1) |u|_inf^(p-1)))^(N/(sp))",
    "ratio_lower": "1/|Omega| <= |u|_inf/|u|_1",
    "limit_profile": "1/|Omega| <= |u_p|_inf <= |B_1|^-1 (h_s(Omega)/h_s(B_1))^(N/s)",
}


@dataclass(frozen=True, eq=False)
class CavalieriProfile:
    """Superlevel data of a nonnegative field at its distinct values.

    ``thresholds`` starts at 0 and increases; ``level_measures[k]`` is the
    measure of ``{u > thresholds[k]}`` and ``g_values[k]`` the integral of
    ``u - thresholds[k]`` over that set.
    """

    thresholds: np.ndarray
    level_measures: np.ndarray
    g_values: np.ndarray

    def layer_integral(self) -> float:
        """Sum of |A_k| dk over the threshold intervals; equals |u|_1."""
        return float(np.sum(self.level_measures[:-1] * np.diff(self.thresholds)))


@dataclass(eq=False)
class CheegerEstimates:
    params: FracParams
    p_schedule: tuple
    lambda_curve: dict
    sup_curve: dict
    l1_curve: dict
    level_set_value: float
    oracle_value: float | None
    h_s_estimate: float
    phi_l1: dict = field(default_factory=dict)
    phi_sup: dict = field(default_factory=dict)
    bracket_ok: dict = field(default_factory=dict)
    ratio_ok: dict = field(default_factory=dict)
    ratio_bound: dict = field(default_factory=dict)
    domain_volume: float = math.nan
    ball_volume: float | None = None
    ball_lambda: dict = field(default_factory=dict)
    ball_level_set_value: float | None = None
    level_set: SubsetCandidate | None = None
    profile: CavalieriProfile | None = None
    oracle_set: SubsetCandidate | None = None
    torsion: dict = field(default_factory=dict, repr=False)
    eigen: dict = field(default_factory=dict, repr=False)
    failures: dict = field(default_factory=dict)
    ball_failures: dict = field(default_factory=dict)
    identity_error: dict = field(default_factory=dict)
    comparison_excess: dict = field(default_factory=dict)
    # Wall-clock seconds per p; kept out of every output file.
    timings: dict = field(default_factory=dict, repr=False)

    @property
    def completed(self) -> tuple:
        return tuple(p for p in self.p_schedule if p in self.lambda_curve)

    def spread(self, p: float) -> float:
        """Relative spread (max - min)/min of the three estimates at ``p``."""
        vals = (self.lambda_curve[p], self.sup_curve[p], self.l1_curve[p])
        return (max(vals) - min(vals)) / min(vals)


def _perimeter_family(weights: KernelWeights) -> None:
    if weights.family != "perimeter":
        raise ValueError("perimeter-family weights required")


def _nonempty(grid: DomainGrid, E) -> SubsetCandidate:
    if not isinstance(E, SubsetCandidate):
        E = subset(grid, E)
    if E.member_mask.shape != (grid.size,):
        raise ValueError("subset does not match the grid")
    if not E.member_mask.any():
        raise ValueError("empty subset")
    return E


def s_perimeter(grid: DomainGrid, perimeter_weights: KernelWeights, E) -> float:
    """Discrete P_s(E): cross pairs inside the domain plus the exterior tail."""
    _perimeter_family(perimeter_weights)
    E = _nonempty(grid, E)
    m = E.member_mask.astype(float)
    W = perimeter_weights.pair_weights
    cross = float(m @ W @ (1.0 - m))
    tail = grid.cell_volume * float(perimeter_weights.tail @ m)
    return 2.0 * (cross + tail)


def cheeger_quotient(grid: DomainGrid, perimeter_weights: KernelWeights, E) -> float:
    E = _nonempty(grid, E)
    return s_perimeter(grid, perimeter_weights, E) / E.measure


def cavalieri_profile(grid: DomainGrid, u) -> CavalieriProfile:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,) or np.any(u < 0):
        raise ValueError("expected a nonnegative field on the grid")
    h_n = grid.cell_volume
    levels = np.unique(np.r_[0.0, u])
    desc = np.sort(u)[::-1]
    # Number of nodes strictly above each level and the sum of their values.
    above = len(u) - np.searchsorted(np.sort(u), levels, side="right")
    csum = np.r_[0.0, np.cumsum(desc)]
    measures = above * h_n
    g = h_n * (csum[above] - above * levels)
    g[0] = h_n * float(u.sum())
    return CavalieriProfile(levels, measures, g)


def level_set_search(grid: DomainGrid, perimeter_weights: KernelWeights, u):
    """Best Cheeger quotient among the superlevel sets ``{u > k}``, k >= 0.

    Nodes enter in decreasing order of ``u``, equal values together, and the
    perimeter is updated incrementally. Ties in the quotient go to the larger
    set. Returns the best :class:`SubsetCandidate` and the Cavalieri profile.
    """
    _perimeter_family(perimeter_weights)
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError("field does not match the grid")
    if np.any(u < 0) or not np.any(u > 0):
        raise ValueError("level-set search needs a nonnegative, nonzero field")
    W = perimeter_weights.pair_weights
    h_n = grid.cell_volume
    tail = h_n * perimeter_weights.tail
    row = W.sum(axis=1)

    order = np.argsort(-u, kind="stable")
    vals = u[order]
    breaks = np.flatnonzero(np.r_[np.diff(vals) != 0, True]) + 1
    contact = np.zeros(grid.size)     # sum of w_ij over j already in the set
    cut = tail_sum = 0.0
    best_q, best_count = math.inf, 0
    start = 0
    for stop in breaks:
        if vals[start] <= 0:
            break
        group = order[start:stop]
        wg = W[group][:, group].sum()
        cut += row[group].sum() - wg - 2.0 * contact[group].sum()
        tail_sum += tail[group].sum()
        contact += W[:, group].sum(axis=1)
        q = 2.0 * (cut + tail_sum) / (stop * h_n)
        if q <= best_q * (1.0 + _TIE_RTOL):
            best_q, best_count = min(q, best_q), stop
        start = stop
    member = np.zeros(grid.size, dtype=bool)
    member[order[:best_count]] = True
    best = subset(grid, member)
    best = replace(best, s_perimeter=s_perimeter(grid, perimeter_weights, best))
    return best, cavalieri_profile(grid, u)


def exact_min_oracle(grid: DomainGrid, perimeter_weights: KernelWeights):
    """Exhaustive minimum of the Cheeger quotient over all nonempty subsets.

    Quotients within a relative 1e-12 of the minimum count as ties, resolved
    in favour of the larger measure and then the lexicographically smallest
    membership vector in node order.
    """
    _perimeter_family(perimeter_weights)
    m = grid.size
    if m > ORACLE_LIMIT:
        raise ValueError(f"oracle limited to {ORACLE_LIMIT} nodes, grid has {m}")
    W = perimeter_weights.pair_weights
    tail = grid.cell_volume * perimeter_weights.tail
    bits = np.arange(m)
    total = (1 << m) - 1
    quotients = np.empty(total)
    for lo in range(1, total + 1, _ORACLE_BATCH):
        codes = np.arange(lo, min(lo + _ORACLE_BATCH, total + 1))
        B = ((codes[:, None] >> bits) & 1).astype(float)
        cut = np.einsum("kj,kj->k", B @ W, 1.0 - B)
        count = B.sum(axis=1)
        quotients[lo - 1:lo - 1 + len(codes)] = 2.0 * (cut + B @ tail) / (count * grid.cell_volume)
    qmin = float(quotients.min())
    ties = np.flatnonzero(quotients <= qmin * (1.0 + _TIE_RTOL)) + 1
    masks = ((ties[:, None] >> bits) & 1).astype(bool)
    counts = masks.sum(axis=1)
    masks = masks[counts == counts.max()]
    # Lexicographic order on node-ordered tuples with False < True.
    chosen = min(masks, key=lambda row: tuple(row))
    best = subset(grid, chosen)
    value = s_perimeter(grid, perimeter_weights, best) / best.measure
    return value, replace(best, s_perimeter=value * best.measure)


@dataclass(frozen=True)
class ContinuationConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    truncation_factor: float = 4.0
    refine: bool = True
    with_ball: bool = True
    ball_n: int | None = None
    oracle_limit: int = ORACLE_LIMIT
    bracket_slack: float = 1e-9
    ratio_slack: float = 0.05
    trace_dir: str | None = None


def reference_ball(grid: DomainGrid, n: int | None = None) -> DomainGrid:
    """Unit ball grid whose cell width matches ``grid`` (diameter 2)."""
    if n is None:
        n = max(2, int(round(2.0 / grid.h)))
    return build_grid("ball", n, grid.dim)


def ratio_bound(params: FracParams, lambda_domain: float, lambda_ball: float,
                ball_volume: float) -> float:
    sp = params.s * params.p
    c = (sp + params.dim * (params.p - 1.0)) / sp
    return c ** c * (lambda_domain / lambda_ball) ** (params.dim / sp) / ball_volume


def _validate_schedule(p_schedule) -> tuple:
    sched = tuple(float(p) for p in p_schedule)
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("p_schedule must be strictly decreasing")
    if sched and (sched[0] > 2.0 or sched[-1] < 1.05):
        raise ValueError("p_schedule must lie in [1.05, 2]")
    return sched


def _weights(grid, params, family, cfg):
    return assemble_weights(grid, params, family, cfg.truncation_factor * grid.diameter,
                            refine=cfg.refine)


def _solve_chain(grid, params_base, sched, cfg, label):
    """Torsion and eigenpair at every p, warm-starting torsion along the chain.

    Also returns, per p, the relative error of the identity S_p(phi) = |phi|_1
    and the largest excess of e over c = lambda^(1/(p-1)) phi relative to
    max c, which stays commensurate with |e|_inf = 1 as p -> 1.
    """
    torsion, eigen, failures, identity, comparison, timings = {}, {}, {}, {}, {}, {}
    warm = None
    for p in sched:
        t0 = time.perf_counter()
        params = params_base.with_p(p)
        W = _weights(grid, params, "energy", cfg)
        trace = None
        if cfg.trace_dir is not None:
            trace = str(Path(cfg.trace_dir) / f"trace_{label}_p{p!r}.csv")
        try:
            tor = torsion_function(W, p, replace(cfg.solver, warm_start=warm, trace_path=trace))
            ecfg = replace(cfg.eigen, solver=replace(cfg.solver, warm_start=None), seed=tor.phi)
            eig = first_eigenpair(W, p, ecfg)
        except (ConvergenceError, FloatingPointError) as exc:
            log.warning("%s solve failed at p=%g: %s", label, p, exc)
            failures[p] = str(exc)
            continue
        torsion[p], eigen[p] = tor, eig
        identity[p] = abs(seminorm_p(W, tor.phi, p) - tor.l1_norm) / tor.l1_norm
        comparator = eig.lambda1 ** (1.0 / (p - 1.0)) * tor.phi
        comparison[p] = float((eig.eigenfunction - comparator).max() / comparator.max())
        warm = tor.phi
        timings[p] = time.perf_counter() - t0
    return torsion, eigen, failures, identity, comparison, timings


def continuation_estimates(grid: DomainGrid, params_base: FracParams, p_schedule,
                           cfg: ContinuationConfig | None = None) -> CheegerEstimates:
    """Run the p -> 1 continuation and collect the three h_s estimates.

    A failed solve at some p is recorded in ``failures`` and the schedule
    continues from the last successful warm start.
    """
    cfg = cfg or ContinuationConfig()
    sched = _validate_schedule(p_schedule)
    if params_base.dim != grid.dim:
        raise ValueError("params.dim does not match the grid")
    base = replace(params_base, strict=False)
    torsion, eigen, failures, identity, comparison, timings = _solve_chain(
        grid, base, sched, cfg, grid.shape)

    est = CheegerEstimates(base, sched, {}, {}, {}, math.nan, None, math.nan,
                           domain_volume=grid.volume, torsion=torsion, eigen=eigen,
                           failures=failures, identity_error=identity,
                           comparison_excess=comparison, timings=timings)
    for p, tor in torsion.items():
        est.lambda_curve[p] = eigen[p].lambda1
        est.sup_curve[p] = tor.sup_norm ** (1.0 - p)
        est.l1_curve[p] = tor.l1_norm ** (1.0 - p)
        est.phi_l1[p] = tor.l1_norm
        est.phi_sup[p] = tor.sup_norm
        upper = (grid.volume / tor.l1_norm) ** (p - 1.0)
        lam = eigen[p].lambda1
        est.bracket_ok[p] = bool(est.sup_curve[p] <= lam * (1 + cfg.bracket_slack)
                                 and lam <= upper * (1 + cfg.bracket_slack))

    pw = _weights(grid, base, "perimeter", cfg)
    if cfg.with_ball:
        ball = reference_ball(grid, cfg.ball_n)
        btor, beig, bfail, *_ = _solve_chain(ball, base, sched, cfg, "ball_reference")
        est.ball_failures = bfail
        est.ball_volume = ball.volume
        est.ball_lambda = {p: r.lambda1 for p, r in beig.items()}
        for p in est.lambda_curve:
            if p not in est.ball_lambda:
                continue
            rhs = ratio_bound(base.with_p(p), est.lambda_curve[p], est.ball_lambda[p], ball.volume)
            est.ratio_bound[p] = rhs
            est.ratio_ok[p] = bool(est.phi_sup[p] / est.phi_l1[p] <= rhs * (1 + cfg.ratio_slack))
        if btor:
            bpw = _weights(ball, base, "perimeter", cfg)
            est.ball_level_set_value = level_set_search(ball, bpw, btor[min(btor)].phi)[0].quotient

    if torsion:
        best, profile = level_set_search(grid, pw, torsion[min(torsion)].phi)
        est.level_set, est.profile = best, profile
        est.level_set_value = best.quotient
        est.h_s_estimate = best.quotient
    if grid.size <= min(cfg.oracle_limit, ORACLE_LIMIT):
        est.oracle_value, est.oracle_set = exact_min_oracle(grid, pw)
        est.h_s_estimate = est.oracle_value
    return est


def check_levelset_linfty_bound(grid: DomainGrid, params: FracParams, u, f_sup: float,
                                lambda_ball: float | None, *, ball_volume: float | None = None,
                                h_s: float | None = None, h_s_ball: float | None = None,
                                slack: float = 0.05, profile_slack: float = 0.10) -> list[CheckReport]:
    """Level-set L^inf bound for a solution ``u`` with right-hand side bounded
    by ``f_sup``, plus the limit-profile bounds when both Cheeger estimates are
    supplied."""
    if lambda_ball is None or ball_volume is None:
        raise ValueError("reference-ball eigenvalue and volume are required")
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,) or np.any(u < 0) or not np.any(u):
        raise ValueError("expected a nonnegative, nonzero field on the grid")
    p, N = params.p, params.dim
    sup = float(u.max())
    l1 = grid.cell_volume * float(u.sum())
    sp = params.s * p
    c = (sp + N * (p - 1.0)) / sp
    rhs = c ** c * (f_sup / (lambda_ball * sup ** (p - 1.0))) ** (N / sp) / ball_volume
    reports = [
        inequality("levelset_linfty", sup / l1, rhs, slack, ANCHORS["levelset_linfty"]),
        inequality("ratio_lower", 1.0 / grid.volume, sup / l1, 0.0, ANCHORS["ratio_lower"]),
    ]
    if h_s is not None and h_s_ball is not None:
        upper = (h_s / h_s_ball) ** (N / params.s) / ball_volume
        reports.append(inequality("limit_profile", sup / l1, upper, profile_slack,
                                  ANCHORS["limit_profile"]))
    return reports
