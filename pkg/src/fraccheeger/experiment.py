"""Configured runs: continuation, inequality checks and output files.

A run is described by one INI file::

    [domain]
    shape = square
    n_per_axis = 32
    s = 0.5

    [continuation]
    p_schedule = 2.0, 1.5, 1.25, 1.1, 1.05

    [checks]
    enabled = auto

and writes ``estimates.csv``, ``summary.json`` and ``plot_data.csv`` to the
output directory. Every float is printed with 17 significant digits.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cheeger import (ANCHORS, CheegerEstimates, ContinuationConfig, check_levelset_linfty_bound,
                      continuation_estimates, ORACLE_LIMIT)
from .checks import CheckReport, combine, inequality
from .dirichlet import SolverConfig
from .eigen import EigenConfig
from .grid import SHAPES, FracParams, build_grid, grid_from_mask_file

CHECK_ANCHORS = {
    "torsion_identity": "S_p(phi) = |phi|_1 for the torsion function",
    "bracket": ANCHORS["bracket"],
    "comparison": "e <= lambda_1^(1/(p-1)) phi pointwise",
    "ratio": ANCHORS["ratio"],
    "levelset_linfty": ANCHORS["levelset_linfty"],
    "ratio_lower": ANCHORS["ratio_lower"],
    "limit_profile": ANCHORS["limit_profile"],
    "faber_krahn": "|B_1|^(sp/N) lambda(B_1) <= |D|^(sp/N) lambda(D)",
    "faber_krahn_cheeger": "|B_1|^(s/N) h_s(B_1) <= |D|^(s/N) h_s(D)",
    "estimate_spread": "lambda_1, |phi|_inf^(1-p), |phi|_1^(1-p) agree as p -> 1",
    "spread_monotone": "spread of the three estimates is nonincreasing along the schedule",
    "h_s_agreement": "the three estimates at the smallest p approach h_s",
    "oracle_dominance": "level-set quotient >= exhaustive minimum over subsets",
}
CHECK_IDS = tuple(CHECK_ANCHORS)
_BALL_CHECKS = {"ratio", "levelset_linfty", "limit_profile", "faber_krahn", "faber_krahn_cheeger"}

CSV_COLUMNS = ("p", "lambda", "sup_estimate", "l1_estimate", "phi_l1", "phi_sup",
               "bracket_ok", "ratio_ok")
SERIES = (("lambda", "lambda_curve"), ("sup_estimate", "sup_curve"), ("l1_estimate", "l1_curve"))
DEFAULT_SCHEDULE = (2.0, 1.5, 1.25, 1.1, 1.05)


@dataclass(frozen=True)
class ExperimentConfig:
    shape: str = "square"
    n_per_axis: int = 32
    s: float = 0.5
    p_schedule: tuple = DEFAULT_SCHEDULE
    truncation_radius_factor: float = 4.0
    grad_tol: float = 1e-8
    energy_rel_tol: float = 1e-12
    identity_tol: float = 1e-6
    max_iters: int = 20000
    method: str = "newton"
    eigen_rel_tol: float = 1e-10
    eigen_max_iters: int = 500
    out_dir: str = "results"
    csv_name: str = "estimates.csv"
    summary_name: str = "summary.json"
    plot_name: str = "plot_data.csv"
    mask_path: str | None = None
    extent: float | None = None
    seed: int = 0
    checks: tuple | None = None
    trace: bool = False
    # Tolerances of the individual checks.
    identity_check_tol: float = 1e-6
    comparison_tol: float = 1e-8
    bracket_slack: float = 1e-9
    bound_slack: float = 0.05
    profile_slack: float = 0.10
    fk_slack: float = 0.05
    spread_tol: float = 0.10
    h_s_tol: float = 0.20

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.shape == "custom_mask" and not self.mask_path:
            raise ValueError("custom_mask needs mask_path")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        sched = tuple(float(p) for p in self.p_schedule)
        object.__setattr__(self, "p_schedule", sched)
        if sched and not min(sched) > 1.0:
            raise ValueError("every scheduled p must exceed 1")
        if self.truncation_radius_factor <= 1.0:
            raise ValueError("truncation_radius_factor must exceed 1")
        if self.checks is not None:
            checks = tuple(self.checks)
            unknown = [c for c in checks if c not in CHECK_IDS]
            if unknown:
                raise ValueError(f"unknown checks: {', '.join(unknown)}")
            object.__setattr__(self, "checks", checks)

    @property
    def dim(self) -> int:
        return 1 if self.shape == "interval" else 2

    def out_path(self, name: str) -> Path:
        return Path(self.out_dir) / name


def _parse_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.replace(";", ",").split(",") if tok.strip()]


def parse_schedule(text: str) -> tuple:
    return tuple(float(tok) for tok in _parse_list(text))


def parse_checks(text: str) -> tuple | None:
    items = _parse_list(text)
    if not items or items == ["auto"]:
        return None
    return tuple(items)


_KEYS = {
    "domain": {"shape": str, "n_per_axis": int, "s": float, "mask_path": str, "extent": float},
    "continuation": {"p_schedule": parse_schedule, "truncation_radius_factor": float},
    "solver": {"grad_tol": float, "energy_rel_tol": float, "identity_tol": float,
               "max_iters": int, "method": str, "eigen_rel_tol": float, "eigen_max_iters": int},
    "output": {"out_dir": str, "csv_name": str, "summary_name": str, "plot_name": str,
               "trace": None},
    "checks": {"enabled": parse_checks, "seed": int, "identity_check_tol": float,
               "comparison_tol": float, "bracket_slack": float, "bound_slack": float,
               "profile_slack": float, "fk_slack": float, "spread_tol": float, "h_s_tol": float},
}


def load_config(path, **overrides) -> ExperimentConfig:
    """Read an INI experiment file; keyword overrides replace file values."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ValueError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            conv = _KEYS[section][key]
            if conv is None:
                val = parser.getboolean(section, key)
            else:
                try:
                    val = conv(raw)
                except ValueError as exc:
                    raise ValueError(f"bad value for {section}.{key}: {raw!r}") from exc
            values["checks" if key == "enabled" else key] = val
    if values.get("mask_path") == "":
        values["mask_path"] = None
    mask = values.get("mask_path")
    if mask and not Path(mask).is_absolute():
        values["mask_path"] = str(Path(path).parent / mask)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def _build(cfg: ExperimentConfig):
    if cfg.shape == "custom_mask":
        grid = grid_from_mask_file(cfg.mask_path)
    else:
        grid = build_grid(cfg.shape, cfg.n_per_axis, cfg.dim, extent=cfg.extent)
    params = FracParams(grid.dim, cfg.s, max(cfg.p_schedule, default=2.0), strict=False)
    return grid, params


def default_checks(grid) -> tuple:
    """Every check that applies to ``grid``."""
    out = [c for c in CHECK_IDS if c != "oracle_dominance"]
    if grid.size <= ORACLE_LIMIT:
        out.append("oracle_dominance")
    return tuple(out)


def _format(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    return format(float(x), ".17g")


def _json(obj, indent=0) -> str:
    """JSON with 17 significant digits for floats and null for non-finite."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in obj) + f"\n{pad}]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g") if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def _key(p: float) -> str:
    return format(p, ".17g")


def build_checks(cfg: ExperimentConfig, grid, est: CheegerEstimates, enabled) -> list[CheckReport]:
    """Evaluate the enabled checks against a finished continuation."""
    done = est.completed
    have_ball = est.ball_volume is not None and all(p in est.ball_lambda for p in done)
    reports = []
    for cid in enabled:
        anchor = CHECK_ANCHORS[cid]
        if not done or (cid in _BALL_CHECKS and not have_ball):
            reports.append(CheckReport(cid, "fail", math.nan, math.nan, 0.0, anchor))
            continue
        if cid == "torsion_identity":
            worst = max(est.identity_error[p] for p in done)
            reports.append(inequality(cid, worst, cfg.identity_check_tol, 0.0, anchor))
        elif cid == "bracket":
            parts = []
            for p in done:
                lam = est.lambda_curve[p]
                parts.append(inequality(cid, est.sup_curve[p], lam, cfg.bracket_slack, anchor))
                upper = (est.domain_volume / est.phi_l1[p]) ** (p - 1.0)
                parts.append(inequality(cid, lam, upper, cfg.bracket_slack, anchor))
            reports.append(combine(cid, parts, anchor))
        elif cid == "comparison":
            worst = max(est.comparison_excess[p] for p in done)
            reports.append(inequality(cid, worst, cfg.comparison_tol, 0.0, anchor))
        elif cid == "ratio":
            parts = [inequality(cid, est.phi_sup[p] / est.phi_l1[p], est.ratio_bound[p],
                                cfg.bound_slack, anchor) for p in done]
            reports.append(combine(cid, parts, anchor))
        elif cid in ("levelset_linfty", "ratio_lower"):
            parts = []
            for p in done:
                prm = est.params.with_p(p)
                tor, eig = est.torsion[p], est.eigen[p]
                for u, f_sup in ((tor.phi, 1.0), (eig.eigenfunction, eig.lambda1)):
                    got = check_levelset_linfty_bound(grid, prm, u, f_sup, est.ball_lambda[p],
                                                      ball_volume=est.ball_volume,
                                                      slack=cfg.bound_slack)
                    parts.extend(r for r in got if r.check_id == cid)
            reports.append(combine(cid, parts, anchor))
        elif cid == "limit_profile":
            p = min(done)
            if est.ball_level_set_value is None:
                reports.append(CheckReport(cid, "fail", math.nan, math.nan, 0.0, anchor))
                continue
            got = check_levelset_linfty_bound(
                grid, est.params.with_p(p), est.torsion[p].phi, 1.0, est.ball_lambda[p],
                ball_volume=est.ball_volume, h_s=est.level_set_value,
                h_s_ball=est.ball_level_set_value, profile_slack=cfg.profile_slack)
            parts = [r for r in got if r.check_id in ("limit_profile", "ratio_lower")]
            reports.append(combine(cid, parts, anchor))
        elif cid == "faber_krahn":
            N, s = grid.dim, est.params.s
            parts = [inequality(cid, est.ball_volume ** (s * p / N) * est.ball_lambda[p],
                                est.domain_volume ** (s * p / N) * est.lambda_curve[p],
                                cfg.fk_slack, anchor) for p in done]
            reports.append(combine(cid, parts, anchor))
        elif cid == "faber_krahn_cheeger":
            N, s = grid.dim, est.params.s
            if est.ball_level_set_value is None:
                reports.append(CheckReport(cid, "fail", math.nan, math.nan, 0.0, anchor))
                continue
            reports.append(inequality(cid, est.ball_volume ** (s / N) * est.ball_level_set_value,
                                      est.domain_volume ** (s / N) * est.level_set_value,
                                      cfg.fk_slack, anchor))
        elif cid == "estimate_spread":
            reports.append(inequality(cid, est.spread(min(done)), cfg.spread_tol, 0.0, anchor))
        elif cid == "spread_monotone":
            spreads = [est.spread(p) for p in done]
            rise = max((b - a for a, b in zip(spreads, spreads[1:])), default=0.0)
            reports.append(inequality(cid, rise, 0.0, 0.0, anchor))
        elif cid == "h_s_agreement":
            p = min(done)
            h = est.h_s_estimate
            dev = max(abs(v - h) / h for v in (est.lambda_curve[p], est.sup_curve[p],
                                               est.l1_curve[p]))
            reports.append(inequality(cid, dev, cfg.h_s_tol, 0.0, anchor))
        elif cid == "oracle_dominance":
            if est.oracle_value is None:
                reports.append(CheckReport(cid, "fail", math.nan, math.nan, 0.0, anchor))
                continue
            # oracle <= level set, with a relative round-off allowance
            reports.append(inequality(cid, est.oracle_value, est.level_set_value, 1e-12, anchor))
    return reports


def write_estimates_csv(est: CheegerEstimates, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for p in est.completed:
            out.writerow([_format(p), _format(est.lambda_curve[p]), _format(est.sup_curve[p]),
                          _format(est.l1_curve[p]), _format(est.phi_l1[p]),
                          _format(est.phi_sup[p]), _format(est.bracket_ok[p]),
                          _format(est.ratio_ok.get(p))])


def emit_plot_data(estimates: CheegerEstimates, path) -> None:
    """Long-format rows (p, series_name, value): three curves plus the
    level-set and oracle reference lines, whose p column is empty."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(("p", "series_name", "value"))
        done = estimates.completed
        for p in done:
            for name, attr in SERIES:
                out.writerow([_format(p), name, _format(getattr(estimates, attr)[p])])
        if not done:
            return
        for name in ("level_set_value", "oracle_value"):
            val = getattr(estimates, name)
            if val is not None and math.isfinite(val):
                out.writerow(["", name, _format(val)])


def summary_dict(cfg: ExperimentConfig, grid, est: CheegerEstimates, reports) -> dict:
    curves = [{"p": p, "lambda": est.lambda_curve[p], "sup_estimate": est.sup_curve[p],
               "l1_estimate": est.l1_curve[p], "phi_l1": est.phi_l1[p], "phi_sup": est.phi_sup[p],
               "bracket_ok": est.bracket_ok[p], "ratio_ok": est.ratio_ok.get(p),
               "identity_error": est.identity_error[p],
               "comparison_excess": est.comparison_excess[p],
               "ball_lambda": est.ball_lambda.get(p)} for p in est.completed]
    return {
        "shape": grid.shape, "dim": grid.dim, "n_per_axis": grid.n_per_axis,
        "nodes": grid.size, "h": grid.h, "s": est.params.s, "seed": cfg.seed,
        "p_schedule": list(est.p_schedule),
        "domain_volume": est.domain_volume, "ball_volume": est.ball_volume,
        "level_set_value": est.level_set_value, "oracle_value": est.oracle_value,
        "h_s_estimate": est.h_s_estimate, "ball_level_set_value": est.ball_level_set_value,
        "curves": curves,
        "failures": {_key(p): msg for p, msg in est.failures.items()},
        "ball_failures": {_key(p): msg for p, msg in est.ball_failures.items()},
        "checks": [r.as_dict() for r in reports],
        "all_passed": all(r.passed for r in reports),
    }


def run_experiment(config: ExperimentConfig):
    """Run the configured pipeline and write its output files.

    Returns the :class:`CheegerEstimates` and the list of check reports.
    """
    grid, params = _build(config)
    enabled = config.checks if config.checks is not None else default_checks(grid)
    if "oracle_dominance" in enabled and grid.size > ORACLE_LIMIT:
        raise ValueError(f"oracle_dominance needs at most {ORACLE_LIMIT} nodes")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_dir = None
    if config.trace:
        trace_dir = out / "traces"
        trace_dir.mkdir(exist_ok=True)
    solver = SolverConfig(grad_tol=config.grad_tol, energy_rel_tol=config.energy_rel_tol,
                          identity_tol=config.identity_tol, max_iters=config.max_iters,
                          method=config.method)
    ccfg = ContinuationConfig(
        solver=solver,
        eigen=EigenConfig(rel_tol=config.eigen_rel_tol, max_iters=config.eigen_max_iters,
                          solver=solver),
        truncation_factor=config.truncation_radius_factor,
        with_ball=bool(_BALL_CHECKS.intersection(enabled)),
        bracket_slack=config.bracket_slack, ratio_slack=config.bound_slack,
        trace_dir=None if trace_dir is None else str(trace_dir))
    est = continuation_estimates(grid, params, config.p_schedule, ccfg)
    reports = build_checks(config, grid, est, enabled)
    write_estimates_csv(est, config.out_path(config.csv_name))
    emit_plot_data(est, config.out_path(config.plot_name))
    config.out_path(config.summary_name).write_text(
        _json(summary_dict(config, grid, est, reports)) + "\n")
    return est, reports

