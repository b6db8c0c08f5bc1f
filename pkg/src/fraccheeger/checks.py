"""Inequality verdicts shared by the estimators and the experiment driver."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one inequality ``left <= right * (1 + slack)``.

    ``anchor`` names the inequality being tested as a formula string.
    """

    check_id: str
    status: str
    left: float
    right: float
    slack: float
    anchor: str

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {"check_id": self.check_id, "status": self.status, "left": self.left,
                "right": self.right, "slack": self.slack, "anchor": self.anchor}


def inequality(check_id: str, left: float, right: float, slack: float, anchor: str) -> CheckReport:
    """Verdict for ``left <= right * (1 + slack)``; NaN on either side fails."""
    left, right = float(left), float(right)
    ok = not (math.isnan(left) or math.isnan(right)) and left <= right * (1.0 + slack)
    return CheckReport(check_id, "pass" if ok else "fail", left, right, float(slack), anchor)


def combine(check_id: str, reports, anchor: str) -> CheckReport:
    """Fold several verdicts into one, reporting the worst ratio left/right."""
    reports = list(reports)
    if not reports:
        return CheckReport(check_id, "fail", math.nan, math.nan, 0.0, anchor)

    def excess(r):
        if r.right == 0:
            return math.inf if r.left > 0 else 0.0
        return r.left / r.right - 1.0 - r.slack

    worst = max(reports, key=excess)
    status = "pass" if all(r.passed for r in reports) else "fail"
    return CheckReport(check_id, status, worst.left, worst.right, worst.slack, anchor)
