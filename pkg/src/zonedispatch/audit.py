"""Independent re-evaluation of reported dispatches.

Given the outputs some method published, recompute the transmission loss
from the case's B-coefficients, the power-balance violation that implies,
and the cost.  Violation is ``sum(p) - (demand + loss)``: negative means the
reported generation falls short.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import CostArrays
from .loss import transmission_loss
from .model import DimensionMismatch, DispatchError, DispatchSolution, SystemCase

REFERENCE_GHZ = 2.67


class NonPositiveReference(DispatchError, ValueError):
    pass


@dataclass
class ReportedDispatch:
    method_name: str
    p: np.ndarray
    reported_loss: Optional[float] = None
    reported_cost: Optional[float] = None
    cpu_ghz: Optional[float] = None
    cpu_time_s: Optional[float] = None
    expected: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)


@dataclass
class AuditReport:
    method_name: str
    calc_loss: float
    required: float
    output_sum: float
    violation: float
    recomputed_cost: float
    bound_violations: list = field(default_factory=list)
    act: Optional[float] = None
    error: Optional[str] = None


def adjusted_cpu_time(given_ghz: float, given_time_s: float, ref_time_s: float) -> float:
    """CPU time scaled to a 2.67 GHz machine, relative to a reference run."""
    if not ref_time_s > 0:
        raise NonPositiveReference(f"reference time must be positive, got {ref_time_s}")
    return (given_ghz / REFERENCE_GHZ) * (given_time_s / ref_time_s)


def _bound_problems(case: SystemCase, p: np.ndarray, tol: float = 1e-3) -> list[str]:
    out = []
    for u, x in zip(case.units, p):
        if x < u.p_min - tol or x > u.p_max + tol:
            out.append(f"unit {u.id}: {x:.4f} MW outside [{u.p_min:g}, {u.p_max:g}]")
            continue
        for lo, hi in zip(u.zones[:-1], u.zones[1:]):
            if lo.upper + tol < x < hi.lower - tol:
                out.append(f"unit {u.id}: {x:.4f} MW inside prohibited zone ({lo.upper:g}, {hi.lower:g})")
    return out


def audit_dispatch(case: SystemCase, rd: ReportedDispatch, *, act_ref: Optional[float] = None) -> AuditReport:
    p = np.asarray(rd.p, dtype=float)
    if p.shape != (case.n_units,):
        raise DimensionMismatch(f"{rd.method_name}: {p.size} outputs for a {case.n_units}-unit case")
    calc_loss = transmission_loss(case.loss, p) if case.loss is not None else 0.0
    required = case.demand + calc_loss
    output_sum = float(np.sum(p))
    act = None
    if act_ref is not None and rd.cpu_ghz is not None and rd.cpu_time_s is not None:
        act = adjusted_cpu_time(rd.cpu_ghz, rd.cpu_time_s, act_ref)
    return AuditReport(
        method_name=rd.method_name,
        calc_loss=calc_loss,
        required=required,
        output_sum=output_sum,
        violation=output_sum - required,
        recomputed_cost=CostArrays(case.units).total(p),
        bound_violations=_bound_problems(case, p),
        act=act,
    )


def audit_solution(case: SystemCase, sol: DispatchSolution, name: str = "this engine") -> AuditReport:
    return audit_dispatch(case, ReportedDispatch(name, sol.p))


def audit_table(
    case: SystemCase, rows: Sequence[ReportedDispatch], *, act_ref: Optional[float] = None
) -> list[AuditReport]:
    """Audit every row and rank by |violation|, largest first.

    Rows that cannot be audited are kept at the end with ``error`` set.
    """
    good, bad = [], []
    for rd in rows:
        try:
            good.append(audit_dispatch(case, rd, act_ref=act_ref))
        except DispatchError as exc:
            bad.append(
                AuditReport(rd.method_name, math.nan, math.nan, math.nan, math.nan, math.nan, error=str(exc))
            )
    good.sort(key=lambda r: -abs(r.violation))  # list.sort is stable
    return good + bad


def _cell(v, digits):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    text = f"{v:.{digits}f}"
    return text[1:] if text.startswith("-") and float(text) == 0 else text


def format_table(reports: Sequence[AuditReport]) -> str:
    headers = ["Method", "Calc.Pl", "P_D+P_L", "Output", "Viol.", "Cost", "ACT", "Flags"]
    lines = []
    for r in reports:
        flags = r.error or ("; ".join(r.bound_violations) if r.bound_violations else "")
        lines.append(
            [
                r.method_name,
                _cell(r.calc_loss, 4),
                _cell(r.required, 4),
                _cell(r.output_sum, 4),
                _cell(r.violation, 4),
                _cell(r.recomputed_cost, 2),
                _cell(r.act, 2),
                flags,
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h) for i, h in enumerate(headers)]
    out = []
    for row in [headers] + lines:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:-1], widths[1:-1])] + [row[-1]]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out)


def reports_to_json(reports: Sequence[AuditReport]) -> str:
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    return json.dumps([clean(asdict(r)) for r in reports], indent=1)
