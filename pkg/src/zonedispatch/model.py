"""Domain types for dispatch instances and their structural validation.

All power quantities are in MW, costs in $/h.  Ramp limits and reserve caps
that are absent are represented by ``math.inf``; a unit without a previous
output (``p_prev is None``) has no ramp window at all.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

INF = math.inf


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class DispatchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DispatchError, ValueError):
    """A case violates a structural invariant."""


class OverlappingZones(ValidationError):
    pass


class ZoneOutsideCapacity(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InsufficientCapacity(ValidationError):
    pass


class Infeasible(DispatchError):
    """No dispatch satisfies the constraints (for a subproblem or a whole case)."""


class NotConverged(DispatchError):
    """Iteration cap hit on every start; ``best`` holds the best iterate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatingZone:
    lower: float
    upper: float

    def contains(self, p: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= p <= self.upper + tol


@dataclass(frozen=True)
class Unit:
    """A committed thermal unit.

    ``zones`` are the feasible operating zones in increasing order; the gaps
    between them are the prohibited zones.
    """

    id: str
    a: float
    b: float
    c: float
    p_min: float
    p_max: float
    e: float = 0.0
    f: float = 0.0
    p_prev: Optional[float] = None
    ramp_up: float = INF
    ramp_down: float = INF
    reserve_cap: float = INF
    zones: tuple[OperatingZone, ...] = ()

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    @property
    def has_valve(self) -> bool:
        return self.e > 0.0 and self.f > 0.0

    def ramp_window(self) -> tuple[float, float]:
        if self.p_prev is None:
            return (-INF, INF)
        return (self.p_prev - self.ramp_down, self.p_prev + self.ramp_up)

    def zone_of(self, p: float, tol: float = 1e-9) -> Optional[int]:
        for k, z in enumerate(self.zones):
            if z.contains(p, tol):
                return k
        return None


@dataclass(frozen=True, eq=False)
class LossModel:
    """Kron loss coefficients, all in per-unit on ``base_mva``."""

    B: np.ndarray
    B0: np.ndarray
    B00: float = 0.0
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "B", np.array(self.B, dtype=float))
        object.__setattr__(self, "B0", np.array(self.B0, dtype=float))

    @property
    def size(self) -> int:
        return self.B0.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LossModel):
            return NotImplemented
        return (
            np.array_equal(self.B, other.B)
            and np.array_equal(self.B0, other.B0)
            and self.B00 == other.B00
            and self.base_mva == other.base_mva
        )

    __hash__ = None


@dataclass(frozen=True)
class SystemCase:
    units: tuple[Unit, ...]
    demand: float
    reserve_req: float = 0.0
    loss: Optional[LossModel] = None
    name: str = ""
    provenance: tuple[tuple[str, str], ...] = ()

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def has_valve(self) -> bool:
        return any(u.has_valve for u in self.units)

    @property
    def zone_product(self) -> int:
        return math.prod(u.n_zones for u in self.units)

    def without_loss(self) -> "SystemCase":
        return replace(self, loss=None)

    def without_valve(self) -> "SystemCase":
        return replace(self, units=tuple(replace(u, e=0.0, f=0.0) for u in self.units))


@dataclass(frozen=True)
class ZoneAssignment:
    """One chosen zone index per unit (0-based)."""

    zone_index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "zone_index", tuple(int(k) for k in self.zone_index))

    def __len__(self):
        return len(self.zone_index)

    def __iter__(self):
        return iter(self.zone_index)

    def __getitem__(self, i):
        return self.zone_index[i]

    def check(self, case: SystemCase) -> None:
        if len(self.zone_index) != case.n_units:
            raise DimensionMismatch(
                f"assignment has {len(self.zone_index)} entries, case has {case.n_units} units"
            )
        for i, (k, u) in enumerate(zip(self.zone_index, case.units)):
            if not 0 <= k < u.n_zones:
                raise ValidationError(f"unit {u.id} (index {i}): zone {k} out of range [0, {u.n_zones})")


@dataclass
class DispatchSolution:
    p: np.ndarray
    assignment: ZoneAssignment
    loss_mw: float
    cost: float
    reserve: np.ndarray
    balance_residual: float
    solve_time: float = 0.0
    converged: bool = True
    starts: int = 0
    stats: Optional[object] = None

    @property
    def output_sum(self) -> float:
        return float(np.sum(self.p))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def effective_bounds(unit: Unit, k: int) -> tuple[float, float]:
    """Zone ``k`` intersected with the capacity limits and the ramp window.

    The result may be empty (``lb > ub``), meaning the zone cannot be reached
    from ``p_prev`` this period.
    """
    zone = unit.zones[k]
    lo_ramp, hi_ramp = unit.ramp_window()
    lb = max(zone.lower, unit.p_min, lo_ramp)
    ub = min(zone.upper, unit.p_max, hi_ramp)
    return (lb, ub)


def is_empty(bounds: tuple[float, float]) -> bool:
    return bounds[0] > bounds[1]


def reachable_zones(unit: Unit) -> list[int]:
    return [k for k in range(unit.n_zones) if not is_empty(effective_bounds(unit, k))]


def assignment_bounds(case: SystemCase, assignment: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    lb = np.empty(case.n_units)
    ub = np.empty(case.n_units)
    for i, (u, k) in enumerate(zip(case.units, assignment)):
        lb[i], ub[i] = effective_bounds(u, k)
    return lb, ub


def _validate_unit(i: int, u: Unit) -> Unit:
    label = f"unit {u.id} (index {i})"
    for name in ("a", "b", "c", "e", "f", "p_min", "p_max"):
        if not math.isfinite(getattr(u, name)):
            raise ValidationError(f"{label}: {name} must be finite")
    for name in ("e", "f", "ramp_up", "ramp_down", "reserve_cap"):
        if getattr(u, name) < 0:
            raise ValidationError(f"{label}: {name} must be >= 0")
    if u.p_min > u.p_max:
        raise ValidationError(f"{label}: p_min {u.p_min} > p_max {u.p_max}")

    zones = u.zones or (OperatingZone(u.p_min, u.p_max),)
    for k, z in enumerate(zones):
        if z.lower > z.upper:
            raise ValidationError(f"{label}: zone {k} has lower {z.lower} > upper {z.upper}")
    zones = tuple(sorted(zones, key=lambda z: (z.lower, z.upper)))
    for k in range(len(zones) - 1):
        if not zones[k].upper < zones[k + 1].lower:
            raise OverlappingZones(
                f"{label}: zones {k} ({zones[k].lower}, {zones[k].upper}) and {k + 1} "
                f"({zones[k + 1].lower}, {zones[k + 1].upper}) overlap"
            )
    if zones[0].lower != u.p_min:
        raise ZoneOutsideCapacity(f"{label}: first zone starts at {zones[0].lower}, p_min is {u.p_min}")
    if zones[-1].upper != u.p_max:
        raise ZoneOutsideCapacity(f"{label}: last zone ends at {zones[-1].upper}, p_max is {u.p_max}")
    if zones != u.zones:
        u = replace(u, zones=zones)
    return u


def validate_case(raw_case: SystemCase) -> SystemCase:
    """Check every structural invariant and return the normalised case.

    Zones are sorted by lower bound and an asymmetric B matrix is replaced by
    its symmetric part.  Validating an already valid case returns an equal case.
    """
    if not raw_case.units:
        raise ValidationError("case has no units")
    if not math.isfinite(raw_case.demand) or raw_case.demand < 0:
        raise ValidationError(f"demand must be finite and >= 0, got {raw_case.demand}")
    if raw_case.reserve_req < 0:
        raise ValidationError("reserve requirement must be >= 0")

    ids = [u.id for u in raw_case.units]
    if len(set(ids)) != len(ids):
        raise ValidationError("unit ids must be unique")
    units = tuple(_validate_unit(i, u) for i, u in enumerate(raw_case.units))

    cap = sum(u.p_max for u in units)
    if cap < raw_case.demand:
        raise InsufficientCapacity(f"total capacity {cap} MW is below demand {raw_case.demand} MW")

    loss = raw_case.loss
    if loss is not None:
        n = len(units)
        if loss.B.shape != (n, n):
            raise DimensionMismatch(f"B has shape {loss.B.shape}, expected {(n, n)}")
        if loss.B0.shape != (n,):
            raise DimensionMismatch(f"B0 has length {loss.B0.shape}, expected {n}")
        if loss.base_mva <= 0:
            raise ValidationError("base_mva must be positive")
        asym = np.max(np.abs(loss.B - loss.B.T)) if n else 0.0
        if asym > 1e-12:
            warnings.warn(f"B matrix asymmetric (max |B-B^T| = {asym:.3g}); using (B+B^T)/2", stacklevel=2)
            loss = replace(loss, B=(loss.B + loss.B.T) / 2)

    if units == raw_case.units and loss is raw_case.loss:
        return raw_case
    return replace(raw_case, units=units, loss=loss)


def make_unit(
    id,
    a,
    b,
    c,
    p_min,
    p_max,
    *,
    e=0.0,
    f=0.0,
    p_prev=None,
    ramp_up=INF,
    ramp_down=INF,
    reserve_cap=INF,
    prohibited: Iterable[tuple[float, float]] = (),
    zones: Iterable[tuple[float, float]] = (),
) -> Unit:
    """Convenience constructor taking either prohibited intervals or feasible zones."""
    zones = [OperatingZone(float(lo), float(hi)) for lo, hi in zones]
    prohibited = sorted(prohibited)
    if prohibited:
        if zones:
            raise ValueError("give either zones or prohibited intervals, not both")
        lo = p_min
        for pl, ph in prohibited:
            zones.append(OperatingZone(float(lo), float(pl)))
            lo = ph
        zones.append(OperatingZone(float(lo), float(p_max)))
    return Unit(
        id=str(id),
        a=float(a),
        b=float(b),
        c=float(c),
        p_min=float(p_min),
        p_max=float(p_max),
        e=float(e),
        f=float(f),
        p_prev=None if p_prev is None else float(p_prev),
        ramp_up=float(ramp_up),
        ramp_down=float(ramp_down),
        reserve_cap=float(reserve_cap),
        zones=tuple(zones),
    )
