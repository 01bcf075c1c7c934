"""Generation cost: quadratic fuel cost plus the rectified-sine valve-point term.

The valve term ``|e sin(f (p - p_min))|`` is smooth between consecutive zeros
of the sine and has a convex kink at each zero.  Everything here works on the
exact function; nothing is smoothed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import Unit


@dataclass(frozen=True)
class CostBreakdown:
    quadratic: float
    valve: float

    @property
    def total(self) -> float:
        return self.quadratic + self.valve


class OneSided(NamedTuple):
    left: float
    right: float


def quadratic_cost(unit: Unit, p: float) -> float:
    return unit.a * p * p + unit.b * p + unit.c


def valve_term(unit: Unit, p: float) -> float:
    if unit.e == 0.0:
        return 0.0
    return abs(unit.e * math.sin(unit.f * (p - unit.p_min)))


def valve_cost(unit: Unit, p: float) -> CostBreakdown:
    return CostBreakdown(quadratic_cost(unit, p), valve_term(unit, p))


def kink_points(unit: Unit, interval: tuple[float, float]) -> list[float]:
    """Non-differentiable points of the valve term strictly inside ``interval``."""
    lb, ub = interval
    if unit.e == 0.0 or unit.f == 0.0 or not lb < ub:
        return []
    period = math.pi / unit.f
    m_lo = math.floor((lb - unit.p_min) / period) + 1
    m_hi = math.ceil((ub - unit.p_min) / period) - 1
    out = []
    for m in range(m_lo, m_hi + 1):
        p = unit.p_min + m * period
        if lb < p < ub:
            out.append(p)
    return out


def _kink_index(unit: Unit, p: float) -> int | None:
    theta = unit.f * (p - unit.p_min)
    m = round(theta / math.pi)
    if abs(theta - m * math.pi) <= 1e-12 * max(1.0, abs(theta)):
        return m
    return None


def smooth_piece_derivative(unit: Unit, p: float) -> OneSided:
    """Derivative of the full cost; the two sides differ only at a kink."""
    base = 2.0 * unit.a * p + unit.b
    if unit.e == 0.0 or unit.f == 0.0:
        return OneSided(base, base)
    if _kink_index(unit, p) is not None:
        jump = unit.e * unit.f
        return OneSided(base - jump, base + jump)
    theta = unit.f * (p - unit.p_min)
    d = base + math.copysign(1.0, math.sin(theta)) * unit.e * unit.f * math.cos(theta)
    return OneSided(d, d)


class CostArrays:
    """Vectorised cost evaluation for a fixed list of units."""

    def __init__(self, units: Sequence[Unit]):
        self.a = np.array([u.a for u in units], dtype=float)
        self.b = np.array([u.b for u in units], dtype=float)
        self.c = np.array([u.c for u in units], dtype=float)
        self.e = np.array([u.e if u.f > 0 else 0.0 for u in units], dtype=float)
        self.f = np.array([u.f for u in units], dtype=float)
        self.p_min = np.array([u.p_min for u in units], dtype=float)
        self.valve = self.e > 0.0

    def __len__(self):
        return self.a.shape[0]

    def per_unit(self, p: np.ndarray) -> np.ndarray:
        q = self.a * p * p + self.b * p + self.c
        if self.valve.any():
            q = q + np.abs(self.e * np.sin(self.f * (p - self.p_min)))
        return q

    def total(self, p: np.ndarray) -> float:
        return float(np.sum(self.per_unit(p)))

    def quadratic_total(self, p: np.ndarray) -> float:
        return float(np.sum(self.a * p * p + self.b * p + self.c))

    def unit_cost(self, i: int, x):
        """Cost of unit ``i`` at scalar or array ``x``."""
        q = self.a[i] * x * x + self.b[i] * x + self.c[i]
        if self.valve[i]:
            q = q + np.abs(self.e[i] * np.sin(self.f[i] * (x - self.p_min[i])))
        return q

    def one_sided(self, p: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Left and right derivatives at ``p``.

        Points within ``tol`` MW of a kink are treated as sitting on it.
        """
        base = 2.0 * self.a * p + self.b
        if not self.valve.any():
            return base, base.copy()
        theta = self.f * (p - self.p_min)
        s = np.sin(theta)
        smooth = base + np.sign(s) * self.e * self.f * np.cos(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.round(theta / np.pi)
            dist = np.where(self.f > 0, np.abs(theta - m * np.pi) / np.where(self.f > 0, self.f, 1.0), np.inf)
        at_kink = self.valve & (dist <= tol)
        jump = self.e * self.f
        left = np.where(at_kink, base - jump, smooth)
        right = np.where(at_kink, base + jump, smooth)
        return left, right

    def second(self, p: np.ndarray) -> np.ndarray:
        """Second derivative away from kinks."""
        d2 = 2.0 * self.a
        if self.valve.any():
            d2 = d2 - self.e * self.f**2 * np.abs(np.sin(self.f * (p - self.p_min)))
        return d2
