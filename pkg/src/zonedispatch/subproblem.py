"""Continuous dispatch for a fixed zone assignment.

Once every unit's zone is fixed the mixed-integer terms collapse: each unit
has a single interval (its zone cut by the ramp window) and a single cost
function.  What remains is a separable, possibly non-convex objective under
one coupling equality (demand plus Kron loss) and the spinning-reserve
constraint.

Three solvers live here:

* :func:`lambda_dispatch` - exact equal-incremental-cost dispatch for the
  lossless quadratic case, with an outer multiplier on the reserve constraint.
* a coordinated solve for valve-free cases with losses: for each trial price
  the penalised coordination equations are a box-constrained linear system,
  and the price is found by a scalar root search.
* a pairwise transfer descent for the valve-point case.  Every move shifts
  output from one unit to another while the receiving unit's output is
  recomputed in closed form so the balance with losses holds exactly.  The
  line search visits every kink of both units on the path and polishes the
  best smooth segment with a bounded scalar minimiser.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .cost import CostArrays, kink_points
from .loss import MWLoss
from .model import (
    Infeasible,
    NotConverged,
    SystemCase,
    Unit,
    ZoneAssignment,
    assignment_bounds,
)

logger = logging.getLogger(__name__)

_PENALTY = 1e6  # $/h per MW of reserve shortfall inside line searches


@dataclass
class SolveOptions:
    balance_tol: float = 1e-4
    n_starts: Optional[int] = None  # None: 8 without valve points, 64 with
    max_iter: int = 2000
    rng_seed: int = 0
    enum_threshold: int = 4096
    prune: bool = True
    threads: Optional[int] = None
    kink_tol: float = 1e-9
    refine_kicks: int = 100  # perturbations spent on each record-setting start (valve cases)

    def __post_init__(self):
        if not self.balance_tol > 0:
            raise ValueError("balance_tol must be positive")
        if self.n_starts is not None and self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")

    def starts_for(self, case: SystemCase) -> int:
        if self.n_starts is not None:
            return self.n_starts
        return 64 if case.has_valve else 8


@dataclass
class SubproblemResult:
    p: np.ndarray
    cost: float
    loss_mw: float
    balance_residual: float
    converged: bool
    starts_used: int
    reserve: float = math.inf
    best_start: int = 0
    iterations: int = 0


def reserve_available(unit: Unit, p: float) -> float:
    return min(unit.p_max - p, unit.reserve_cap)


# ---------------------------------------------------------------------------
# Exact lossless quadratic dispatch
# ---------------------------------------------------------------------------


def _response(lam, mu, a, b, lb, ub, theta):
    """Per-unit minimiser of a p^2 + b p + mu max(0, p - theta) - lam p on [lb, ub]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = a > 0
        safe_a = np.where(pos, 2.0 * a, 1.0)
        p1 = np.where(pos, (lam - b) / safe_a, np.where(lam > b, np.inf, -np.inf))
        p2 = np.where(pos, (lam - mu - b) / safe_a, np.where(lam > b + mu, np.inf, -np.inf))
    p = np.where(p1 <= theta, p1, np.where(p2 >= theta, p2, theta))
    return np.clip(p, lb, ub)


def _balance_price(demand, mu, a, b, lb, ub, theta):
    lo = float(np.min(2 * a * lb + b)) - 1.0
    hi = float(np.max(2 * a * ub + b)) + mu + 1.0
    s_lo = _response(lo, mu, a, b, lb, ub, theta).sum()
    s_hi = _response(hi, mu, a, b, lb, ub, theta).sum()
    while s_lo > demand:
        lo = lo - 2 * abs(lo) - 1
        s_lo = _response(lo, mu, a, b, lb, ub, theta).sum()
    while s_hi < demand:
        hi = hi + 2 * abs(hi) + 1
        s_hi = _response(hi, mu, a, b, lb, ub, theta).sum()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = _response(mid, mu, a, b, lb, ub, theta).sum()
        if s < demand:
            lo, s_lo = mid, s
        else:
            hi, s_hi = mid, s
    p_lo = _response(lo, mu, a, b, lb, ub, theta)
    p_hi = _response(hi, mu, a, b, lb, ub, theta)
    span = p_hi.sum() - p_lo.sum()
    t = 0.0 if span <= 0 else (demand - p_lo.sum()) / span
    p = p_lo + t * (p_hi - p_lo)
    return p, 0.5 * (lo + hi)


def lambda_dispatch(
    a,
    b,
    lb,
    ub,
    demand: float,
    *,
    p_max=None,
    reserve_cap=None,
    reserve_req: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Equal-incremental-cost dispatch of quadratic units on boxes.

    Returns ``(p, price)``.  When a reserve requirement is given the reserve
    is treated through a second multiplier: units whose headroom is the
    binding term of ``min(p_max - p, cap)`` see their marginal cost raised by
    that multiplier, which is found by bisection.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    if np.any(lb > ub):
        raise Infeasible("empty unit interval")
    tol = 1e-9 * max(1.0, abs(demand))
    if lb.sum() > demand + tol or ub.sum() < demand - tol:
        raise Infeasible(f"demand {demand:.4f} outside [{lb.sum():.4f}, {ub.sum():.4f}]")

    if reserve_req > 0 and p_max is not None:
        p_max = np.asarray(p_max, float)
        cap = np.full_like(p_max, np.inf) if reserve_cap is None else np.asarray(reserve_cap, float)
        theta = p_max - cap
    else:
        theta = np.full_like(a, np.inf)
        cap = None

    p, lam = _balance_price(demand, 0.0, a, b, lb, ub, theta)
    if cap is None:
        return p, lam

    def reserve(x):
        return float(np.sum(np.minimum(p_max - x, cap)))

    if reserve(p) >= reserve_req - 1e-9:
        return p, lam
    mu_lo, mu_hi = 0.0, 1.0
    while True:
        q, _ = _balance_price(demand, mu_hi, a, b, lb, ub, theta)
        if reserve(q) >= reserve_req - 1e-9:
            break
        mu_lo, mu_hi = mu_hi, mu_hi * 4
        if mu_hi > 1e12:
            raise Infeasible(f"spinning reserve {reserve_req} MW cannot be met")
    for _ in range(200):
        mid = 0.5 * (mu_lo + mu_hi)
        if mid <= mu_lo or mid >= mu_hi:
            break
        q, _ = _balance_price(demand, mid, a, b, lb, ub, theta)
        if reserve(q) >= reserve_req - 1e-9:
            mu_hi = mid
        else:
            mu_lo = mid
    return _balance_price(demand, mu_hi, a, b, lb, ub, theta)


def _resolve_bounds(case, assignment, bounds):
    if bounds is not None:
        lb, ub = (np.asarray(x, float) for x in bounds)
    elif assignment is not None:
        assignment = ZoneAssignment(tuple(assignment))
        assignment.check(case)
        lb, ub = assignment_bounds(case, assignment)
    else:
        raise ValueError("need an assignment or explicit bounds")
    if np.any(lb > ub):
        raise Infeasible("assignment contains a ramp-unreachable zone")
    return lb, ub


def relaxed_dispatch(case: SystemCase, lb, ub) -> tuple[np.ndarray, float]:
    """Valve-free, loss-free dispatch on the given boxes; returns ``(p, cost)``."""
    costs = CostArrays(case.units)
    p, _ = lambda_dispatch(
        costs.a,
        costs.b,
        lb,
        ub,
        case.demand,
        p_max=np.array([u.p_max for u in case.units]),
        reserve_cap=np.array([u.reserve_cap for u in case.units]),
        reserve_req=case.reserve_req,
    )
    return p, costs.quadratic_total(p)


def solve_lossless_quadratic(
    case: SystemCase,
    assignment: Optional[Sequence[int]] = None,
    bounds=None,
    opts: Optional[SolveOptions] = None,
) -> SubproblemResult:
    """Exact dispatch for a case without losses or valve points."""
    if case.loss is not None:
        raise ValueError("solve_lossless_quadratic requires a case without a loss model")
    if case.has_valve:
        raise ValueError("solve_lossless_quadratic requires zero valve-point amplitudes")
    lb, ub = _resolve_bounds(case, assignment, bounds)
    p, cost = relaxed_dispatch(case, lb, ub)
    res = float(p.sum() - case.demand)
    return SubproblemResult(
        p=p,
        cost=cost,
        loss_mw=0.0,
        balance_residual=abs(res),
        converged=True,
        starts_used=1,
        reserve=_reserve_total(case, p),
    )


def _reserve_total(case, p):
    return float(sum(min(u.p_max - x, u.reserve_cap) for u, x in zip(case.units, p)))


# ---------------------------------------------------------------------------
# General subproblem
# ---------------------------------------------------------------------------


class _Subproblem:
    def __init__(self, case: SystemCase, lb: np.ndarray, ub: np.ndarray, opts: SolveOptions):
        self.case = case
        self.n = case.n_units
        self.lb = lb
        self.ub = ub
        self.costs = CostArrays(case.units)
        self.loss = MWLoss(case.loss) if case.loss is not None else None
        self.demand = case.demand
        self.p_max = np.array([u.p_max for u in case.units])
        self.cap = np.array([u.reserve_cap for u in case.units])
        self.reserve_req = case.reserve_req
        self.opts = opts
        self.kinks = [
            np.array(kink_points(u, (lo, hi))) for u, lo, hi in zip(case.units, lb, ub)
        ]
        self.valve = bool(self.costs.valve.any())
        self.iterations = 0

    # -- basic quantities ---------------------------------------------------

    def loss_value(self, p):
        return 0.0 if self.loss is None else self.loss.value(p)

    def loss_grad(self, p):
        return np.zeros(self.n) if self.loss is None else self.loss.gradient(p)

    def residual(self, p):
        return float(p.sum() - self.demand - self.loss_value(p))

    def reserve(self, p):
        return float(np.sum(np.minimum(self.p_max - p, self.cap)))

    def reserve_short(self, p):
        if self.reserve_req <= 0:
            return 0.0
        return max(0.0, self.reserve_req - self.reserve(p))

    def objective(self, p):
        return self.costs.total(p) + _PENALTY * self.reserve_short(p)

    # -- balance helpers ------------------------------------------------------

    def _pair_terms(self, p, i, j):
        """Coefficients of the balance equation in (p_i, p_j) with others fixed."""
        others = p.sum() - p[i] - p[j]
        if self.loss is None:
            return others, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
        Bm = self.loss.Bm
        g = self.loss.gradient(p)
        r_i = g[i] - 2 * Bm[i, i] * p[i] - 2 * Bm[i, j] * p[j]
        r_j = g[j] - 2 * Bm[j, j] * p[j] - 2 * Bm[i, j] * p[i]
        pair_loss = (
            Bm[i, i] * p[i] ** 2 + Bm[j, j] * p[j] ** 2 + 2 * Bm[i, j] * p[i] * p[j] + r_i * p[i] + r_j * p[j]
        )
        rest = self.loss.value(p) - pair_loss
        return others, Bm[i, i], Bm[j, j], Bm[i, j], r_i, r_j, rest

    def _solve_partner(self, x, terms, swap=False):
        """Output of the second unit that restores balance given the first at ``x``."""
        others, bii, bjj, bij, r_i, r_j, rest = terms
        if swap:
            bii, bjj, r_i, r_j = bjj, bii, r_j, r_i
        A = -bjj
        Bq = 1.0 - 2.0 * bij * x - r_j
        C = x + others - self.demand - bii * x * x - r_i * x - rest
        disc = Bq * Bq - 4.0 * A * C
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(disc)
            y = -2.0 * C / (Bq + np.copysign(root, Bq))
        return np.where(disc >= 0, y, np.nan)

    def rebalance_single(self, p, j):
        """Set ``p[j]`` so the balance holds exactly, others fixed."""
        k = (j + 1) % self.n if self.n > 1 else j
        if self.n == 1:
            if self.loss is None:
                return self.demand
            A = -self.loss.Bm[0, 0]
            Bq = 1.0 - self.loss.B0[0]
            C = -self.demand - self.loss.K
            disc = Bq * Bq - 4 * A * C
            return float(-2 * C / (Bq + math.copysign(math.sqrt(max(disc, 0.0)), Bq)))
        terms = self._pair_terms(p, k, j)
        return float(self._solve_partner(p[k], terms))

    def restore(self, p0):
        """Scale all units along their ranges until the balance holds."""
        span = self.ub - self.lb

        def at(s):
            return np.clip(p0 + s * span, self.lb, self.ub)

        r_lo, r_hi = self.residual(at(-1.0)), self.residual(at(1.0))
        if r_lo > 0 or r_hi < 0:
            raise Infeasible("balance cannot be met within the unit intervals")
        s = brentq(lambda s: self.residual(at(s)), -1.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        p = at(s)
        return self.polish_balance(p)

    def polish_balance(self, p):
        p = p.copy()
        free = np.flatnonzero((p > self.lb + 1e-9) & (p < self.ub - 1e-9))
        order = free[np.argsort(-(self.ub - self.lb)[free])] if free.size else np.argsort(-(self.ub - self.lb))
        for j in order:
            y = self.rebalance_single(p, j)
            if np.isfinite(y) and self.lb[j] - 1e-12 <= y <= self.ub[j] + 1e-12:
                p[j] = min(max(y, self.lb[j]), self.ub[j])
                break
        return p

    # -- reserve repair -------------------------------------------------------

    def repair_reserve(self, p):
        if self.reserve_short(p) <= 0:
            return p
        p = p.copy()
        for _ in range(4 * self.n + 4):
            short = self.reserve_short(p)
            if short <= 1e-9:
                return p
            head = self.p_max - p
            down = np.flatnonzero((head < self.cap) & (p > self.lb + 1e-12))
            up = np.flatnonzero((head > self.cap) & (p < self.ub - 1e-12))
            if down.size == 0 or up.size == 0:
                break
            i = down[np.argmax(self.costs.one_sided(p)[0][down])]
            j = up[np.argmin(self.costs.one_sided(p)[1][up])]
            delta = min(short, p[i] - self.lb[i], self.cap[i] - head[i], head[j] - self.cap[j], self.ub[j] - p[j])
            if delta <= 0:
                break
            terms = self._pair_terms(p, i, j)
            y = float(self._solve_partner(p[i] - delta, terms))
            if not np.isfinite(y) or y > self.ub[j] + 1e-12:
                break
            p[i] -= delta
            p[j] = min(y, self.ub[j])
        if self.reserve_short(p) > 1e-9:
            raise Infeasible("spinning reserve cannot be repaired from this start")
        return p

    # -- coordinated solve for smooth cost -------------------------------------

    def coordinated(self, p0):
        """Exact KKT point for valve-free costs: 2 a p + b = lam (1 - dP_L/dp)."""
        c = self.costs
        if self.loss is None:
            p, _ = lambda_dispatch(
                c.a, c.b, self.lb, self.ub, self.demand,
                p_max=self.p_max, reserve_cap=self.cap, reserve_req=self.reserve_req,
            )
            return p
        Bm, B0 = self.loss.Bm, self.loss.B0
        n = self.n
        state = {"p": np.clip(p0, self.lb, self.ub)}

        def response(lam):
            M = 2.0 * np.diag(c.a) + 2.0 * lam * Bm
            rhs = lam * (1.0 - B0) - c.b
            p = state["p"].copy()
            at_lb = p <= self.lb
            at_ub = p >= self.ub
            for _ in range(3 * n + 3):
                free = ~(at_lb | at_ub)
                fixed = ~free
                p[at_lb] = self.lb[at_lb]
                p[at_ub] = self.ub[at_ub]
                if free.any():
                    r = rhs[free] - M[np.ix_(free, fixed)] @ p[fixed]
                    p[free] = np.linalg.solve(M[np.ix_(free, free)], r)
                grad = M @ p - rhs
                new_lb = at_lb.copy()
                new_ub = at_ub.copy()
                new_lb |= free & (p < self.lb)
                new_ub |= free & (p > self.ub)
                new_lb &= ~(at_lb & (grad < -1e-12))
                new_ub &= ~(at_ub & (grad > 1e-12))
                if np.array_equal(new_lb, at_lb) and np.array_equal(new_ub, at_ub):
                    break
                at_lb, at_ub = new_lb, new_ub
            p = np.clip(p, self.lb, self.ub)
            state["p"] = p
            return p

        def f(lam):
            return self.residual(response(lam))

        lo = float(np.min(2 * c.a * self.lb + c.b))
        hi = float(np.max(2 * c.a * self.ub + c.b))
        lo = min(lo, 0.5 * lo) if lo > 0 else lo - 1.0
        hi = 2.0 * hi + 1.0
        f_lo, f_hi = f(lo), f(hi)
        tries = 0
        while f_hi < 0 and tries < 60:
            hi = 2 * hi + 1
            f_hi = f(hi)
            tries += 1
        while f_lo > 0 and tries < 120:
            lo = lo - 2 * abs(lo) - 1
            f_lo = f(lo)
            tries += 1
        if f_lo > 0 or f_hi < 0:
            raise Infeasible("no price balances demand and losses")
        lam = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        return self.polish_balance(response(lam))

    # -- Lagrangian seed for valve costs --------------------------------------

    def _candidates(self):
        cand, owner = [], []
        for i in range(self.n):
            pts = np.concatenate(([self.lb[i], self.ub[i]], self.kinks[i]))
            cand.append(pts)
            owner.append(np.full(pts.size, i))
        cand = np.concatenate(cand)
        owner = np.concatenate(owner)
        order = np.lexsort((cand, owner))
        cand, owner = cand[order], owner[order]
        starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
        vals = self.costs.a[owner] * cand**2 + self.costs.b[owner] * cand + self.costs.c[owner]
        vals = vals + np.abs(self.costs.e[owner] * np.sin(self.costs.f[owner] * (cand - self.costs.p_min[owner])))
        return cand, owner, starts, vals

    def seed(self):
        """Price-based start: every unit picks its best kink, bound or smooth optimum."""
        c = self.costs
        cand, owner, starts, vals = self._candidates()
        smooth = ~c.valve

        def response(mu):
            scores = vals - mu[owner] * cand
            p = np.empty(self.n)
            for k, s in enumerate(starts):
                e = starts[k + 1] if k + 1 < len(starts) else cand.size
                p[owner[s]] = cand[s + int(np.argmin(scores[s:e]))]
            if smooth.any():
                with np.errstate(divide="ignore", invalid="ignore"):
                    q = np.where(c.a > 0, (mu - c.b) / np.where(c.a > 0, 2 * c.a, 1.0), np.where(mu > c.b, np.inf, -np.inf))
                p[smooth] = np.clip(q, self.lb, self.ub)[smooth]
            return p

        p = np.clip(0.5 * (self.lb + self.ub), self.lb, self.ub)
        for _ in range(8):
            w = 1.0 - self.loss_grad(p)
            if np.any(w <= 0):
                break
            lo, hi = -1.0, 1.0
            d_all = np.abs(2 * c.a * np.maximum(np.abs(self.lb), np.abs(self.ub))) + np.abs(c.b) + c.e * c.f
            hi = float(np.max(d_all / w)) * 2 + 1
            lo = -hi
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if self.residual(response(mid * w)) < 0:
                    lo = mid
                else:
                    hi = mid
            p_lo, p_hi = response(lo * w), response(hi * w)
            r_lo, r_hi = self.residual(p_lo), self.residual(p_hi)
            if r_hi - r_lo > 0 and r_lo <= 0 <= r_hi:
                t = brentq(lambda t: self.residual(p_lo + t * (p_hi - p_lo)), 0.0, 1.0, xtol=1e-14)
                p_new = p_lo + t * (p_hi - p_lo)
            else:
                p_new = p_hi
            if np.max(np.abs(p_new - p)) < 1e-9:
                p = p_new
                break
            p = p_new
        return p

    # -- pairwise transfer descent --------------------------------------------

    def _scalar_cost(self, i):
        a, b, c = float(self.costs.a[i]), float(self.costs.b[i]), float(self.costs.c[i])
        if not self.costs.valve[i]:
            return lambda x: a * x * x + b * x + c
        e, f, p0 = float(self.costs.e[i]), float(self.costs.f[i]), float(self.costs.p_min[i])
        return lambda x: a * x * x + b * x + c + abs(e * math.sin(f * (x - p0)))

    def _pair_line_search(self, p, i, j, f0):
        """Best point on the balanced path that lowers unit ``i`` and raises ``j``."""
        terms = self._pair_terms(p, i, j)
        x_hi = p[i]
        x_lo = self.lb[i]
        y_at = self._solve_partner(x_lo, terms)
        if not np.isfinite(y_at) or y_at > self.ub[j]:
            x_cap = float(self._solve_partner(self.ub[j], terms, swap=True))
            if not np.isfinite(x_cap):
                return None
            x_lo = max(x_lo, x_cap)
        if not x_lo < x_hi - 1e-12:
            return None
        y_lo_x = float(self._solve_partner(x_lo, terms))
        pts = [x_lo, x_hi]
        ki = self.kinks[i]
        if ki.size:
            pts.extend(ki[(ki > x_lo) & (ki < x_hi)])
        kj = self.kinks[j]
        if kj.size:
            sel = kj[(kj > p[j]) & (kj < y_lo_x)]
            if sel.size:
                xs = self._solve_partner(sel, terms, swap=True)
                pts.extend(xs[np.isfinite(xs) & (xs > x_lo) & (xs < x_hi)])
        bps = np.unique(np.asarray(pts, float))
        xs = np.concatenate((bps, 0.5 * (bps[:-1] + bps[1:]))) if bps.size > 1 else bps
        rest_cost = self.costs.total(p) - self.costs.unit_cost(i, p[i]) - self.costs.unit_cost(j, p[j])
        use_reserve = self.reserve_req > 0
        rest_res = 0.0
        if use_reserve:
            rest_res = self.reserve(p) - min(self.p_max[i] - p[i], self.cap[i]) - min(self.p_max[j] - p[j], self.cap[j])
        lb_j, ub_j = self.lb[j] - 1e-9, self.ub[j] + 1e-9

        def phi(x):
            y = self._solve_partner(x, terms)
            val = self.costs.unit_cost(i, x) + self.costs.unit_cost(j, y) + rest_cost
            if use_reserve:
                res = rest_res + np.minimum(self.p_max[i] - x, self.cap[i]) + np.minimum(self.p_max[j] - y, self.cap[j])
                val = val + _PENALTY * np.maximum(0.0, self.reserve_req - res)
            bad = ~np.isfinite(y) | (y > ub_j) | (y < lb_j)
            return np.where(bad, np.inf, val)

        vals = phi(xs)
        k = int(np.argmin(vals))
        best_x, best_v = float(xs[k]), float(vals[k])

        # scalar twin of phi for the bounded polish (numpy overhead dominates otherwise)
        others, bii, bjj, bij, r_i, r_j, rest = (float(v) for v in terms)
        demand = self.demand
        cost_i, cost_j = self._scalar_cost(i), self._scalar_cost(j)
        pmax_i, pmax_j = float(self.p_max[i]), float(self.p_max[j])
        cap_i, cap_j, req = float(self.cap[i]), float(self.cap[j]), float(self.reserve_req)

        def phi_s(x):
            Bq = 1.0 - 2.0 * bij * x - r_j
            C = x + others - demand - bii * x * x - r_i * x - rest
            disc = Bq * Bq + 4.0 * bjj * C
            if disc < 0:
                return math.inf
            den = Bq + math.copysign(math.sqrt(disc), Bq)
            if den == 0:
                return math.inf
            y = -2.0 * C / den
            if y > ub_j or y < lb_j:
                return math.inf
            val = cost_i(x) + cost_j(y) + rest_cost
            if use_reserve:
                short = req - (rest_res + min(pmax_i - x, cap_i) + min(pmax_j - y, cap_j))
                if short > 0:
                    val += _PENALTY * short
            return val

        # polish the smooth segments next to the best sample and next to the start
        segs = set()
        if bps.size > 1:
            pos = int(np.searchsorted(bps, best_x))
            for s in (pos - 1, pos):
                if 0 <= s < bps.size - 1:
                    segs.add(s)
            segs.add(bps.size - 2)
        for s in sorted(segs):
            a_, b_ = float(bps[s]), float(bps[s + 1])
            if b_ - a_ < 1e-12:
                continue
            r = minimize_scalar(
                phi_s,
                bounds=(a_, b_),
                method="bounded",
                options={"xatol": 1e-10 * max(1.0, abs(b_)), "maxiter": 200},
            )
            if r.fun < best_v:
                best_x, best_v = float(r.x), float(r.fun)
        if not best_v < f0 - 1e-10 * max(1.0, abs(f0)):
            return None
        y = float(self._solve_partner(best_x, terms))
        q = p.copy()
        q[i] = best_x
        q[j] = min(max(y, self.lb[j]), self.ub[j])
        return q, best_v

    def descend(self, p, max_iter):
        """Pairwise transfer descent; returns ``(p, value, converged)``."""
        f = self.objective(p)
        tol = self.opts.kink_tol
        for it in range(max_iter):
            self.iterations += 1
            left, right = self.costs.one_sided(p, tol)
            w = 1.0 - self.loss_grad(p)
            can_up = p < self.ub - 1e-12
            can_down = p > self.lb + 1e-12
            up = np.where(can_up, right / w, np.inf)
            down = np.where(can_down, left / w, -np.inf)
            order_down = np.argsort(-down)
            order_up = np.argsort(up)
            moved = False
            tries = 0
            for i in order_down[: min(self.n, 6)]:
                if not np.isfinite(down[i]):
                    break
                for j in order_up[: min(self.n, 6)]:
                    if i == j or not np.isfinite(up[j]):
                        continue
                    if down[i] - up[j] <= 1e-9 * max(1.0, abs(up[j])) and tries > 0:
                        break
                    if down[i] - up[j] <= 1e-9 * max(1.0, abs(up[j])) and self.reserve_short(p) <= 0:
                        break
                    tries += 1
                    out = self._pair_line_search(p, i, j, f)
                    if out is not None:
                        p, f = out
                        moved = True
                        break
                if moved:
                    break
            if not moved:
                return p, f, True
        return p, f, False

    def _restore_sequential(self, p, order):
        """Balance by moving one unit at a time (in ``order``), leaving the rest put."""
        p = p.copy()
        for j in order:
            y = self.rebalance_single(p, j)
            if not np.isfinite(y):
                continue
            p[j] = min(max(y, self.lb[j]), self.ub[j])
            if abs(self.residual(p)) <= 1e-9:
                return p
        raise Infeasible("sequential restoration failed")

    def refine(self, p, f, rng, kicks):
        """Iterated local search: move two or three units to random kinks or
        bounds, rebalance with the others, descend, keep improvements."""
        for _ in range(kicks):
            m = min(self.n, int(rng.integers(2, 4)))
            idx = rng.choice(self.n, size=m, replace=False)
            order = rng.permutation(self.n)
            q = p.copy()
            for i in idx:
                if self.costs.valve[i]:
                    pts = np.concatenate(([self.lb[i], self.ub[i]], self.kinks[i]))
                    q[i] = pts[int(rng.integers(pts.size))]
                else:
                    q[i] = self.lb[i] + rng.random() * (self.ub[i] - self.lb[i])
            try:
                q = self._restore_sequential(q, [j for j in order if j not in idx])
                q = self.repair_reserve(q)
            except Infeasible:
                continue
            q, g, _ = self.descend(q, self.opts.max_iter)
            if g < f - 1e-9 * max(1.0, abs(f)):
                p, f = q, g
        return p, f

    # -- one local solve ------------------------------------------------------

    def local(self, p0, use_coordinated=False):
        if use_coordinated and not self.valve:
            p = self.coordinated(p0)
        else:
            p = self.restore(p0)
        p = self.repair_reserve(p)
        p, f, ok = self.descend(p, self.opts.max_iter)
        p = self.polish_balance(p)
        return p, self.objective(p), ok

    def random_start(self, rng):
        """Uniform draw per unit; valve units draw from their kinks and bounds,
        where optima of the rectified sine concentrate."""
        u = rng.random(self.n)
        p = self.lb + u * (self.ub - self.lb)
        for i in np.flatnonzero(self.costs.valve):
            pts = np.concatenate(([self.lb[i], self.ub[i]], self.kinks[i]))
            p[i] = pts[min(int(u[i] * pts.size), pts.size - 1)]
        return p

    def is_convex(self):
        if self.valve:
            return False
        if self.loss is None:
            return True
        return bool(np.linalg.eigvalsh(self.loss.Bm).min() >= -1e-15)


def _result(prob: _Subproblem, p, converged, starts_used, best_start):
    loss = prob.loss_value(p)
    return SubproblemResult(
        p=p,
        cost=prob.costs.total(p),
        loss_mw=loss,
        balance_residual=abs(float(p.sum() - prob.demand - loss)),
        converged=converged,
        starts_used=starts_used,
        reserve=prob.reserve(p),
        best_start=best_start,
        iterations=prob.iterations,
    )


def solve_nlp(
    case: SystemCase,
    assignment: Sequence[int] | ZoneAssignment,
    opts: Optional[SolveOptions] = None,
    *,
    bounds=None,
) -> SubproblemResult:
    """Multi-start local solve of the dispatch with every unit's zone fixed.

    Start 0 is a warm start (the coordinated KKT point for smooth costs, a
    price-based kink seed for valve costs); the remaining starts are uniform
    draws inside the unit intervals from ``opts.rng_seed``.  Draws are taken
    in sequence, so the first ``k`` starts do not depend on ``n_starts``.
    """
    opts = opts or SolveOptions()
    lb, ub = _resolve_bounds(case, assignment, bounds)
    prob = _Subproblem(case, lb, ub, opts)

    n_starts = opts.starts_for(case)
    if prob.is_convex():
        # smooth convex subproblem: the coordinated solve is start-independent
        n_starts = 1
    rng = np.random.default_rng(opts.rng_seed)
    best = None
    best_val = math.inf
    best_ok = False
    best_start = 0
    used = 0
    any_ok = False
    record = math.inf  # best unrefined local value among earlier starts
    for s in range(n_starts):
        if s == 0:
            try:
                p0 = prob.seed() if prob.valve else prob.coordinated(0.5 * (lb + ub))
            except Infeasible:
                p0 = 0.5 * (lb + ub)
            use_coord = not prob.valve
        else:
            p0 = prob.random_start(rng)
            use_coord = False
        used += 1
        try:
            p, val, ok = prob.local(p0, use_coordinated=use_coord)
        except Infeasible:
            continue
        if prob.valve and opts.refine_kicks > 0 and val < record:
            # only earlier starts decide whether this one is refined, and the
            # refinement draws from its own stream, so adding starts never hurts
            record = val
            p, val = prob.refine(p, val, np.random.default_rng([opts.rng_seed, s]), opts.refine_kicks)
            p = prob.polish_balance(p)
            val = prob.objective(p)
        feasible = abs(prob.residual(p)) <= opts.balance_tol and prob.reserve_short(p) <= 1e-6
        if not feasible:
            continue
        any_ok |= ok
        if val < best_val - 1e-9 * max(1.0, abs(best_val)) if best is not None else True:
            best, best_val, best_ok, best_start = p, val, ok, s
    if best is None:
        raise Infeasible("no start reached a balanced, reserve-feasible dispatch")
    result = _result(prob, best, best_ok or any_ok, used, best_start)
    if not any_ok:
        raise NotConverged(f"iteration cap {opts.max_iter} hit on all {used} starts", best=result)
    return result
