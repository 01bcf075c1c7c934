"""Search over the zone-selection layer.

Every unit sits in exactly one of its feasible zones, so the discrete space
is the Cartesian product of per-unit zone lists.  Small products are
enumerated outright.  Larger ones go through best-first branch-and-bound
whose nodes restrict each unit to a contiguous range of zones; the bound is
the valve-free, loss-free dispatch over the hull of those ranges.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .cost import CostArrays
from .model import (
    DispatchSolution,
    Infeasible,
    NotConverged,
    SystemCase,
    ZoneAssignment,
    effective_bounds,
    reachable_zones,
)
from .subproblem import SolveOptions, SubproblemResult, relaxed_dispatch, solve_lossless_quadratic, solve_nlp

logger = logging.getLogger(__name__)

_COST_TOL = 1e-6


@dataclass
class SearchStats:
    path: str = ""
    assignments_total: int = 0
    assignments_solved: int = 0
    assignments_infeasible: int = 0
    nodes_created: int = 0
    nodes_pruned: int = 0
    nodes_infeasible: int = 0
    starts_used: int = 0
    bound_violation: bool = False
    pruned_bounds: list = field(default_factory=list)
    incumbent_history: list = field(default_factory=list)


def _thread_count(opts: SolveOptions) -> int:
    if opts.threads is not None:
        return max(1, int(opts.threads))
    env = os.environ.get("DISPATCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring DISPATCH_THREADS=%r", env)
    return 1


def enumerate_assignments(case: SystemCase) -> Iterator[ZoneAssignment]:
    """All assignments in lexicographic order, skipping ramp-unreachable zones."""
    for combo in itertools.product(*(reachable_zones(u) for u in case.units)):
        yield ZoneAssignment(combo)


def count_assignments(case: SystemCase) -> int:
    return math.prod(len(reachable_zones(u)) for u in case.units)


def _hull_bounds(case: SystemCase, partial: Sequence[Optional[int]]):
    lb = np.empty(case.n_units)
    ub = np.empty(case.n_units)
    for i, (u, k) in enumerate(zip(case.units, partial)):
        if k is None:
            lo_r, hi_r = u.ramp_window()
            lb[i], ub[i] = max(u.p_min, lo_r), min(u.p_max, hi_r)
        else:
            lb[i], ub[i] = effective_bounds(u, k)
    return lb, ub


def lower_bound(case: SystemCase, partial: Sequence[Optional[int]]) -> float:
    """Cost of the valve-free, loss-free dispatch with free units on their hull.

    ``partial[i]`` is a zone index or ``None`` for a free unit.  Raises
    :class:`Infeasible` when even the relaxation has no solution.
    """
    if len(partial) != case.n_units:
        raise ValueError("partial assignment length does not match the case")
    lb, ub = _hull_bounds(case, partial)
    if np.any(lb > ub):
        raise Infeasible("a fixed zone is ramp-unreachable")
    return relaxed_dispatch(case, lb, ub)[1]


def _solve_leaf(case: SystemCase, assignment: ZoneAssignment, opts: SolveOptions):
    """Returns ``(result, converged)``, or ``None`` when the assignment is infeasible."""
    try:
        if case.loss is None and not case.has_valve:
            return solve_lossless_quadratic(case, assignment), True
        r = solve_nlp(case, assignment, opts)
        return r, r.converged
    except NotConverged as exc:
        return exc.best, False
    except Infeasible:
        return None


def _to_solution(case, assignment, res: SubproblemResult, converged, stats, t0) -> DispatchSolution:
    p = res.p
    reserve = np.array([min(u.p_max - x, u.reserve_cap) for u, x in zip(case.units, p)])
    return DispatchSolution(
        p=p,
        assignment=assignment,
        loss_mw=res.loss_mw,
        cost=res.cost,
        reserve=reserve,
        balance_residual=res.balance_residual,
        solve_time=time.perf_counter() - t0,
        converged=converged,
        starts=stats.starts_used,
        stats=stats,
    )


def _enumerate(case: SystemCase, opts: SolveOptions, stats: SearchStats, t0: float):
    assignments = list(enumerate_assignments(case))
    stats.assignments_total = len(assignments)
    threads = _thread_count(opts)
    if threads > 1 and len(assignments) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _solve_leaf(case, a, opts), assignments))
    else:
        results = (_solve_leaf(case, a, opts) for a in assignments)
    best = None
    for a, out in zip(assignments, results):
        if out is None:
            stats.assignments_infeasible += 1
            continue
        res, ok = out
        stats.assignments_solved += 1
        stats.starts_used += res.starts_used
        if best is None or res.cost < best[1].cost - _COST_TOL:
            best = (a, res, ok)
            stats.incumbent_history.append((res.cost, time.perf_counter() - t0))
    return best


class _Tree:
    """Best-first branch-and-bound over contiguous per-unit zone ranges."""

    def __init__(self, case: SystemCase, opts: SolveOptions, stats: SearchStats, t0: float):
        self.case = case
        self.opts = opts
        self.stats = stats
        self.t0 = t0
        self.zones = [reachable_zones(u) for u in case.units]
        self.bounds = [[effective_bounds(u, k) for k in zs] for u, zs in zip(case.units, self.zones)]
        # more zones first, index order among equals
        self.order = sorted(range(case.n_units), key=lambda i: (-len(self.zones[i]), i))
        self.exact_relax = case.loss is None and not case.has_valve
        self.costs = CostArrays(case.units)

    def hull(self, lo, hi):
        lb = np.array([self.bounds[i][lo[i]][0] for i in range(self.case.n_units)])
        ub = np.array([self.bounds[i][hi[i]][1] for i in range(self.case.n_units)])
        return lb, ub

    def relax(self, lo, hi):
        lb, ub = self.hull(lo, hi)
        return relaxed_dispatch(self.case, lb, ub)

    def gap_unit(self, lo, hi, p):
        """First unit (branching order) whose relaxed output lies in a gap; ``(i, k)``
        means the gap sits just above range position ``k``."""
        for i in self.order:
            if lo[i] == hi[i]:
                continue
            for k in range(lo[i], hi[i]):
                if self.bounds[i][k][1] + 1e-9 < p[i] < self.bounds[i][k + 1][0] - 1e-9:
                    return i, k
        return None

    def assignment_of(self, lo, hi, p):
        idx = []
        for i in range(self.case.n_units):
            pick = lo[i]
            for k in range(lo[i], hi[i] + 1):
                if self.bounds[i][k][0] - 1e-9 <= p[i] <= self.bounds[i][k][1] + 1e-9:
                    pick = k
                    break
            idx.append(self.zones[i][pick])
        return ZoneAssignment(tuple(idx))

    def run(self):
        n = self.case.n_units
        if any(not zs for zs in self.zones):
            return None
        counter = itertools.count()
        heap = []
        best = None
        lo0 = tuple(0 for _ in range(n))
        hi0 = tuple(len(z) - 1 for z in self.zones)

        def push(lo, hi):
            self.stats.nodes_created += 1
            try:
                p, bound = self.relax(lo, hi)
            except Infeasible:
                self.stats.nodes_infeasible += 1
                return
            heapq.heappush(heap, (bound, next(counter), lo, hi, p))

        push(lo0, hi0)
        while heap:
            bound, _, lo, hi, p = heapq.heappop(heap)
            if self.opts.prune and best is not None and bound >= best[1].cost - _COST_TOL:
                self.stats.nodes_pruned += 1
                self.stats.pruned_bounds.append(bound)
                continue
            if self.exact_relax:
                split = self.gap_unit(lo, hi, p)
                if split is None:
                    a = self.assignment_of(lo, hi, p)
                    res = SubproblemResult(
                        p=p,
                        cost=bound,
                        loss_mw=0.0,
                        balance_residual=abs(float(p.sum() - self.case.demand)),
                        converged=True,
                        starts_used=1,
                    )
                    self._offer(a, res, True, bound)
                    best = self.best
                    continue
                i, k = split
                left_hi = hi[:i] + (k,) + hi[i + 1 :]
                right_lo = lo[:i] + (k + 1,) + lo[i + 1 :]
                push(lo, left_hi)
                push(right_lo, hi)
                continue
            free = [i for i in self.order if lo[i] != hi[i]]
            if not free:
                a = ZoneAssignment(tuple(self.zones[i][lo[i]] for i in range(n)))
                out = _solve_leaf(self.case, a, self.opts)
                if out is None:
                    self.stats.assignments_infeasible += 1
                    continue
                res, ok = out
                self.stats.starts_used += res.starts_used
                if res.cost < bound - _COST_TOL:
                    self.stats.bound_violation = True
                    logger.warning(
                        "bound %.6f exceeds leaf cost %.6f for %s; disabling pruning",
                        bound,
                        res.cost,
                        a.zone_index,
                    )
                    return "fallback"
                self._offer(a, res, ok, bound)
                best = self.best
                continue
            i = free[0]
            for k in range(lo[i], hi[i] + 1):
                push(lo[:i] + (k,) + lo[i + 1 :], hi[:i] + (k,) + hi[i + 1 :])
        return getattr(self, "best", None)

    def _offer(self, a, res, ok, bound):
        self.stats.assignments_solved += 1
        cur = getattr(self, "best", None)
        if cur is None or res.cost < cur[1].cost - _COST_TOL:
            self.best = (a, res, ok)
            self.stats.incumbent_history.append((res.cost, time.perf_counter() - self.t0))


def branch_and_bound(case: SystemCase, opts: Optional[SolveOptions] = None) -> DispatchSolution:
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    stats = SearchStats(path="branch_and_bound", assignments_total=count_assignments(case))
    tree = _Tree(case, opts, stats, t0)
    best = tree.run()
    if best == "fallback":
        stats.path = "branch_and_bound+enumeration"
        fresh = SearchStats(path=stats.path, bound_violation=True)
        best = _enumerate(case, opts, fresh, t0)
        fresh.nodes_created = stats.nodes_created
        stats = fresh
    if best is None:
        raise Infeasible("no zone assignment admits a feasible dispatch")
    a, res, ok = best
    return _to_solution(case, a, res, ok, stats, t0)


def solve(case: SystemCase, opts: Optional[SolveOptions] = None) -> DispatchSolution:
    """Optimal dispatch: enumeration for small zone products, branch-and-bound otherwise."""
    opts = opts or SolveOptions()
    if case.zone_product > opts.enum_threshold:
        return branch_and_bound(case, opts)
    t0 = time.perf_counter()
    stats = SearchStats(path="enumeration")
    best = _enumerate(case, opts, stats, t0)
    if best is None:
        raise Infeasible("no zone assignment admits a feasible dispatch")
    a, res, ok = best
    sol = _to_solution(case, a, res, ok, stats, t0)
    if not ok:
        logger.warning("best assignment %s did not converge within the iteration cap", a.zone_index)
    return sol
