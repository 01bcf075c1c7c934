import numpy as np
import pytest

from conftest import TOYS
from oracles import grid_optimum_cached
from zonedispatch import bundled_case
from zonedispatch.model import Infeasible, LossModel, NotConverged, SystemCase, make_unit, validate_case
from zonedispatch.subproblem import (
    SolveOptions,
    lambda_dispatch,
    reserve_available,
    solve_lossless_quadratic,
    solve_nlp,
)

P6_OPT = [447.5038, 173.3182, 263.4628, 139.0653, 165.4734, 87.1347]


def case_of(units, demand, **kw):
    return validate_case(SystemCase(tuple(units), demand, **kw))


@pytest.mark.parametrize("p, expected", [(90, 10), (20, 50), (100, 0)])
def test_reserve_available(p, expected):
    u = make_unit("g", 0.01, 1, 0, 0, 100, reserve_cap=50)
    assert reserve_available(u, p) == expected


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(balance_tol=0)
    with pytest.raises(ValueError):
        SolveOptions(n_starts=0)
    with pytest.raises(ValueError):
        SolveOptions(max_iter=-1)
    assert SolveOptions().starts_for(bundled_case("6unit")) == 8
    assert SolveOptions().starts_for(bundled_case("15unit_cond3")) == 64


def test_symmetric_pair():
    big = 1e6
    c = case_of([make_unit(i, 1, 0, 0, 0, big) for i in "ab"], 10)
    r = solve_lossless_quadratic(c, (0, 0))
    np.testing.assert_allclose(r.p, [5, 5], atol=1e-9)
    p, lam = lambda_dispatch([1, 1], [0, 0], [0, 0], [big, big], 10)
    assert lam == pytest.approx(10)


def test_unequal_pair_against_grid():
    c = case_of([make_unit("a", 1, 0, 0, 0, 9), make_unit("b", 2, 0, 0, 0, 9)], 9)
    r = solve_lossless_quadratic(c, (0, 0))
    grid = np.arange(0, 9 + 1e-9, 1e-3)
    costs = grid**2 + 2 * (9 - grid) ** 2
    best = grid[np.argmin(costs)]
    assert r.p[0] == pytest.approx(best, abs=1e-3)
    np.testing.assert_allclose(r.p, [6, 3], atol=1e-9)


def test_lossless_infeasible_assignment():
    c = case_of([make_unit("a", 1, 0, 0, 0, 10, prohibited=[(4, 6)]), make_unit("b", 1, 0, 0, 0, 3)], 12)
    with pytest.raises(Infeasible):
        solve_lossless_quadratic(c, (0, 0))
    solve_lossless_quadratic(c, (1, 0))


def test_lossless_rejects_loss_and_valve(case6, case15_valve):
    with pytest.raises(ValueError):
        solve_lossless_quadratic(case6, (2, 2, 2, 2, 2, 1))
    with pytest.raises(ValueError):
        solve_lossless_quadratic(case15_valve.without_loss(), (0,) * 15)


def test_lossless_with_explicit_bounds():
    c = case_of([make_unit(i, 1, 0, 0, 0, 100) for i in "ab"], 10)
    r = solve_lossless_quadratic(c, bounds=([0, 6], [100, 100]))
    np.testing.assert_allclose(r.p, [4, 6], atol=1e-9)


def test_zero_quadratic_coefficient_units():
    c = case_of([make_unit("a", 0, 1, 0, 0, 50), make_unit("b", 0, 2, 0, 0, 50)], 70)
    r = solve_lossless_quadratic(c, (0, 0))
    np.testing.assert_allclose(r.p, [50, 20], atol=1e-9)


def test_reserve_multiplier_shifts_output():
    # the cheap unit would take everything; reserve forces headroom on it
    units = [make_unit("a", 0.001, 1, 0, 0, 100, reserve_cap=100), make_unit("b", 0.001, 5, 0, 0, 100, reserve_cap=10)]
    c = case_of(units, 100, reserve_req=30)
    r = solve_lossless_quadratic(c, (0, 0))
    assert r.reserve >= 30 - 1e-9
    assert r.p.sum() == pytest.approx(100)
    np.testing.assert_allclose(r.p, [80, 20], atol=1e-6)


def test_unmeetable_reserve_is_infeasible():
    units = [make_unit("a", 0.01, 1, 0, 0, 100, reserve_cap=5), make_unit("b", 0.01, 2, 0, 0, 100, reserve_cap=5)]
    c = case_of(units, 100, reserve_req=20)
    with pytest.raises(Infeasible):
        solve_lossless_quadratic(c, (0, 0))
    with pytest.raises(Infeasible):
        solve_nlp(c, (0, 0))


def test_nlp_reduces_to_lambda_iteration(case15_lossless):
    a = (0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 2, 0, 0, 0)
    exact = solve_lossless_quadratic(case15_lossless, a)
    nlp = solve_nlp(case15_lossless, a)
    assert nlp.cost == pytest.approx(exact.cost, abs=1e-6)


def test_two_unit_loss_toy_against_grid():
    c = bundled_case("toy2_loss")
    np.testing.assert_allclose(c.loss.B, np.eye(2) * 1e-4)
    assert c.demand == 150
    r = solve_nlp(c, (0, 0))
    ref_cost, ref_p = grid_optimum_cached("toy2_loss")
    np.testing.assert_allclose(r.p, ref_p, atol=0.01)
    assert r.cost <= ref_cost + 0.01


def test_six_unit_optimal_assignment(case6):
    r = solve_nlp(case6, (2, 2, 2, 2, 2, 1))
    assert r.cost == pytest.approx(15449.89, abs=0.05)
    assert r.loss_mw == pytest.approx(12.9582, abs=1e-3)
    np.testing.assert_allclose(r.p, P6_OPT, atol=0.05)


def test_nlp_infeasible_assignment(case6):
    # all units in their lowest reachable zones cannot cover demand
    with pytest.raises(Infeasible):
        solve_nlp(case6, (1, 0, 1, 1, 1, 0))


def test_not_converged_carries_best(case15_valve):
    opts = SolveOptions(max_iter=0, n_starts=2, refine_kicks=0)
    with pytest.raises(NotConverged) as info:
        solve_nlp(case15_valve, (0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 1, 0, 0, 0), opts)
    best = info.value.best
    assert best is not None and not best.converged
    assert best.balance_residual <= 1e-4


@pytest.mark.parametrize("name", TOYS)
def test_toys_against_grid_oracle(name):
    c = bundled_case(name)
    from zonedispatch import solve

    sol = solve(c)
    ref_cost, _ = grid_optimum_cached(name)
    assert sol.cost <= ref_cost + 0.01


def test_determinism(case15_valve):
    a = (0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 1, 0, 0, 0)
    opts = SolveOptions(n_starts=6, rng_seed=3)
    r1 = solve_nlp(case15_valve, a, opts)
    r2 = solve_nlp(case15_valve, a, opts)
    assert np.array_equal(r1.p, r2.p)
    assert r1.cost == r2.cost


def test_more_starts_never_hurt(case15_valve):
    a = (0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 1, 0, 0, 0)
    costs = [solve_nlp(case15_valve, a, SolveOptions(n_starts=k, refine_kicks=20)).cost for k in (1, 2, 4, 8, 16)]
    assert all(b <= a_ + 1e-9 for a_, b in zip(costs, costs[1:]))


def test_result_invariants_on_valve_case(case15_valve):
    a = (0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 1, 0, 0, 0)
    from zonedispatch.model import assignment_bounds

    lb, ub = assignment_bounds(case15_valve, a)
    r = solve_nlp(case15_valve, a, SolveOptions(n_starts=4))
    assert r.converged
    assert np.all(r.p >= lb - 1e-9) and np.all(r.p <= ub + 1e-9)
    assert r.balance_residual <= 1e-4
    assert r.reserve >= case15_valve.reserve_req - 1e-6
