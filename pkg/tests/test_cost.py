import math

import numpy as np
import pytest

from oracles import central_difference
from zonedispatch.cost import (
    CostArrays,
    kink_points,
    quadratic_cost,
    smooth_piece_derivative,
    valve_cost,
    valve_term,
)
from zonedispatch.model import make_unit

P6_OPT = [447.5038, 173.3182, 263.4628, 139.0653, 165.4734, 87.1347]


def test_quadratic_cost_direct():
    u = make_unit("g", 1, 2, 3, 0, 10)
    assert quadratic_cost(u, 2) == 11


def test_constant_cost():
    u = make_unit("g", 0, 0, 7.5, 0, 10)
    for p in (0, 3.3, 10):
        assert quadratic_cost(u, p) == 7.5


def test_six_unit_reference_cost(case6):
    total = sum(quadratic_cost(u, p) for u, p in zip(case6.units, P6_OPT))
    assert total == pytest.approx(15449.89, abs=0.02)


def test_valve_cost_components():
    u = make_unit("g", 0.01, 2, 5, 10, 100)
    assert valve_cost(u, 40).total == quadratic_cost(u, 40)
    v = make_unit("g", 0.01, 2, 5, 10, 100, e=30, f=0.1)
    assert valve_cost(v, 10).valve == 0.0
    p = 10 + (math.pi / 2) / 0.1
    assert valve_cost(v, p).valve == pytest.approx(30)
    b = valve_cost(v, 37.0)
    assert b.total == pytest.approx(b.quadratic + b.valve)


def test_valve_uses_unit_minimum_not_zone_bound():
    v = make_unit("g", 0, 0, 0, 10, 100, e=1, f=1, prohibited=[(40, 60)])
    assert valve_term(v, 60) == pytest.approx(abs(math.sin(50)))


def test_kink_points_interior_multiples():
    u = make_unit("g", 0, 0, 0, 0, 3, e=1, f=math.pi)
    assert kink_points(u, (0, 3)) == pytest.approx([1, 2])


def test_kink_points_none_without_valve():
    u = make_unit("g", 0.01, 1, 0, 0, 300)
    assert kink_points(u, (0, 300)) == []


def test_kink_points_match_sign_change_oracle(case15_valve):
    u = case15_valve.units[0]
    assert (u.e, u.f, u.p_min) == (170, 0.091, 150)
    kinks = kink_points(u, (150, 455))
    grid = np.arange(150, 455 + 1e-9, 1e-3)
    s = np.sin(u.f * (grid - u.p_min))
    flips = np.flatnonzero(np.sign(s[1:]) * np.sign(s[:-1]) < 0)
    # a zero strictly between two grid points, or sitting on one
    zeros = [0.5 * (grid[k] + grid[k + 1]) for k in flips]
    zeros += [g for g, v in zip(grid[1:-1], s[1:-1]) if v == 0]
    assert len(kinks) == len(zeros) == 8
    assert np.allclose(kinks, sorted(zeros), atol=1e-3)


def test_derivative_of_quadratic_is_exact():
    u = make_unit("g", 0.3, 2.5, 1, 0, 100)
    d = smooth_piece_derivative(u, 7.0)
    assert d.left == d.right == 2 * 0.3 * 7 + 2.5


def test_derivative_zero_at_sine_peak():
    u = make_unit("g", 0, 0, 0, 0, 10, e=1, f=1)
    d = smooth_piece_derivative(u, math.pi / 2)
    assert d.left == pytest.approx(0, abs=1e-12)


def test_derivative_one_sided_at_kink():
    u = make_unit("g", 0.01, 2, 0, 10, 200, e=50, f=0.1)
    k = kink_points(u, (10, 200))[0]
    d = smooth_piece_derivative(u, k)
    base = 2 * 0.01 * k + 2
    assert d.left == pytest.approx(base - 5)
    assert d.right == pytest.approx(base + 5)


def test_derivative_matches_finite_differences(case15_valve):
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        u = case15_valve.units[rng.integers(15)]
        p = rng.uniform(u.p_min, u.p_max)
        if any(abs(p - k) < 1e-3 for k in kink_points(u, (u.p_min, u.p_max))):
            continue
        fd = central_difference(lambda x: valve_cost(u, x).total, p, 1e-6)
        d = smooth_piece_derivative(u, p)
        assert d.left == d.right
        assert d.left == pytest.approx(fd, rel=1e-5, abs=1e-6)
        checked += 1


def test_cost_arrays_agree_with_scalar_functions(case15_valve):
    arr = CostArrays(case15_valve.units)
    rng = np.random.default_rng(3)
    lo = np.array([u.p_min for u in case15_valve.units])
    hi = np.array([u.p_max for u in case15_valve.units])
    for _ in range(50):
        p = rng.uniform(lo, hi)
        per = arr.per_unit(p)
        left, right = arr.one_sided(p)
        for i, u in enumerate(case15_valve.units):
            assert per[i] == pytest.approx(valve_cost(u, p[i]).total, rel=1e-13)
            d = smooth_piece_derivative(u, p[i])
            assert left[i] == pytest.approx(d.left, rel=1e-12)
            assert right[i] == pytest.approx(d.right, rel=1e-12)
