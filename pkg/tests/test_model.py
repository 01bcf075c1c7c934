import math
import warnings

import numpy as np
import pytest

from zonedispatch.model import (
    DimensionMismatch,
    InsufficientCapacity,
    LossModel,
    OperatingZone,
    OverlappingZones,
    SystemCase,
    Unit,
    ValidationError,
    ZoneAssignment,
    ZoneOutsideCapacity,
    effective_bounds,
    is_empty,
    make_unit,
    reachable_zones,
    validate_case,
)


def one_unit_case(unit, demand=10.0):
    return SystemCase(units=(unit,), demand=demand)


def test_six_unit_case_has_eighteen_zones(case6):
    assert case6.n_units == 6
    assert sum(u.n_zones for u in case6.units) == 18
    assert all(u.n_zones == 3 for u in case6.units)


def test_overlapping_zones_rejected():
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(10, 50), OperatingZone(40, 80)))
    with pytest.raises(OverlappingZones, match="unit g"):
        validate_case(one_unit_case(u))


def test_touching_zones_are_not_disjoint():
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(10, 40), OperatingZone(40, 80)))
    with pytest.raises(OverlappingZones):
        validate_case(one_unit_case(u))


def test_single_zone_unit_is_valid():
    u = make_unit("g", 0.01, 1, 0, 10, 80)
    case = validate_case(one_unit_case(u))
    assert case.units[0].n_zones == 1
    assert case.units[0].zones[0] == OperatingZone(10, 80)


def test_zone_endpoints_must_match_capacity():
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(12, 30), OperatingZone(40, 80)))
    with pytest.raises(ZoneOutsideCapacity):
        validate_case(one_unit_case(u))
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(10, 30), OperatingZone(40, 79)))
    with pytest.raises(ZoneOutsideCapacity):
        validate_case(one_unit_case(u))


def test_reversed_zone_rejected():
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(10, 30), OperatingZone(50, 40)))
    with pytest.raises(ValidationError):
        validate_case(one_unit_case(u))


def test_unsorted_zones_are_sorted():
    u = Unit("g", 0.01, 1, 0, 10, 80, zones=(OperatingZone(40, 80), OperatingZone(10, 30)))
    case = validate_case(one_unit_case(u))
    assert [z.lower for z in case.units[0].zones] == [10, 40]


def test_negative_parameters_rejected():
    for field in ("e", "f", "ramp_up", "ramp_down", "reserve_cap"):
        u = make_unit("g", 0.01, 1, 0, 10, 80, **{field: -1.0})
        with pytest.raises(ValidationError, match=field):
            validate_case(one_unit_case(u))


def test_insufficient_capacity():
    u = make_unit("g", 0.01, 1, 0, 10, 80)
    with pytest.raises(InsufficientCapacity):
        validate_case(one_unit_case(u, demand=81))


def test_loss_dimension_checked():
    u1 = make_unit("1", 0.01, 1, 0, 10, 80)
    u2 = make_unit("2", 0.01, 1, 0, 10, 80)
    bad = SystemCase((u1, u2), 50, loss=LossModel(np.eye(3), np.zeros(2)))
    with pytest.raises(DimensionMismatch):
        validate_case(bad)
    bad = SystemCase((u1, u2), 50, loss=LossModel(np.eye(2), np.zeros(3)))
    with pytest.raises(DimensionMismatch):
        validate_case(bad)


def test_asymmetric_b_is_symmetrised_with_warning():
    u1 = make_unit("1", 0.01, 1, 0, 10, 80)
    u2 = make_unit("2", 0.01, 1, 0, 10, 80)
    B = np.array([[1e-3, 2e-4], [0.0, 1e-3]])
    with pytest.warns(UserWarning, match="asymmetric"):
        case = validate_case(SystemCase((u1, u2), 50, loss=LossModel(B, np.zeros(2))))
    np.testing.assert_array_equal(case.loss.B, case.loss.B.T)
    assert case.loss.B[0, 1] == pytest.approx(1e-4)


def test_duplicate_ids_rejected():
    u = make_unit("g", 0.01, 1, 0, 10, 80)
    with pytest.raises(ValidationError, match="unique"):
        validate_case(SystemCase((u, u), 50))


def test_validate_is_idempotent(case6, case15_valve):
    for case in (case6, case15_valve):
        again = validate_case(case)
        assert again is case
        assert validate_case(again) == case


@pytest.mark.parametrize(
    "zone, prev, up, down, expected",
    [
        ((100, 150), 90, 30, 40, (100, 120)),
        ((100, 150), None, math.inf, math.inf, (100, 150)),
        ((100, 150), 120, math.inf, math.inf, (100, 150)),
    ],
)
def test_effective_bounds(zone, prev, up, down, expected):
    u = Unit("g", 0, 0, 0, 50, 200, p_prev=prev, ramp_up=up, ramp_down=down,
             zones=(OperatingZone(50, 80), OperatingZone(*zone), OperatingZone(170, 200)))
    assert effective_bounds(u, 1) == expected


def test_effective_bounds_empty_when_unreachable():
    u = Unit("g", 0, 0, 0, 50, 200, p_prev=200, ramp_up=10, ramp_down=20,
             zones=(OperatingZone(50, 80), OperatingZone(100, 150), OperatingZone(170, 200)))
    lb, ub = effective_bounds(u, 1)
    assert lb == 180 and ub == 150
    assert is_empty((lb, ub))
    assert reachable_zones(u) == [2]


def test_assignment_checks():
    u = make_unit("g", 0.01, 1, 0, 10, 80, prohibited=[(30, 40)])
    case = validate_case(one_unit_case(u))
    ZoneAssignment((1,)).check(case)
    with pytest.raises(ValidationError):
        ZoneAssignment((2,)).check(case)
    with pytest.raises(DimensionMismatch):
        ZoneAssignment((0, 0)).check(case)


def test_make_unit_builds_zones_from_prohibited_intervals():
    u = make_unit("g", 0.01, 1, 0, 100, 500, prohibited=[(350, 380), (210, 240)])
    assert [(z.lower, z.upper) for z in u.zones] == [(100, 210), (240, 350), (380, 500)]
    with pytest.raises(ValueError):
        make_unit("g", 0.01, 1, 0, 100, 500, prohibited=[(200, 210)], zones=[(100, 500)])


def test_zone_of():
    u = make_unit("g", 0.01, 1, 0, 100, 500, prohibited=[(210, 240)])
    assert u.zone_of(150) == 0
    assert u.zone_of(240) == 1
    assert u.zone_of(225) is None
