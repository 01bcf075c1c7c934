import numpy as np
import pytest

from oracles import central_difference
from zonedispatch.loss import MWLoss, loss_gradient, transmission_loss
from zonedispatch.model import DimensionMismatch, LossModel

P6_OPT = [447.5038, 173.3182, 263.4628, 139.0653, 165.4734, 87.1347]
P15_OPT = [455, 380, 130, 130, 170, 460, 430, 71.7430, 58.9184, 160, 80, 80, 25, 15, 15]


def test_null_model_gives_zero():
    lm = LossModel(np.zeros((3, 3)), np.zeros(3))
    assert transmission_loss(lm, [10, 20, 30]) == 0.0
    np.testing.assert_array_equal(loss_gradient(lm, [10, 20, 30]), 0.0)


def test_zero_output_leaves_constant_term():
    lm = LossModel(np.eye(2) * 1e-3, np.ones(2) * 1e-3, B00=0.0056, base_mva=100)
    assert transmission_loss(lm, [0, 0]) == pytest.approx(0.56)


def test_six_unit_reference_loss(case6):
    assert transmission_loss(case6.loss, P6_OPT) == pytest.approx(12.9582, abs=5e-4)


def test_fifteen_unit_reference_loss(case15_loss):
    assert transmission_loss(case15_loss.loss, P15_OPT) == pytest.approx(30.6614, abs=5e-4)


def test_dimension_mismatch():
    lm = LossModel(np.eye(2), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        transmission_loss(lm, [1, 2, 3])
    with pytest.raises(DimensionMismatch):
        loss_gradient(lm, [1])


def test_diagonal_gradient():
    beta = 2e-4
    lm = LossModel(np.eye(2) * beta, np.zeros(2), base_mva=100)
    p = np.array([40.0, 70.0])
    np.testing.assert_allclose(loss_gradient(lm, p), 2 * beta * p / 100)


def test_gradient_matches_finite_differences(case6):
    rng = np.random.default_rng(11)
    lm = case6.loss
    lo = np.array([u.p_min for u in case6.units])
    hi = np.array([u.p_max for u in case6.units])
    for _ in range(100):
        p = rng.uniform(lo, hi)
        g = loss_gradient(lm, p)
        for i in range(6):
            e = np.zeros(6)
            e[i] = 1.0
            fd = central_difference(lambda t: transmission_loss(lm, p + t * e), 0.0, 1e-4)
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-12)


def test_mw_form_matches_per_unit_form(case15_loss):
    m = MWLoss(case15_loss.loss)
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = rng.uniform(20, 400, size=15)
        assert m.value(p) == pytest.approx(transmission_loss(case15_loss.loss, p), rel=1e-12)
        np.testing.assert_allclose(m.gradient(p), loss_gradient(case15_loss.loss, p), rtol=1e-12, atol=1e-15)
