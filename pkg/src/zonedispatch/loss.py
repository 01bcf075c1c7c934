"""Kron-formula transmission loss.

The B-coefficients are per-unit quantities: outputs are divided by the MVA
base before the quadratic form is evaluated and the result is scaled back to
MW.  ``B00`` is therefore also per-unit and contributes ``B00 * base_mva`` MW.
"""

from __future__ import annotations

import numpy as np

from .model import DimensionMismatch, LossModel


def _check(lm: LossModel, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (lm.size,):
        raise DimensionMismatch(f"output vector has shape {p.shape}, loss model expects ({lm.size},)")
    return p


def transmission_loss(lm: LossModel, p) -> float:
    q = _check(lm, p) / lm.base_mva
    return float((q @ lm.B @ q + lm.B0 @ q + lm.B00) * lm.base_mva)


def loss_gradient(lm: LossModel, p) -> np.ndarray:
    """dP_L/dp_i in MW/MW (the per-unit scaling cancels)."""
    q = _check(lm, p) / lm.base_mva
    return (lm.B + lm.B.T) @ q + lm.B0


class MWLoss:
    """The loss formula rewritten directly in MW.

    ``P_L = p' Bm p + B0' p + K`` with ``Bm = B / base`` and ``K = B00 * base``.
    Used by the solvers, which need the per-pair closed forms below.
    """

    def __init__(self, lm: LossModel):
        self.Bm = (lm.B + lm.B.T) / (2.0 * lm.base_mva)  # the pair formulas need symmetry
        self.B0 = lm.B0.copy()
        self.K = lm.B00 * lm.base_mva
        self.diag = np.diag(self.Bm).copy()

    def value(self, p: np.ndarray) -> float:
        return float(p @ self.Bm @ p + self.B0 @ p + self.K)

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return 2.0 * (self.Bm @ p) + self.B0
