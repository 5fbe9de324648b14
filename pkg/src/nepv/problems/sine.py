"""Four-dimensional test problem ``A(v) = A0 + sin(v'Bv / v'v) A1``.

The matrices are fixed integer matrices divided by ten; ``A1`` carries the
nonlinearity strength ``beta`` so ``beta = 0`` is the linear problem ``A0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import DenseProblem

__all__ = ["A0_INT", "A1_INT", "B_INT", "SineMatrices", "SineProblem", "build_sine"]

A0_INT = ((10, 21, 13, 16), (21, -26, 24, 2), (13, 24, -26, 37), (16, 2, 37, -4))
A1_INT = ((20, 28, 12, 32), (28, 4, 14, 6), (12, 14, 32, 34), (32, 6, 34, 16))
B_INT = ((-14, 16, -4, 15), (16, 10, 15, -9), (-4, 15, 16, 6), (15, -9, 6, -6))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SineMatrices:
    A0: np.ndarray
    A1: np.ndarray
    B: np.ndarray
    beta: float

    @classmethod
    def from_beta(cls, beta):
        beta = float(beta)
        return cls(
            A0=_frozen(np.array(A0_INT) / 10),
            A1=_frozen(beta * np.array(A1_INT) / 10),
            B=_frozen(np.array(B_INT) / 10),
            beta=beta,
        )


class SineProblem(DenseProblem):
    def __init__(self, mats: SineMatrices):
        self.mats = mats
        super().__init__(4, self._matrix_A, self._matrix_J)

    @property
    def beta(self):
        return self.mats.beta

    def _angle(self, v):
        return float(v @ self.mats.B @ v) / float(v @ v)

    def _matrix_A(self, v):
        m = self.mats
        return m.A0 + np.sin(self._angle(v)) * m.A1

    def _matrix_J(self, v):
        m = self.mats
        s = float(v @ v)
        Bv = m.B @ v
        vBv = float(v @ Bv)
        A = m.A0 + np.sin(vBv / s) * m.A1
        # rank-one correction from differentiating the angle
        return A + (2 * np.cos(vBv / s) / s**2) * np.outer(m.A1 @ v, s * Bv - vBv * v)


def build_sine(beta):
    """Build the sine problem for nonlinearity strength ``beta``."""
    return SineProblem(SineMatrices.from_beta(beta))
