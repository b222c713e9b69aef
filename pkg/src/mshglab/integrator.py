"""Adaptive embedded Runge-Kutta integration of batched 2x2 linear systems.

dY/dt = A(t) Y with Y of shape (n, 2, 2).  The Dormand-Prince 8(5,3) pair
(DOP853) supplies the steps and the error estimate; a second controller
rejects steps whose change in det Y is larger than the local tolerance,
since the exact flow of a traceless system keeps det Y constant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import IntegrationError

N_STAGES = _dop.N_STAGES
_A = _dop.A[:N_STAGES, :N_STAGES]
_B = _dop.B
_C = _dop.C[:N_STAGES]
_E3 = _dop.E3
_E5 = _dop.E5

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXPONENT = -1.0 / 8.0


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    det_rejected: int = 0
    error_sum: float = 0.0  # accumulated local error estimate, relative to |Y|
    last_h: float = 0.0

    def merge(self, other: "StepStats") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.det_rejected += other.det_rejected
        self.error_sum += other.error_sum
        self.last_h = other.last_h


def _det(Y: np.ndarray) -> np.ndarray:
    return Y[..., 0, 0] * Y[..., 1, 1] - Y[..., 0, 1] * Y[..., 1, 0]


def integrate_linear(
    coef: Callable[[float], np.ndarray],
    Y0: np.ndarray,
    rtol: float,
    atol: float | None = None,
    h0: float | None = None,
    max_steps: int = 200_000,
    locate: Callable[[float], complex] | None = None,
    stats: StepStats | None = None,
) -> tuple[np.ndarray, StepStats]:
    """Integrate dY/dt = coef(t) @ Y on t in [0, 1].

    ``coef(t)`` returns an array broadcastable against ``Y`` (shape (n, 2, 2)).
    ``locate(t)`` maps t to a point in the plane for error messages.
    """
    atol = rtol if atol is None else atol
    st = StepStats() if stats is None else stats
    Y = np.array(Y0, dtype=complex)
    t = 0.0
    h = 0.05 if h0 is None else min(max(h0, 1e-6), 1.0)
    K = np.empty((N_STAGES + 1,) + Y.shape, dtype=complex)
    f = coef(t) @ Y
    det_old = _det(Y)
    n_local = 0
    while t < 1.0:
        if n_local > max_steps:
            where = locate(t) if locate else None
            raise IntegrationError(f"step budget exhausted at t={t:.6g} (z={where})", where)
        h = min(h, 1.0 - t)
        if h < 1e-13:
            where = locate(t) if locate else None
            raise IntegrationError(f"step size underflow near z={where}", where)
        K[0] = f
        for s in range(1, N_STAGES):
            dy = np.tensordot(_A[s, :s], K[:s], axes=1) * h
            K[s] = coef(t + _C[s] * h) @ (Y + dy)
        Y_new = Y + h * np.tensordot(_B, K[:N_STAGES], axes=1)
        f_new = coef(t + h) @ Y_new
        K[-1] = f_new

        scale = atol + np.maximum(np.abs(Y), np.abs(Y_new)) * rtol
        err5 = np.tensordot(_E5, K, axes=1) / scale
        err3 = np.tensordot(_E3, K, axes=1) / scale
        e5 = float(np.sum(np.abs(err5) ** 2))
        e3 = float(np.sum(np.abs(err3) ** 2))
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * err5.size)

        det_ok = True
        if err < 1.0:
            det_new = _det(Y_new)
            mag = np.maximum(1.0, np.max(np.abs(Y_new), axis=(-2, -1)) ** 2)
            if np.any(np.abs(det_new - det_old) > 50.0 * rtol * mag):
                det_ok = False

        n_local += 1
        if err < 1.0 and det_ok:
            t += h
            Y = Y_new
            f = f_new
            det_old = det_new
            st.accepted += 1
            st.error_sum += err * rtol
            factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err**ERR_EXPONENT)
            h *= factor
        else:
            if err < 1.0:
                st.det_rejected += 1
                h *= 0.5
            else:
                h *= max(MIN_FACTOR, SAFETY * err**ERR_EXPONENT)
            st.rejected += 1
    st.last_h = h
    return Y, st
