"""The flat sl(2) connection built from a vacuum field.

    A_z    = -1/2 d_z eta  s3 + s+ e^eta + s- lambda^2 P e^-eta
    A_zbar = +1/2 d_zb eta s3 + s- e^eta + s+ lambda_bar^2 conj(P) e^-eta

with the auxiliary linear problem d_z Psi = A_z Psi, d_zbar Psi = A_zbar Psi.
Zero curvature d_zbar A_z - d_z A_zbar + [A_z, A_zbar] = 0 is equivalent to
the field equation, so its size measures the discretisation error.
"""
from __future__ import annotations

import numpy as np

from ..rational_core import log_P_from_logs, principal_logs
from ..spectrum import SpectralPoint
from .field import MShGField


def connection_matrices(eta, eta_z, P, lam2, lamb2) -> tuple[np.ndarray, np.ndarray]:
    """(A_z, A_zbar) for arrays of field data (shape (..., 2, 2)); lam2/lamb2 broadcast against them."""
    eta = np.asarray(eta)
    eta_z = np.asarray(eta_z, dtype=complex)
    P = np.asarray(P, dtype=complex)
    shape = np.broadcast_shapes(eta.shape, np.shape(lam2))
    ep = np.broadcast_to(np.exp(eta), shape)
    em = np.broadcast_to(np.exp(-eta), shape)
    hz = np.broadcast_to(0.5 * eta_z, shape)
    Az = np.zeros(shape + (2, 2), dtype=complex)
    Ab = np.zeros(shape + (2, 2), dtype=complex)
    Az[..., 0, 0] = -hz
    Az[..., 1, 1] = hz
    Az[..., 0, 1] = ep
    Az[..., 1, 0] = lam2 * P * em
    Ab[..., 0, 0] = np.conj(hz)
    Ab[..., 1, 1] = -np.conj(hz)
    Ab[..., 1, 0] = ep
    Ab[..., 0, 1] = lamb2 * np.conj(P) * em
    return Az, Ab


class FlatConnection:
    """Evaluator of (A_z, A_zbar) at arbitrary points outside the subtraction cores.

    P is evaluated from logarithms log(z - z_i); by default the principal
    ones at each point, or continued from ``logs`` supplied by the caller.
    """

    def __init__(self, fld: MShGField, spectral: SpectralPoint):
        self.field = fld
        self.spectral = spectral
        self.lam2 = spectral.lam**2
        self.lamb2 = spectral.lam_bar**2

    def P(self, z, logs=None) -> np.ndarray:
        sph = self.field.sphere
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if logs is None:
            logs = np.array([principal_logs(sph, zz) for zz in z])
        logs = np.asarray(logs)
        return np.array([np.exp(log_P_from_logs(sph, l)) for l in logs.reshape(-1, 3)]).reshape(z.shape)

    def __call__(self, z, logs=None) -> tuple[np.ndarray, np.ndarray]:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        eta, eta_z = self.field.eval(z)
        return connection_matrices(eta, eta_z, self.P(z, logs), self.lam2, self.lamb2)

    def curvature(self, z, step: float = 1e-4) -> np.ndarray:
        """d_zbar A_z - d_z A_zbar + [A_z, A_zbar] by central differences (shape (n, 2, 2))."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        sph = self.field.sphere
        logs0 = np.array([principal_logs(sph, zz) for zz in z])

        def at(dz):
            # continue the logs analytically to the displaced points
            inc = np.log1p(dz / (z[:, None] - np.asarray(sph.z)[None, :]))
            return self(z + dz, logs0 + inc)

        Azp, Abp = at(step)
        Azm, Abm = at(-step)
        Azq, Abq = at(1j * step)
        Azr, Abr = at(-1j * step)
        Az, Ab = self(z, logs0)
        dx_Az, dy_Az = (Azp - Azm) / (2 * step), (Azq - Azr) / (2 * step)
        dx_Ab, dy_Ab = (Abp - Abm) / (2 * step), (Abq - Abr) / (2 * step)
        dzb_Az = 0.5 * (dx_Az + 1j * dy_Az)
        dz_Ab = 0.5 * (dx_Ab - 1j * dy_Ab)
        return dzb_Az - dz_Ab + Az @ Ab - Ab @ Az


def build_connection(fld: MShGField, spectral: SpectralPoint) -> FlatConnection:
    return FlatConnection(fld, spectral)


def flatness_residual(fld: MShGField, points, spectral: SpectralPoint | None = None, step: float = 1e-4) -> float:
    """Largest Frobenius norm of the curvature over ``points``."""
    spectral = spectral or SpectralPoint.from_theta(0.0, fld.rho)
    F = build_connection(fld, spectral).curvature(points, step)
    return float(np.max(np.sqrt(np.sum(np.abs(F) ** 2, axis=(-2, -1)))))


def sample_points(fld: MShGField, n: int, seed: int = 0) -> np.ndarray:
    """Random points of the finite region, outside the polar blending cores' innermost rings."""
    rng = np.random.default_rng(seed)
    sph = fld.sphere
    E = 0.5 * -fld.mesh.chart("F").origin[0]
    out = []
    while len(out) < n:
        z = complex(rng.uniform(-E, E), rng.uniform(-E, E))
        if min(abs(z - zi) for zi in sph.z) > 0.05 * sph.min_separation:
            out.append(z)
    return np.array(out)
