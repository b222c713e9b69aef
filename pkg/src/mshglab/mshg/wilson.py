"""Massive Wilson loops: path-ordered transport of the flat connection.

Along a parametrised path the system dPsi/dt = (A_z z'(t) + A_zbar conj(z'(t))) Psi
is integrated with the same adaptive integrator as the ODE transport, batched
over spectral points that share the field data at every stage.
"""
from __future__ import annotations

import cmath
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, IntegrationError
from ..paths import PathSpec, Segment
from ..rational_core import log_prefactor, principal_logs
from ..spectrum import SCAN_CHUNK, ScanSample, SpectralPoint, run_chunked
from ..transport import DEFAULT_TOL, check_clearance, pochhammer_loop, relative_det_defect, transport_path
from .field import MShGField

PDE_TOL = 1e-10


def default_pde_loop(fld: MShGField, pair: tuple[int, int] = (0, 1)) -> PathSpec:
    return pochhammer_loop(fld.sphere, pair[0], pair[1])


def _coef_factory(fld: MShGField, lam2: np.ndarray, lamb2: np.ndarray):
    sph = fld.sphere
    pre = log_prefactor(sph)
    expo = [2.0 - a for a in sph.a]
    zs = sph.z
    n = lam2.shape[0]

    def make(seg: Segment, logs0: np.ndarray):
        l0 = [complex(v) for v in logs0]

        def coef(t: float) -> np.ndarray:
            z, dz, inc = seg.frame(t, zs)
            eta, eta_z = fld.eval(np.array([z]))
            eta, eta_z = float(eta[0]), complex(eta_z[0])
            P = cmath.exp(pre - sum(e * (l + d) for e, l, d in zip(expo, l0, inc)))
            ep, em = np.exp(eta), np.exp(-eta)
            dzb = dz.conjugate()
            hz = 0.5 * eta_z
            A = np.empty((n, 2, 2), dtype=complex)
            diag = -hz * dz + hz.conjugate() * dzb
            A[:, 0, 0] = diag
            A[:, 1, 1] = -diag
            A[:, 0, 1] = ep * dz + lamb2 * P.conjugate() * em * dzb
            A[:, 1, 0] = lam2 * P * em * dz + ep * dzb
            return A

        return coef

    return make


def pde_transport(fld: MShGField, spectral, path: PathSpec, tol: float = PDE_TOL):
    """Transport matrices along ``path`` for one SpectralPoint or a sequence of them.

    Returns (matrices of shape (n, 2, 2), stats).
    """
    pts = [spectral] if isinstance(spectral, SpectralPoint) else list(spectral)
    lam2 = np.array([p.lam**2 for p in pts], dtype=complex)
    lamb2 = np.array([p.lam_bar**2 for p in pts], dtype=complex)
    check_clearance(path, fld.sphere.z, fld.core_radius)
    logs0 = principal_logs(fld.sphere, path.base)
    Y, stats, _ = transport_path(path, fld.sphere, _coef_factory(fld, lam2, lamb2), len(pts), tol, logs0)
    return Y, stats


def pde_wilson(fld: MShGField, spectral, loop: PathSpec | None = None, tol: float = PDE_TOL):
    """Tr of the path-ordered exponential around a closed loop (scalar or batched)."""
    loop = default_pde_loop(fld) if loop is None else loop
    if not loop.loop:
        raise ConfigurationError("Wilson trace needs a closed loop")
    Y, _ = pde_transport(fld, spectral, loop, tol)
    W = Y[:, 0, 0] + Y[:, 1, 1]
    return complex(W[0]) if isinstance(spectral, SpectralPoint) else W


def _pde_batch(args) -> list[ScanSample]:
    fld, loop, thetas, tol, swap = args
    sgn = -1.0 if swap else 1.0
    pts = [SpectralPoint.from_theta(sgn * t, fld.rho) for t in thetas]
    Y, stats = pde_transport(fld, pts, loop, tol)
    out = []
    for theta, m in zip(thetas, Y):
        W = complex(m[0, 0] + m[1, 1])
        if not cmath.isfinite(W):
            raise IntegrationError(f"Wilson trace overflow at theta={theta}")
        err = max(relative_det_defect(m), stats.error_sum, tol) * max(1.0, float(np.max(np.abs(m))))
        out.append(ScanSample(complex(theta), W, err))
    return out


def pde_scan(
    fld: MShGField,
    theta_grid: Sequence[complex],
    loop: PathSpec | None = None,
    pair: tuple[int, int] = (0, 1),
    tol: float = PDE_TOL,
    swap: bool = False,
    jobs: int = 1,
) -> list[ScanSample]:
    """W(theta) with lambda = rho e^theta, lambda_bar = rho e^-theta (theta -> -theta if ``swap``)."""
    if not isinstance(fld, MShGField):
        raise ConfigurationError("mshg_pde mode needs an MShGField")
    loop = default_pde_loop(fld, pair) if loop is None else loop
    grid = [complex(t) for t in theta_grid]
    return run_chunked(_pde_batch, lambda ts: (fld, loop, ts, tol, swap), grid, jobs)


__all__ = ["pde_transport", "pde_wilson", "pde_scan", "default_pde_loop", "SCAN_CHUNK", "DEFAULT_TOL"]
