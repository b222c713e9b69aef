"""Parallel transport for the lambda-deformed Fuchsian operator.

The scalar equation psi'' = (T_L(z) + lambda^2 P(z)) psi is integrated as the
first-order system for (psi, psi') along a :class:`~mshglab.paths.PathSpec`.
Transport matrices map the basis (psi, psi') at the start of a path to its
end; for a concatenation p1 then p2 the matrices compose as M(p2) @ M(p1).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BranchError, ConfigurationError
from .integrator import StepStats, integrate_linear
from .paths import PathSpec, Segment, circle_loop, commutator
from .rational_core import (
    BranchState,
    FuchsianOperator,
    SphereData,
    log_prefactor,
    principal_logs,
)

DEFAULT_TOL = 1e-11


@dataclass
class TransportMatrix:
    m: np.ndarray
    path: PathSpec
    lambda2: complex
    tol_est: float
    stats: StepStats = field(default_factory=StepStats, repr=False)
    end_logs: np.ndarray | None = field(default=None, repr=False)

    @property
    def det(self) -> complex:
        m = self.m
        return complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def trace(self) -> complex:
        return complex(self.m[0, 0] + self.m[1, 1])


def relative_det_defect(m: np.ndarray) -> float:
    """|det m - 1| measured against max(1, max|m_ij|^2), the rounding scale of the determinant."""
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return float(abs(det - 1.0) / max(1.0, float(np.max(np.abs(m))) ** 2))


def default_r_min(op: FuchsianOperator) -> float:
    return 1e-3 * min_pole_separation(op.poles())


def min_pole_separation(poles: Sequence[complex]) -> float:
    poles = list(poles)
    return min(abs(p - q) for k, p in enumerate(poles) for q in poles[:k])


def check_clearance(path: PathSpec, points: Sequence[complex], r_min: float) -> None:
    for p in points:
        d = path.min_distance(p)
        if d < r_min:
            raise ConfigurationError(f"path passes within {d:.3g} of singular point {p} (r_min={r_min:.3g})")


def initial_logs(sphere: SphereData, base: complex, branch: BranchState | None) -> np.ndarray:
    if branch is None:
        return principal_logs(sphere, base)
    if branch.point is None or abs(branch.point - base) > 1e-12 * max(1.0, abs(base)):
        raise BranchError("branch state must be anchored at the path base point")
    return branch.logs(sphere)


CoefFactory = Callable[[Segment, np.ndarray], Callable[[float], np.ndarray]]


def transport_path(
    path: PathSpec,
    sphere: SphereData,
    make_coef: CoefFactory,
    n: int,
    tol: float,
    logs0: np.ndarray,
    max_steps: int = 200_000,
) -> tuple[np.ndarray, StepStats, np.ndarray]:
    """Generic driver: integrate a batch of n 2x2 systems segment by segment.

    ``make_coef(segment, logs_at_segment_start)`` returns t -> A(t) of shape
    (n, 2, 2) already multiplied by dz/dt.  Returns (Y, stats, end logs).
    """
    Y = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
    stats = StepStats()
    logs = np.array(logs0, dtype=complex)
    h_abs = None
    prev_len = None
    for seg in path.segments:
        coef = make_coef(seg, logs)
        h0 = None
        if h_abs is not None and seg.length > 0:
            h0 = h_abs * prev_len / seg.length
        Y, stats = integrate_linear(
            coef, Y, rtol=tol, atol=tol, h0=h0, max_steps=max_steps, locate=seg.point, stats=stats
        )
        h_abs, prev_len = stats.last_h, seg.length
        logs = logs + np.array(seg.frame(1.0, sphere.z)[2])
    return Y, stats, logs


def _ode_coef_factory(op: FuchsianOperator, lam2: np.ndarray) -> CoefFactory:
    sphere = op.sphere
    pre = log_prefactor(sphere)
    expo = [2.0 - a for a in sphere.a]
    poles = op.pole_data()
    zs = sphere.z
    n = lam2.shape[0]
    has_lambda = bool(np.any(lam2 != 0))

    def make(seg: Segment, logs0: np.ndarray):
        l0 = [complex(v) for v in logs0]

        def coef(t: float) -> np.ndarray:
            z, dz, inc = seg.frame(t, zs)
            T = 0j
            for p, s, r in poles:
                inv = 1.0 / (z - p)
                T += (s * inv + r) * inv
            A = np.zeros((n, 2, 2), dtype=complex)
            A[:, 0, 1] = dz
            if has_lambda:
                logP = pre - sum(e * (l + d) for e, l, d in zip(expo, l0, inc))
                A[:, 1, 0] = dz * (T + lam2 * cmath.exp(logP))
            else:
                A[:, 1, 0] = dz * T
            return A

        return coef

    return make


def transport(
    op: FuchsianOperator,
    lambda2,
    path: PathSpec,
    tol: float = DEFAULT_TOL,
    r_min: float | None = None,
    branch: BranchState | None = None,
    max_steps: int = 200_000,
):
    """Transport matrix of psi'' = (T + lambda^2 P) psi along ``path``.

    ``lambda2`` may be a scalar (returns one :class:`TransportMatrix`) or a
    sequence (returns a list, integrated together with shared step sizes).
    ``branch`` selects the sheet of P at the base point (principal if None).
    """
    scalar = np.ndim(lambda2) == 0
    lam2 = np.atleast_1d(np.asarray(lambda2, dtype=complex))
    r_min = default_r_min(op) if r_min is None else r_min
    check_clearance(path, op.poles(), r_min)
    logs0 = initial_logs(op.sphere, path.base, branch)
    Y, stats, logs = transport_path(
        path, op.sphere, _ode_coef_factory(op, lam2), lam2.shape[0], tol, logs0, max_steps=max_steps
    )
    out = []
    for k in range(lam2.shape[0]):
        m = Y[k]
        det_err = relative_det_defect(m)
        out.append(
            TransportMatrix(
                m=m, path=path, lambda2=complex(lam2[k]), tol_est=max(det_err, stats.error_sum), stats=stats, end_logs=logs
            )
        )
    return out[0] if scalar else out


def monodromy_loop(
    poles: Sequence[complex], center: complex, radius: float, base: complex, via: Sequence[complex] = ()
) -> PathSpec:
    inside = [p for p in poles if abs(p - center) < radius]
    if len(inside) != 1:
        raise ConfigurationError(f"monodromy disk must contain exactly one pole, found {len(inside)}")
    on = [p for p in poles if abs(abs(p - center) - radius) < 1e-12]
    if on:
        raise ConfigurationError("a pole lies on the monodromy circle")
    return circle_loop(center, radius, base, via=via)


def monodromy_around(
    op: FuchsianOperator,
    lambda2,
    center: complex,
    radius: float,
    base: complex,
    tol: float = DEFAULT_TOL,
    via: Sequence[complex] = (),
    branch: BranchState | None = None,
):
    """Monodromy of the base-anchored loop base -> circle(center, radius) -> base."""
    loop = monodromy_loop(op.poles(), center, radius, base, via)
    return transport(op, lambda2, loop, tol=tol, branch=branch)


def pochhammer_loop(
    sphere: SphereData,
    i: int,
    j: int,
    base: complex | None = None,
    radii: tuple[float, float] | None = None,
    legs: dict[int, Sequence[complex]] | None = None,
    avoid: Sequence[complex] = (),
) -> PathSpec:
    """Commutator loop g_i g_j g_i^-1 g_j^-1 of base-anchored simple loops.

    Puncture indices are 0-based.  ``legs[k]`` optionally lists waypoints
    between the base and the circle around puncture k.  The total winding
    around every primary puncture is zero, so P returns to its initial sheet.
    """
    if i == j:
        raise ConfigurationError("Pochhammer loop needs two distinct punctures")
    z = sphere.z
    sep = sphere.min_separation
    if base is None:
        base = 0.5 * (z[i] + z[j])
    if radii is None:
        radii = (0.2 * sep, 0.2 * sep)
    legs = legs or {}
    for k, zk in enumerate(z):
        if abs(base - zk) < 1e-3 * sep:
            raise ConfigurationError(f"base point too close to puncture z{k + 1}")
    gi = circle_loop(z[i], radii[0], base, via=legs.get(i, ()))
    gj = circle_loop(z[j], radii[1], base, via=legs.get(j, ()))
    loop = commutator(gi, gj)
    for k, zk in enumerate(z):
        if loop.min_distance(zk) < 1e-3 * sep:
            raise ConfigurationError(f"Pochhammer loop passes too close to z{k + 1}")
        w = loop.winding_number(zk)
        if abs(w) > 1e-9:
            raise BranchError(f"Pochhammer loop has winding {w:.3f} around z{k + 1}")
    for p in avoid:
        if loop.min_distance(p) < 1e-3 * sep:
            raise ConfigurationError(f"Pochhammer loop passes too close to {p}")
    return loop


def wilson_trace(
    op: FuchsianOperator,
    lambda2,
    loop: PathSpec,
    tol: float = DEFAULT_TOL,
    branch: BranchState | None = None,
):
    """Tr of the transport around a closed loop (scalar or batched in lambda^2)."""
    if not loop.loop:
        raise ConfigurationError("Wilson trace needs a closed loop")
    res = transport(op, lambda2, loop, tol=tol, branch=branch)
    if isinstance(res, list):
        return np.array([r.trace for r in res])
    return res.trace


def frobenius_trace(delta: float) -> float:
    """Trace of the local monodromy at a double pole of strength delta (no log terms)."""
    nu = cmath.sqrt(1.0 + 4.0 * delta)
    return complex(-2.0 * cmath.cos(math.pi * nu)).real


def commutator_trace(x: complex, y: complex, xy: complex) -> complex:
    """Tr(A B A^-1 B^-1) for A, B in SL2 from Tr A, Tr B and Tr AB."""
    return x * x + y * y + xy * xy - x * y * xy - 2.0
