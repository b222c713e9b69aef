"""Rational and multivalued building blocks on the 3+L punctured sphere.

The quadratic differential

    P(z) = (z3-z2)^a1 (z1-z3)^a2 (z2-z1)^a3 / prod_i (z-zi)^(2-ai),   a1+a2+a3 = 2,

is multivalued, so every evaluation goes through explicitly tracked
logarithms log(z - zi).  A :class:`BranchState` records which sheet is meant.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import BranchError, ChartError, ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi
OMEGA = cmath.exp(2j * math.pi / 3)
DEFAULT_FRAME = (1.0 + 0.0j, OMEGA, OMEGA.conjugate())

# largest argument change accepted for a single continuation step
MAX_STEP_ARG = math.pi / 4


class Regime(str, Enum):
    SYMMETRIC = "symmetric"
    UNITARY = "unitary"


def _as_complex_triple(z: Iterable) -> tuple[complex, complex, complex]:
    out = tuple(complex(v) for v in z)
    if len(out) != 3:
        raise ConfigurationError("exactly three primary punctures are required")
    return out  # type: ignore[return-value]


@dataclass(frozen=True)
class SphereData:
    """Three primary punctures with exponents a = (a1, a2, 2 - a1 - a2).

    ``phase`` is an additional constant argument of the normalisation of P.
    It is zero for a freshly built sphere; Möbius pushforwards set it so the
    principal sheets of source and image agree at an anchor point.
    """

    z: tuple[complex, complex, complex] = DEFAULT_FRAME
    a1: float = 2.0 / 3.0
    a2: float = 2.0 / 3.0
    regime: Regime = Regime.SYMMETRIC
    phase: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _as_complex_triple(self.z))
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "a1", float(self.a1))
        object.__setattr__(self, "a2", float(self.a2))
        for i in range(3):
            for j in range(i + 1, 3):
                if abs(self.z[i] - self.z[j]) < 1e-12:
                    raise ConfigurationError(f"punctures z{i + 1} and z{j + 1} coincide")
        a = self.a
        if self.regime is Regime.SYMMETRIC:
            bad = [i + 1 for i in range(3) if not (0.0 < a[i] < 2.0)]
            if bad:
                raise DomainError(f"symmetric regime needs 0 < a_i < 2; violated for i={bad}, a={a}")
        else:
            if not (a[0] > 0.0 and a[1] > 0.0 and a[2] < 0.0):
                raise DomainError(f"unitary regime needs a1 > 0, a2 > 0, a3 < 0; got a={a}")

    @property
    def a(self) -> tuple[float, float, float]:
        return (self.a1, self.a2, 2.0 - self.a1 - self.a2)

    @classmethod
    def from_triple(cls, a: Sequence[float], z=DEFAULT_FRAME, regime=Regime.SYMMETRIC) -> "SphereData":
        """Build from a full triple; a3 is recomputed from a1, a2 (the stored a3 is only checked)."""
        if abs(sum(a) - 2.0) > 1e-9:
            raise DomainError(f"a1 + a2 + a3 must equal 2, got {sum(a)!r}")
        return cls(z=tuple(z), a1=a[0], a2=a[1], regime=regime)

    @property
    def min_separation(self) -> float:
        z = self.z
        return min(abs(z[0] - z[1]), abs(z[1] - z[2]), abs(z[0] - z[2]))

    def to_dict(self) -> dict:
        return {
            "z": [[v.real, v.imag] for v in self.z],
            "a1": self.a1,
            "a2": self.a2,
            "regime": self.regime.value,
            "phase": self.phase,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SphereData":
        return cls(
            z=tuple(complex(*p) for p in d["z"]),
            a1=d["a1"],
            a2=d["a2"],
            regime=Regime(d.get("regime", "symmetric")),
            phase=d.get("phase", 0.0),
        )


# ---------------------------------------------------------------------------
# branch bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchState:
    """Sheet label for the logarithms log(z - zi) at ``point``.

    ``windings[i]`` counts how many times 2*pi has been added to the principal
    logarithm; the offsets themselves are ``2*pi*windings``.
    """

    point: complex | None = None
    windings: tuple[int, int, int] = (0, 0, 0)

    @property
    def log_offsets(self) -> tuple[float, float, float]:
        return tuple(TWO_PI * k for k in self.windings)  # type: ignore[return-value]

    def logs(self, sphere: SphereData) -> np.ndarray:
        if self.point is None:
            raise BranchError("branch state has no anchor point")
        return principal_logs(sphere, self.point) + 1j * np.asarray(self.log_offsets)


def principal_logs(sphere: SphereData, z: complex) -> np.ndarray:
    d = np.array([z - zi for zi in sphere.z], dtype=complex)
    if np.min(np.abs(d)) == 0.0:
        raise DomainError(f"point {z} coincides with a puncture")
    return np.log(d)


def log_prefactor(sphere: SphereData) -> complex:
    z1, z2, z3 = sphere.z
    a1, a2, a3 = sphere.a
    return a1 * cmath.log(z3 - z2) + a2 * cmath.log(z1 - z3) + a3 * cmath.log(z2 - z1) + 1j * sphere.phase


def log_P_from_logs(sphere: SphereData, logs) -> complex | np.ndarray:
    """log P given continued logarithms ``logs[..., i] = log(z - zi)``."""
    a = np.asarray(sphere.a)
    return log_prefactor(sphere) - np.asarray(logs) @ (2.0 - a)


def _logs_continued(sphere: SphereData, z: complex, ref: complex, ref_logs: np.ndarray) -> np.ndarray:
    d = np.array([z - zi for zi in sphere.z], dtype=complex)
    if np.min(np.abs(d)) == 0.0:
        raise DomainError(f"point {z} coincides with a puncture")
    ratio = d / np.array([ref - zi for zi in sphere.z], dtype=complex)
    step = np.log(ratio)
    if np.max(np.abs(step.imag)) >= MAX_STEP_ARG:
        raise BranchError(
            f"branch anchored at {ref} cannot be used at {z}: argument jump "
            f"{np.max(np.abs(step.imag)):.3f} exceeds pi/4 (continue the branch first)"
        )
    return ref_logs + step


def continue_branch(sphere: SphereData, branch: BranchState, z_to: complex) -> BranchState:
    """Continue ``branch`` along the straight segment to ``z_to``.

    The segment is subdivided so that no step changes any arg(z - zi) by
    more than pi/4; passing through a puncture is a domain error.
    """
    if branch.point is None:
        raise BranchError("branch state has no anchor point")
    z0 = branch.point
    z_to = complex(z_to)
    dist = abs(z_to - z0)
    n = 1
    for zi in sphere.z:
        near = _segment_distance(z0, z_to, zi)
        if near < 1e-14:
            raise DomainError(f"continuation path passes through puncture {zi}")
        # substeps no longer than near/2 sweep at most pi/6 in arg(z - zi)
        n = max(n, int(math.ceil(2.0 * dist / near)))
    logs = branch.logs(sphere)
    pts = [z0 + (z_to - z0) * k / n for k in range(n + 1)]
    prev = z0
    for p in pts[1:]:
        logs = _logs_continued(sphere, p, prev, logs)
        prev = p
    princ = principal_logs(sphere, z_to)
    wind = np.rint((logs - princ).imag / TWO_PI).astype(int)
    return BranchState(point=z_to, windings=tuple(int(k) for k in wind))


def track_branch(sphere: SphereData, points: Sequence[complex], start: BranchState | None = None) -> BranchState:
    """Continue a branch along the polyline through ``points``."""
    pts = list(points)
    state = start if start is not None else BranchState(point=pts[0])
    if state.point != pts[0]:
        state = continue_branch(sphere, state, pts[0])
    for p in pts[1:]:
        state = continue_branch(sphere, state, p)
    return state


def _segment_distance(p: complex, q: complex, c: complex) -> float:
    d = q - p
    if d == 0:
        return abs(c - p)
    t = min(1.0, max(0.0, ((c - p) * d.conjugate()).real / abs(d) ** 2))
    return abs(p + t * d - c)


def eval_P(sphere: SphereData, z: complex, branch: BranchState | None = None) -> complex:
    """Value of P at ``z`` on the sheet selected by ``branch`` (principal if None)."""
    z = complex(z)
    if branch is None or branch.point is None:
        logs = principal_logs(sphere, z)
        if branch is not None:
            logs = logs + 1j * np.asarray(branch.log_offsets)
    else:
        logs = _logs_continued(sphere, z, branch.point, branch.logs(sphere))
    return cmath.exp(log_P_from_logs(sphere, logs))


def abs_P(sphere: SphereData, z) -> np.ndarray:
    """|P(z)|, single valued; vectorised over ``z``."""
    z = np.asarray(z, dtype=complex)
    a = sphere.a
    lp = log_prefactor(sphere).real
    out = np.full(z.shape, lp)
    for zi, ai in zip(sphere.z, a):
        out = out - (2.0 - ai) * np.log(np.abs(z - zi))
    return np.exp(out)


def log_abs_P(sphere: SphereData, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.full(z.shape, log_prefactor(sphere).real)
    for zi, ai in zip(sphere.z, sphere.a):
        out = out - (2.0 - ai) * np.log(np.abs(z - zi))
    return out


def log_derivative_P(sphere: SphereData, z):
    """d/dz log P = sum_i (ai - 2)/(z - zi); single valued."""
    z = np.asarray(z, dtype=complex)
    return sum((ai - 2.0) / (z - zi) for zi, ai in zip(sphere.z, sphere.a))


def reference_point(sphere: SphereData) -> complex:
    """A deterministic point well away from the punctures."""
    z = sphere.z
    c = sum(z) / 3.0
    sep = sphere.min_separation
    candidates = [c] + [c + 0.5 * sep * cmath.exp(1j * (0.3 + k * math.pi / 3)) for k in range(6)]
    return max(candidates, key=lambda p: min(abs(p - zi) for zi in z))


# ---------------------------------------------------------------------------
# Möbius maps
# ---------------------------------------------------------------------------


def mobius_apply(m, z):
    (a, b), (c, d) = np.asarray(m, dtype=complex)
    return (a * z + b) / (c * z + d)


def mobius_derivative(m, z):
    (a, b), (c, d) = np.asarray(m, dtype=complex)
    return (a * d - b * c) / (c * z + d) ** 2


def mobius_pushforward(sphere: SphereData, m, anchor: complex | None = None) -> SphereData:
    """Move the punctures by the Möbius map ``m`` (a 2x2 complex matrix).

    The image sphere satisfies P'(m(z)) m'(z)^2 = P(z) as multivalued
    functions; its ``phase`` is fixed so that the principal sheets agree at
    ``anchor`` (default :func:`reference_point`).  Elsewhere, compare values
    after continuing both branches along corresponding paths.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise ConfigurationError("Möbius map must be a 2x2 matrix")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-14 * max(1.0, np.max(np.abs(m)) ** 2):
        raise ConfigurationError("degenerate Möbius map (det = 0)")
    c, d = m[1]
    scale = max(abs(c), abs(d), 1.0)
    for k, zk in enumerate(sphere.z):
        if abs(c * zk + d) < 1e-12 * scale * max(1.0, abs(zk)):
            raise ChartError(f"puncture z{k + 1} is mapped to infinity; choose a re-charted map")
    if np.allclose(m, m[0, 0] * np.eye(2), atol=0.0, rtol=0.0):
        return sphere
    new_z = tuple(complex(mobius_apply(m, zk)) for zk in sphere.z)
    image = SphereData(z=new_z, a1=sphere.a1, a2=sphere.a2, regime=sphere.regime, phase=0.0)
    p = reference_point(sphere) if anchor is None else complex(anchor)
    if abs(c * p + d) < 1e-12:
        raise ChartError("anchor point is mapped to infinity")
    lhs = log_P_from_logs(image, principal_logs(image, complex(mobius_apply(m, p)))) + 2 * cmath.log(
        complex(mobius_derivative(m, p))
    )
    rhs = log_P_from_logs(sphere, principal_logs(sphere, p))
    phase = (rhs - lhs).imag
    phase = math.remainder(phase, TWO_PI)
    return SphereData(z=new_z, a1=sphere.a1, a2=sphere.a2, regime=sphere.regime, phase=phase)


# ---------------------------------------------------------------------------
# Fuchsian operator -d^2 + T_L(z)
# ---------------------------------------------------------------------------

APPARENT_STRENGTH = 2.0  # exponents (-1, 2) at every apparent puncture


def decay_residues(sphere: SphereData, delta: Sequence[float], apparent: Sequence[tuple[complex, complex]]) -> np.ndarray:
    """Residues c1, c2, c3 at the primary punctures making z = infinity regular.

    Solves the three linear conditions
        sum r = 0,  sum (r p + s) = 0,  sum (r p^2 + 2 s p) = 0
    over all poles p with double-pole strength s and residue r.
    """
    z = np.asarray(sphere.z)
    V = np.vstack([np.ones(3), z, z**2])
    rhs = np.zeros(3, dtype=complex)
    delta = np.asarray(delta, dtype=float)
    rhs[1] -= delta.sum()
    rhs[2] -= 2.0 * np.sum(delta * z)
    for x, c in apparent:
        rhs[0] -= c
        rhs[1] -= c * x + APPARENT_STRENGTH
        rhs[2] -= c * x**2 + 2.0 * APPARENT_STRENGTH * x
    return np.linalg.solve(V, rhs)


@dataclass(frozen=True)
class FuchsianOperator:
    """-d^2/dz^2 + T_L(z) with

        T_L = sum_i [delta_i/(z-zi)^2 + c_i/(z-zi)] + sum_a [2/(z-x_a)^2 + c_a/(z-x_a)].

    The residues c_i are not free: they are solved from regularity at infinity
    when the operator is built.
    """

    sphere: SphereData
    delta: tuple[float, float, float]
    apparent: tuple[tuple[complex, complex], ...] = ()
    residues: tuple[complex, complex, complex] = field(default=(0j, 0j, 0j))

    @classmethod
    def build(
        cls,
        sphere: SphereData,
        delta: Sequence[float],
        apparent: Sequence[tuple[complex, complex]] = (),
    ) -> "FuchsianOperator":
        delta = tuple(float(d) for d in delta)
        if len(delta) != 3:
            raise ConfigurationError("delta must have three entries")
        app = tuple((complex(x), complex(c)) for x, c in apparent)
        xs = [x for x, _ in app]
        for a_idx, x in enumerate(xs):
            for zi in sphere.z:
                if abs(x - zi) < 1e-12:
                    raise DomainError(f"apparent puncture x{a_idx + 1} coincides with a primary puncture")
            for b_idx in range(a_idx):
                if abs(x - xs[b_idx]) < 1e-12:
                    raise DomainError(f"apparent punctures x{b_idx + 1} and x{a_idx + 1} coincide")
        res = decay_residues(sphere, delta, app)
        return cls(sphere=sphere, delta=delta, apparent=app, residues=tuple(complex(r) for r in res))

    @property
    def L(self) -> int:
        return len(self.apparent)

    def poles(self) -> list[complex]:
        return list(self.sphere.z) + [x for x, _ in self.apparent]

    def pole_data(self) -> list[tuple[complex, float, complex]]:
        """(position, double-pole strength, residue) for all 3 + L poles."""
        out = [(zi, d, c) for zi, d, c in zip(self.sphere.z, self.delta, self.residues)]
        out += [(x, APPARENT_STRENGTH, c) for x, c in self.apparent]
        return out

    def with_apparent(self, apparent: Sequence[tuple[complex, complex]]) -> "FuchsianOperator":
        return FuchsianOperator.build(self.sphere, self.delta, apparent)

    def to_dict(self) -> dict:
        return {
            "sphere": self.sphere.to_dict(),
            "delta": list(self.delta),
            "apparent": [{"x": [x.real, x.imag], "c": [c.real, c.imag]} for x, c in self.apparent],
            "residues": [[r.real, r.imag] for r in self.residues],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FuchsianOperator":
        sphere = SphereData.from_dict(d["sphere"])
        app = [(complex(*p["x"]), complex(*p["c"])) for p in d.get("apparent", [])]
        return cls.build(sphere, d["delta"], app)


def eval_T(op: FuchsianOperator, z):
    """T_L(z); vectorised over ``z``.  Raises at a pole."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    for p, s, r in op.pole_data():
        d = z - p
        if np.any(d == 0):
            raise DomainError(f"T_L evaluated at its pole {p}")
        inv = 1.0 / d
        out = out + (s * inv + r) * inv
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------


def partition_count(L: int, kinds: int) -> int:
    """Coefficient of q^L in prod_{n>=1} (1 - q^n)^(-kinds), exact."""
    if L < 0:
        raise DomainError("L must be non-negative")
    if kinds < 1:
        raise DomainError("kinds must be a positive integer")
    coeffs = [1] + [0] * L
    for _ in range(kinds):
        for n in range(1, L + 1):
            for k in range(n, L + 1):
                coeffs[k] += coeffs[k - n]
    return coeffs[L]
