"""Monodromy-free (apparent) punctures of the deformed Fuchsian operator.

Near an apparent puncture x with T + lambda^2 P = 2/u^2 + c/u + t0 + t1 u + ...
(u = z - x), the Frobenius series seeded at exponent -1 meets a vanishing
indicial factor at order 3, where it is obstructed by

    c^3/4 - c t0 + t1.

Since P is regular at x, t0 and t1 are affine in lambda^2 and the obstruction
splits into two conditions per puncture:

    E0 = c^3/4 - c T0 + T1 = 0,      E2 = P'(x) - c P(x) = 0,

with T0, T1 the Taylor coefficients of the regular part of T at x.  The
second one is used in the normalised form c - dlogP/dz(x) = 0.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError, SingularJacobianError
from .rational_core import (
    APPARENT_STRENGTH,
    FuchsianOperator,
    SphereData,
    decay_residues,
    eval_P,
    log_derivative_P,
    partition_count,
)
from .transport import monodromy_around

ORACLE_LAMBDA2 = (0.0, 1.0, -2.0 + 3.0j)


# ---------------------------------------------------------------------------
# conditions at a single puncture
# ---------------------------------------------------------------------------


def regular_part_taylor(op: FuchsianOperator, a: int) -> tuple[complex, complex]:
    """(T0, T1): value and derivative at x_a of T minus its principal part at x_a."""
    x, _ = op.apparent[a]
    t0 = 0j
    t1 = 0j
    for k, (p, s, r) in enumerate(op.pole_data()):
        if k == 3 + a:
            continue
        d = x - p
        if d == 0:
            raise DomainError(f"apparent puncture x{a + 1} collides with another pole")
        t0 += s / d**2 + r / d
        t1 += -2.0 * s / d**3 - r / d**2
    return t0, t1


def nolog_conditions(op: FuchsianOperator, a: int) -> tuple[complex, complex]:
    """The lambda^0 and lambda^2 obstructions (E0, E2) at apparent puncture ``a`` (0-based).

    E2 is returned unnormalised, as P'(x) - c P(x) on the principal sheet.
    """
    if not 0 <= a < op.L:
        raise ConfigurationError(f"apparent index {a} out of range for L={op.L}")
    x, c = op.apparent[a]
    t0, t1 = regular_part_taylor(op, a)
    e0 = c**3 / 4.0 - c * t0 + t1
    P = eval_P(op.sphere, x)
    dP = P * complex(log_derivative_P(op.sphere, x))
    return complex(e0), complex(dP - c * P)


# ---------------------------------------------------------------------------
# the assembled system in 2L unknowns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgebraicSystem:
    """Residual map v = (x_1..x_L, c_1..c_L) -> (E0_1..E0_L, c_a - gamma(x_a)).

    The primary residues are eliminated through the decay constraints.
    """

    sphere: SphereData
    delta: tuple[float, float, float]
    L: int
    jacobian_kind: str = "analytic"

    def split(self, v) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=complex)
        if v.shape != (2 * self.L,):
            raise ConfigurationError(f"expected {2 * self.L} unknowns, got shape {v.shape}")
        return v[: self.L], v[self.L :]

    def operator(self, v) -> FuchsianOperator:
        x, c = self.split(v)
        return FuchsianOperator.build(self.sphere, self.delta, list(zip(x, c)))

    def _parts(self, v):
        x, c = self.split(v)
        z = np.asarray(self.sphere.z)
        res = decay_residues(self.sphere, self.delta, list(zip(x, c)))
        pos = np.concatenate([z, x])
        s = np.concatenate([np.asarray(self.delta, dtype=complex), np.full(self.L, APPARENT_STRENGTH, dtype=complex)])
        r = np.concatenate([res, c])
        return x, c, pos, s, r

    def residual(self, v) -> np.ndarray:
        L = self.L
        if L == 0:
            return np.zeros(0, dtype=complex)
        x, c, pos, s, r = self._parts(v)
        out = np.empty(2 * L, dtype=complex)
        for a in range(L):
            d = x[a] - np.delete(pos, 3 + a)
            if np.any(d == 0):
                raise DomainError("collision of poles in the algebraic system")
            ss = np.delete(s, 3 + a)
            rr = np.delete(r, 3 + a)
            t0 = np.sum(ss / d**2 + rr / d)
            t1 = np.sum(-2.0 * ss / d**3 - rr / d**2)
            out[a] = c[a] ** 3 / 4.0 - c[a] * t0 + t1
            out[L + a] = c[a] - complex(log_derivative_P(self.sphere, x[a]))
        return out

    def jacobian(self, v) -> np.ndarray:
        if self.jacobian_kind == "finite-difference":
            return fd_jacobian(self.residual, v)
        return self._analytic_jacobian(v)

    def _analytic_jacobian(self, v) -> np.ndarray:
        L = self.L
        if L == 0:
            return np.zeros((0, 0), dtype=complex)
        x, c, pos, s, r = self._parts(v)
        z = np.asarray(self.sphere.z)
        V = np.vstack([np.ones(3), z, z**2])
        Vinv = np.linalg.inv(V)
        # d(primary residues)/d(unknown), columns follow the unknown ordering
        drhs = np.zeros((3, 2 * L), dtype=complex)
        for b in range(L):
            drhs[:, b] = -np.array([0.0, c[b], 2.0 * c[b] * x[b] + 2.0 * APPARENT_STRENGTH])
            drhs[:, L + b] = -np.array([1.0, x[b], x[b] ** 2])
        dres = Vinv @ drhs
        J = np.zeros((2 * L, 2 * L), dtype=complex)
        a_exp = np.asarray(self.sphere.a)
        for a in range(L):
            idx = [k for k in range(3 + L) if k != 3 + a]
            d = x[a] - pos[idx]
            ss, rr = s[idx], r[idx]
            t0 = np.sum(ss / d**2 + rr / d)
            t1 = np.sum(-2.0 * ss / d**3 - rr / d**2)
            dt0 = np.zeros(2 * L, dtype=complex)
            dt1 = np.zeros(2 * L, dtype=complex)
            # through the primary residues
            dt0 += (1.0 / (x[a] - z)) @ dres
            dt1 += (-1.0 / (x[a] - z) ** 2) @ dres
            # x_a as evaluation point
            dt0[a] += t1
            dt1[a] += np.sum(6.0 * ss / d**4 + 2.0 * rr / d**3)
            for b in range(L):
                if b == a:
                    continue
                db = x[a] - x[b]
                dt0[b] += 2.0 * APPARENT_STRENGTH / db**3 + c[b] / db**2
                dt1[b] += -6.0 * APPARENT_STRENGTH / db**4 - 2.0 * c[b] / db**3
                dt0[L + b] += 1.0 / db
                dt1[L + b] += -1.0 / db**2
            J[a] = -c[a] * dt0 + dt1
            J[a, L + a] += 0.75 * c[a] ** 2 - t0
            J[L + a, L + a] = 1.0
            J[L + a, a] = -np.sum((2.0 - a_exp) / (x[a] - z) ** 2)
        return J


def assemble_system(sphere: SphereData, delta: Sequence[float], L: int, jacobian: str = "analytic") -> AlgebraicSystem:
    if L < 0:
        raise ConfigurationError("L must be non-negative")
    if jacobian not in ("analytic", "finite-difference"):
        raise ConfigurationError(f"unknown Jacobian kind {jacobian!r}")
    return AlgebraicSystem(sphere, tuple(float(d) for d in delta), int(L), jacobian)


def fd_jacobian(f, v, h: float = 1e-6) -> np.ndarray:
    """Central complex-direction differences for a holomorphic map."""
    v = np.asarray(v, dtype=complex)
    cols = []
    for k in range(v.size):
        step = h * max(1.0, abs(v[k]))
        e = np.zeros_like(v)
        e[k] = step
        cols.append((f(v + e) - f(v - e)) / (2.0 * step))
    return np.array(cols).T.reshape(len(f(v)), v.size)


# ---------------------------------------------------------------------------
# Newton solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModuliPoint:
    op: FuchsianOperator
    residual: float
    iterations: int = 0
    oracle_deviation: float | None = None

    @property
    def L(self) -> int:
        return self.op.L

    @property
    def vector(self) -> np.ndarray:
        return np.array([x for x, _ in self.op.apparent] + [c for _, c in self.op.apparent], dtype=complex)

    def sort_key(self) -> tuple:
        return tuple(sorted((round(x.real, 9), round(x.imag, 9)) for x, _ in self.op.apparent))

    def to_dict(self) -> dict:
        return {
            "op": self.op.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "oracle_deviation": self.oracle_deviation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModuliPoint":
        return cls(FuchsianOperator.from_dict(d["op"]), d["residual"], d.get("iterations", 0), d.get("oracle_deviation"))


def collision_distance(system: AlgebraicSystem, x: np.ndarray) -> float:
    pts = list(system.sphere.z) + list(x)
    best = math.inf
    for k in range(3, len(pts)):
        for j in range(k):
            best = min(best, abs(pts[k] - pts[j]))
    return best


def solve_newton(
    system: AlgebraicSystem,
    initial,
    tol: float = 1e-10,
    max_iter: int = 60,
    guard: float | None = None,
    max_radius: float = 1e3,
) -> ModuliPoint:
    """Damped Newton with a collision guard.

    A step is shortened whenever it would bring two poles closer than
    ``guard`` (default 1e-3 times the primary separation).  Raises
    :class:`ConvergenceError` (or :class:`SingularJacobianError`) on failure.
    """
    L = system.L
    if L == 0:
        return ModuliPoint(FuchsianOperator.build(system.sphere, system.delta), 0.0, 0)
    guard = 1e-3 * system.sphere.min_separation if guard is None else guard
    v = np.array(initial, dtype=complex)
    if collision_distance(system, v[:L]) < guard:
        raise ConvergenceError("initial point has colliding poles")
    F = system.residual(v)
    norm = float(np.max(np.abs(F)))
    for it in range(max_iter + 1):
        if norm <= tol:
            return ModuliPoint(system.operator(v), norm, it)
        if it == max_iter:
            break
        J = system.jacobian(v)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularJacobianError(f"singular Jacobian (condition {cond:.3g})", float(cond))
        dv = np.linalg.solve(J, -F)
        t = 1.0
        accepted = False
        while t > 1e-4:
            trial = v + t * dv
            if collision_distance(system, trial[:L]) < guard or np.max(np.abs(trial[:L])) > max_radius:
                t *= 0.5
                continue
            F_trial = system.residual(trial)
            n_trial = float(np.max(np.abs(F_trial)))
            if np.isfinite(n_trial) and n_trial < (1.0 - 1e-4 * t) * norm or n_trial <= tol:
                v, F, norm = trial, F_trial, n_trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise ConvergenceError(f"line search failed at iteration {it} (residual {norm:.3g})")
    raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {norm:.3g})")


# ---------------------------------------------------------------------------
# numerical monodromy oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    deviations: tuple[tuple[float, ...], ...]  # [puncture][lambda2 sample]
    signs: tuple[int, ...]
    lambda2: tuple[complex, ...]
    tol: float

    @property
    def max_deviation(self) -> float:
        return max((max(d) for d in self.deviations), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def to_dict(self) -> dict:
        return {
            "deviations": [list(d) for d in self.deviations],
            "signs": list(self.signs),
            "lambda2": [[l.real, l.imag] for l in self.lambda2],
            "tol": self.tol,
            "passed": self.passed,
        }


def oracle_loop_geometry(op: FuchsianOperator, a: int) -> tuple[complex, float, complex]:
    x = op.apparent[a][0]
    others = [p for k, p in enumerate(op.poles()) if k != 3 + a]
    sep = min(abs(x - p) for p in others)
    radius = 0.1 * min(sep, op.sphere.min_separation)
    # base point: away from x in the direction farthest from the other poles
    dirs = [np.exp(1j * k * np.pi / 4) for k in range(8)]
    best = max(dirs, key=lambda u: min(abs(x + 2 * radius * u - p) for p in others))
    return x, radius, complex(x + 2.0 * radius * best)


def puncture_monodromy_deviation(op: FuchsianOperator, a: int, lambda2: Sequence[complex], tol: float = 1e-12):
    """Per-sample (deviation from +-identity, sign) for the loop around x_a."""
    x, radius, base = oracle_loop_geometry(op, a)
    res = monodromy_around(op, list(lambda2), x, radius, base, tol=tol)
    out = []
    eye = np.eye(2)
    for r in res:
        dp = float(np.max(np.abs(r.m - eye)))
        dm = float(np.max(np.abs(r.m + eye)))
        out.append((dp, 1) if dp <= dm else (dm, -1))
    return out


def verify_monodromy_free(point, lambda2_samples: Sequence[complex] = ORACLE_LAMBDA2, tol: float = 1e-6) -> OracleReport:
    """Monodromy around every apparent puncture must be +-identity for all samples."""
    op = point.op if isinstance(point, ModuliPoint) else point
    devs = []
    signs = []
    for a in range(op.L):
        per = puncture_monodromy_deviation(op, a, lambda2_samples)
        devs.append(tuple(d for d, _ in per))
        sgn = {s for _, s in per}
        # the sign must not depend on lambda; a mixed sign counts as a failure
        signs.append(per[0][1] if len(sgn) == 1 else 0)
        if len(sgn) != 1:
            devs[-1] = tuple(max(d, 2.0) for d in devs[-1])
    return OracleReport(tuple(devs), tuple(signs), tuple(complex(l) for l in lambda2_samples), tol)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """Budget and settings for the multi-start enumeration."""

    n_starts: int = 3000
    seed: int = 0
    radius_factor: float = 2.0
    tol: float = 1e-10
    max_iter: int = 60
    dedup: float = 1e-6
    jobs: int = 1
    oracle_tol: float = 1e-6
    oracle_lambda2: tuple[complex, ...] = ORACLE_LAMBDA2
    stop_when_complete: bool = True
    max_rounds: int = 4

    def __post_init__(self) -> None:
        for name in ("n_starts", "max_iter", "jobs", "max_rounds"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"strategy.{name} must be positive")
        for name in ("radius_factor", "tol", "dedup", "oracle_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"strategy.{name} must be > 0")
        object.__setattr__(self, "oracle_lambda2", tuple(complex(l) for l in self.oracle_lambda2))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["oracle_lambda2"] = [[l.real, l.imag] for l in self.oracle_lambda2]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Strategy":
        d = dict(d)
        if "oracle_lambda2" in d:
            d["oracle_lambda2"] = tuple(
                complex(*p) if isinstance(p, (list, tuple)) else complex(p) for p in d["oracle_lambda2"]
            )
        return cls(**d)


@dataclass
class ModuliSet:
    points: list[ModuliPoint]
    L: int
    sphere: SphereData
    delta: tuple[float, float, float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def expected(self) -> int:
        return partition_count(self.L, 3)

    @property
    def complete(self) -> bool:
        return len(self.points) == self.expected

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "sphere": self.sphere.to_dict(),
            "delta": list(self.delta),
            "expected": self.expected,
            "found": len(self.points),
            "points": [p.to_dict() for p in self.points],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModuliSet":
        return cls(
            points=[ModuliPoint.from_dict(p) for p in d["points"]],
            L=d["L"],
            sphere=SphereData.from_dict(d["sphere"]),
            delta=tuple(d["delta"]),
            diagnostics=d.get("diagnostics", {}),
        )


def chebyshev_disk(n_radial: int, n_angular: int, radius: float) -> np.ndarray:
    """Points on Chebyshev-spaced circles filling a disk."""
    k = np.arange(1, n_radial + 1)
    rs = 1.0 - np.cos(0.5 * np.pi * (k - 0.5) / n_radial)
    rs = radius * rs / rs.max()
    pts = [0j]
    for j, r in enumerate(rs):
        m = max(3, int(round(n_angular * r / radius)))
        phase = np.pi * j / m
        pts.extend(r * np.exp(1j * (phase + 2 * np.pi * np.arange(m) / m)))
    return np.array(pts)


def seed_positions(sphere: SphereData, L: int, strategy: Strategy, round_index: int = 0) -> np.ndarray:
    """(n, L) array of seed positions drawn from a Chebyshev-like disk grid with jitter."""
    z = np.asarray(sphere.z)
    center = np.mean(z)
    radius = strategy.radius_factor * float(np.max(np.abs(z - center)))
    grid = chebyshev_disk(12, 24, radius) + center
    guard = 0.05 * sphere.min_separation
    grid = grid[np.min(np.abs(grid[:, None] - z[None, :]), axis=1) > guard]
    rng = np.random.default_rng([strategy.seed, round_index])
    n = strategy.n_starts
    pick = np.stack([rng.choice(len(grid), size=L, replace=False) for _ in range(n)])
    jitter = (0.5 * radius / 12) * (rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L)))
    return grid[pick] + jitter


class ReducedSystem:
    """Batched form of the system with c_a = dlogP/dz(x_a) eliminated.

    Each lambda^0 condition is multiplied by prod_i (x_a - z_i)^2.  This removes
    the spurious zero at x_a -> infinity (where the bare condition decays
    like x_a^-6) while keeping a pole at every z_i.
    """

    def __init__(self, sphere: SphereData, delta: Sequence[float], L: int):
        self.z = np.asarray(sphere.z)
        self.a = np.asarray(sphere.a)
        self.delta = np.asarray(delta, dtype=float)
        self.L = L
        z = self.z
        self.Vinv = np.linalg.inv(np.vstack([np.ones(3), z, z**2]))

    def gamma(self, x: np.ndarray) -> np.ndarray:
        return np.sum((self.a - 2.0) / (x[..., None] - self.z), axis=-1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        L, z, dl = self.L, self.z, self.delta
        c = self.gamma(x)
        rhs = np.empty((x.shape[0], 3), dtype=complex)
        rhs[:, 0] = -c.sum(1)
        rhs[:, 1] = -dl.sum() - np.sum(c * x + APPARENT_STRENGTH, 1)
        rhs[:, 2] = -2.0 * np.sum(dl * z) - np.sum(c * x**2 + 2.0 * APPARENT_STRENGTH * x, 1)
        res = rhs @ self.Vinv.T
        out = np.empty_like(x)
        for k in range(L):
            d = x[:, k : k + 1] - z
            t0 = np.sum(dl / d**2 + res / d, 1)
            t1 = np.sum(-2.0 * dl / d**3 - res / d**2, 1)
            for b in range(L):
                if b != k:
                    db = x[:, k] - x[:, b]
                    t0 = t0 + APPARENT_STRENGTH / db**2 + c[:, b] / db
                    t1 = t1 - 2.0 * APPARENT_STRENGTH / db**3 - c[:, b] / db**2
            out[:, k] = (c[:, k] ** 3 / 4.0 - c[:, k] * t0 + t1) * np.prod(d**2, 1)
        return out

    def jacobian(self, x: np.ndarray, h: float = 1e-7) -> np.ndarray:
        J = np.empty(x.shape + (self.L,), dtype=complex)
        for k in range(self.L):
            e = np.zeros(self.L)
            e[k] = h
            J[:, :, k] = (self(x + e) - self(x - e)) / (2.0 * h)
        return J


def batched_newton(red: ReducedSystem, x: np.ndarray, max_iter: int = 60, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on many seeds at once; returns final positions and residual norms."""
    x = np.array(x, dtype=complex)
    with np.errstate(all="ignore"):
        F = red(x)
        nrm = np.max(np.abs(F), 1)
        nrm[~np.isfinite(nrm)] = np.inf
        active = np.isfinite(nrm) & (nrm > tol)
        for _ in range(max_iter):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            xa, Fa, na = x[idx], F[idx], nrm[idx]
            J = red.jacobian(xa)
            good = np.all(np.isfinite(J), axis=(1, 2)) & (np.abs(np.linalg.det(J)) > 1e-300)
            dx = np.zeros_like(xa)
            if good.any():
                dx[good] = np.linalg.solve(J[good], -Fa[good][..., None])[..., 0]
            t = np.ones(len(idx))
            done = ~good
            for _ls in range(14):
                xn = xa + t[:, None] * dx
                Fn = red(xn)
                nn = np.max(np.abs(Fn), 1)
                ok = np.isfinite(nn) & (nn < na) & ~done
                x[idx[ok]] = xn[ok]
                F[idx[ok]] = Fn[ok]
                nrm[idx[ok]] = nn[ok]
                done |= ok
                if done.all():
                    break
                t = np.where(done, t, 0.5 * t)
            stalled = ~done
            active[idx[stalled]] = False
            active &= nrm > tol
    return x, nrm


def _explore(args) -> list:
    sphere, delta, L, xs, max_iter = args
    red = ReducedSystem(sphere, delta, L)
    x, nrm = batched_newton(red, xs, max_iter=max_iter, tol=1e-12)
    # candidates only need to be in the basin of the full polish below
    keep = np.isfinite(nrm) & (nrm < 1e-6)
    return [row for row in x[keep]]


def _explore_parallel(sphere, delta, L, xs, strategy: Strategy) -> list:
    if strategy.jobs <= 1 or len(xs) < 2 * strategy.jobs:
        return _explore((sphere, delta, L, xs, strategy.max_iter))
    chunks = np.array_split(xs, strategy.jobs)
    with ProcessPoolExecutor(max_workers=strategy.jobs) as ex:
        parts = list(ex.map(_explore, [(sphere, delta, L, ch, strategy.max_iter) for ch in chunks]))
    return [row for part in parts for row in part]


def point_distance(u: np.ndarray, v: np.ndarray, L: int) -> float:
    """Distance between solution vectors modulo relabelling of the apparent punctures."""
    if L == 0:
        return 0.0
    ux, uc = u[:L], u[L:]
    scale = max(1.0, float(np.max(np.abs(v[L:]))))
    perms = itertools.permutations(range(L)) if L <= 5 else [tuple(np.argsort(ux.real))]
    best = math.inf
    for perm in perms:
        p = list(perm)
        d = max(np.max(np.abs(ux[p] - v[:L])), np.max(np.abs(uc[p] - v[L:])) / scale)
        best = min(best, float(d))
    return best


def _order_key(v: np.ndarray, L: int) -> tuple:
    return tuple((round(x.real, 7), round(x.imag, 7)) for x in v[:L])


def _canonical(v: np.ndarray, L: int) -> np.ndarray:
    order = sorted(range(L), key=lambda k: (round(v[k].real, 7), round(v[k].imag, 7)))
    return np.concatenate([v[:L][order], v[L:][order]])


def dedupe(vectors: Sequence[np.ndarray], L: int, threshold: float) -> list[np.ndarray]:
    """Unique solutions modulo relabelling, in a deterministic order."""
    cand = sorted((_canonical(np.asarray(v), L) for v in vectors), key=lambda v: _order_key(v, L))
    kept: list[np.ndarray] = []
    for v in cand:
        if all(point_distance(v, k, L) > threshold for k in kept):
            kept.append(v)
    return kept


def polish(system: AlgebraicSystem, xs: Sequence[np.ndarray], strategy: Strategy) -> list[ModuliPoint]:
    """Full-system Newton from reduced-system candidates; failures are dropped."""
    out = []
    L = system.L
    for x in dedupe([np.concatenate([x, np.zeros(L)]) for x in xs], L, 1e-5):
        x = x[:L]
        v = np.concatenate([x, np.asarray(log_derivative_P(system.sphere, x), dtype=complex)])
        try:
            out.append(solve_newton(system, v, tol=strategy.tol, max_iter=strategy.max_iter))
        except (ConvergenceError, DomainError, np.linalg.LinAlgError):
            continue
    return out


def enumerate_moduli(
    sphere: SphereData,
    delta: Sequence[float],
    L: int,
    strategy: Strategy = Strategy(),
    homotopy_from: "ModuliSet | None" = None,
    verify: bool = True,
) -> ModuliSet:
    """Find the discrete set of monodromy-free configurations with L apparent punctures.

    Multi-start: batched Newton on the reduced L-unknown system from seeded
    disk positions, followed by a full (x, c) Newton polish, deduplication
    modulo relabelling and the numerical-monodromy oracle.
    """
    system = assemble_system(sphere, delta, L)
    delta = system.delta
    expected = partition_count(L, 3)
    diag: dict = {"strategy": strategy.to_dict(), "starts": 0, "candidates": 0, "rounds": 0}
    if L == 0:
        p = ModuliPoint(FuchsianOperator.build(sphere, delta), 0.0, 0, 0.0)
        diag.update(incomplete=False, oracle_rejected=0)
        return ModuliSet([p], 0, sphere, delta, diag)
    found: list[ModuliPoint] = []
    if homotopy_from is not None:
        tracked = continue_moduli(homotopy_from, sphere, delta, strategy=strategy)
        found.extend(tracked.points)
        diag["homotopy_tracked"] = len(tracked.points)
    for rnd in range(strategy.max_rounds):
        if strategy.stop_when_complete and len(dedupe([p.vector for p in found], L, strategy.dedup)) >= expected:
            break
        xs = seed_positions(sphere, L, strategy, rnd)
        cands = _explore_parallel(sphere, delta, L, xs, strategy)
        diag["starts"] += len(xs)
        diag["candidates"] += len(cands)
        diag["rounds"] = rnd + 1
        found.extend(polish(system, cands, strategy))
    unique = dedupe([p.vector for p in found], L, strategy.dedup)
    points = []
    rejected = 0
    for v in unique:
        op = system.operator(v)
        res = float(np.max(np.abs(system.residual(v))))
        dev = None
        if verify:
            rep = verify_monodromy_free(op, strategy.oracle_lambda2, strategy.oracle_tol)
            dev = rep.max_deviation
            if not rep.passed:
                rejected += 1
                continue
        points.append(ModuliPoint(op, res, 0, dev))
    diag["oracle_rejected"] = rejected
    diag["incomplete"] = len(points) < expected
    return ModuliSet(points, L, sphere, delta, diag)


def continue_moduli(
    mset: ModuliSet,
    sphere: SphereData,
    delta: Sequence[float],
    steps: int = 10,
    strategy: Strategy = Strategy(),
) -> ModuliSet:
    """Track every point of ``mset`` along the straight homotopy to new parameters."""
    L = mset.L
    z0, z1 = np.asarray(mset.sphere.z), np.asarray(sphere.z)
    a0, a1 = np.array([mset.sphere.a1, mset.sphere.a2]), np.array([sphere.a1, sphere.a2])
    d0, d1 = np.asarray(mset.delta), np.asarray(delta, dtype=float)
    tracked = []
    lost = 0
    for p in mset.points:
        v = p.vector
        ok = True
        for k in range(1, steps + 1):
            t = k / steps
            sph = SphereData(
                z=tuple((1 - t) * z0 + t * z1), a1=(1 - t) * a0[0] + t * a1[0], a2=(1 - t) * a0[1] + t * a1[1],
                regime=sphere.regime,
            )
            sysk = assemble_system(sph, (1 - t) * d0 + t * d1, L)
            try:
                v = solve_newton(sysk, v, tol=strategy.tol, max_iter=strategy.max_iter).vector
            except (ConvergenceError, DomainError):
                ok = False
                break
        if ok:
            tracked.append(v)
        else:
            lost += 1
    system = assemble_system(sphere, delta, L)
    pts = [ModuliPoint(system.operator(v), float(np.max(np.abs(system.residual(v))))) for v in dedupe(tracked, L, strategy.dedup)]
    return ModuliSet(pts, L, sphere, tuple(float(d) for d in delta), {"homotopy_steps": steps, "lost": lost})


def generic_parameters(seed: int, regime: str = "symmetric") -> tuple[SphereData, tuple[float, float, float]]:
    """A reproducible parameter draw passing the genericity heuristic."""
    rng = np.random.default_rng(seed)
    while True:
        if regime == "symmetric":
            a1, a2 = rng.uniform(0.35, 0.9, size=2)
        else:
            a1, a2 = rng.uniform(1.05, 1.4, size=2)
        delta = tuple(float(d) for d in rng.uniform(-0.15, 1.2, size=3))
        a = (a1, a2, 2.0 - a1 - a2)
        if is_generic(a, delta):
            return SphereData(a1=float(a1), a2=float(a2), regime=regime), delta


def is_generic(a: Sequence[float], delta: Sequence[float], eps: float = 1e-3) -> bool:
    for d in delta:
        nu = math.sqrt(1.0 + 4.0 * d) if 1.0 + 4.0 * d >= 0 else None
        if nu is not None and abs(nu - round(nu)) < eps:
            return False
    for ai in a:
        for q in range(1, 5):
            if abs(ai * q - round(ai * q)) < eps * q:
                return False
    return True
