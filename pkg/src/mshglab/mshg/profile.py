"""Diagnostics of solved or supplied fields near punctures.

``boundary_profile_check`` fits the local exponent of exp(-eta) on shrinking
annuli; ``validate_puncture_expansion`` fits Laurent expansions of the first
derivatives of a candidate eta at monodromy-free punctures.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError
from ..rational_core import Regime, SphereData, log_derivative_P
from .field import MShGField

log = logging.getLogger(__name__)

MIN_RINGS = 8


class ResolutionWarning(UserWarning):
    """Too few mesh rings inside a fitting annulus."""


@dataclass
class ExponentFit:
    location: str
    fitted: float
    target: float
    rings: int
    constant: float | None = None  # limiting value of the normalised profile, if defined
    note: str = ""

    @property
    def deviation(self) -> float:
        return self.fitted - self.target

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "fitted": self.fitted,
            "target": self.target,
            "deviation": self.deviation,
            "rings": self.rings,
            "constant": self.constant,
            "note": self.note,
        }


@dataclass
class ProfileReport:
    fits: list[ExponentFit]

    @property
    def max_deviation(self) -> float:
        return max(abs(f.deviation) for f in self.fits)

    def by_location(self, loc: str) -> ExponentFit:
        for f in self.fits:
            if f.location == loc:
                return f
        raise KeyError(loc)

    def to_dict(self) -> dict:
        return {"fits": [f.to_dict() for f in self.fits], "max_deviation": self.max_deviation}


def _fit(x: np.ndarray, y: np.ndarray, extra: Sequence[np.ndarray]) -> tuple[float, float]:
    """Least squares y = p x + c + sum_k A_k extra_k; returns (p, c)."""
    M = np.column_stack([x, np.ones_like(x), *extra])
    scale = np.max(np.abs(M), axis=0)
    scale[scale == 0] = 1.0
    coef = np.linalg.lstsq(M / scale, y, rcond=None)[0] / scale
    return float(coef[0]), float(coef[1])


def boundary_profile_check(fld: MShGField, decades: float = 3.0) -> ProfileReport:
    """Fitted exponents of exp(-eta) at every puncture and at infinity.

    Near z_i (symmetric) exp(-eta) ~ |z - z_i|^(-2 m_i); the ring averages of
    -eta over the innermost ``decades`` of the log-polar chart are fitted to
    p s + c + A r^alpha1 + B r^alpha2 with the known decay rates of the
    nonlinear terms.  At a unitary z3 the target is the exponent of
    |P|^(-1/2), i.e. 1 - a3/2, and the constant rho e^(-eta) |P|^(1/2) is
    reported.  At infinity the fit uses circles |w| = eps in the 1/z chart.
    """
    bg = fld.background
    sph = fld.sphere
    fits: list[ExponentFit] = []
    for k, pi in enumerate(fld.mesh.polar_charts):
        if pi is None:
            continue
        P = fld.mesh.charts[pi]
        s = P.origin[0] + P.spacing[0] * np.arange(P.shape[1])
        u = fld.u[P.offset:P.offset + P.size].reshape(P.shape).mean(axis=0)
        unitary = bg.uses_unitary_profile(P)
        # the unitary regular part decays without a fixed power law: use the innermost decade only
        span = min(decades, 1.0) if unitary else decades
        sel = s <= s[0] + span * math.log(10.0)
        if sel.sum() < MIN_RINGS:
            warnings.warn(f"only {int(sel.sum())} rings in the fitting annulus at z{k + 1}", ResolutionWarning)
        ss = s[sel]
        phi = P.origin[1] + P.spacing[1] * np.arange(P.shape[0])
        zring = P.center + np.exp(ss[:, None] + 1j * phi[None, :])
        sig = bg.sigma(P, zring).mean(axis=1)
        minus_eta = -(u[sel] + sig)
        if unitary:
            p, c = _fit(ss, minus_eta, [])
            a3 = sph.a[2]
            # rho e^{-eta} |P|^{1/2} = e^{-u}
            const = float(np.exp(-u[0]))
            fits.append(ExponentFit(f"z{k + 1}", p, 1.0 - 0.5 * a3, int(sel.sum()), const,
                                    "unitary law exp(-eta) ~ |P|^(-1/2)"))
        else:
            a1, a2 = bg.alpha(k)
            if min(a1, a2) * (ss[-1] - ss[0]) < 1.0:
                warnings.warn(
                    f"correction exponent {min(a1, a2):.3g} at z{k + 1} too small to separate from the leading power",
                    ResolutionWarning,
                )
            p, c = _fit(ss, minus_eta, [np.exp(a1 * ss), np.exp(a2 * ss)])
            fits.append(ExponentFit(f"z{k + 1}", p, -2.0 * bg.m[k], int(sel.sum()), float(np.exp(c))))
    # infinity: -eta = p log|z| + c + A |w|^2 + ...
    I = fld.mesh.chart("I")
    hw = I.spacing[0]
    eps = hw * np.geomspace(1.0, 8.0, 16)
    phi = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    zc = 1.0 / (eps[:, None] * np.exp(1j * phi[None, :]))
    eta = fld.eta(zc.ravel(), strict=False).reshape(zc.shape).mean(axis=1)
    lz = -np.log(eps)
    p, c = _fit(lz, -eta, [eps**2])
    fits.append(ExponentFit("inf", p, 2.0, int(eps.size), float(np.exp(c))))
    return ProfileReport(fits)


# ---------------------------------------------------------------------------
# puncture expansions


@dataclass(frozen=True)
class PunctureExpansion:
    """Positions of holomorphic (x_a) and antiholomorphic (y_b) monodromy-free punctures."""

    x: tuple[complex, ...] = ()
    y: tuple[complex, ...] = ()
    gamma: tuple[complex, ...] = ()
    gamma_bar: tuple[complex, ...] = ()

    @classmethod
    def from_positions(cls, sphere: SphereData, x: Sequence[complex] = (), y: Sequence[complex] = ()) -> "PunctureExpansion":
        x = tuple(complex(v) for v in x)
        y = tuple(complex(v) for v in y)
        g = tuple(complex(log_derivative_P(sphere, v)) for v in x)
        # d/dzbar log conj(P) at zbar = conj(y_b)
        gb = tuple(complex(np.conj(log_derivative_P(sphere, v))) for v in y)
        return cls(x, y, g, gb)

    def recomputed(self, sphere: SphereData) -> "PunctureExpansion":
        return PunctureExpansion.from_positions(sphere, self.x, self.y)

    @property
    def empty(self) -> bool:
        return not self.x and not self.y


@dataclass
class ExpansionDeviation:
    kind: str  # "x" or "y"
    index: int
    position: complex
    pole_z: complex
    const_z: complex
    pole_zbar: complex
    const_zbar: complex
    dev_pole_z: float
    dev_const_z: float
    dev_pole_zbar: float
    dev_const_zbar: float

    @property
    def max_deviation(self) -> float:
        return max(self.dev_pole_z, self.dev_const_z, self.dev_pole_zbar, self.dev_const_zbar)

    def to_dict(self) -> dict:
        def c(v):
            return [v.real, v.imag]

        return {
            "kind": self.kind,
            "index": self.index,
            "position": c(self.position),
            "pole_z": c(self.pole_z),
            "const_z": c(self.const_z),
            "pole_zbar": c(self.pole_zbar),
            "const_zbar": c(self.const_zbar),
            "dev_pole_z": self.dev_pole_z,
            "dev_const_z": self.dev_const_z,
            "dev_pole_zbar": self.dev_pole_zbar,
            "dev_const_zbar": self.dev_const_zbar,
        }


@dataclass
class ExpansionReport:
    entries: list[ExpansionDeviation] = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        return max((e.max_deviation for e in self.entries), default=0.0)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries], "max_deviation": self.max_deviation}


@dataclass
class CandidateField:
    """A field given through callables for d eta/dz and d eta/dzbar (complex eta allowed)."""

    eta_z: Callable[[np.ndarray], np.ndarray]
    eta_zbar: Callable[[np.ndarray], np.ndarray]
    contains: Callable[[complex], bool] | None = None

    def derivatives(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.eta_z(z), dtype=complex), np.asarray(self.eta_zbar(z), dtype=complex)

    def inside(self, z: complex) -> bool:
        return True if self.contains is None else bool(self.contains(z))


def as_candidate(obj) -> CandidateField:
    if isinstance(obj, CandidateField):
        return obj
    if isinstance(obj, MShGField):
        fld = obj

        def ez(z):
            return fld.eval(z, strict=False)[1]

        def ezb(z):
            return np.conj(fld.eval(z, strict=False)[1])

        F = fld.mesh.chart("F")
        E = -F.origin[0]

        def inside(z):
            return abs(z.real) < E and abs(z.imag) < E

        return CandidateField(ez, ezb, inside)
    raise TypeError("candidate must be a CandidateField or MShGField")


def _laurent_fit(zeta: np.ndarray, values: np.ndarray, conj_pole: bool) -> tuple[complex, complex]:
    """Fit values ~ A/zeta + B + C zeta + D conj(zeta) (A/conj(zeta) if conj_pole); returns (A, B)."""
    pole = 1.0 / (np.conj(zeta) if conj_pole else zeta)
    M = np.column_stack([pole, np.ones_like(zeta), zeta, np.conj(zeta), zeta**2, np.conj(zeta) ** 2, np.abs(zeta) ** 2])
    coef = np.linalg.lstsq(M, values, rcond=None)[0]
    return complex(coef[0]), complex(coef[1])


def validate_puncture_expansion(
    candidate, punctures: PunctureExpansion, radii: Sequence[float] = (1e-3, 2e-3, 4e-3), n_angles: int = 32
) -> ExpansionReport:
    """Deviations of the local expansions of d eta at each puncture.

    At x_a: d_z eta = 1/(z - x_a) + gamma_a/2 + o(1) and d_zbar eta = -1/(zbar - xbar_a) + o(1).
    At y_b: d_zbar eta = 1/(zbar - ybar_b) + gamma_bar_b/2 + o(1) and d_z eta = -1/(z - y_b) + o(1).
    """
    cand = as_candidate(candidate)
    rep = ExpansionReport()
    if punctures.empty:
        return rep
    phi = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    zeta = (np.asarray(radii)[:, None] * np.exp(1j * phi)[None, :]).ravel()
    for kind, pts, gam, sign in (("x", punctures.x, punctures.gamma, 1.0), ("y", punctures.y, punctures.gamma_bar, -1.0)):
        for idx, p in enumerate(pts):
            if not cand.inside(p):
                raise DomainError(f"puncture {kind}{idx + 1} = {p} lies outside the field's mesh")
            ez, ezb = cand.derivatives(p + zeta)
            Az, Bz = _laurent_fit(zeta, ez, conj_pole=False)
            Ab, Bb = _laurent_fit(zeta, ezb, conj_pole=True)
            if kind == "x":
                tz, tcz, tb, tcb = 1.0, 0.5 * gam[idx], -1.0, 0.0
            else:
                tz, tcz, tb, tcb = -1.0, 0.0, 1.0, 0.5 * gam[idx]
            rep.entries.append(
                ExpansionDeviation(
                    kind, idx, p, Az, Bz, Ab, Bb,
                    abs(Az - tz), abs(Bz - tcz), abs(Ab - tb), abs(Bb - tcb),
                )
            )
    return rep
