"""Closed-form singular profiles subtracted from eta.

The regular unknown is u = eta - sigma.  Away from a unitary z3 every chart
uses the global profile

    sigma_F(z) = sum_i mu_i log|z - z_i| - (2 + sum mu)/2 log(1 + |z|^2),   mu_i = 2 m_i,

which carries the prescribed exponents at the punctures and eta ~ -2 log|z|
at infinity.  In the unitary regime the polar chart around z3 uses instead
sigma_U = 1/2 log(rho^2 |P|), the forced local solution.

For every chart the equation is written in its natural coordinate xi,
where eta_xi = eta + 1/2 log|dz/dxi|^2 solves the same equation with the
pulled-back differential.  Per node this gives

    1/4 Lap_xi u + q - exp(2u + A) + exp(B - 2u) = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..rational_core import Regime, SphereData, log_abs_P, log_prefactor
from ..spectrum import m_bounds
from .mesh import Chart


def check_m(sphere: SphereData, m) -> tuple[float, ...]:
    """Validate the puncture parameters; m_i > -1/2 strictly is needed by the inner boundary law."""
    m = tuple(float(v) for v in m)
    a = sphere.a
    n = 3 if sphere.regime is Regime.SYMMETRIC else 2
    if len(m) != n:
        raise DomainError(f"{sphere.regime.value} regime needs {n} values of m, got {len(m)}")
    for i, mi in enumerate(m):
        lo, hi = m_bounds(a[i])
        if not mi > lo:
            raise DomainError(f"m{i + 1} = {mi} must exceed -1/2 for the PDE solver")
        if mi > hi + 1e-14:
            raise DomainError(f"m{i + 1} = {mi} violates the upper bound -(2 - a{i + 1})/4 = {hi}")
    return m


@dataclass(frozen=True)
class Background:
    sphere: SphereData
    m: tuple[float, ...]
    rho: float

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise DomainError("rho must be positive")
        object.__setattr__(self, "m", check_m(self.sphere, self.m))

    @property
    def unitary(self) -> bool:
        return self.sphere.regime is Regime.UNITARY

    @property
    def mu(self) -> np.ndarray:
        """Exponents of eta at the punctures: eta ~ mu_i log|z - z_i|."""
        if self.unitary:
            return np.array([2 * self.m[0], 2 * self.m[1], self.sphere.a[2] / 2.0 - 1.0])
        return 2.0 * np.asarray(self.m)

    @property
    def mu_inf(self) -> float:
        return 2.0 + float(np.sum(self.mu))

    def alpha(self, i: int) -> tuple[float, float]:
        """Decay exponents (in s = log r) of the two nonlinear terms near a symmetric puncture."""
        a = self.sphere.a[i]
        m = self.m[i]
        return 4.0 * m + 2.0, 2.0 * a - 2.0 - 4.0 * m

    def uses_unitary_profile(self, chart: Chart) -> bool:
        return self.unitary and chart.kind == "polar" and chart.puncture == 2

    # ---- the global profile -------------------------------------------------
    def sigma_F(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = -0.5 * self.mu_inf * np.log1p(np.abs(z) ** 2)
        for zi, mu in zip(self.sphere.z, self.mu):
            out = out + mu * np.log(np.abs(z - zi))
        return out

    def sigma_F_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = -0.5 * self.mu_inf * np.conj(z) / (1.0 + np.abs(z) ** 2)
        for zi, mu in zip(self.sphere.z, self.mu):
            out = out + 0.5 * mu / (z - zi)
        return out

    def sigma_U(self, z) -> np.ndarray:
        return 0.5 * (2.0 * np.log(self.rho) + log_abs_P(self.sphere, z))

    def sigma_U_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return 0.25 * sum((ai - 2.0) / (z - zi) for zi, ai in zip(self.sphere.z, self.sphere.a))

    def sigma(self, chart: Chart, z) -> np.ndarray:
        return self.sigma_U(z) if self.uses_unitary_profile(chart) else self.sigma_F(z)

    def sigma_z(self, chart: Chart, z) -> np.ndarray:
        return self.sigma_U_z(z) if self.uses_unitary_profile(chart) else self.sigma_F_z(z)

    # ---- per-node coefficients ------------------------------------------------
    def coefficients(self, chart: Chart) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(q, A, B) at the chart nodes, flattened."""
        lr4 = 4.0 * np.log(self.rho)
        if chart.kind == "cart" and chart.inverted:
            c0, c1 = chart.coords()
            w = (c0 + 1j * c1).ravel()
            aw = np.abs(w) ** 2
            # sigma~(w) = sigma_F + 2 log|z|, |P_w| = |P| |z|^4, both regular at w = 0
            st = -0.5 * self.mu_inf * np.log1p(aw)
            lpw = np.full(w.shape, log_prefactor(self.sphere).real)
            for zi, mu, ai in zip(self.sphere.z, self.mu, self.sphere.a):
                l1 = np.log(np.abs(1.0 - zi * w))
                st = st + mu * l1
                lpw = lpw - (2.0 - ai) * l1
            q = -0.5 * self.mu_inf / (1.0 + aw) ** 2
            return q, 2.0 * st, lr4 + 2.0 * lpw - 2.0 * st
        z = chart.z_nodes().ravel()
        lj = chart.log_jacobian(z)
        lp = log_abs_P(self.sphere, z)
        if self.uses_unitary_profile(chart):
            s = self.sigma_U(z)
            q = np.zeros(z.shape)
        else:
            s = self.sigma_F(z)
            q = -0.5 * self.mu_inf / (1.0 + np.abs(z) ** 2) ** 2 * np.exp(lj)
        return q, 2.0 * s + lj, lr4 + 2.0 * lp + lj - 2.0 * s
