"""The solved field: storage, smooth evaluation across charts and checkpoints.

Evaluation blends per-chart bicubic splines of the regular part u with a
partition of unity and adds the closed-form profile of each chart, so that
eta and its z-derivative are C^1 everywhere outside the subtraction cores.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from ..errors import ConfigurationError, DomainError
from ..rational_core import SphereData
from .background import Background
from .mesh import HOLE, CompositeMesh, MeshSpec, build_mesh

MAGIC = b"MSHGFLD1"
PAD = 3  # periodic padding (nodes) of polar splines


def smoothstep(t):
    """C^2 ramp: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep_prime(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


@dataclass
class MShGField:
    """Vacuum solution on a composite mesh (regular part ``u`` at all nodes)."""

    sphere: SphereData
    m: tuple[float, ...]
    rho: float
    mesh_spec: MeshSpec
    u: np.ndarray
    residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    history: list[float] = field(default_factory=list)
    consistency: float = float("nan")
    mesh: CompositeMesh = field(default=None, repr=False)  # type: ignore[assignment]
    _splines: list | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.m = tuple(float(v) for v in self.m)
        if self.mesh is None:
            self.mesh = build_mesh(self.sphere, self.mesh_spec)
        if self.u.shape != (self.mesh.size,):
            raise ConfigurationError(f"field has {self.u.shape} values, mesh has {self.mesh.size} nodes")
        self.background = Background(self.sphere, self.m, self.rho)

    @classmethod
    def from_solution(cls, sphere, m, rho, mesh, bg, u, rep) -> "MShGField":
        fld = cls(sphere, tuple(m), rho, mesh.spec, np.asarray(u, dtype=float).copy(), rep.residual, rep.iterations,
                  rep.converged, list(rep.history), rep.consistency[-1] if rep.consistency else float("nan"), mesh)
        fld._fill_holes()
        return fld

    # ---- chart data -----------------------------------------------------------
    def chart_values(self, name: str) -> np.ndarray:
        c = self.mesh.chart(name)
        return self.u[c.offset:c.offset + c.size].reshape(c.shape)

    def _fill_holes(self) -> None:
        """Extend u smoothly into the holes of F by a discrete biharmonic fill.

        Inside a hole the true u has a cusp at the puncture (it behaves like
        const + C r^alpha); copying it would make the global F spline ring.
        The biharmonic extension matches values and slopes at the hole edge,
        and the partition of unity never gives F weight inside the hole.
        """
        F = self.mesh.chart("F")
        n1, n0 = F.shape
        vals = self.u[F.offset:F.offset + F.size].reshape(F.shape)
        hole = F.status == HOLE
        idx = -np.ones(F.shape, dtype=np.int64)
        idx[hole] = np.arange(int(hole.sum()))
        rows, cols, data = [], [], []
        rhs = np.zeros(int(hole.sum()))
        stencil13 = [((0, 0), 20.0)] + [((a, b), -8.0) for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        stencil13 += [((a, b), 2.0) for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
        stencil13 += [((a, b), 1.0) for a, b in ((2, 0), (-2, 0), (0, 2), (0, -2))]
        for j, i in zip(*np.nonzero(hole)):
            k = idx[j, i]
            for (dj, di), c in stencil13:
                jj, ii = j + dj, i + di
                if not (0 <= jj < n1 and 0 <= ii < n0):
                    raise ConfigurationError("hole touches the edge of the finite chart")
                if hole[jj, ii]:
                    rows.append(k), cols.append(idx[jj, ii]), data.append(c)
                else:
                    rhs[k] -= c * vals[jj, ii]
        if rhs.size:
            M = sp.csc_matrix((data, (rows, cols)), shape=(rhs.size, rhs.size))
            vals[hole] = spla.spsolve(M, rhs)
        self._splines = None

    def resample(self, mesh: CompositeMesh) -> np.ndarray:
        """Values of u (in the target charts' own subtraction) at the nodes of another mesh."""
        out = np.zeros(mesh.size)
        for c in mesh.charts:
            z = c.z_nodes().ravel()
            # nodes sitting on a puncture give non-finite values; they are replaced below
            with np.errstate(divide="ignore", invalid="ignore"):
                self._resample_chart(c, z, out)
        return out

    def _resample_chart(self, c, z: np.ndarray, out: np.ndarray) -> None:
        eta = self.eta(z, strict=False)
        if c.inverted:
            # u = eta - sigma_F = eta~ - sigma~ ; evaluate via the blended u at finite points
            fin = np.isfinite(z)
            vals = np.empty(z.shape)
            vals[fin] = eta[fin] - self.background.sigma_F(z[fin])
            if np.any(~fin):
                vals[~fin] = self._u_at_infinity()
            out[c.offset:c.offset + c.size] = vals
            return
        vals = eta - self.background.sigma(c, z)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            if c.kind == "polar":
                P = self.mesh.charts[self.mesh.polar_charts[c.puncture]]
                vals[bad] = float(np.mean(self.u[P.offset:P.offset + P.size].reshape(P.shape)[:, 0]))
            else:
                vals[bad] = 0.0
        if c.kind == "polar":
            # below the source chart's innermost ring u is constant to leading order
            P = self.mesh.charts[self.mesh.polar_charts[c.puncture]]
            r = np.abs(z - c.center)
            low = r < np.exp(P.origin[0]) * (1.0 - 1e-12)
            if np.any(low):
                ring = self.u[P.offset:P.offset + P.size].reshape(P.shape)[:, 0]
                vals[low] = float(np.mean(ring))
        out[c.offset:c.offset + c.size] = vals

    def _u_at_infinity(self) -> float:
        I = self.mesh.chart("I")
        v = self.chart_values("I")
        return float(v[I.shape[0] // 2, I.shape[1] // 2])

    # ---- splines --------------------------------------------------------------
    def _build_splines(self) -> list:
        spl = []
        for c in self.mesh.charts:
            a0, a1 = c.axes()
            vals = self.u[c.offset:c.offset + c.size].reshape(c.shape)
            if c.kind == "polar":
                n1 = c.shape[0]
                idx = np.arange(-PAD, n1 + PAD)
                a1 = c.origin[1] + c.spacing[1] * idx
                vals = vals[np.mod(idx, n1), :]
            spl.append(RectBivariateSpline(a1, a0, vals, kx=3, ky=3))
        self._splines = spl
        return spl

    @property
    def splines(self) -> list:
        return self._splines if self._splines is not None else self._build_splines()

    def _weights(self, z: np.ndarray):
        """Partition of unity: list of (chart index, weight, d weight/dz) over the points."""
        mesh = self.mesh
        F = mesh.chart("F")
        I = mesh.chart("I")
        h = F.spacing[0]
        out = []
        n = z.shape
        w_rest = np.ones(n)
        dw_rest = np.zeros(n, dtype=complex)
        # blending annuli have a fixed geometric size so that they do not
        # sharpen under refinement (the blend enters the second derivatives)
        width = mesh.r_polar - mesh.r_hole
        r_in = mesh.r_hole + 0.25 * width
        r_out = mesh.r_polar - 0.1 * width
        for k, pi in enumerate(mesh.polar_charts):
            if pi is None:
                continue
            P = mesh.charts[pi]
            d = z - P.center
            r = np.abs(d)
            t = (r_out - r) / (r_out - r_in)
            w = smoothstep(t)
            dwdr = -smoothstep_prime(t) / (r_out - r_in)
            with np.errstate(divide="ignore", invalid="ignore"):
                dw = np.where(r > 0, dwdr * np.conj(d) / (2 * np.where(r > 0, r, 1.0)), 0.0)
            out.append((pi, w, dw))
            w_rest, dw_rest = w_rest - w, dw_rest - dw
        # infinity chart
        wext = I.origin[0] * -1.0
        z_lo = 1.0 / (0.8 * wext)
        z_hi = -0.9 * F.origin[0]
        r = np.abs(z)
        t = (r - z_lo) / (z_hi - z_lo)
        w = np.where(np.isinf(r), 1.0, smoothstep(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            dw = np.where(
                np.isfinite(r) & (r > 0),
                smoothstep_prime(t) / (z_hi - z_lo) * np.conj(z) / (2 * np.where(r > 0, r, 1.0)),
                0.0,
            )
        out.append((1, w, dw))
        w_rest, dw_rest = w_rest - w, dw_rest - dw
        out.append((0, w_rest, dw_rest))
        return out

    def _chart_eval(self, ci: int, z: np.ndarray, deriv: bool):
        """u and u_z of chart ``ci`` at the points (background not included)."""
        c = self.mesh.charts[ci]
        spl = self.splines[ci]
        if c.kind == "polar":
            d = z - c.center
            s = np.log(np.abs(d))
            ph = np.mod(np.angle(d), 2 * np.pi)
            u = spl.ev(ph, s)
            if not deriv:
                return u, None
            us = spl.ev(ph, s, dy=1)
            up = spl.ev(ph, s, dx=1)
            return u, 0.5 * (us - 1j * up) / d
        if c.inverted:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(np.isinf(z), 0j, 1.0 / np.where(np.isinf(z), 1.0, z))
            u = spl.ev(w.imag, w.real)
            if not deriv:
                return u, None
            ux = spl.ev(w.imag, w.real, dy=1)
            uy = spl.ev(w.imag, w.real, dx=1)
            return u, 0.5 * (ux - 1j * uy) * (-(w**2))
        u = spl.ev(z.imag, z.real)
        if not deriv:
            return u, None
        ux = spl.ev(z.imag, z.real, dy=1)
        uy = spl.ev(z.imag, z.real, dx=1)
        return u, 0.5 * (ux - 1j * uy)

    def _check_points(self, z: np.ndarray) -> None:
        for k, zk in enumerate(self.sphere.z):
            pi = self.mesh.polar_charts[k]
            lim = self.core_radius
            if np.any(np.abs(z - zk) < lim):
                raise DomainError(f"evaluation inside the subtraction core of z{k + 1} (r < {lim:.3g})")

    @property
    def core_radius(self) -> float:
        """Radius below which the field is not evaluated (the innermost polar rings)."""
        P = self.mesh.charts[[p for p in self.mesh.polar_charts if p is not None][0]]
        return float(np.exp(P.origin[0] + 2 * P.spacing[0]))

    def eval(self, z, deriv: bool = True, strict: bool = True):
        """(eta, d eta/dz) at the points; d/dzbar eta is the conjugate since eta is real."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if strict:
            self._check_points(z)
        eta = np.zeros(z.shape)
        eta_z = np.zeros(z.shape, dtype=complex)
        for ci, w, dw in self._weights(z):
            sel = w > 0 if not deriv else (w > 0) | (dw != 0)
            if not np.any(sel):
                continue
            c = self.mesh.charts[ci]
            zs = z[sel]
            u, uz = self._chart_eval(ci, zs, deriv)
            if c.inverted:
                fin = np.isfinite(zs)
                sig = np.zeros(zs.shape)
                sig[fin] = self.background.sigma_F(zs[fin])
                sig[~fin] = np.inf * -1.0
            else:
                sig = self.background.sigma(c, zs)
            val = u + sig
            eta[sel] += w[sel] * val
            if deriv:
                sz = self.background.sigma_z(c, zs) if not c.inverted else np.where(
                    np.isfinite(zs), self.background.sigma_F_z(np.where(np.isfinite(zs), zs, 0)), 0
                )
                eta_z[sel] += w[sel] * (uz + sz) + dw[sel] * np.where(w[sel] > 0, val, 0.0)
        return eta, eta_z

    def eta(self, z, strict: bool = True) -> np.ndarray:
        return self.eval(z, deriv=False, strict=strict)[0]

    def exp_minus_eta(self, z) -> np.ndarray:
        return np.exp(-self.eta(z))

    # ---- checkpoint -------------------------------------------------------------
    def header(self) -> dict:
        return {
            "format": "mshglab-field",
            "version": 1,
            "byte_order": "little",
            "dtype": "float64",
            "sphere": self.sphere.to_dict(),
            "m": list(self.m),
            "rho": self.rho,
            "mesh_spec": self.mesh_spec.to_dict(),
            "layout": self.mesh.layout(),
            "subtraction": {
                "mu": [float(v) for v in self.background.mu],
                "mu_inf": self.background.mu_inf,
                "profile": "u = eta - sum_i mu_i log|z-z_i| + (2+sum mu)/2 log(1+|z|^2)",
                "unitary_z3": "u = eta - 1/2 log(rho^2 |P|)" if self.background.unitary else None,
            },
            "solve": {
                "residual": self.residual,
                "iterations": self.iterations,
                "converged": self.converged,
                "history": self.history,
                "consistency": self.consistency,
            },
            "arrays": [{"name": "u", "length": int(self.u.size)}],
        }

    def to_bytes(self) -> bytes:
        """Checkpoint: magic, little-endian uint64 header length, JSON header, float64 u."""
        head = json.dumps(self.header(), sort_keys=True).encode()
        return MAGIC + struct.pack("<Q", len(head)) + head + self.u.astype("<f8").tobytes()

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "MShGField":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise ConfigurationError(f"{path} is not a field checkpoint")
        (n,) = struct.unpack("<Q", data[8:16])
        head = json.loads(data[16:16 + n].decode())
        length = head["arrays"][0]["length"]
        u = np.frombuffer(data[16 + n:16 + n + 8 * length], dtype="<f8").astype(float)
        if u.size != length:
            raise ConfigurationError("truncated field checkpoint")
        sol = head["solve"]
        fld = cls(
            SphereData.from_dict(head["sphere"]), tuple(head["m"]), float(head["rho"]),
            MeshSpec.from_dict(head["mesh_spec"]), u, sol["residual"], sol["iterations"], sol["converged"],
            sol["history"], sol["consistency"],
        )
        return fld
