"""Composite (overset) mesh on the compactified punctured sphere.

Charts:

* ``F``   Cartesian grid in z on [-E, E]^2 with holes around the punctures,
* ``I``   Cartesian grid in w = 1/z on [-W, W]^2 covering the neighbourhood of infinity,
* ``P{i}`` log-polar grids (s, phi) with z = z_i + exp(s + i phi), one per puncture.

Each chart carries its own natural coordinate xi (z, w or s + i phi).  Nodes
are either discretisation nodes, interpolation receivers (chart fringes and
outer boundaries, filled from a donor chart by 4x4 Lagrange interpolation),
inner-boundary nodes of the polar charts, or inactive hole nodes.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ChartError, ConfigurationError
from ..rational_core import SphereData

HOLE, INTERIOR, RECEIVER, INNER = 0, 1, 2, 3


@dataclass(frozen=True)
class MeshSpec:
    """Resolution and layout of the composite mesh.

    ``h`` is the spacing of the finite chart; the infinity chart uses
    ``h / w_refine`` and the polar charts use ds ~ dphi ~ h / R_p.
    Radii are given as fractions of the minimal puncture separation.
    """

    h: float = 0.1
    extent: float = 4.0
    w_extent: float = 0.42
    w_refine: int = 4
    r_min: float = 1e-6
    hole_frac: float = 0.175
    polar_frac: float = 0.4
    nphi: int | None = None

    def __post_init__(self) -> None:
        if not (self.h > 0 and self.extent > 0 and self.w_extent > 0 and self.r_min > 0):
            raise ConfigurationError("mesh spacings and extents must be positive")
        if self.w_refine < 1:
            raise ConfigurationError("w_refine must be >= 1")
        if not 0 < self.hole_frac < self.polar_frac < 0.5:
            raise ConfigurationError("need 0 < hole_frac < polar_frac < 0.5")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MeshSpec":
        return cls(**d)

    def refined(self, factor: int = 2) -> "MeshSpec":
        nphi = None if self.nphi is None else self.nphi * factor
        return MeshSpec(self.h / factor, self.extent, self.w_extent, self.w_refine, self.r_min,
                        self.hole_frac, self.polar_frac, nphi)


@dataclass
class Chart:
    """One structured grid.  Values are stored as arrays of shape (n1, n0) (row = second coordinate)."""

    name: str
    kind: str  # "cart" or "polar"
    origin: tuple[float, float]  # coordinate of node (0, 0)
    spacing: tuple[float, float]
    shape: tuple[int, int]  # (n1, n0)
    center: complex = 0j  # polar charts: the puncture
    puncture: int | None = None
    inverted: bool = False  # cart chart in w = 1/z
    status: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    offset: int = 0

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n0 = self.shape
        a0 = self.origin[0] + self.spacing[0] * np.arange(n0)
        a1 = self.origin[1] + self.spacing[1] * np.arange(n1)
        return a0, a1

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        a0, a1 = self.axes()
        c0, c1 = np.meshgrid(a0, a1)
        return c0, c1

    def z_nodes(self) -> np.ndarray:
        """Physical z of every node (inf for w = 0)."""
        c0, c1 = self.coords()
        return self.to_z(c0, c1)

    def to_z(self, c0, c1):
        if self.kind == "polar":
            return self.center + np.exp(c0 + 1j * c1)
        xi = c0 + 1j * c1
        if self.inverted:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(xi == 0, np.inf + 0j, 1.0 / np.where(xi == 0, 1.0, xi))
        return xi

    def from_z(self, z):
        """Chart coordinates (c0, c1) of physical points."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "polar":
            d = z - self.center
            return np.log(np.abs(d)), np.mod(np.angle(d), 2 * np.pi)
        xi = 1.0 / z if self.inverted else z
        return xi.real, xi.imag

    def log_jacobian(self, z) -> np.ndarray:
        """log |dz/dxi|^2 at physical points."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "polar":
            return 2.0 * np.log(np.abs(z - self.center))
        if self.inverted:
            return 4.0 * np.log(np.abs(z))
        return np.zeros(z.shape)

    def contains(self, z, margin: int = 2) -> np.ndarray:
        """Whether a 4x4 interpolation stencil fits at the points (ignores holes)."""
        c0, c1 = self.from_z(z)
        n1, n0 = self.shape
        ok1 = True
        if self.kind != "polar":
            ok1 = (c1 >= self.origin[1] + (margin - 1) * self.spacing[1]) & (
                c1 <= self.origin[1] + (n1 - margin) * self.spacing[1]
            )
        ok0 = (c0 >= self.origin[0] + (margin - 1) * self.spacing[0]) & (
            c0 <= self.origin[0] + (n0 - margin) * self.spacing[0]
        )
        return ok0 & ok1

    def layout(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "shape": list(self.shape),
            "center": [self.center.real, self.center.imag],
            "puncture": self.puncture,
            "inverted": self.inverted,
        }


def lagrange_weights(t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for nodes at offsets -1, 0, 1, 2 evaluated at t in [0, 1]."""
    t = np.asarray(t, dtype=float)
    return np.stack(
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ],
        axis=-1,
    )


def stencil(chart: Chart, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """Flat node indices (within the chart) and weights of the 4x4 interpolation stencil at z."""
    c0, c1 = chart.from_z(np.array([z]))
    c0, c1 = float(c0[0]), float(c1[0])
    n1, n0 = chart.shape
    f0 = (c0 - chart.origin[0]) / chart.spacing[0]
    f1 = (c1 - chart.origin[1]) / chart.spacing[1]
    i0 = int(math.floor(f0))
    i1 = int(math.floor(f1))
    w0 = lagrange_weights(f0 - i0)
    w1 = lagrange_weights(f1 - i1)
    idx0 = np.arange(i0 - 1, i0 + 3)
    idx1 = np.arange(i1 - 1, i1 + 3)
    if idx0[0] < 0 or idx0[-1] >= n0:
        raise ChartError(f"stencil at {z} leaves chart {chart.name}")
    if chart.kind == "polar":
        idx1 = np.mod(idx1, n1)
    elif idx1[0] < 0 or idx1[-1] >= n1:
        raise ChartError(f"stencil at {z} leaves chart {chart.name}")
    flat = (idx1[:, None] * n0 + idx0[None, :]).ravel()
    weights = (w1[:, None] * w0[None, :]).ravel()
    return flat, weights


@dataclass
class Receiver:
    chart: int
    node: int  # flat index within the receiver chart
    donor: int
    donor_nodes: np.ndarray  # flat indices within the donor chart
    weights: np.ndarray
    z: complex


@dataclass
class CompositeMesh:
    spec: MeshSpec
    sphere: SphereData
    charts: list[Chart]
    receivers: list[Receiver]
    r_hole: float
    r_polar: float
    polar_charts: tuple[int | None, int | None, int | None]

    @property
    def size(self) -> int:
        return sum(c.size for c in self.charts)

    def chart(self, name: str) -> Chart:
        for c in self.charts:
            if c.name == name:
                return c
        raise KeyError(name)

    def layout(self) -> dict:
        return {
            "charts": [c.layout() for c in self.charts],
            "r_hole": self.r_hole,
            "r_polar": self.r_polar,
            "spec": self.spec.to_dict(),
        }


def build_mesh(sphere: SphereData, spec: MeshSpec = MeshSpec(), polar: tuple[bool, bool, bool] = (True, True, True)) -> CompositeMesh:
    """Lay out charts, classify nodes and compute all interpolation stencils."""
    z = np.asarray(sphere.z)
    sep = sphere.min_separation
    r_hole = spec.hole_frac * sep
    r_polar = spec.polar_frac * sep
    E, h = spec.extent, spec.h
    if r_hole < 2.5 * h:
        raise ChartError(f"mesh too coarse: hole radius {r_hole:.3g} needs h <= {r_hole / 2.5:.3g}")
    if np.max(np.abs(z.real)) > E - r_polar - 3 * h or np.max(np.abs(z.imag)) > E - r_polar - 3 * h:
        raise ChartError("punctures too close to the edge of the finite chart; increase extent")
    # the infinity chart (|z| >= zmin_I) must stay clear of the holes, its
    # boundary (|z| <= 1/w_extent) must sit inside F, and F's boundary inside I
    zmin_I = 1.0 / (spec.w_extent * math.sqrt(2.0))
    for k, zk in enumerate(z):
        if abs(zk) + r_hole + 3 * h > zmin_I:
            raise ChartError(f"puncture z{k + 1} too far out for the infinity chart; reduce w_extent")
    if 1.0 / spec.w_extent > E - 3 * h:
        raise ChartError("infinity chart boundary falls outside the finite chart")
    if 1.0 / E > spec.w_extent - 3 * spec.h / spec.w_refine:
        raise ChartError("finite chart boundary falls outside the infinity chart")

    charts: list[Chart] = []
    n = int(round(2 * E / h)) + 1
    F = Chart("F", "cart", (-E, -E), (h, h), (n, n))
    charts.append(F)
    hw = h / spec.w_refine
    nw = 2 * int(math.ceil(spec.w_extent / hw)) + 1
    Wext = hw * (nw - 1) / 2
    I = Chart("I", "cart", (-Wext, -Wext), (hw, hw), (nw, nw), inverted=True)
    charts.append(I)
    polar_idx: list[int | None] = [None, None, None]
    nphi = spec.nphi or 4 * int(math.ceil(2 * math.pi * r_polar / h / 4))
    dphi = 2 * math.pi / nphi
    # both ends anchored so that meshes of different resolution cover the same annulus
    s_max = math.log(r_polar)
    s_min = math.log(spec.r_min)
    ns = int(math.ceil((s_max - s_min) / dphi)) + 1
    ds = (s_max - s_min) / (ns - 1)
    for k in range(3):
        if not polar[k]:
            continue
        polar_idx[k] = len(charts)
        charts.append(Chart(f"P{k + 1}", "polar", (s_min, 0.0), (ds, dphi), (nphi, ns), center=complex(z[k]), puncture=k))

    off = 0
    for c in charts:
        c.offset = off
        off += c.size

    # --- classify nodes -----------------------------------------------------
    zF = F.z_nodes()
    st = np.full(F.shape, INTERIOR, dtype=np.int8)
    hole = np.zeros(F.shape, dtype=bool)
    for k in range(3):
        if polar_idx[k] is not None:
            hole |= np.abs(zF - z[k]) < r_hole
    st[hole] = HOLE
    nb = np.zeros(F.shape, dtype=bool)
    nb[1:, :] |= hole[:-1, :]
    nb[:-1, :] |= hole[1:, :]
    nb[:, 1:] |= hole[:, :-1]
    nb[:, :-1] |= hole[:, 1:]
    st[nb & ~hole] = RECEIVER
    st[0, :] = st[-1, :] = st[:, 0] = st[:, -1] = RECEIVER
    F.status = st

    stI = np.full(I.shape, INTERIOR, dtype=np.int8)
    stI[0, :] = stI[-1, :] = stI[:, 0] = stI[:, -1] = RECEIVER
    I.status = stI

    for k in range(3):
        if polar_idx[k] is None:
            continue
        P = charts[polar_idx[k]]
        sp = np.full(P.shape, INTERIOR, dtype=np.int8)
        sp[:, 0] = INNER
        sp[:, -1] = RECEIVER
        P.status = sp

    # --- receivers ----------------------------------------------------------
    receivers: list[Receiver] = []

    def add(ci: int, node: int, zr: complex, donors: list[int]) -> None:
        for d in donors:
            D = charts[d]
            if not bool(D.contains(np.array([zr]))[0]):
                continue
            try:
                nodes, w = stencil(D, zr)
            except ChartError:
                continue
            if np.any(D.status.ravel()[nodes] == HOLE):
                continue
            receivers.append(Receiver(ci, node, d, nodes, w, complex(zr)))
            return
        raise ChartError(f"no donor for receiver at z={zr} in chart {charts[ci].name}; refine or widen overlaps")

    for ci, c in enumerate(charts):
        zc = c.z_nodes().ravel()
        flat_status = c.status.ravel()
        for node in np.flatnonzero(flat_status == RECEIVER):
            zr = zc[node]
            if c.name == "F":
                dist = np.abs(zr - z)
                k = int(np.argmin(dist))
                if dist[k] < r_polar and polar_idx[k] is not None:
                    donors = [polar_idx[k]]
                else:
                    donors = [1]
            elif c.name == "I":
                donors = [0]
            else:
                donors = [0]
            add(ci, int(node), zr, donors)

    return CompositeMesh(spec, sphere, charts, receivers, r_hole, r_polar, tuple(polar_idx))  # type: ignore[arg-type]
