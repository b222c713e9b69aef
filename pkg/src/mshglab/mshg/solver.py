"""Damped Newton solver for the vacuum modified sinh-Gordon equation.

    d dbar eta - exp(2 eta) + rho^4 |P|^2 exp(-2 eta) = 0

is discretised with second-order central differences on every chart of a
:class:`~mshglab.mshg.mesh.CompositeMesh`; chart fringes are coupled
implicitly through interpolation rows, so the whole composite system is
solved at once by sparse LU.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConvergenceError, DomainError
from ..rational_core import Regime, SphereData
from .background import Background
from .field import MShGField
from .mesh import HOLE, INNER, INTERIOR, RECEIVER, CompositeMesh, MeshSpec, build_mesh

log = logging.getLogger(__name__)

EXP_CLIP = 700.0
GUESS_CLIP = 4.0


@dataclass
class Discretization:
    """Sparse linear part plus per-node data of the nonlinear terms."""

    mesh: CompositeMesh
    background: Background
    L: sp.csr_matrix
    const: np.ndarray  # constant part of every row
    q: np.ndarray
    A: np.ndarray
    B: np.ndarray
    nonlinear: np.ndarray  # rows carrying -exp(2u+A) + exp(B-2u)
    neumann: np.ndarray  # rows of symmetric polar inner boundaries
    neumann_coef: np.ndarray  # -1/(2 ds) in front of g
    neumann_alpha: np.ndarray  # (n, 2) decay exponents
    interior: np.ndarray  # discretisation rows (away from cores and fringes)
    receiver: np.ndarray
    chart_of_row: np.ndarray
    hole: np.ndarray  # placeholder rows u = 0 inside chart holes (refilled after the solve)


def _laplacian_rows(chart, rows, cols, vals, const, nonlinear, interior, neumann, neu_coef, bg, neu_alpha):
    n1, n0 = chart.shape
    d0, d1 = chart.spacing
    off = chart.offset
    st = chart.status
    polar = chart.kind == "polar"
    c0, c1 = 0.25 / d0**2, 0.25 / d1**2
    for j in range(n1):
        for i in range(n0):
            k = off + j * n0 + i
            s = st[j, i]
            if s == INTERIOR or s == INNER:
                if s == INNER and bg.uses_unitary_profile(chart):
                    rows.append(k), cols.append(k), vals.append(1.0)
                    continue
                nonlinear.append(k)
                jm, jp = j - 1, j + 1
                if polar:
                    jm %= n1
                    jp %= n1
                rows.extend([k, k, k])
                cols.extend([off + jm * n0 + i, off + jp * n0 + i, k])
                vals.extend([c1, c1, -2 * c1])
                if s == INNER:
                    # ghost node u_{-1} = u_1 - 2 ds g(u_0)
                    rows.extend([k, k])
                    cols.extend([off + j * n0 + i + 1, k])
                    vals.extend([2 * c0, -2 * c0])
                    neumann.append(k)
                    neu_coef.append(-2.0 * d0 * c0)
                    neu_alpha.append(bg.alpha(chart.puncture))
                else:
                    rows.extend([k, k, k])
                    cols.extend([k - 1, k + 1, k])
                    vals.extend([c0, c0, -2 * c0])
                    interior.append(k)
            elif s == HOLE:
                rows.append(k), cols.append(k), vals.append(1.0)


def discretize(mesh: CompositeMesh, bg: Background) -> Discretization:
    N = mesh.size
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    const = np.zeros(N)
    nonlinear: list[int] = []
    interior: list[int] = []
    neumann: list[int] = []
    neu_coef: list[float] = []
    neu_alpha: list[tuple[float, float]] = []
    q = np.zeros(N)
    A = np.zeros(N)
    B = np.zeros(N)
    chart_of_row = np.zeros(N, dtype=np.int32)
    hole = np.zeros(N, dtype=bool)
    for ci, c in enumerate(mesh.charts):
        sl = slice(c.offset, c.offset + c.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            qc, Ac, Bc = bg.coefficients(c)
        dead = (c.status.ravel() == HOLE) | ~np.isfinite(Ac) | ~np.isfinite(Bc)
        qc, Ac, Bc = (np.where(dead, 0.0, v) for v in (qc, Ac, Bc))
        q[sl], A[sl], B[sl] = qc, Ac, Bc
        chart_of_row[sl] = ci
        hole[sl] = c.status.ravel() == HOLE
        _laplacian_rows(c, rows, cols, vals, const, nonlinear, interior, neumann, neu_coef, bg, neu_alpha)
    rec_rows = []
    for r in mesh.receivers:
        rc, dc = mesh.charts[r.chart], mesh.charts[r.donor]
        k = rc.offset + r.node
        rec_rows.append(k)
        rows.append(k), cols.append(k), vals.append(1.0)
        rows.extend([k] * len(r.weights))
        cols.extend((dc.offset + r.donor_nodes).tolist())
        vals.extend((-r.weights).tolist())
        if bg.uses_unitary_profile(rc) != bg.uses_unitary_profile(dc):
            zr = np.array([r.z])
            const[k] = -float(bg.sigma(dc, zr)[0] - bg.sigma(rc, zr)[0])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    nl = np.array(nonlinear, dtype=np.int64)
    const[nl] += q[nl]
    return Discretization(
        mesh, bg, L, const, q, A, B, nl,
        np.array(neumann, dtype=np.int64), np.array(neu_coef), np.array(neu_alpha).reshape(-1, 2),
        np.array(interior, dtype=np.int64), np.array(rec_rows, dtype=np.int64), chart_of_row,
        np.flatnonzero(hole),
    )


def _terms(disc: Discretization, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = disc.nonlinear
    e1 = np.exp(np.minimum(2 * u[k] + disc.A[k], EXP_CLIP))
    e2 = np.exp(np.minimum(disc.B[k] - 2 * u[k], EXP_CLIP))
    return e1, e2


def residual(disc: Discretization, u: np.ndarray) -> np.ndarray:
    R = disc.L @ u + disc.const
    e1, e2 = _terms(disc, u)
    R[disc.nonlinear] += -e1 + e2
    if disc.neumann.size:
        k = disc.neumann
        f1 = np.exp(2 * u[k] + disc.A[k])
        f2 = np.exp(disc.B[k] - 2 * u[k])
        g = 4.0 * (f1 / disc.neumann_alpha[:, 0] - f2 / disc.neumann_alpha[:, 1] - 0.5 * disc.q[k])
        R[k] += disc.neumann_coef * g
    return R


def jacobian(disc: Discretization, u: np.ndarray) -> sp.csc_matrix:
    d = np.zeros(u.shape)
    e1, e2 = _terms(disc, u)
    d[disc.nonlinear] = -2 * e1 - 2 * e2
    if disc.neumann.size:
        k = disc.neumann
        f1 = np.exp(2 * u[k] + disc.A[k])
        f2 = np.exp(disc.B[k] - 2 * u[k])
        dg = 8.0 * (f1 / disc.neumann_alpha[:, 0] + f2 / disc.neumann_alpha[:, 1])
        d[k] += disc.neumann_coef * dg
    return (disc.L + sp.diags(d)).tocsc()


def initial_guess(disc: Discretization) -> np.ndarray:
    """u where the two exponentials balance, i.e. eta = 1/2 log(rho^2 |P|), clipped near punctures."""
    u = np.clip(0.25 * (disc.B - disc.A), -GUESS_CLIP, GUESS_CLIP)
    return u


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)
    consistency: list[float] = field(default_factory=list)


def newton(
    R_fun, J_fun, u0: np.ndarray, tol: float, max_iter: int, monitor=None
) -> tuple[np.ndarray, NewtonReport]:
    """Damped Newton with backtracking on the max-norm of the residual."""
    u = u0.copy()
    R = R_fun(u)
    res = float(np.max(np.abs(R)))
    rep = NewtonReport(False, 0, res, [res])
    for it in range(1, max_iter + 1):
        if res <= tol:
            rep.converged = True
            break
        J = J_fun(u)
        try:
            du = spla.splu(J).solve(-R)
        except RuntimeError as exc:  # singular factorisation
            raise ConvergenceError(f"Newton step failed: {exc}") from exc
        t = 1.0
        while True:
            un = u + t * du
            Rn = R_fun(un)
            rn = float(np.max(np.abs(Rn)))
            if np.isfinite(rn) and (rn < (1 - 1e-4 * t) * res or rn <= tol):
                break
            t *= 0.5
            if t < 1e-6:
                break
        u, R, res = un, Rn, rn
        rep.iterations = it
        rep.history.append(res)
        if monitor is not None:
            rep.consistency.append(monitor(u))
        if t < 1e-6:
            log.warning("line search stalled at residual %.3e", res)
            break
    rep.residual = res
    rep.converged = res <= tol
    return u, rep


def _consistency(disc: Discretization, u: np.ndarray) -> float:
    """Largest mismatch between a receiver and its donor interpolant."""
    if disc.receiver.size == 0:
        return 0.0
    R = disc.L @ u + disc.const
    return float(np.max(np.abs(R[disc.receiver])))


def solve_vacuum(
    sphere: SphereData,
    m,
    rho: float,
    mesh_spec: MeshSpec = MeshSpec(),
    tol: float = 1e-10,
    max_iter: int = 50,
    initial: MShGField | None = None,
) -> MShGField:
    """Solve for the vacuum field; a non-converged run returns the last iterate with ``converged=False``."""
    bg = Background(sphere, tuple(m), float(rho))
    mesh = build_mesh(sphere, mesh_spec)
    disc = discretize(mesh, bg)
    if initial is not None:
        u0 = initial.resample(mesh)
    else:
        u0 = initial_guess(disc)
    u, rep = newton(
        lambda v: residual(disc, v), lambda v: jacobian(disc, v), u0, tol, max_iter,
        monitor=lambda v: _consistency(disc, v),
    )
    if not rep.converged:
        log.warning("vacuum solve did not converge: residual %.3e after %d iterations", rep.residual, rep.iterations)
    return MShGField.from_solution(sphere, bg.m, float(rho), mesh, bg, u, rep)


def rho_sweep(sphere: SphereData, m, rhos, mesh_spec: MeshSpec = MeshSpec(), tol: float = 1e-10, max_iter: int = 50) -> list[MShGField]:
    """Solve along a sequence of rho values, each seeded with the previous solution."""
    out: list[MShGField] = []
    prev = None
    for rho in rhos:
        prev = solve_vacuum(sphere, m, rho, mesh_spec, tol, max_iter, initial=prev)
        out.append(prev)
    return out


def field_residual(fld: MShGField, rows: str = "all") -> np.ndarray:
    disc = discretize(fld.mesh, fld.background)
    R = residual(disc, fld.u)
    if rows == "interior":
        return R[disc.interior]
    R[disc.hole] = 0.0
    return R


def residual_norm(fld: MShGField, u: np.ndarray | None = None) -> float:
    """Max-norm of the discrete equation (natural chart units) over all active rows.

    Polar rows are measured in the log-polar coordinate, where the equation
    stays bounded up to the puncture; receiver rows measure the mismatch
    between a chart fringe and its donor interpolant.  Hole rows are skipped:
    their values are refilled by extension after the solve.
    """
    disc = discretize(fld.mesh, fld.background)
    R = residual(disc, fld.u if u is None else u)
    R[disc.hole] = 0.0
    return float(np.max(np.abs(R)))


def transfer_residual(coarse: MShGField, fine_spec: MeshSpec, rows: str = "interior") -> float:
    """Residual of ``coarse`` interpolated onto the mesh ``fine_spec``, max over discretisation rows."""
    mesh = build_mesh(coarse.sphere, fine_spec)
    disc = discretize(mesh, coarse.background)
    u = coarse.resample(mesh)
    R = residual(disc, u)
    if rows == "interior":
        R = R[disc.interior]
    return float(np.max(np.abs(R)))


@dataclass
class RefinementStudy:
    h: list[float]
    residuals: list[float]  # coarse solution measured on the finest mesh
    orders: list[float]
    solve_residuals: list[float]


def refinement_study(
    sphere: SphereData, m, rho: float, mesh_spec: MeshSpec = MeshSpec(), levels: int = 3, tol: float = 1e-10
) -> RefinementStudy:
    """Solve on h, h/2, ..., measure every coarser solution on the finest mesh.

    The finest mesh itself only serves as the yardstick; the observed order
    between consecutive levels is log2 of the residual ratio.
    """
    specs = [mesh_spec]
    for _ in range(levels - 1):
        specs.append(specs[-1].refined(2))
    fields = []
    prev = None
    for s in specs[:-1]:
        prev = solve_vacuum(sphere, m, rho, s, tol=tol, initial=None)
        fields.append(prev)
    res = [transfer_residual(f, specs[-1]) for f in fields]
    orders = [float(np.log2(res[k] / res[k + 1])) for k in range(len(res) - 1)]
    return RefinementStudy([s.h for s in specs[:-1]], res, orders, [f.residual for f in fields])


# ---------------------------------------------------------------------------
# constant-coefficient patch


@dataclass
class PatchSolution:
    eta: np.ndarray
    residual: float
    iterations: int


def patch_operator(eta: np.ndarray, h: float, rho: float, p: complex) -> np.ndarray:
    """Discrete operator on a doubly periodic patch with P replaced by the constant p."""
    lap = (np.roll(eta, 1, 0) + np.roll(eta, -1, 0) + np.roll(eta, 1, 1) + np.roll(eta, -1, 1) - 4 * eta) / h**2
    return 0.25 * lap - np.exp(2 * eta) + rho**4 * abs(p) ** 2 * np.exp(-2 * eta)


def solve_patch(
    p: complex, rho: float, n: int = 32, h: float = 0.1, eta0: np.ndarray | None = None, tol: float = 1e-12, max_iter: int = 50
) -> PatchSolution:
    """Solve the equation with constant P on an n x n periodic patch (exact solution: 1/2 log(rho^2 |p|))."""
    if not rho > 0 or p == 0:
        raise DomainError("patch test needs rho > 0 and p != 0")
    e = np.ones(n)
    D = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil")
    D[0, n - 1] = D[n - 1, 0] = 1.0
    D = D.tocsr()
    I = sp.identity(n, format="csr")
    lap = 0.25 * (sp.kron(I, D) + sp.kron(D, I)) / h**2
    c = rho**4 * abs(p) ** 2
    eta = np.zeros((n, n)) if eta0 is None else np.array(eta0, dtype=float)

    def R_fun(v):
        return patch_operator(v.reshape(n, n), h, rho, p).ravel()

    def J_fun(v):
        return (lap + sp.diags(-2 * np.exp(2 * v) - 2 * c * np.exp(-2 * v))).tocsc()

    u, rep = newton(R_fun, J_fun, eta.ravel(), tol, max_iter)
    if not rep.converged:
        raise ConvergenceError(f"patch solve stalled at residual {rep.residual:.3e}")
    return PatchSolution(u.reshape(n, n), rep.residual, rep.iterations)


def regime_of(sphere: SphereData) -> str:
    return "unitary" if sphere.regime is Regime.UNITARY else "symmetric"


__all__ = [
    "Discretization",
    "discretize",
    "residual",
    "jacobian",
    "solve_vacuum",
    "rho_sweep",
    "residual_norm",
    "transfer_residual",
    "refinement_study",
    "solve_patch",
    "patch_operator",
    "RECEIVER",
]
