"""Acceptance criteria 1-10.

Each test records one pass/fail line through the ``accept`` fixture; the lines
are printed in the "acceptance criteria" section of the terminal summary.
"""
import json
import math
import warnings

import numpy as np
import pytest

from conftest import SYM_M
from mshglab.apparent import (
    Strategy,
    assemble_system,
    enumerate_moduli,
    generic_parameters,
    verify_monodromy_free,
)
from mshglab.cli import EXIT_CONFIG, EXIT_OK, RECORD_NAME, main
from mshglab.errors import DomainError
from mshglab.mshg import (
    MeshSpec,
    ResolutionWarning,
    boundary_profile_check,
    check_m,
    default_pde_loop,
    flatness_residual,
    pde_transport,
    pde_wilson,
    refinement_study,
    sample_points,
    solve_patch,
    solve_vacuum,
)
from mshglab.paths import circle_loop, polyline
from mshglab.rational_core import FuchsianOperator, SphereData
from mshglab.spectrum import (
    SpectralPoint,
    cft_lambda2,
    default_wilson_loop,
    dictionary,
    extract_charges,
    synthetic_samples,
    wilson_scan,
)
from mshglab.transport import (
    monodromy_around,
    pochhammer_loop,
    relative_det_defect,
    transport,
    wilson_trace,
)

DRAWS = (1, 2, 3)
EXPECTED = {1: 3, 2: 9}
RESIDUAL_TOL = 1e-10
ORACLE_TOL = 1e-6
INVARIANCE_TOL = 1e-6
ODE_TOL = 1e-13
# the Pochhammer loop around (z3, z1) cancels ~1e27 entries down to W ~ 1e14 at theta = 2,
# so invariance is only resolvable in double precision up to Re theta ~ 1.5
INVARIANCE_THETA = np.linspace(-2.0, 1.5, 8) + 0.3j
PERIODIC_BAND = np.linspace(-2.5, 2.5, 20) + 0.3j


def quiet_profile(fld):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return boundary_profile_check(fld)


def system_residual(point):
    op = point.op
    sys = assemble_system(op.sphere, op.delta, op.L)
    return float(np.max(np.abs(sys.residual(point.vector))))


@pytest.fixture(scope="module")
def moduli():
    out = {}
    for draw in DRAWS:
        sphere, delta = generic_parameters(draw)
        for L in EXPECTED:
            out[draw, L] = enumerate_moduli(sphere, delta, L, Strategy(seed=draw))
    return out


# ---- 1. counting -----------------------------------------------------------------------


def test_criterion_1_counting(moduli, accept):
    counts, worst_res, worst_orc = [], 0.0, 0.0
    ok = True
    for (draw, L), ms in sorted(moduli.items()):
        counts.append(f"draw {draw} L={L}: {len(ms.points)}/{EXPECTED[L]}")
        ok &= len(ms.points) == EXPECTED[L]
        for p in ms.points:
            res = system_residual(p)
            orc = verify_monodromy_free(p, tol=ORACLE_TOL).max_deviation
            worst_res, worst_orc = max(worst_res, res), max(worst_orc, orc)
    ok &= worst_res <= RESIDUAL_TOL and worst_orc <= ORACLE_TOL
    accept("1", ok, f"{'; '.join(counts)}; max residual {worst_res:.1e}, max oracle deviation {worst_orc:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_1_stretch_l3(accept):
    # reported, not gating: only the quality of the points found is asserted
    sphere, delta = generic_parameters(1)
    ms = enumerate_moduli(sphere, delta, 3, Strategy(seed=1))
    worst = max((p.residual for p in ms.points), default=0.0)
    orc = max((verify_monodromy_free(p).max_deviation for p in ms.points), default=0.0)
    accept("1-stretch", len(ms.points) == 22,
           f"L=3 draw 1 found {len(ms.points)}/22 (not gating), max residual {worst:.1e}, oracle {orc:.1e}")
    assert worst <= RESIDUAL_TOL and orc <= ORACLE_TOL


# ---- 2. oracle equivalence --------------------------------------------------------------


def perturbed(point, rng, size=1e-3):
    """Move one apparent puncture by ``size`` in a random direction, keeping every c."""
    op = point.op
    a = int(rng.integers(op.L))
    app = list(op.apparent)
    x, c = app[a]
    app[a] = (x + size * np.exp(2j * np.pi * rng.uniform()), c)
    return FuchsianOperator.build(op.sphere, op.delta, app)


def classify(op):
    sys = assemble_system(op.sphere, op.delta, op.L)
    v = np.array([x for x, _ in op.apparent] + [c for _, c in op.apparent], dtype=complex)
    algebraic = float(np.max(np.abs(sys.residual(v)))) <= RESIDUAL_TOL
    numerical = verify_monodromy_free(op, tol=ORACLE_TOL).passed
    return algebraic, numerical


def test_criterion_2_oracle_equivalence(moduli, accept):
    rng = np.random.default_rng(11)
    solutions = [p.op for ms in moduli.values() for p in ms.points]
    others = [perturbed(p, rng) for ms in moduli.values() for p in ms.points]
    disagree = 0
    sol_ok = non_ok = 0
    for op in solutions:
        alg, num = classify(op)
        disagree += alg != num
        sol_ok += alg and num
    for op in others:
        alg, num = classify(op)
        disagree += alg != num
        non_ok += not alg and not num
    ok = len(solutions) >= 20 and len(others) >= 20 and disagree == 0
    ok &= sol_ok == len(solutions) and non_ok == len(others)
    accept("2", ok, f"{len(solutions)} solutions, {len(others)} non-solutions at 1e-3, {disagree} disagreements")
    assert ok


# ---- 3. analytic monodromy --------------------------------------------------------------


def test_criterion_3_frobenius(accept):
    rng = np.random.default_rng(3)
    sphere = SphereData(a1=0.55, a2=0.8)
    r = 0.1 * sphere.min_separation
    worst = 0.0
    for d1 in rng.uniform(-0.2, 2.0, 10):
        op = FuchsianOperator.build(sphere, (d1, 0.2, -0.1))
        tm = monodromy_around(op, 0.0, sphere.z[0], r, sphere.z[0] + 2 * r)
        worst = max(worst, abs(tm.trace + 2 * math.cos(math.pi * math.sqrt(1 + 4 * d1))))
    ok = worst < 1e-8
    accept("3", ok, f"10 random delta1 in (-0.2, 2): max |Tr M1 + 2cos(pi sqrt(1+4 delta1))| = {worst:.1e}")
    assert ok


# ---- 4. Wilson-loop invariance ----------------------------------------------------------


def invariance_loops(op):
    """Reference loops and their deformations; the (i, 0) loop sweeps across x_a."""
    s = op.sphere
    z, sep = s.z, s.min_separation
    x = op.apparent[0][0]
    i = int(np.argmin([abs(x - zk) for zk in z]))
    j = 0 if i != 0 else 1
    dist = abs(x - z[i])
    inner, outer = dist - 0.1 * sep, dist + 0.1 * sep
    assert 0 < inner and outer < 0.5 * sep  # the sweep is geometrically possible
    k, l = (0, 1) if i == 2 else ((1, 2) if i == 0 else (0, 2))
    return {
        "base-point change": (default_wilson_loop(op, (k, l)),
                              pochhammer_loop(s, k, l, base=0.4 * z[k] + 0.6 * z[l], radii=(0.12 * sep, 0.3 * sep))),
        "loop deformation": (default_wilson_loop(op, (k, l)),
                             pochhammer_loop(s, k, l, radii=(0.3 * sep, 0.15 * sep))),
        "sweep across x_a": (pochhammer_loop(s, i, j, radii=(inner, 0.2 * sep)),
                             pochhammer_loop(s, i, j, radii=(outer, 0.2 * sep))),
    }


def test_criterion_4_wilson_invariance(moduli, accept):
    op = moduli[1, 1].points[0].op
    worst = {}
    for name, (la, lb) in invariance_loops(op).items():
        d = 0.0
        for th in INVARIANCE_THETA:
            l2 = cft_lambda2(th)
            Wa = wilson_trace(op, l2, la, tol=ODE_TOL)
            Wb = wilson_trace(op, l2, lb, tol=ODE_TOL)
            d = max(d, abs(Wa - Wb) / (1 + abs(Wa)))
        worst[name] = d
    loop = default_wilson_loop(op)
    w0 = wilson_scan(op, PERIODIC_BAND, loop=loop, tol=ODE_TOL)
    w1 = wilson_scan(op, PERIODIC_BAND + 1j * math.pi, loop=loop, tol=ODE_TOL)
    per = max(abs(a.W - b.W) / (1 + abs(a.W)) for a, b in zip(w0, w1))
    ok = max(worst.values()) < INVARIANCE_TOL and per < 1e-8
    parts = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    accept("4", ok, f"{parts}; periodicity on 20 points {per:.1e}")
    assert ok


# ---- 5. charge extraction ---------------------------------------------------------------


def test_criterion_5_charges(moduli, accept):
    op = moduli[1, 1].points[0].op
    loop = default_wilson_loop(op)
    fa = extract_charges(wilson_scan(op, np.linspace(2.0, 2.5, 21), loop=loop))
    fb = extract_charges(wilson_scan(op, np.linspace(2.5, 3.0, 21), loop=loop))
    window = abs(fa.q[0] - fb.q[0]) / abs(fa.q[0])
    C, q = 3.7, [-1.2 + 0.3j, 0.45]
    synth = 0.0
    for side in ("+", "-"):
        for N in (2, 4):
            th = np.linspace(1.5, 3.0, 30) * (1 if side == "+" else -1)
            fit = extract_charges(synthetic_samples(C, q, th, side), N=N, side=side)
            got = fit.q if side == "+" else fit.q_bar
            synth = max(synth, abs(fit.C - C), *(abs(g - e) for g, e in zip(got, q)))
    ok = window < 1e-4 and synth < 1e-8 and fa.reliable and fb.reliable
    accept("5", ok, f"q1 windows [2,2.5] vs [2.5,3] relative {window:.1e}; synthetic recovery {synth:.1e}")
    assert ok


# ---- 6. PDE solver order, patch, exponents ----------------------------------------------


def test_criterion_6_pde_solver(sym_field, unitary_field, accept):
    study = refinement_study(SphereData(), SYM_M, 1.0, MeshSpec(h=0.1), levels=3)
    order = study.orders[0]
    exact = 0.5 * math.log(0.8**2 * abs(0.7 - 0.4j))
    patch = float(np.max(np.abs(solve_patch(0.7 - 0.4j, 0.8, n=16, eta0=np.zeros((16, 16))).eta - exact)))
    sym = quiet_profile(sym_field).max_deviation
    uni = quiet_profile(unitary_field).max_deviation
    ok = order >= 2.0 and patch < 1e-10 and sym < 5e-3 and uni < 5e-3
    accept("6", ok, f"order {order:.2f} (h {study.h[0]}, {study.h[1]} on h/4); patch error {patch:.1e}; "
                    f"exponent deviations symmetric {sym:.1e}, unitary {uni:.1e}")
    assert ok


# ---- 7. zero curvature and transport ----------------------------------------------------


def test_criterion_7_flatness_and_transport(sym_field, sym_field_fine, moduli, accept):
    pts = sample_points(sym_field, 20)
    flat = math.log2(flatness_residual(sym_field, pts) / flatness_residual(sym_field_fine, pts))
    s = sym_field.sphere
    sp = SpectralPoint.from_theta(0.3 + 0.2j, 1.0)
    W1 = pde_wilson(sym_field, sp)
    W2 = pde_wilson(sym_field, sp, pochhammer_loop(s, 0, 1, base=0.45 * s.z[0] + 0.55 * s.z[1], radii=(0.3, 0.4)))
    contour = abs(W1 - W2) / (1 + abs(W1))
    sp = SpectralPoint.from_theta(-0.4 + 0.1j, 1.0)
    W1 = pde_wilson(sym_field, sp)
    period = abs(W1 - pde_wilson(sym_field, sp.shifted(1j * math.pi))) / (1 + abs(W1))
    # det on open paths and small circles is absolute; on the Pochhammer loop the entries
    # reach |W| >> 1 and the meaningful measure is relative to the entry scale
    det = 0.0
    paths = (polyline([0.2 + 0.1j, -0.3 + 0.4j]), circle_loop(s.z[0], 0.3, 0.4 * s.z[0]))
    for theta in (0.0, -1.0, 0.3 + 0.2j):
        sp = SpectralPoint.from_theta(theta, 1.0)
        for path in paths:
            Y, _ = pde_transport(sym_field, sp, path)
            det = max(det, abs(np.linalg.det(Y[0]) - 1))
        Y, _ = pde_transport(sym_field, sp, default_pde_loop(sym_field))
        det = max(det, relative_det_defect(Y[0]))
    op = moduli[1, 1].points[0].op
    for l2 in (0.0, 1.0, -2.0 + 3.0j):
        det = max(det, relative_det_defect(transport(op, l2, default_wilson_loop(op)).m))
    ok = flat >= 2.0 and contour < 1e-4 and period < 1e-4 and det < 1e-6
    accept("7", ok, f"flatness order {flat:.2f}; contour invariance {contour:.1e}; "
                    f"i pi periodicity {period:.1e}; det defect {det:.1e}")
    assert ok


# ---- 8. CFT-limit cross-check -----------------------------------------------------------


def test_criterion_8_cft_limit(accept):
    rho = 0.05
    sphere = SphereData()
    delta = [mi * (mi + 1) for mi in SYM_M]
    theta = np.linspace(2.0, 3.0, 41)
    ode = extract_charges(wilson_scan(FuchsianOperator.build(sphere, delta), theta), N=4)
    fld = solve_vacuum(sphere, SYM_M, rho, MeshSpec(h=0.1))
    pde = extract_charges(wilson_scan(fld, theta - math.log(rho), mode="mshg_pde"), N=4)
    q_pde = rho * pde.q[0]
    gap = abs(q_pde - ode.q[0]) / abs(ode.q[0])
    ok = gap < 0.05
    accept("8", ok, f"rho = {rho}: rho q1_pde = {q_pde.real:.5f}, q1_ode = {ode.q[0].real:.5f}, gap {gap:.2%} "
                    "(delta_i = m_i(m_i+1), theta_pde = theta_ode - log rho)")
    assert ok


# ---- 9. dictionary and domain guards ----------------------------------------------------


def test_criterion_9_dictionary(accept):
    triv = dictionary((2 / 3, 2 / 3, 2 / 3), (-0.5, -0.5, -0.5), 1.0)
    work = dictionary((0.8, 0.7, 0.5), (-0.4, -0.45, -0.5), 0.3)
    examples = (
        max(abs(a - 1 / 6) for a in triv.alpha2) < 1e-15 and triv.k == (0.0, 0.0, 0.0) and triv.muR == 2.0
        and max(abs(a - b) for a, b in zip(work.alpha2, (0.2, 0.175, 0.125))) < 1e-15
        and max(abs(a - b) for a, b in zip(work.k, (0.25, 1 / 7, 0.0))) < 1e-15
        and abs(work.muR - 0.6) < 1e-15
    )
    norm = max(abs(sum(r.alpha2) - 0.5) for r in (triv, work))
    rejected = 0
    bad = [
        lambda: dictionary((0.8, 0.7, 0.5), (-0.2, -0.45, -0.5), 0.3),
        lambda: dictionary((0.8, 0.7, 0.5), (-0.6, -0.45, -0.5), 0.3),
        lambda: check_m(SphereData(), (-0.5, -0.4, -0.4)),
        lambda: check_m(SphereData(), (-0.2, -0.4, -0.4)),
    ]
    for f in bad:
        try:
            f()
        except DomainError:
            rejected += 1
    ok = examples and norm < 1e-14 and rejected == len(bad)
    accept("9", ok, f"examples {'match' if examples else 'differ'}; sum alpha^2 - 1/2 = {norm:.1e}; "
                    f"{rejected}/{len(bad)} out-of-domain m rejected")
    assert ok


# ---- 10. determinism --------------------------------------------------------------------


def run_cli(argv, out):
    assert main(argv + ["--output", str(out)], env={}) == EXIT_OK
    files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != RECORD_NAME}
    return files, json.loads((out / RECORD_NAME).read_text())["outputs"]


def test_criterion_10_determinism(tmp_path, moduli, accept):
    runs = {}
    for rep in ("a", "b"):
        for L in EXPECTED:
            argv = ["enumerate", "--set", f"L={L}", "--set", "generic_draw=1", "--seed", "1"]
            runs[rep, f"enumerate L={L}"] = run_cli(argv, tmp_path / rep / f"enum{L}")
        mfile = json.dumps(str(tmp_path / rep / "enum1" / "moduli.json"))
        op = moduli[1, 1].points[0].op
        sep = op.sphere.min_separation
        outer = abs(op.apparent[0][0] - op.sphere.z[2]) + 0.1 * sep
        loop = json.dumps({"pair": [2, 0], "radii": [outer, 0.2 * sep]})
        argv = ["wilson", "--set", f"moduli_file={mfile}", "--set", "index=0", "--set", f"loop={loop}",
                "--set", 'theta={"start": -2.0, "stop": 1.5, "num": 8, "imag": 0.3}', "--set", f"tol={ODE_TOL}",
                "--format", "text,csv"]
        runs[rep, "wilson sweep"] = run_cli(argv, tmp_path / rep / "wilson")
    names = sorted({k for _, k in runs})
    same = [runs["a", k] == runs["b", k] for k in names]
    nfiles = sum(len(runs["a", k][0]) for k in names)
    ok = all(same)
    accept("10", ok, f"{sum(same)}/{len(names)} runs byte-identical over {nfiles} result files")
    assert ok


def test_cli_rejects_out_of_domain_m(tmp_path):
    argv = ["dictionary", "--set", "a=[0.8, 0.7, 0.5]", "--set", "m=[-0.6, -0.45, -0.5]", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_CONFIG
