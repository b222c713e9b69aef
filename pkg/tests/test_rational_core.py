import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mshglab.errors import BranchError, ChartError, ConfigurationError, DomainError
from mshglab.rational_core import (
    DEFAULT_FRAME,
    BranchState,
    FuchsianOperator,
    Regime,
    SphereData,
    abs_P,
    continue_branch,
    decay_residues,
    eval_P,
    eval_T,
    log_derivative_P,
    mobius_apply,
    mobius_derivative,
    mobius_pushforward,
    partition_count,
    principal_logs,
    reference_point,
    track_branch,
)


def direct_P(sphere, z):
    """P by direct complex powers (principal branches), independent of the log bookkeeping."""
    z1, z2, z3 = sphere.z
    a1, a2, a3 = sphere.a
    num = cmath.exp(a1 * cmath.log(z3 - z2) + a2 * cmath.log(z1 - z3) + a3 * cmath.log(z2 - z1))
    den = 1.0
    for zi, ai in zip(sphere.z, sphere.a):
        den *= cmath.exp((2 - ai) * cmath.log(z - zi))
    return num / den


def brute_partitions(L, kinds):
    """Count k-tuples of ordinary partitions with total size L."""

    def parts(n, largest):
        if n == 0:
            yield ()
            return
        for p in range(min(n, largest), 0, -1):
            for rest in parts(n - p, p):
                yield (p,) + rest

    counts = [sum(1 for _ in parts(n, n)) for n in range(L + 1)]
    total = 0
    for split in itertools.product(range(L + 1), repeat=kinds):
        if sum(split) == L:
            total += math.prod(counts[s] for s in split)
    return total


# ---- SphereData -----------------------------------------------------------


def test_sphere_enforces_sum_rule():
    s = SphereData(a1=0.3, a2=0.9)
    assert sum(s.a) == pytest.approx(2.0, abs=1e-15)
    assert s.a[2] == 2.0 - 0.3 - 0.9


def test_sphere_from_triple_checks_sum():
    with pytest.raises(DomainError):
        SphereData.from_triple((0.5, 0.5, 0.5))
    s = SphereData.from_triple((0.5, 0.6, 0.9))
    assert s.a == pytest.approx((0.5, 0.6, 0.9))


@pytest.mark.parametrize("a1,a2", [(0.0, 1.0), (2.1, 0.2), (1.0, 1.0)])
def test_symmetric_regime_bounds(a1, a2):
    with pytest.raises(DomainError):
        SphereData(a1=a1, a2=a2)


def test_unitary_regime_bounds():
    SphereData(a1=1.2, a2=1.1, regime="unitary")
    with pytest.raises(DomainError):
        SphereData(a1=0.5, a2=0.5, regime="unitary")


def test_distinct_punctures():
    with pytest.raises(ConfigurationError):
        SphereData(z=(0, 1, 1))


def test_sphere_json_round_trip():
    s = SphereData(z=(0.1 + 0.2j, 1.5, -1j), a1=0.4, a2=0.7, regime=Regime.SYMMETRIC)
    assert SphereData.from_dict(s.to_dict()) == s


def test_default_frame_is_cube_roots():
    for z in DEFAULT_FRAME:
        assert abs(z**3 - 1) < 1e-14


# ---- eval_P ---------------------------------------------------------------


def test_eval_P_at_origin_matches_direct_formula():
    s = SphereData()
    v = eval_P(s, 0.0)
    assert v != 0 and cmath.isfinite(v)
    assert abs(v - direct_P(s, 0.0)) < 1e-13 * abs(v)


def test_eval_P_random_points_match_direct_formula():
    rng = np.random.default_rng(3)
    s = SphereData(a1=0.45, a2=0.85)
    for z in rng.normal(size=10) + 1j * rng.normal(size=10):
        assert abs(eval_P(s, z) - direct_P(s, z)) < 1e-12 * abs(direct_P(s, z))


def test_abs_P_is_single_valued_modulus():
    s = SphereData(a1=0.45, a2=0.85)
    z = np.array([0.3 + 0.1j, -2.0 + 1j, 4j])
    assert np.allclose(abs_P(s, z), [abs(eval_P(s, v)) for v in z], rtol=1e-13)


def test_eval_P_at_puncture_is_domain_error():
    s = SphereData()
    with pytest.raises(DomainError):
        eval_P(s, s.z[0])


def test_contractible_loop_returns_branch():
    s = SphereData(a1=0.5, a2=0.8)
    c = 0.05 + 0.1j
    # start off the principal cuts so that the endpoint comparison is unambiguous
    pts = [c + 0.3 * cmath.exp(1j * (0.7 + 2 * math.pi * k / 40)) for k in range(41)]
    end = track_branch(s, pts)
    assert end.windings == (0, 0, 0)
    v0 = eval_P(s, pts[0], BranchState(point=pts[0]))
    assert abs(eval_P(s, pts[-1], end) - v0) < 1e-13 * abs(v0)


def test_loop_around_z1_picks_up_phase():
    s = SphereData(a1=0.55, a2=0.8)
    z1 = s.z[0]
    pts = [z1 + 0.25 * cmath.exp(1j * (0.4 + 2 * math.pi * k / 64)) for k in range(65)]
    start = BranchState(point=pts[0])
    end = track_branch(s, pts, start)
    ratio = eval_P(s, pts[-1], end) / eval_P(s, pts[0], start)
    expected = cmath.exp(-2j * math.pi * (2 - s.a1))
    assert abs(ratio - expected) < 1e-12


def test_branch_state_rejects_large_jump():
    s = SphereData()
    b = BranchState(point=0.0)
    with pytest.raises(BranchError):
        eval_P(s, -0.9 * s.z[0] + 0.1, b)


def test_loop_and_reverse_compose_to_identity():
    s = SphereData(a1=0.55, a2=0.8)
    pts = [s.z[1] + 0.3 * cmath.exp(1j * (0.4 + 2 * math.pi * k / 32)) for k in range(33)]
    b = track_branch(s, pts)
    back = track_branch(s, pts[::-1], b)
    assert back.windings == (0, 0, 0)


def test_continue_branch_through_puncture_fails():
    s = SphereData()
    with pytest.raises(DomainError):
        continue_branch(s, BranchState(point=0.0), 2 * s.z[0])


def test_log_derivative_matches_finite_difference():
    s = SphereData(a1=0.45, a2=0.85)
    z, h = 0.2 - 0.3j, 1e-6
    fd = (eval_P(s, z + h) - eval_P(s, z - h)) / (2 * h) / eval_P(s, z)
    assert abs(fd - log_derivative_P(s, z)) < 1e-8


# ---- Möbius ---------------------------------------------------------------


def test_identity_pushforward():
    s = SphereData(a1=0.45, a2=0.85)
    assert mobius_pushforward(s, np.eye(2)) == s


def test_frame_fixing_map_leaves_P_unchanged():
    s = SphereData(a1=0.45, a2=0.85)
    m = 3.7 * np.eye(2)
    img = mobius_pushforward(s, m)
    rng = np.random.default_rng(5)
    for z in rng.normal(size=10) + 1j * rng.normal(size=10):
        assert abs(eval_P(img, z) - eval_P(s, z)) < 1e-12 * abs(eval_P(s, z))


def test_map_sending_puncture_to_infinity():
    s = SphereData()
    z1 = s.z[0]
    with pytest.raises(ChartError):
        mobius_pushforward(s, np.array([[1, 0], [1, -z1]]))


def test_degenerate_map():
    with pytest.raises(ConfigurationError):
        mobius_pushforward(SphereData(), np.ones((2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quadratic_differential_covariance(seed):
    rng = np.random.default_rng(seed)
    s = SphereData(a1=0.55, a2=0.7)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    try:
        img = mobius_pushforward(s, m)
    except (ChartError, ConfigurationError):
        return
    p = reference_point(s)
    # continue both branches from the anchor to a nearby random point
    z = p + 0.05 * complex(*rng.normal(size=2))
    if abs(complex(m[1, 0]) * z + m[1, 1]) < 1e-3:
        return
    lhs = eval_P(img, mobius_apply(m, z), continue_branch(img, BranchState(point=complex(mobius_apply(m, p))), mobius_apply(m, z)))
    lhs *= complex(mobius_derivative(m, z)) ** 2
    rhs = eval_P(s, z, continue_branch(s, BranchState(point=p), z))
    assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


# ---- FuchsianOperator / T_L ---------------------------------------------------


def test_all_zero_delta_gives_zero_T():
    op = FuchsianOperator.build(SphereData(), (0, 0, 0))
    assert np.allclose(op.residues, 0)
    assert eval_T(op, 0.3 + 0.2j) == 0


def test_decay_single_delta():
    op = FuchsianOperator.build(SphereData(), (0.7, 0, 0))
    vals = []
    for R in (1e2, 1e3, 1e4):
        zs = R * np.exp(2j * np.pi * np.arange(16) / 16)
        vals.append(np.max(np.abs(zs**4 * eval_T(op, zs))))
    assert max(vals) < 2 * min(vals)


def test_residues_from_linear_solve_match_summation():
    s = SphereData(a1=0.45, a2=0.85)
    delta = (0.3, -0.1, 0.8)
    x1, c1 = 0.2 + 0.4j, -0.7 + 0.1j
    op = FuchsianOperator.build(s, delta, [(x1, c1)])
    r = op.residues
    # regularity at infinity: the 1/z, 1/z^2, 1/z^3 coefficients vanish
    poles = list(s.z) + [x1]
    strengths = list(delta) + [2.0]
    res = list(r) + [c1]
    assert abs(sum(res)) < 1e-12
    assert abs(sum(rr * p + ss for rr, p, ss in zip(res, poles, strengths))) < 1e-12
    assert abs(sum(rr * p**2 + 2 * ss * p for rr, p, ss in zip(res, poles, strengths))) < 1e-12
    rng = np.random.default_rng(2)
    for z in rng.normal(size=5) + 1j * rng.normal(size=5):
        direct = sum(ss / (z - p) ** 2 + rr / (z - p) for p, ss, rr in zip(poles, strengths, res))
        assert abs(eval_T(op, z) - direct) < 1e-12 * max(1, abs(direct))


def test_decay_residue_solver_symmetric_data():
    s = SphereData()
    d = 0.6
    r = decay_residues(s, (d, d, d), [])
    # with Z3-symmetric data T(omega z) omega^2 = T(z) forces c_i = k conj(z_i);
    # sum (c_i z_i + d) = 0 then gives k = -d
    assert np.allclose(r, [-d * zi.conjugate() for zi in s.z], atol=1e-13)


def test_T_at_pole_is_domain_error():
    op = FuchsianOperator.build(SphereData(), (0.2, 0.1, 0.0))
    with pytest.raises(DomainError):
        eval_T(op, op.sphere.z[0])


def test_apparent_collisions_rejected():
    s = SphereData()
    with pytest.raises(DomainError):
        FuchsianOperator.build(s, (0, 0, 0), [(s.z[0], 0.1)])
    with pytest.raises(DomainError):
        FuchsianOperator.build(s, (0, 0, 0), [(0.1, 0.1), (0.1, 0.2)])


def test_operator_json_round_trip():
    op = FuchsianOperator.build(SphereData(a1=0.5, a2=0.6), (0.1, 0.2, 0.3), [(0.1 + 0.1j, 0.5)])
    back = FuchsianOperator.from_dict(op.to_dict())
    assert back.apparent == op.apparent and np.allclose(back.residues, op.residues)


@settings(max_examples=20, deadline=None)
@given(
    st.floats(-0.2, 2.0), st.floats(-0.2, 2.0), st.floats(-0.2, 2.0),
    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
)
def test_decay_property(d1, d2, d3, x, c):
    s = SphereData()
    if min(abs(x - zi) for zi in s.z) < 1e-2:
        return
    op = FuchsianOperator.build(s, (d1, d2, d3), [(x, c)])
    vals = []
    for R in (1e2, 1e3, 1e4):
        zs = R * np.exp(2j * np.pi * (np.arange(8) + 0.3) / 8)
        vals.append(np.max(np.abs(zs**4 * eval_T(op, zs))))
    assert vals[2] <= 2 * vals[0] + 1e-6


# ---- partitions -----------------------------------------------------------


@pytest.mark.parametrize("L,kinds,expected", [(0, 3, 1), (1, 3, 3), (2, 3, 9), (3, 3, 22), (5, 1, 7)])
def test_partition_values(L, kinds, expected):
    assert partition_count(L, kinds) == expected


@pytest.mark.parametrize("kinds", [1, 2, 3])
def test_partitions_match_brute_force(kinds):
    for L in range(13):
        assert partition_count(L, kinds) == brute_partitions(L, kinds)


def test_partition_domain():
    with pytest.raises(DomainError):
        partition_count(-1, 3)
    with pytest.raises(DomainError):
        partition_count(2, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 30), st.integers(1, 3))
def test_partition_euler_recurrence(L, kinds):
    # L p_k(L) = k sum_{j=1}^{L} sigma(j) p_k(L - j)
    sigma = lambda j: sum(d for d in range(1, j + 1) if j % d == 0)  # noqa: E731
    lhs = L * partition_count(L, kinds)
    rhs = kinds * sum(sigma(j) * partition_count(L - j, kinds) for j in range(1, L + 1))
    assert lhs == rhs


def test_principal_logs_shape():
    assert principal_logs(SphereData(), 0.0).shape == (3,)
