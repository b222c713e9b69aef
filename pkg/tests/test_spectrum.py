import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mshglab.errors import ConfigurationError, DomainError, FitError, TruncationError
from mshglab.rational_core import FuchsianOperator
from mshglab.spectrum import (
    ScanSample,
    SpectralPoint,
    cft_lambda2,
    continuous_log,
    default_wilson_loop,
    dictionary,
    extract_charges,
    inverse_dictionary,
    m_bounds,
    read_scan_csv,
    synthetic_samples,
    wilson_scan,
    wkb_charges,
    write_scan_csv,
)
from mshglab.transport import commutator_trace, frobenius_trace, transport, wilson_trace

WINDOW_A = np.linspace(2.0, 2.5, 21)
WINDOW_B = np.linspace(2.5, 3.0, 21)


@pytest.fixture(scope="module")
def op(moduli_l1):
    return moduli_l1.points[0].op


@pytest.fixture(scope="module")
def loop(op):
    return default_wilson_loop(op)


@pytest.fixture(scope="module")
def fit_a(op, loop):
    return extract_charges(wilson_scan(op, WINDOW_A, loop=loop))


# ---- spectral parameter ---------------------------------------------------------


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 5))
def test_spectral_point_invariants(tr, ti, rho):
    p = SpectralPoint.from_theta(complex(tr, ti), rho)
    assert abs(cmath.exp(2 * p.theta) * p.lam_bar - p.lam) < 1e-14 * max(1, abs(p.lam))
    assert p.rho == pytest.approx(rho, rel=1e-14)
    q = p.shifted(0.3 - 0.2j)
    assert q.rho == pytest.approx(rho, rel=1e-13)
    assert q.lam == pytest.approx(p.lam * cmath.exp(0.3 - 0.2j), rel=1e-14)


def test_spectral_point_needs_positive_rho():
    with pytest.raises(DomainError):
        SpectralPoint.from_theta(0.0, 0.0)


def test_cft_lambda2():
    assert cft_lambda2(0.5) == pytest.approx(math.exp(1.0))
    assert cft_lambda2(0.5, swap=True) == pytest.approx(math.exp(-1.0))


# ---- fitting ------------------------------------------------------------------


@pytest.mark.parametrize("side", ["+", "-"])
@pytest.mark.parametrize("N", [2, 4])
def test_synthetic_recovery(side, N):
    C, q = 3.7, [-1.2 + 0.3j, 0.45]
    th = np.linspace(1.5, 3.0, 30) * (1 if side == "+" else -1)
    fit = extract_charges(synthetic_samples(C, q, th, side), N=N, side=side)
    got = fit.q if side == "+" else fit.q_bar
    assert abs(fit.C - C) < 1e-8
    assert max(abs(g - e) for g, e in zip(got, q)) < 1e-8
    assert fit.reliable


def test_continuous_log_unwraps():
    th = np.linspace(0, 6, 200)
    W = np.exp(1j * th + 0.1)
    lg = continuous_log(W)
    assert np.allclose(lg, 1j * th + 0.1)


def test_continuous_log_errors():
    with pytest.raises(FitError):
        continuous_log(np.array([1.0, 0.0]))
    with pytest.raises(FitError):
        continuous_log(np.exp(1j * np.array([0.0, 2.0, 4.0])))


def test_fit_needs_enough_samples():
    with pytest.raises(FitError):
        extract_charges(synthetic_samples(1.0, [0.1], [2.0, 2.1, 2.2]), N=4)
    with pytest.raises(ConfigurationError):
        extract_charges(synthetic_samples(1.0, [0.1], np.linspace(2, 3, 10)), side="x")


def test_fit_flags_bad_model():
    th = np.linspace(1.0, 2.0, 20)
    samples = [(t, cmath.exp(math.exp(2 * t) / 50)) for t in th]
    fit = extract_charges(samples)
    assert not fit.reliable and fit.notes


def test_fit_flags_ill_conditioning():
    th = np.linspace(2.0, 2.0005, 12)
    fit = extract_charges(synthetic_samples(1.0, [0.1, 0.0, 0.0, 0.0], th))
    assert fit.condition > 1e12 and not fit.reliable


# ---- Wilson scans on a monodromy-free operator ----------------------------------------


def test_scan_band_is_enforced(op, loop):
    with pytest.raises(TruncationError) as err:
        wilson_scan(op, [0.0, 3.5], loop=loop)
    assert err.value.largest_theta == 3.0
    with pytest.raises(TruncationError):
        wilson_scan(op, [-3.5], loop=loop, swap=True)
    with pytest.raises(ConfigurationError):
        wilson_scan(op, [0.0], mode="bogus")


def test_window_stability(op, loop, fit_a):
    fit_b = extract_charges(wilson_scan(op, WINDOW_B, loop=loop))
    assert fit_a.reliable and fit_b.reliable
    assert abs(fit_a.q[0] - fit_b.q[0]) / abs(fit_a.q[0]) < 1e-4


def test_charges_match_wkb_periods(op, loop, fit_a):
    C, q1 = wkb_charges(op, loop)
    assert abs(fit_a.C - C) / abs(C) < 1e-8
    assert abs(fit_a.q[0] - q1) / abs(q1) < 1e-6


def test_mirrored_scan(op, loop, fit_a):
    mirror = wilson_scan(op, -WINDOW_A, loop=loop, swap=True)
    fit = extract_charges(mirror, side="-")
    assert abs(fit.q_bar[0] - fit_a.q[0]) / abs(fit_a.q[0]) < 1e-6


def test_periodicity(op, loop):
    band = np.linspace(-2.5, 2.5, 20) + 0.3j
    w0 = wilson_scan(op, band, loop=loop, tol=1e-13)
    w1 = wilson_scan(op, band + 1j * math.pi, loop=loop, tol=1e-13)
    for a, b in zip(w0, w1):
        assert abs(a.W - b.W) < 1e-8 * (1 + abs(a.W))


def test_scan_is_continuous(op, loop):
    grid = np.linspace(-1.0, 1.0, 41)
    s = wilson_scan(op, grid, loop=loop)
    # W grows doubly exponentially, so continuity is judged on log W
    lg = continuous_log(np.array([x.W for x in s]))
    assert np.max(np.abs(np.diff(lg, 2))) < 0.1 * np.max(np.abs(np.diff(lg)))
    assert all(x.err > 0 for x in s)


def test_small_lambda_limit(draw1):
    sphere, delta = draw1
    op = FuchsianOperator.build(sphere, delta)
    loop = default_wilson_loop(op)
    W = wilson_scan(op, [-8.0], loop=loop)[0].W
    r = 0.2 * sphere.min_separation
    from mshglab.paths import circle_loop

    Mi = transport(op, 0.0, circle_loop(sphere.z[0], r, loop.base)).m
    Mj = transport(op, 0.0, circle_loop(sphere.z[1], r, loop.base)).m
    undeformed = commutator_trace(frobenius_trace(delta[0]), frobenius_trace(delta[1]), np.trace(Mi @ Mj))
    assert abs(W - undeformed) < 1e-4
    assert abs(W - wilson_trace(op, 0.0, loop)) < 1e-4


def test_batch_independent_of_jobs(op, loop):
    grid = np.linspace(0.0, 1.0, 20)
    a = wilson_scan(op, grid, loop=loop, jobs=1)
    b = wilson_scan(op, grid, loop=loop, jobs=2)
    assert [x.W for x in a] == [x.W for x in b]


def test_scan_csv_round_trip(tmp_path):
    s = [ScanSample(0.1 + 0.2j, 1.5 - 2.5j, 1e-9), ScanSample(0.3, -1e10 + 1e-7j, 2e-5)]
    p = tmp_path / "scan.csv"
    write_scan_csv(s, p)
    assert read_scan_csv(p) == s


# ---- dictionary --------------------------------------------------------------------


def test_dictionary_trivial_example():
    r = dictionary((2 / 3, 2 / 3, 2 / 3), (-0.5, -0.5, -0.5), 1.0)
    assert r.alpha2 == pytest.approx((1 / 6,) * 3, abs=1e-15)
    assert r.k == (0.0, 0.0, 0.0)
    assert r.muR == 2.0


def test_dictionary_worked_example():
    r = dictionary((0.8, 0.7, 0.5), (-0.4, -0.45, -0.5), 0.3)
    assert r.alpha2 == pytest.approx((0.2, 0.175, 0.125), abs=1e-15)
    assert r.k == pytest.approx((0.25, 1 / 7, 0.0), abs=1e-15)
    assert r.muR == pytest.approx(0.6, abs=1e-15)
    assert abs(sum(r.alpha2) - 0.5) < 1e-14


def test_dictionary_upper_bound_violation():
    with pytest.raises(DomainError, match="upper bound"):
        dictionary((0.8, 0.7, 0.5), (-0.2, -0.45, -0.5), 0.3)
    with pytest.raises(DomainError, match="lower bound"):
        dictionary((0.8, 0.7, 0.5), (-0.6, -0.45, -0.5), 0.3)


def test_dictionary_unitary_regime():
    r = dictionary((1.2, 1.1, -0.3), (-0.3, -0.3), 1.0, regime="unitary")
    assert r.b2 == pytest.approx(0.075)
    assert len(r.k) == 2
    with pytest.raises(DomainError):
        dictionary((1.2, 1.1, -0.3), (-0.3, -0.3, -0.3), 1.0, regime="unitary")
    with pytest.raises(DomainError):
        dictionary((0.8, 0.7, 0.5), (-0.3, -0.3), 1.0, regime="unitary")


def test_dictionary_input_guards():
    with pytest.raises(DomainError):
        dictionary((0.8, 0.7, 0.6), (-0.4, -0.45, -0.5), 0.3)
    with pytest.raises(DomainError):
        dictionary((0.8, 0.7, 0.5), (-0.4, -0.45, -0.5), 0.0)


@settings(max_examples=100)
@given(
    st.floats(0.05, 1.9), st.floats(0.05, 1.9),
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 10),
)
def test_dictionary_round_trip(a1, a2, t1, t2, t3, rho):
    a3 = 2.0 - a1 - a2
    if not 0.05 < a3 < 1.9:
        return
    a = (a1, a2, a3)
    m = tuple(m_bounds(ai)[0] + t * (m_bounds(ai)[1] - m_bounds(ai)[0]) for ai, t in zip(a, (t1, t2, t3)))
    res = dictionary(a, m, rho)
    assert abs(sum(res.alpha2) - 0.5) < 1e-14
    a_b, m_b, rho_b = inverse_dictionary(res)
    assert max(abs(x - y) for x, y in zip(a_b, a)) < 1e-12
    assert max(abs(x - y) for x, y in zip(m_b, m)) < 1e-12
    assert abs(rho_b - rho) < 1e-12 * rho
