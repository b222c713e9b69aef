"""Wilson-loop scans in the spectral parameter and asymptotic charges.

For large positive Re(theta),

    log W(theta) ~ C e^theta + sum_{n>=1} q_{2n-1} e^{-(2n-1) theta},

and the mirrored expansion in e^{-theta} holds as Re(theta) -> -infinity.
Charges are read off by linear least squares on a window of samples.
"""
from __future__ import annotations

import cmath
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, FitError, IntegrationError, TruncationError
from .paths import PathSpec
from .rational_core import FuchsianOperator, Regime, SphereData, eval_T, log_prefactor, principal_logs
from .transport import DEFAULT_TOL, pochhammer_loop, transport

DEFAULT_THETA_MAX = 3.0
DEFAULT_ORDER = 4
COND_MAX = 1e12
RESIDUAL_MAX = 1e-7


# ---------------------------------------------------------------------------
# spectral parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralPoint:
    """The pair (lambda, lambda_bar); theta and rho are always derived."""

    lam: complex
    lam_bar: complex

    @classmethod
    def from_theta(cls, theta: complex, rho: float) -> "SpectralPoint":
        if not rho > 0:
            raise DomainError("rho must be positive")
        return cls(rho * cmath.exp(theta), rho * cmath.exp(-theta))

    @property
    def theta(self) -> complex:
        return 0.5 * cmath.log(self.lam / self.lam_bar)

    @property
    def rho2(self) -> complex:
        return self.lam * self.lam_bar

    @property
    def rho(self) -> float:
        return math.sqrt(abs(self.rho2))

    def shifted(self, s: complex) -> "SpectralPoint":
        """theta -> theta + s at fixed rho."""
        return SpectralPoint(self.lam * cmath.exp(s), self.lam_bar * cmath.exp(-s))


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanSample:
    theta: complex
    W: complex
    err: float

    def row(self) -> tuple[float, float, float, float, float]:
        return (self.theta.real, self.theta.imag, self.W.real, self.W.imag, self.err)


def default_wilson_loop(op: FuchsianOperator, pair: tuple[int, int] = (0, 1)) -> PathSpec:
    """A Pochhammer loop around z_i, z_j keeping clear of every apparent puncture."""
    sphere = op.sphere
    i, j = pair
    sep = sphere.min_separation
    extra = [x for x, _ in op.apparent]
    zi, zj = sphere.z[i], sphere.z[j]
    best = None
    for frac in (0.2, 0.15, 0.25, 0.12, 0.3):
        for s in (0.5, 0.45, 0.55, 0.4, 0.6):
            base = zi + s * (zj - zi)
            try:
                loop = pochhammer_loop(sphere, i, j, base=base, radii=(frac * sep, frac * sep))
            except ConfigurationError:
                continue
            clear = min((loop.min_distance(x) for x in extra), default=math.inf)
            if clear >= 0.08 * sep:
                return loop
            if best is None or clear > best[0]:
                best = (clear, loop)
    if best is None:
        raise ConfigurationError("could not build a Pochhammer loop for this configuration")
    return best[1]


def cft_lambda2(theta: complex, swap: bool = False) -> complex:
    """lambda^2 in the ODE picture: lambda = e^theta with lambda_bar = 1 (swapped: lambda = e^-theta)."""
    return cmath.exp(-2.0 * theta if swap else 2.0 * theta)


SCAN_CHUNK = 16  # theta values integrated together; fixed so results do not depend on --jobs


def _ode_batch(args) -> list[ScanSample]:
    op, loop, thetas, tol, swap = args
    res = transport(op, [cft_lambda2(t, swap) for t in thetas], loop, tol=tol)
    out = []
    for theta, r in zip(thetas, res):
        W = r.trace
        if not cmath.isfinite(W):
            raise IntegrationError(f"Wilson trace overflow at theta={theta}")
        err = max(r.tol_est, tol) * max(1.0, float(np.max(np.abs(r.m))))
        out.append(ScanSample(complex(theta), W, err))
    return out


def wilson_scan(
    target,
    theta_grid: Sequence[complex],
    mode: str = "cft_ode",
    tol: float = DEFAULT_TOL,
    loop: PathSpec | None = None,
    pair: tuple[int, int] = (0, 1),
    theta_max: float = DEFAULT_THETA_MAX,
    swap: bool = False,
    jobs: int = 1,
) -> list[ScanSample]:
    """W(theta) on a grid.

    ``cft_ode``: ``target`` is a FuchsianOperator (or anything with an ``op``
    attribute) and lambda^2 = e^{2 theta}.  ``mshg_pde``: ``target`` is an
    MShGField and lambda = rho e^theta, lambda_bar = rho e^-theta with the
    field's rho.  The stiffness band is max(|lambda|, |lambda_bar|) <= e^theta_max,
    i.e. log(rho) + |Re theta| <= theta_max for ``mshg_pde`` and
    Re theta <= theta_max (-Re theta when swapped) for ``cft_ode``.
    """
    grid = [complex(t) for t in theta_grid]
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    if mode not in ("cft_ode", "mshg_pde"):
        raise ConfigurationError(f"unknown scan mode {mode!r}")
    if mode == "mshg_pde":
        shift = math.log(target.rho)
        over = [t for t in grid if abs(t.real) + shift > theta_max]
    else:
        # lambda_bar = 1 here, so only the growing side of lambda is stiff
        shift = 0.0
        sgn = -1.0 if swap else 1.0
        over = [t for t in grid if sgn * t.real > theta_max]
    if over:
        raise TruncationError(
            f"grid leaves the stiffness band (theta_max = {theta_max}, log rho = {shift:.6g})", theta_max - shift
        )
    if mode == "cft_ode":
        op = getattr(target, "op", target)
        if not isinstance(op, FuchsianOperator):
            raise ConfigurationError("cft_ode mode needs a FuchsianOperator")
        loop = default_wilson_loop(op, pair) if loop is None else loop
        return run_chunked(_ode_batch, lambda ts: (op, loop, ts, tol, swap), grid, jobs)
    from .mshg.wilson import pde_scan

    return pde_scan(target, grid, loop=loop, pair=pair, tol=tol, swap=swap, jobs=jobs)


def run_chunked(worker, make_args, grid: list[complex], jobs: int) -> list[ScanSample]:
    """Evaluate in chunks of increasing |Re theta| so a failure reports the largest good theta.

    ``worker(args)`` returns the samples of one chunk; chunks are fixed in
    size so results do not depend on the number of worker processes.
    """
    order = sorted(range(len(grid)), key=lambda k: (abs(grid[k].real), k))
    chunks = [order[k : k + SCAN_CHUNK] for k in range(0, len(order), SCAN_CHUNK)]
    out: list[ScanSample | None] = [None] * len(grid)
    args = [make_args([grid[k] for k in ch]) for ch in chunks]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(worker, a) for a in args]
            for ch, fut in zip(chunks, futures):
                try:
                    res = fut.result()
                except IntegrationError as exc:
                    _truncate(grid, out, exc)
                for k, r in zip(ch, res):
                    out[k] = r
    else:
        for ch, a in zip(chunks, args):
            try:
                res = worker(a)
            except IntegrationError as exc:
                _truncate(grid, out, exc)
            for k, r in zip(ch, res):
                out[k] = r
    return out  # type: ignore[return-value]


def _truncate(grid: list[complex], out: list, exc: IntegrationError) -> None:
    done = [abs(grid[k].real) for k, r in enumerate(out) if r is not None]
    largest = max(done) if done else None
    raise TruncationError(
        f"scan stopped: {exc}; largest |Re theta| completed: {largest}", largest
    ) from exc


def write_scan_csv(samples: Sequence[ScanSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theta_re,theta_im,W_re,W_im,err\n")
        for s in samples:
            fh.write(",".join(repr(float(v)) for v in s.row()) + "\n")


def read_scan_csv(path) -> list[ScanSample]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [ScanSample(complex(r[0], r[1]), complex(r[2], r[3]), float(r[4])) for r in rows]


# ---------------------------------------------------------------------------
# charge extraction
# ---------------------------------------------------------------------------


@dataclass
class ChargeSpectrum:
    C: complex
    q: list[complex]
    q_bar: list[complex]
    N: int
    fit_window: tuple[float, float]
    fit_residual: float
    condition: float = 0.0
    side: str = "+"
    reliable: bool = True
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        pair = lambda v: [complex(v).real, complex(v).imag]  # noqa: E731
        return {
            "C": pair(self.C),
            "q": [pair(v) for v in self.q],
            "q_bar": [pair(v) for v in self.q_bar],
            "N": self.N,
            "fit_window": list(self.fit_window),
            "fit_residual": self.fit_residual,
            "condition": self.condition,
            "side": self.side,
            "reliable": self.reliable,
            "notes": list(self.notes),
        }


def continuous_log(W: np.ndarray) -> np.ndarray:
    """log W along an ordered sequence, principal at the smallest |W| and unwrapped from there."""
    W = np.asarray(W, dtype=complex)
    if np.any(W == 0):
        raise FitError("W vanishes on the fit window")
    logs = np.log(W)
    k0 = int(np.argmin(np.abs(W)))
    out = logs.copy()
    for k in range(k0 + 1, len(W)):
        out[k] = logs[k] + 2j * np.pi * np.round((out[k - 1].imag - logs[k].imag) / (2 * np.pi))
    for k in range(k0 - 1, -1, -1):
        out[k] = logs[k] + 2j * np.pi * np.round((out[k + 1].imag - logs[k].imag) / (2 * np.pi))
    jumps = np.abs(np.diff(out.imag))
    if jumps.size and np.max(jumps) > 0.5 * np.pi:
        raise FitError("log W changes by more than pi/2 between neighbouring samples; refine the window")
    return out


def charge_basis(theta: np.ndarray, N: int, side: str = "+") -> np.ndarray:
    s = 1.0 if side == "+" else -1.0
    cols = [np.exp(s * theta)] + [np.exp(-s * (2 * n - 1) * theta) for n in range(1, N + 1)]
    return np.stack(cols, axis=1)


def extract_charges(
    samples: Sequence,
    N: int = DEFAULT_ORDER,
    side: str = "+",
    cond_max: float = COND_MAX,
    residual_max: float = RESIDUAL_MAX,
) -> ChargeSpectrum:
    """Least-squares fit of log W in {e^theta, e^-theta, e^-3theta, ...} (mirrored for side '-')."""
    if side not in ("+", "-"):
        raise ConfigurationError("side must be '+' or '-'")
    pts = sorted(((complex(_theta(s)), complex(_W(s))) for s in samples), key=lambda p: p[0].real)
    if len(pts) < N + 2:
        raise FitError(f"need at least {N + 2} samples for order {N}, got {len(pts)}")
    theta = np.array([p[0] for p in pts])
    logW = continuous_log(np.array([p[1] for p in pts]))
    A = charge_basis(theta, N, side)
    scale = np.max(np.abs(A), axis=0)
    As = A / scale
    coef_s, *_ = np.linalg.lstsq(As, logW, rcond=None)
    coef = coef_s / scale
    resid = float(np.max(np.abs(As @ coef_s - logW)))
    cond = float(np.linalg.cond(As))
    notes = []
    reliable = True
    if cond > cond_max:
        reliable = False
        notes.append(f"ill-conditioned fit (condition {cond:.3g})")
    if resid > residual_max:
        reliable = False
        notes.append(f"fit residual {resid:.3g} above threshold")
    C = complex(coef[0])
    qs = [complex(c) for c in coef[1:]]
    window = (float(theta[0].real), float(theta[-1].real))
    if side == "+":
        return ChargeSpectrum(C, qs, [], N, window, resid, cond, side, reliable, notes)
    return ChargeSpectrum(C, [], qs, N, window, resid, cond, side, reliable, notes)


def _theta(s):
    return s.theta if hasattr(s, "theta") else s[0]


def _W(s):
    return s.W if hasattr(s, "W") else s[1]


def synthetic_samples(C: complex, q: Sequence[complex], thetas: Sequence[float], side: str = "+") -> list[tuple[complex, complex]]:
    """Samples of exp(C e^theta + sum q_n e^{-(2n-1)theta}) (mirrored for side '-')."""
    th = np.asarray(thetas, dtype=complex)
    A = charge_basis(th, len(q), side)
    logW = A @ np.concatenate([[C], np.asarray(q, dtype=complex)])
    return [(complex(t), complex(np.exp(l))) for t, l in zip(th, logW)]


# ---------------------------------------------------------------------------
# WKB oracles
# ---------------------------------------------------------------------------


def _loop_quadrature(op: FuchsianOperator, loop: PathSpec, f, n_gauss: int = 48) -> complex:
    """Integral of f(z, sqrtP, dlogP) dz along ``loop`` with sqrtP continued from the principal sheet."""
    sphere = op.sphere
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    tg, wg = 0.5 * (xg + 1.0), 0.5 * wg
    pre = log_prefactor(sphere)
    expo = [2.0 - a for a in sphere.a]
    logs = principal_logs(sphere, loop.base)
    total = 0j
    for seg in loop.segments:
        for sub in range(8):
            for t, w in zip(tg, wg):
                tt = (sub + t) / 8.0
                z, dz, inc = seg.frame(tt, sphere.z)
                lp = pre - sum(e * (l + d) for e, l, d in zip(expo, logs, inc))
                dlog = sum((a - 2.0) / (z - zi) for zi, a in zip(sphere.z, sphere.a))
                total += (w / 8.0) * f(z, cmath.exp(0.5 * lp), dlog) * dz
        logs = logs + np.array(seg.frame(1.0, sphere.z)[2])
    return total


def wkb_period(op: FuchsianOperator, loop: PathSpec) -> complex:
    """The period of sqrt(P) dz around the loop on the sheet continued from the base point."""
    return _loop_quadrature(op, loop, lambda z, s, d: s)


def wkb_charges(op: FuchsianOperator, loop: PathSpec) -> tuple[complex, complex]:
    """Leading WKB predictions (C, q1) for log W on the positive side.

    log W ~ sigma [lambda I0 + lambda^-1 I1] with I0 = period of sqrt(P),
    I1 = period of (T + (P'/P)^2/16) / (2 sqrt(P)), and sigma = +-1 chosen so
    that the dominant exponential grows.
    """
    I0 = wkb_period(op, loop)
    I1 = _loop_quadrature(op, loop, lambda z, s, d: (complex(eval_T(op, z)) + d * d / 16.0) / (2.0 * s))
    sigma = 1.0 if I0.real >= 0 else -1.0
    return sigma * I0, sigma * I1


# ---------------------------------------------------------------------------
# parameter dictionary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DictionaryResult:
    alpha2: tuple[float, float, float]
    k: tuple[float, ...]
    muR: float
    b2: float | None = None
    regime: str = "symmetric"

    def to_dict(self) -> dict:
        return {"alpha2": list(self.alpha2), "k": list(self.k), "muR": self.muR, "b2": self.b2, "regime": self.regime}


def m_bounds(a_i: float) -> tuple[float, float]:
    return -0.5, -0.25 * (2.0 - a_i)


def dictionary(a: Sequence[float], m: Sequence[float], rho: float, regime: str = "symmetric") -> DictionaryResult:
    """alpha_i^2 = a_i/4, k_i = (2 m_i + 1)/a_i, mu R = 2 rho (and b^2 = -alpha_3^2 when a3 < 0)."""
    regime = Regime(regime).value
    a = tuple(float(v) for v in a)
    if len(a) != 3:
        raise DomainError("a must have three entries")
    if abs(sum(a) - 2.0) > 1e-12:
        raise DomainError(f"a1 + a2 + a3 must equal 2, got {sum(a)!r}")
    if not rho > 0:
        raise DomainError("rho must be positive")
    n_m = 3 if regime == "symmetric" else 2
    m = tuple(float(v) for v in m)
    if len(m) != n_m:
        raise DomainError(f"{regime} regime needs {n_m} values of m, got {len(m)}")
    if regime == "symmetric":
        if not all(0.0 < ai < 2.0 for ai in a):
            raise DomainError(f"symmetric regime needs 0 < a_i < 2, got {a}")
    elif not (a[0] > 0 and a[1] > 0 and a[2] < 0):
        raise DomainError(f"unitary regime needs a1, a2 > 0 > a3, got {a}")
    for i, mi in enumerate(m):
        lo, hi = m_bounds(a[i])
        if mi < lo:
            raise DomainError(f"m{i + 1} = {mi} violates the lower bound m >= -1/2")
        if mi > hi:
            raise DomainError(f"m{i + 1} = {mi} violates the upper bound m <= -(2 - a{i + 1})/4 = {hi}")
    alpha2 = tuple(ai / 4.0 for ai in a)
    k = tuple((2.0 * mi + 1.0) / a[i] for i, mi in enumerate(m))
    b2 = -alpha2[2] if regime == "unitary" else None
    return DictionaryResult(alpha2, k, 2.0 * rho, b2, regime)  # type: ignore[arg-type]


def inverse_dictionary(res: DictionaryResult) -> tuple[tuple[float, float, float], tuple[float, ...], float]:
    """Recover (a, m, rho) from a dictionary result."""
    a = tuple(4.0 * v for v in res.alpha2)
    m = tuple(0.5 * (k * a[i] - 1.0) for i, k in enumerate(res.k))
    return a, m, 0.5 * res.muR  # type: ignore[return-value]
