"""Command-line driver: run configuration, run records and reports.

Every run reads one JSON configuration (optionally with ``--set key=value``
overrides), dispatches to the owning module, writes its outputs into the
output directory together with ``record.json`` (configuration snapshot,
version, timing, status and a SHA-256 manifest of the outputs) and exits
with

    0  success
    2  invalid configuration or parameters out of domain
    3  computation failed (no convergence, failed verification, ...)

Only the output directory and the worker count may be overridden from the
environment (``MSHGLAB_OUTPUT_DIR``, ``MSHGLAB_JOBS``).  Outputs depend only
on the configuration, so reruns produce identical digests.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    FitError,
    FormatError,
    IntegrationError,
    MshgLabError,
    TruncationError,
)

log = logging.getLogger("mshglab")

TASKS = (
    "enumerate",
    "wilson",
    "charges",
    "pde-solve",
    "pde-wilson",
    "dictionary",
    "count-partitions",
    "verify",
    "transport",
)
FORMATS = ("text", "csv", "svg")
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3
ENV_OUTPUT = "MSHGLAB_OUTPUT_DIR"
ENV_JOBS = "MSHGLAB_JOBS"
RECORD_NAME = "record.json"
SVG_SALT = "mshglab"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _check_tolerances(obj, path: str = "parameters") -> None:
    """Every numeric entry whose key mentions 'tol' must be positive."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            where = f"{path}.{k}"
            if "tol" in str(k).lower() and isinstance(v, (int, float)) and not isinstance(v, bool):
                if not v > 0:
                    raise ConfigurationError(f"{where}: tolerance must be > 0, got {v!r}")
            _check_tolerances(v, where)
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            _check_tolerances(v, f"{path}[{k}]")


@dataclass
class RunConfig:
    task: str
    parameters: dict = field(default_factory=dict)
    output_dir: str = "mshglab-out"
    seed: int = 0
    jobs: int = 1
    formats: list[str] | None = None

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigurationError(f"task: unknown task {self.task!r} (choose from {', '.join(TASKS)})")
        if not isinstance(self.parameters, dict):
            raise ConfigurationError("parameters: must be a JSON object")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"seed: must be a non-negative integer, got {self.seed!r}")
        if isinstance(self.jobs, bool) or not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigurationError(f"jobs: must be a positive integer, got {self.jobs!r}")
        if self.formats is not None:
            bad = [f for f in self.formats if f not in FORMATS]
            if bad:
                raise ConfigurationError(f"formats: unknown format(s) {bad}")
        _check_tolerances(self.parameters)
        return self

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "parameters": self.parameters,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "jobs": self.jobs,
            "formats": self.formats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"task", "parameters", "output_dir", "seed", "jobs", "formats"}
        if unknown:
            raise ConfigurationError(f"unknown configuration field(s): {sorted(unknown)}")
        if "task" not in d:
            raise ConfigurationError("task: missing")
        return cls(
            task=d["task"],
            parameters=dict(d.get("parameters", {})),
            output_dir=d.get("output_dir", "mshglab-out"),
            seed=d.get("seed", 0),
            jobs=d.get("jobs", 1),
            formats=d.get("formats"),
        ).validate()

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"configuration is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigurationError("configuration must be a JSON object")
        return cls.from_dict(d)


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, tuple):
        return [_jsonable(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


# ---------------------------------------------------------------------------
# parameter parsing
# ---------------------------------------------------------------------------


def _complex(v, name: str) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigurationError(f"{name}: expected a number or [re, im], got {v!r}")


def _require(p: dict, key: str):
    if key not in p:
        raise ConfigurationError(f"parameters.{key}: missing")
    return p[key]


def parse_sphere(p: dict):
    from .rational_core import DEFAULT_FRAME, SphereData

    d = p.get("sphere", {})
    if not isinstance(d, dict):
        raise ConfigurationError("parameters.sphere: must be an object")
    regime = d.get("regime", "symmetric")
    z = tuple(_complex(v, "parameters.sphere.z") for v in d["z"]) if "z" in d else DEFAULT_FRAME
    if len(z) != 3:
        raise ConfigurationError("parameters.sphere.z: needs three punctures")
    if "a" in d:
        a = [float(v) for v in d["a"]]
        if len(a) == 3:
            return SphereData.from_triple(a, z=z, regime=regime)
        if len(a) != 2:
            raise ConfigurationError("parameters.sphere.a: give (a1, a2) or (a1, a2, a3)")
        return SphereData(z=z, a1=a[0], a2=a[1], regime=regime)
    return SphereData(z=z, a1=d.get("a1", 2.0 / 3.0), a2=d.get("a2", 2.0 / 3.0), regime=regime)


def parse_operator(p: dict, base: Path | None = None):
    """FuchsianOperator from 'operator', from 'moduli_file' + 'index', or from sphere/delta/apparent."""
    from .apparent import ModuliSet
    from .rational_core import FuchsianOperator

    if "operator" in p:
        return FuchsianOperator.from_dict(p["operator"])
    if "moduli_file" in p:
        path = _resolve(p["moduli_file"], base)
        mset = ModuliSet.from_dict(json.loads(path.read_text()))
        idx = int(p.get("index", 0))
        if not 0 <= idx < len(mset.points):
            raise ConfigurationError(f"parameters.index: {idx} outside 0..{len(mset.points) - 1}")
        return mset.points[idx].op
    sphere = parse_sphere(p)
    delta = [float(v) for v in p.get("delta", (0.0, 0.0, 0.0))]
    app = [(_complex(a["x"], "apparent.x"), _complex(a["c"], "apparent.c")) for a in p.get("apparent", [])]
    return FuchsianOperator.build(sphere, delta, app)


def parse_theta_grid(p: dict) -> list[complex]:
    spec = p.get("theta", {"start": -1.0, "stop": 1.0, "num": 21})
    if isinstance(spec, list):
        return [_complex(v, "parameters.theta") for v in spec]
    if not isinstance(spec, dict):
        raise ConfigurationError("parameters.theta: give a list or {start, stop, num, imag}")
    num = int(spec.get("num", 21))
    if num < 1:
        raise ConfigurationError("parameters.theta.num: must be positive")
    re = np.linspace(float(spec.get("start", -1.0)), float(spec.get("stop", 1.0)), num)
    return [complex(r, float(spec.get("imag", 0.0))) for r in re]


def parse_loop(p: dict, sphere):
    from .paths import PathSpec
    from .transport import pochhammer_loop

    if "loop" not in p:
        return None
    d = p["loop"]
    if "segments" in d:
        return PathSpec.from_dict(d)
    pair = tuple(d.get("pair", (0, 1)))
    base = _complex(d["base"], "loop.base") if "base" in d else None
    radii = tuple(float(r) for r in d["radii"]) if "radii" in d else None
    return pochhammer_loop(sphere, pair[0], pair[1], base=base, radii=radii)


def _resolve(path, base: Path | None) -> Path:
    path = Path(path)
    if not path.is_absolute() and base is not None and not path.exists():
        path = base / path
    if not path.exists():
        raise ConfigurationError(f"file not found: {path}")
    return path


# ---------------------------------------------------------------------------
# results and records
# ---------------------------------------------------------------------------


@dataclass
class TaskResult:
    data: dict
    summary: str
    ok: bool = True
    scan: list | None = None
    fit: object | None = None
    scatter: tuple[list[complex], int, int] | None = None  # (points, L, expected)
    files: dict[str, bytes] = field(default_factory=dict)
    formats: tuple[str, ...] = ("text",)


@dataclass
class RunRecord:
    config: RunConfig
    version: str
    status: str
    seconds: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)
    message: str = ""
    result: TaskResult | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "version": self.version,
            "status": self.status,
            "timing": {"seconds": self.seconds},
            "outputs": dict(sorted(self.outputs.items())),
            "message": self.message,
        }


def digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------


def task_count_partitions(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .rational_core import partition_count

    p = cfg.parameters
    L = int(_require(p, "L"))
    kinds = int(p.get("kinds", 3))
    if L < 0 or kinds < 1:
        raise ConfigurationError("parameters: need L >= 0 and kinds >= 1")
    n = partition_count(L, kinds)
    return TaskResult({"L": L, "kinds": kinds, "count": n}, f"{n}")


def task_dictionary(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .spectrum import dictionary

    p = cfg.parameters
    a = [float(v) for v in _require(p, "a")]
    if len(a) == 2:
        a.append(2.0 - a[0] - a[1])
    m = [float(v) for v in _require(p, "m")]
    rho = float(p.get("rho", 1.0))
    res = dictionary(a, m, rho, p.get("regime", "symmetric"))
    lines = [
        "alpha^2 = " + ", ".join(f"{v:.12g}" for v in res.alpha2),
        "k = " + ", ".join(f"{v:.12g}" for v in res.k),
        f"muR = {res.muR:.12g}",
        f"sum alpha^2 = {sum(res.alpha2):.15g}",
    ]
    if res.b2 is not None:
        lines.append(f"b^2 = {res.b2:.12g}")
    return TaskResult(res.to_dict(), "\n".join(lines))


def task_enumerate(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .apparent import Strategy, enumerate_moduli, generic_parameters

    p = cfg.parameters
    L = int(_require(p, "L"))
    if L < 0:
        raise ConfigurationError("parameters.L: must be >= 0")
    if "generic_draw" in p:
        sphere, delta = generic_parameters(int(p["generic_draw"]), p.get("regime", "symmetric"))
    else:
        sphere = parse_sphere(p)
        delta = [float(v) for v in _require(p, "delta")]
    sdict = dict(p.get("strategy", {}))
    sdict["seed"] = cfg.seed
    sdict["jobs"] = cfg.jobs
    strategy = Strategy.from_dict(sdict)
    mset = enumerate_moduli(sphere, delta, L, strategy)
    found, expected = len(mset.points), mset.expected
    lines = [f"found {found}, expected p_3({L})={expected}", "", "index  residual    oracle_dev  x_a"]
    for k, pt in enumerate(mset.points):
        xs = " ".join(f"{x.real:+.10f}{x.imag:+.10f}i" for x, _ in pt.op.apparent)
        dev = float("nan") if pt.oracle_deviation is None else pt.oracle_deviation
        lines.append(f"{k:5d}  {pt.residual:.3e}   {dev:.3e}   {xs}")
    d = mset.to_dict()
    d["diagnostics"]["strategy"].pop("jobs", None)  # parallelism does not change results
    xs = [x for pt in mset.points for x, _ in pt.op.apparent]
    return TaskResult(
        d,
        "\n".join(lines),
        ok=found == expected,
        scatter=(xs, L, expected),
        files={"moduli.json": dump_json(d).encode()},
        formats=("text", "svg"),
    )


def _scan_summary(samples, label: str) -> list[str]:
    W = np.array([s.W for s in samples])
    th = np.array([s.theta for s in samples])
    err = max(s.err for s in samples)
    return [
        f"{label}: {len(samples)} samples, Re theta in [{th.real.min():.6g}, {th.real.max():.6g}]",
        f"max error estimate {err:.3e}",
        f"W(theta_first) = {W[0].real:.12g}{W[0].imag:+.12g}i",
        f"W(theta_last)  = {W[-1].real:.12g}{W[-1].imag:+.12g}i",
    ]


def _scan_ode(cfg: RunConfig, base: Path | None):
    from .spectrum import DEFAULT_THETA_MAX, wilson_scan
    from .transport import DEFAULT_TOL

    p = cfg.parameters
    op = parse_operator(p, base)
    grid = parse_theta_grid(p)
    loop = parse_loop(p, op.sphere)
    return wilson_scan(
        op,
        grid,
        mode="cft_ode",
        tol=float(p.get("tol", DEFAULT_TOL)),
        loop=loop,
        pair=tuple(p.get("pair", (0, 1))),
        theta_max=float(p.get("theta_max", DEFAULT_THETA_MAX)),
        swap=bool(p.get("swap", False)),
        jobs=cfg.jobs,
    )


def _scan_pde(cfg: RunConfig, base: Path | None):
    from .mshg.field import MShGField
    from .mshg.wilson import PDE_TOL
    from .spectrum import DEFAULT_THETA_MAX, wilson_scan

    p = cfg.parameters
    fld = MShGField.load(_resolve(_require(p, "checkpoint"), base))
    grid = parse_theta_grid(p)
    loop = parse_loop(p, fld.sphere)
    samples = wilson_scan(
        fld,
        grid,
        mode="mshg_pde",
        tol=float(p.get("tol", PDE_TOL)),
        loop=loop,
        pair=tuple(p.get("pair", (0, 1))),
        theta_max=float(p.get("theta_max", DEFAULT_THETA_MAX)),
        swap=bool(p.get("swap", False)),
        jobs=cfg.jobs,
    )
    return fld, samples


def _fit(p: dict, samples):
    from .spectrum import DEFAULT_ORDER, extract_charges

    side = p.get("side", "+")
    window = p.get("window")
    use = samples
    if window is not None:
        lo, hi = float(window[0]), float(window[1])
        use = [s for s in samples if lo <= s.theta.real <= hi]
    return extract_charges(use, N=int(p.get("order", DEFAULT_ORDER)), side=side)


def _charges_lines(fit) -> list[str]:
    def c(v):
        return f"{complex(v).real:.12g}{complex(v).imag:+.12g}i"

    lines = [f"C = {c(fit.C)}"]
    lab = "q" if fit.side == "+" else "qbar"
    for n, v in enumerate(fit.q if fit.side == "+" else fit.q_bar, start=1):
        lines.append(f"{lab}_{2 * n - 1} = {c(v)}")
    lines.append(f"fit window [{fit.fit_window[0]:.6g}, {fit.fit_window[1]:.6g}], residual {fit.fit_residual:.3e}")
    lines.append("reliable" if fit.reliable else "UNRELIABLE: " + "; ".join(fit.notes))
    return lines


def task_wilson(cfg: RunConfig, base: Path | None) -> TaskResult:
    p = cfg.parameters
    if p.get("mode", "cft_ode") == "mshg_pde":
        _, samples = _scan_pde(cfg, base)
    else:
        samples = _scan_ode(cfg, base)
    return TaskResult(
        {"samples": [list(s.row()) for s in samples]},
        "\n".join(_scan_summary(samples, "Wilson scan")),
        scan=samples,
        formats=("text", "csv", "svg"),
    )


def task_charges(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .spectrum import read_scan_csv

    p = cfg.parameters
    if "scan_csv" in p:
        samples = read_scan_csv(_resolve(p["scan_csv"], base))
    elif p.get("mode", "cft_ode") == "mshg_pde":
        _, samples = _scan_pde(cfg, base)
    else:
        samples = _scan_ode(cfg, base)
    fit = _fit(p, samples)
    return TaskResult(
        {"charges": fit.to_dict()},
        "\n".join(_charges_lines(fit)),
        ok=fit.reliable,
        scan=samples,
        fit=fit,
        formats=("text", "csv", "svg"),
    )


def task_pde_solve(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .mshg.mesh import MeshSpec
    from .mshg.profile import boundary_profile_check
    from .mshg.solver import solve_vacuum

    p = cfg.parameters
    sphere = parse_sphere(p)
    m = [float(v) for v in _require(p, "m")]
    rho = float(_require(p, "rho"))
    spec = MeshSpec.from_dict(p.get("mesh", {}))
    fld = solve_vacuum(sphere, m, rho, spec, tol=float(p.get("tol", 1e-10)), max_iter=int(p.get("max_iter", 50)))
    lines = [
        f"vacuum solve: {'converged' if fld.converged else 'NOT converged'} after {fld.iterations} Newton iterations",
        f"residual {fld.residual:.3e}, unknowns {fld.u.size}",
    ]
    data = {"solve": fld.header()["solve"], "unknowns": int(fld.u.size)}
    if fld.converged and p.get("profile", True):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = boundary_profile_check(fld)
        data["profile"] = rep.to_dict()
        data["profile"]["warnings"] = [str(w.message) for w in caught]
        for f in rep.fits:
            lines.append(f"exponent at {f.location}: fitted {f.fitted:.6f}, target {f.target:.6f}, deviation {f.deviation:+.2e}")
        for w in caught:
            lines.append(f"warning: {w.message}")
    return TaskResult(data, "\n".join(lines), ok=fld.converged, files={"field.mshg": fld.to_bytes()})


def task_pde_wilson(cfg: RunConfig, base: Path | None) -> TaskResult:
    p = cfg.parameters
    fld, samples = _scan_pde(cfg, base)
    lines = [f"field: rho = {fld.rho}, m = {list(fld.m)}"] + _scan_summary(samples, "massive Wilson scan")
    data = {"samples": [list(s.row()) for s in samples]}
    fit = None
    ok = True
    if "order" in p:
        fit = _fit(p, samples)
        data["charges"] = fit.to_dict()
        lines += _charges_lines(fit)
        ok = fit.reliable
    return TaskResult(data, "\n".join(lines), ok=ok, scan=samples, fit=fit, formats=("text", "csv", "svg"))


def task_transport(cfg: RunConfig, base: Path | None) -> TaskResult:
    from .paths import PathSpec
    from .transport import DEFAULT_TOL, transport

    p = cfg.parameters
    op = parse_operator(p, base)
    lam2 = _complex(p.get("lambda2", 0.0), "parameters.lambda2")
    if "path_file" in p:
        path = PathSpec.from_dict(json.loads(_resolve(p["path_file"], base).read_text()))
    elif "path" in p:
        path = PathSpec.from_dict(p["path"])
    else:
        path = parse_loop(p, op.sphere)
        if path is None:
            raise ConfigurationError("parameters.path: missing (give 'path', 'path_file' or 'loop')")
    r_min = p.get("r_min")
    tm = transport(op, lam2, path, tol=float(p.get("tol", DEFAULT_TOL)), r_min=None if r_min is None else float(r_min))
    m = tm.m
    data = {
        "matrix": [[complex(m[0, 0]), complex(m[0, 1])], [complex(m[1, 0]), complex(m[1, 1])]],
        "det": complex(tm.det),
        "trace": complex(tm.trace),
        "lambda2": lam2,
        "tol_est": tm.tol_est,
        "steps": tm.stats.accepted,
    }
    rows = [" ".join(f"{complex(v).real:+.14e}{complex(v).imag:+.14e}i" for v in row) for row in m]
    lines = ["transport matrix:", *rows, f"det - 1 = {abs(tm.det - 1):.3e}, error estimate {tm.tol_est:.3e}"]
    return TaskResult(data, "\n".join(lines))


# ---- verify -----------------------------------------------------------------


def _suite_partitions(seed: int) -> tuple[bool, str]:
    from .rational_core import partition_count

    def brute(L, k):
        # colourings of ordinary partitions: count multisets of (part, colour)
        parts = [(n, c) for n in range(1, L + 1) for c in range(k)]

        def rec(i, rest):
            if rest == 0:
                return 1
            if i == len(parts):
                return 0
            n = parts[i][0]
            return sum(rec(i + 1, rest - j * n) for j in range(rest // n + 1))

        return rec(0, L)

    bad = [(L, k) for k in (1, 2, 3) for L in range(9) if partition_count(L, k) != brute(L, k)]
    return not bad, "L <= 8, kinds 1..3" if not bad else f"mismatch at {bad}"


def _suite_mobius(seed: int) -> tuple[bool, str]:
    from .rational_core import SphereData, eval_P, mobius_apply, mobius_derivative, mobius_pushforward, reference_point

    rng = np.random.default_rng(seed)
    sph = SphereData(a1=0.55, a2=0.8)
    worst = 0.0
    for _ in range(5):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        img = mobius_pushforward(sph, m)
        p = reference_point(sph)
        lhs = eval_P(img, complex(mobius_apply(m, p))) * complex(mobius_derivative(m, p)) ** 2
        rhs = eval_P(sph, p)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst < 1e-10, f"max relative defect {worst:.2e}"


def _suite_monodromy(seed: int) -> tuple[bool, str]:
    from .rational_core import FuchsianOperator, SphereData
    from .transport import frobenius_trace, monodromy_around

    rng = np.random.default_rng(seed)
    sph = SphereData()
    worst = 0.0
    for d in rng.uniform(-0.2, 2.0, size=3):
        op = FuchsianOperator.build(sph, (d, 0.3, -0.1))
        r = 0.1 * sph.min_separation
        tm = monodromy_around(op, 0.0, sph.z[0], r, sph.z[0] + 2 * r)
        worst = max(worst, abs(tm.trace - frobenius_trace(d)))
    return worst < 1e-8, f"max |Tr M1 - analytic| {worst:.2e}"


def _suite_transport(seed: int) -> tuple[bool, str]:
    from .rational_core import FuchsianOperator, SphereData
    from .transport import DEFAULT_TOL, pochhammer_loop, relative_det_defect, transport

    sph = SphereData(a1=0.6, a2=0.7)
    op = FuchsianOperator.build(sph, (0.2, 0.5, 0.1))
    loop = pochhammer_loop(sph, 0, 1)
    fw = transport(op, 0.7 + 0.2j, loop)
    bw = transport(op, 0.7 + 0.2j, loop.reversed())
    det = relative_det_defect(fw.m)
    # the round trip loses accuracy in proportion to |M| |M^-1|
    scale = np.linalg.norm(fw.m, 2) * np.linalg.norm(bw.m, 2)
    inv = float(np.max(np.abs(bw.m @ fw.m - np.eye(2)))) / scale
    return det < 10 * DEFAULT_TOL and inv < 1e-9, f"relative det defect {det:.2e}, |M_rev M - 1| / (|M| |M_rev|) {inv:.2e}"


def _suite_moduli(seed: int) -> tuple[bool, str]:
    from .apparent import Strategy, enumerate_moduli, generic_parameters

    sph, delta = generic_parameters(seed)
    ms = enumerate_moduli(sph, delta, 1, Strategy(seed=seed))
    res = max(p.residual for p in ms.points) if ms.points else math.inf
    dev = max(p.oracle_deviation for p in ms.points) if ms.points else math.inf
    ok = len(ms.points) == 3 and res <= 1e-10 and dev <= 1e-6
    return ok, f"L=1: found {len(ms.points)}/3, residual {res:.1e}, oracle {dev:.1e}"


def _suite_wilson(seed: int) -> tuple[bool, str]:
    from .rational_core import FuchsianOperator, SphereData
    from .spectrum import wilson_scan

    op = FuchsianOperator.build(SphereData(a1=0.6, a2=0.7), (0.2, 0.5, 0.1))
    th = np.linspace(-1.0, 1.0, 5)
    a = wilson_scan(op, th)
    b = wilson_scan(op, th + 1j * np.pi)
    worst = max(abs(x.W - y.W) / (1 + abs(x.W)) for x, y in zip(a, b))
    return worst < 1e-8, f"max periodicity defect {worst:.2e}"


def _suite_charges(seed: int) -> tuple[bool, str]:
    from .spectrum import extract_charges, synthetic_samples

    C, q = 1.3 + 0.2j, [0.4 - 0.1j, 0.05, -0.01j]
    fit = extract_charges(synthetic_samples(C, q, np.linspace(1.0, 3.0, 30)), N=3)
    worst = max([abs(fit.C - C)] + [abs(a - b) for a, b in zip(fit.q, q)])
    return worst < 1e-8, f"synthetic recovery error {worst:.2e}"


def _suite_dictionary(seed: int) -> tuple[bool, str]:
    from .spectrum import dictionary

    r = dictionary((0.8, 0.7, 0.5), (-0.4, -0.45, -0.5), 0.3)
    ok = np.allclose(r.alpha2, (0.2, 0.175, 0.125), rtol=0, atol=1e-15)
    ok &= np.allclose(r.k, (0.25, 1 / 7, 0.0), rtol=0, atol=1e-15) and abs(r.muR - 0.6) < 1e-15
    ok &= abs(sum(r.alpha2) - 0.5) < 1e-14
    try:
        dictionary((0.8, 0.7, 0.5), (-0.2, -0.45, -0.5), 0.3)
        ok = False
    except DomainError:
        pass
    return bool(ok), "examples, sum alpha^2 = 1/2, domain guard"


def _suite_patch(seed: int) -> tuple[bool, str]:
    from .mshg.solver import solve_patch

    rng = np.random.default_rng(seed)
    p, rho = 0.7 - 0.4j, 0.8
    exact = 0.5 * math.log(rho**2 * abs(p))
    sol = solve_patch(p, rho, n=16, eta0=exact + 0.1 * rng.standard_normal((16, 16)))
    err = float(np.max(np.abs(sol.eta - exact)))
    return err < 1e-10, f"max |eta - exact| {err:.2e}"


def _suite_pde(seed: int) -> tuple[bool, str]:
    from .mshg.profile import boundary_profile_check
    from .mshg.solver import solve_vacuum
    from .rational_core import SphereData

    fld = solve_vacuum(SphereData(), (-0.4, -0.4, -0.4), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dev = boundary_profile_check(fld).max_deviation
    return fld.converged and dev < 5e-3, f"residual {fld.residual:.1e}, max exponent deviation {dev:.1e}"


VERIFY_SUITES: dict[str, Callable[[int], tuple[bool, str]]] = {
    "partitions": _suite_partitions,
    "mobius": _suite_mobius,
    "monodromy": _suite_monodromy,
    "transport": _suite_transport,
    "moduli": _suite_moduli,
    "wilson": _suite_wilson,
    "charges": _suite_charges,
    "dictionary": _suite_dictionary,
    "patch": _suite_patch,
    "pde": _suite_pde,
}
DEFAULT_SUITES = ("partitions", "mobius", "monodromy", "transport", "moduli", "wilson", "charges", "dictionary", "patch")


def task_verify(cfg: RunConfig, base: Path | None) -> TaskResult:
    names = list(cfg.parameters.get("suites", DEFAULT_SUITES))
    unknown = [n for n in names if n not in VERIFY_SUITES]
    if unknown:
        raise ConfigurationError(f"parameters.suites: unknown suite(s) {unknown}")
    rows = []
    for name in names:
        try:
            ok, detail = VERIFY_SUITES[name](cfg.seed)
        except MshgLabError as exc:
            ok, detail = False, f"error: {exc}"
        rows.append({"suite": name, "passed": bool(ok), "detail": detail})
    width = max(len(r["suite"]) for r in rows)
    lines = [f"{'suite'.ljust(width)}  result  detail"]
    lines += [f"{r['suite'].ljust(width)}  {'PASS' if r['passed'] else 'FAIL'}    {r['detail']}" for r in rows]
    ok = all(r["passed"] for r in rows)
    lines.append(f"{sum(r['passed'] for r in rows)}/{len(rows)} suites passed")
    return TaskResult({"suites": rows, "passed": ok}, "\n".join(lines), ok=ok)


HANDLERS: dict[str, Callable[[RunConfig, Path | None], TaskResult]] = {
    "count-partitions": task_count_partitions,
    "dictionary": task_dictionary,
    "enumerate": task_enumerate,
    "wilson": task_wilson,
    "charges": task_charges,
    "pde-solve": task_pde_solve,
    "pde-wilson": task_pde_wilson,
    "transport": task_transport,
    "verify": task_verify,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _new_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = SVG_SALT
    matplotlib.rcParams["svg.fonttype"] = "path"
    return plt


def _save_svg(plt, fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_scan(res: TaskResult, path: Path) -> None:
    plt = _new_figure()
    th = np.array([s.theta.real for s in res.scan])
    W = np.array([s.W for s in res.scan])
    order = np.argsort(th)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(th[order], np.log(np.abs(W[order])), "o", ms=3, label="log|W|")
    fit = res.fit
    if fit is not None:
        from .spectrum import charge_basis

        grid = np.linspace(fit.fit_window[0], fit.fit_window[1], 200)
        coef = np.concatenate([[fit.C], fit.q if fit.side == "+" else fit.q_bar])
        model = charge_basis(grid.astype(complex), len(coef) - 1, fit.side) @ coef
        ax.plot(grid, model.real, "-", lw=1, label="fitted asymptote (real part)")
    ax.set_xlabel("Re theta")
    ax.set_ylabel("log|W|")
    ax.legend()
    _save_svg(plt, fig, path)


def _plot_scatter(res: TaskResult, path: Path) -> None:
    from .rational_core import DEFAULT_FRAME

    plt = _new_figure()
    xs, L, expected = res.scatter
    fig, ax = plt.subplots(figsize=(5, 5))
    z = np.array(DEFAULT_FRAME)
    if xs:
        arr = np.array(xs)
        ax.plot(arr.real, arr.imag, "o", ms=4, label=f"x_a ({len(xs) // max(L, 1)} points, p_3({L}) = {expected})")
    else:
        ax.plot([], [], "o", label=f"p_3({L}) = {expected}")
    ax.plot(z.real, z.imag, "k*", ms=8, label="default frame z_i")
    ax.set_aspect("equal")
    ax.set_xlabel("Re x")
    ax.set_ylabel("Im x")
    ax.legend(fontsize=8)
    _save_svg(plt, fig, path)


def emit_report(record: RunRecord, fmt: str, out_dir: Path) -> list[Path]:
    """Write the report files of one format; raises FormatError if the task has none."""
    res = record.result
    if res is None:
        raise FormatError("record has no result to report")
    task = record.config.task
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "text":
        path = out_dir / "summary.txt"
        path.write_text(res.summary + "\n", encoding="utf-8")
        return [path]
    if fmt == "csv":
        if res.scan is None:
            raise FormatError(f"task {task!r} has no CSV output")
        from .spectrum import write_scan_csv

        path = out_dir / "scan.csv"
        write_scan_csv(res.scan, path)
        return [path]
    if fmt == "svg":
        if res.scan is not None:
            path = out_dir / "wilson.svg"
            _plot_scan(res, path)
            return [path]
        if res.scatter is not None:
            path = out_dir / "moduli.svg"
            _plot_scatter(res, path)
            return [path]
        raise FormatError(f"task {task!r} has no SVG output")
    raise FormatError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run(cfg: RunConfig, base: Path | None = None) -> RunRecord:
    """Execute one task; errors propagate to the caller after the record is written."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(cfg, __version__, "running")
    t0 = time.perf_counter()
    try:
        res = HANDLERS[cfg.task](cfg, base)
        rec.result = res
        paths = []
        for name, blob in sorted(res.files.items()):
            path = out / name
            path.write_bytes(blob)
            paths.append(path)
        result_path = out / "result.json"
        result_path.write_text(dump_json(res.data), encoding="utf-8")
        paths.append(result_path)
        for fmt in cfg.formats or res.formats:
            paths += emit_report(rec, fmt, out)
        rec.outputs = {p.name: digest(p) for p in paths}
        rec.status = "ok" if res.ok else "failed"
        if not res.ok:
            rec.message = "computation finished without meeting its acceptance condition"
    except (ConfigurationError, DomainError) as exc:
        rec.status, rec.message = "invalid", f"{cfg.task}: {exc}"
        raise
    except (MshgLabError, np.linalg.LinAlgError) as exc:
        rec.status, rec.message = "error", f"{cfg.task}: {exc}"
        raise
    finally:
        rec.seconds = time.perf_counter() - t0
        (out / RECORD_NAME).write_text(dump_json(rec.to_dict()), encoding="utf-8")
    return rec


def build_config(args: argparse.Namespace, env: dict) -> tuple[RunConfig, Path | None]:
    base = None
    d: dict = {"task": args.task}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"--config: file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"--config: not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigurationError("--config: must contain a JSON object")
        if d.get("task", args.task) != args.task:
            raise ConfigurationError(f"task: configuration is for {d['task']!r}, command is {args.task!r}")
        d["task"] = args.task
        base = path.parent
    params = dict(d.get("parameters", {}))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set: expected key=value, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    d["parameters"] = params
    # precedence: command line > environment > configuration file
    if ENV_OUTPUT in env:
        d["output_dir"] = env[ENV_OUTPUT]
    if ENV_JOBS in env:
        try:
            d["jobs"] = int(env[ENV_JOBS])
        except ValueError as exc:
            raise ConfigurationError(f"{ENV_JOBS}: not an integer") from exc
    if args.output is not None:
        d["output_dir"] = args.output
    if args.jobs is not None:
        d["jobs"] = args.jobs
    if args.seed is not None:
        d["seed"] = args.seed
    if args.format:
        d["formats"] = [f for f in args.format.split(",") if f]
    return RunConfig.from_dict(d), base


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mshglab", description="Fuchsian operators, Wilson loops and the vacuum MShG field.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes")
        sp.add_argument("--seed", type=int, help="random seed recorded in the run")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter (JSON value)")
        sp.add_argument("--format", help="comma-separated report formats: text, csv, svg")
        sp.add_argument("-q", "--quiet", action="store_true", help="do not print the summary")
    return parser


def main(argv: Sequence[str] | None = None, env: dict | None = None) -> int:
    args = make_parser().parse_args(argv)
    env = dict(os.environ) if env is None else env
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base = build_config(args, env)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rec = run(cfg, base)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {cfg.task}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, IntegrationError, FitError, TruncationError, MshgLabError, np.linalg.LinAlgError) as exc:
        print(f"error: {cfg.task}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    if not args.quiet and rec.result is not None:
        print(rec.result.summary)
    if rec.status != "ok":
        print(f"status: {rec.status}: {rec.message}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
