"""Piecewise analytic contours (segments and circular arcs) on the punctured plane.

Every segment is parametrised by t in [0, 1].  Logarithms log(z(t) - p) are
continued in closed form along each piece, so branch tracking along a path
never depends on step sizes.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def point(self, t):
        return self.start + (self.end - self.start) * t

    def deriv(self, t):
        return (self.end - self.start) + 0.0 * t

    def reversed(self) -> "Line":
        return Line(self.end, self.start)

    def frame(self, t: float, ps) -> tuple[complex, complex, list[complex]]:
        """Scalar fast path: z(t), z'(t) and log increments for each p in ``ps``."""
        s = self.start
        d = self.end - s
        z = s + d * t
        return z, d, [cmath.log((z - p) / (s - p)) for p in ps]

    def log_increment(self, t, p: complex):
        """log(z(t) - p) - log(z(0) - p), continuous in t."""
        d0 = self.start - p
        if d0 == 0:
            raise DomainError(f"segment starts at the singular point {p}")
        return np.log((self.point(t) - p) / d0)

    def distance(self, p: complex) -> float:
        d = self.end - self.start
        if d == 0:
            return abs(p - self.start)
        t = min(1.0, max(0.0, ((p - self.start) * d.conjugate()).real / abs(d) ** 2))
        return abs(self.start + t * d - p)

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def to_dict(self) -> dict:
        return {"kind": "line", "start": [self.start.real, self.start.imag], "end": [self.end.real, self.end.imag]}


@dataclass(frozen=True)
class Arc:
    """Circular arc z = center + radius*exp(i*phi), phi from theta0 to theta1."""

    center: complex
    radius: float
    theta0: float
    theta1: float

    def _phi(self, t):
        return self.theta0 + (self.theta1 - self.theta0) * t

    def point(self, t):
        return self.center + self.radius * np.exp(1j * self._phi(t))

    def deriv(self, t):
        return 1j * (self.theta1 - self.theta0) * self.radius * np.exp(1j * self._phi(t))

    @property
    def start(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.theta0)

    @property
    def end(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.theta1)

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.theta1, self.theta0)

    def frame(self, t: float, ps) -> tuple[complex, complex, list[complex]]:
        dth = self.theta1 - self.theta0
        phi = self.theta0 + dth * t
        e = cmath.exp(1j * phi)
        e0 = cmath.exp(1j * self.theta0)
        r = self.radius
        z = self.center + r * e
        incs = []
        for p in ps:
            q = self.center - p
            if abs(q) > r:
                incs.append(cmath.log((1.0 + (r / q) * e) / (1.0 + (r / q) * e0)))
            else:
                incs.append(1j * (phi - self.theta0) + cmath.log((1.0 + (q / r) / e) / (1.0 + (q / r) / e0)))
        return z, 1j * dth * r * e, incs

    def log_increment(self, t, p: complex):
        q = self.center - p
        r = self.radius
        phi = self._phi(t)
        if abs(q) > r:
            # z - p = q (1 + r e^{i phi}/q) with |r/q| < 1
            f = lambda ph: np.log(1.0 + (r / q) * np.exp(1j * ph))  # noqa: E731
            return f(phi) - f(self.theta0)
        if abs(q) < r:
            # z - p = r e^{i phi} (1 + q e^{-i phi}/r) with |q/r| < 1
            g = lambda ph: np.log(1.0 + (q / r) * np.exp(-1j * ph))  # noqa: E731
            return 1j * (phi - self.theta0) + g(phi) - g(self.theta0)
        raise DomainError(f"arc passes through the singular point {p}")

    def distance(self, p: complex) -> float:
        q = p - self.center
        if q == 0:
            return self.radius
        ang = cmath.phase(q)
        lo, hi = sorted((self.theta0, self.theta1))
        if hi - lo >= TWO_PI:
            return abs(abs(q) - self.radius)
        # is the direction of q inside the swept angular range?
        k = math.ceil((lo - ang) / TWO_PI)
        if ang + k * TWO_PI <= hi:
            return abs(abs(q) - self.radius)
        return min(abs(p - self.start), abs(p - self.end))

    @property
    def length(self) -> float:
        return abs(self.theta1 - self.theta0) * self.radius

    def to_dict(self) -> dict:
        return {
            "kind": "arc",
            "center": [self.center.real, self.center.imag],
            "radius": self.radius,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }


Segment = Union[Line, Arc]


def segment_from_dict(d: dict) -> Segment:
    if d["kind"] == "line":
        return Line(complex(*d["start"]), complex(*d["end"]))
    if d["kind"] == "arc":
        return Arc(complex(*d["center"]), float(d["radius"]), float(d["theta0"]), float(d["theta1"]))
    raise ConfigurationError(f"unknown segment kind {d['kind']!r}")


@dataclass(frozen=True)
class PathSpec:
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        segs = tuple(self.segments)
        if not segs:
            raise ConfigurationError("a path needs at least one segment")
        for k in range(1, len(segs)):
            gap = abs(segs[k].start - segs[k - 1].end)
            if gap > 1e-12 * max(1.0, abs(segs[k].start)):
                raise ConfigurationError(f"segments {k - 1} and {k} are not contiguous (gap {gap:.2e})")
        object.__setattr__(self, "segments", segs)

    @property
    def base(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    @property
    def loop(self) -> bool:
        return abs(self.end - self.base) <= 1e-12 * max(1.0, abs(self.base))

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> "PathSpec":
        return PathSpec(tuple(s.reversed() for s in reversed(self.segments)))

    def then(self, other: "PathSpec") -> "PathSpec":
        """Concatenation: first ``self``, then ``other``."""
        return PathSpec(self.segments + other.segments)

    def __add__(self, other: "PathSpec") -> "PathSpec":
        return self.then(other)

    def log_increment(self, p: complex) -> complex:
        total = 0j
        for s in self.segments:
            total += complex(s.log_increment(1.0, p))
        return total

    def winding_number(self, p: complex) -> float:
        """Net number of turns around ``p`` (an integer for closed paths)."""
        return self.log_increment(p).imag / TWO_PI

    def min_distance(self, p: complex) -> float:
        return min(s.distance(p) for s in self.segments)

    def sample(self, per_segment: int = 16) -> np.ndarray:
        pts = [np.atleast_1d(s.point(np.linspace(0.0, 1.0, per_segment))) for s in self.segments]
        return np.concatenate(pts)

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "PathSpec":
        return cls(tuple(segment_from_dict(s) for s in d["segments"]))


def polyline(points: Sequence[complex]) -> PathSpec:
    pts = [complex(p) for p in points]
    return PathSpec(tuple(Line(pts[k], pts[k + 1]) for k in range(len(pts) - 1)))


def circle_loop(center: complex, radius: float, base: complex, via: Sequence[complex] = (), turns: int = 1) -> PathSpec:
    """Base-anchored loop: base -> (via) -> circle, ``turns`` times around (ccw if > 0), back."""
    if abs(base - center) <= radius:
        raise ConfigurationError("loop base must lie outside the circle")
    if turns == 0:
        raise ConfigurationError("turns must be non-zero")
    approach = list(via)[-1] if via else base
    if abs(approach - center) <= radius:
        raise ConfigurationError("last waypoint lies inside the circle")
    direction = (approach - center) / abs(approach - center)
    entry = center + radius * direction
    theta = cmath.phase(direction)
    leg = polyline([base, *via, entry])
    arc = PathSpec((Arc(center, radius, theta, theta + TWO_PI * turns),))
    return leg + arc + leg.reversed()


def commutator(p: PathSpec, q: PathSpec) -> PathSpec:
    """The loop p q p^{-1} q^{-1} (traversed left to right)."""
    if not (p.loop and q.loop) or abs(p.base - q.base) > 1e-12:
        raise ConfigurationError("commutator needs two loops with a common base point")
    return p + q + p.reversed() + q.reversed()
