"""Marked-surface configurations, divisor bookkeeping, admissibility and the
Gauss-Bonnet area budget.

A configuration is a genus plus an ordered list of marked points carrying
cone parameters theta (exact rationals, theta >= 0, theta != 1).  theta > 0
prescribes a cone of total angle 2*pi*theta, theta = 0 a cusp.  A hyperbolic
metric with those singularities exists iff

    chi + sum(theta_i - 1) < 0,

and then its area is forced to be -2*pi*(chi + sum(theta_i - 1)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .exact import (
    INFINITY,
    MobiusMap,
    Point,
    QQi,
    format_rational,
    is_infinity,
    normalizing_map,
    parse_rational,
)


class InadmissibleError(ValueError):
    """Raised when an operation requires the Gauss-Bonnet inequality to hold."""


@dataclass(frozen=True)
class ConeParameter:
    """Cone parameter theta >= 0, theta != 1, with its floor/frac split."""

    value: Fraction

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"theta must be >= 0, got {self.value}")
        if self.value == 1:
            raise ValueError("theta = 1 is excluded (a smooth point, not a singularity)")

    @property
    def floor(self) -> int:
        return self.value.numerator // self.value.denominator

    @property
    def frac(self) -> Fraction:
        return self.value - self.floor

    @property
    def is_cusp(self) -> bool:
        return self.value == 0

    def __repr__(self) -> str:
        return f"theta({format_rational(self.value)})"


@dataclass(frozen=True)
class MarkedPoint:
    position: Point
    theta: ConeParameter


@dataclass(frozen=True)
class Configuration:
    """A genus-g surface with m >= 1 marked points, at most one at infinity."""

    genus: int
    points: tuple[MarkedPoint, ...]

    def __post_init__(self):
        if self.genus < 0:
            raise ValueError("genus must be non-negative")
        if not self.points:
            raise ValueError("need at least one marked point")
        seen = [p.position for p in self.points]
        for i in range(len(seen)):
            for j in range(i + 1, len(seen)):
                if seen[i] == seen[j]:
                    raise ValueError(f"marked points {i} and {j} coincide")
        if sum(1 for p in self.points if is_infinity(p.position)) > 1:
            raise ValueError("at most one marked point may sit at infinity")

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def thetas(self) -> tuple[Fraction, ...]:
        return tuple(p.theta.value for p in self.points)

    def euler_characteristic(self) -> int:
        return euler_char(self.genus)

    def infinity_index(self) -> int | None:
        for i, p in enumerate(self.points):
            if is_infinity(p.position):
                return i
        return None


def configuration(genus: int, entries: Iterable[tuple]) -> Configuration:
    """Convenience builder: entries are (position, theta) pairs.

    Positions: "inf"/INFINITY, a complex number with integral parts, a
    (re, im) pair of rational strings/numbers, or a bare rational.
    """
    pts = []
    for pos, th in entries:
        pts.append(MarkedPoint(_parse_position(pos), ConeParameter(parse_rational(th))))
    return Configuration(genus, tuple(pts))


def _parse_position(pos) -> Point:
    if pos is INFINITY or (isinstance(pos, str) and pos.strip().lower() in ("inf", "infinity", "oo")):
        return INFINITY
    if isinstance(pos, QQi):
        return pos
    if isinstance(pos, complex):
        return QQi.of(pos.real, pos.imag)
    if isinstance(pos, (list, tuple)):
        if len(pos) != 2:
            raise ValueError(f"position pair must have two entries, got {pos!r}")
        return QQi.of(parse_rational(pos[0]), parse_rational(pos[1]))
    return QQi.of(parse_rational(pos))


# ---------------------------------------------------------------------------
# divisors

@dataclass(frozen=True)
class Divisor:
    """Formal sum of marked points, coefficients indexed by point position
    in the configuration.  Integer divisors carry integral Fractions; the
    real divisor D-hat carries general rationals."""

    coefficients: tuple[Fraction, ...]

    @staticmethod
    def of(coeffs: Iterable) -> "Divisor":
        return Divisor(tuple(Fraction(c) for c in coeffs))

    @property
    def degree(self) -> Fraction:
        return sum(self.coefficients, Fraction(0))

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.coefficients) if c != 0)

    def __add__(self, other: "Divisor") -> "Divisor":
        return Divisor(tuple(a + b for a, b in zip(self.coefficients, other.coefficients, strict=True)))

    def __sub__(self, other: "Divisor") -> "Divisor":
        return Divisor(tuple(a - b for a, b in zip(self.coefficients, other.coefficients, strict=True)))

    def __rmul__(self, k) -> "Divisor":
        k = Fraction(k)
        return Divisor(tuple(k * c for c in self.coefficients))

    def __getitem__(self, i: int) -> Fraction:
        return self.coefficients[i]


@dataclass(frozen=True)
class DivisorSet:
    """All the standard divisors attached to a configuration.

    d       -- reduced divisor of all marked points
    d_tilde -- sum of [theta_i] p_i
    d_hat   -- real divisor sum of (theta_i - 1) p_i
    d0      -- cusp points (theta = 0)
    d1..d4  -- cone points split by frac(theta): = 0, (0,1/2), = 1/2, (1/2,1)
    """

    d: Divisor
    d_tilde: Divisor
    d_hat: Divisor
    d0: Divisor
    d1: Divisor
    d2: Divisor
    d3: Divisor
    d4: Divisor


def euler_char(genus: int) -> int:
    if genus < 0:
        raise ValueError("genus must be non-negative")
    return 2 - 2 * genus


def admissible(cfg: Configuration) -> tuple[bool, Fraction]:
    """Gauss-Bonnet test: returns (chi + sum(theta-1) < 0, exact margin)."""
    margin = Fraction(cfg.euler_characteristic()) + sum(
        (t - 1 for t in cfg.thetas), Fraction(0)
    )
    return margin < 0, margin


def divisors(cfg: Configuration) -> DivisorSet:
    m = cfg.m
    zero = [Fraction(0)] * m
    d = [Fraction(1)] * m
    d_tilde, d_hat = list(zero), list(zero)
    parts = {k: list(zero) for k in range(5)}
    for i, p in enumerate(cfg.points):
        th = p.theta
        d_tilde[i] = Fraction(th.floor)
        d_hat[i] = th.value - 1
        if th.is_cusp:
            parts[0][i] = Fraction(1)
        elif th.frac == 0:
            parts[1][i] = Fraction(1)
        elif th.frac < Fraction(1, 2):
            parts[2][i] = Fraction(1)
        elif th.frac == Fraction(1, 2):
            parts[3][i] = Fraction(1)
        else:
            parts[4][i] = Fraction(1)
    return DivisorSet(
        d=Divisor.of(d),
        d_tilde=Divisor.of(d_tilde),
        d_hat=Divisor.of(d_hat),
        d0=Divisor.of(parts[0]),
        d1=Divisor.of(parts[1]),
        d2=Divisor.of(parts[2]),
        d3=Divisor.of(parts[3]),
        d4=Divisor.of(parts[4]),
    )


def gauss_bonnet_area(cfg: Configuration) -> Fraction:
    """Forced total area as an exact multiple of pi: returns q with area = q*pi."""
    ok, margin = admissible(cfg)
    if not ok:
        raise InadmissibleError(
            f"no hyperbolic metric exists: chi + sum(theta-1) = {format_rational(margin)} >= 0"
        )
    return -2 * margin


def mobius_normalize(cfg: Configuration) -> tuple[Configuration, MobiusMap]:
    """Move (p1, p2, p_m) to (0, 1, infinity) on a genus-0 configuration.

    Returns the transformed configuration and the exact map used.  Thetas are
    untouched; every position stays an exact Gaussian rational.
    """
    if cfg.genus != 0:
        raise ValueError("Moebius normalisation applies to genus 0 only")
    if cfg.m < 3:
        raise ValueError("insufficient points: need m >= 3 to normalise")
    T = normalizing_map(cfg.points[0].position, cfg.points[1].position, cfg.points[-1].position)
    moved = tuple(MarkedPoint(T(p.position), p.theta) for p in cfg.points)
    return Configuration(cfg.genus, moved), T


# ---------------------------------------------------------------------------
# configuration file format (JSON)
#
#   {"genus": 0,
#    "points": [{"position": [re, im] | "inf", "theta": "p/q"}, ...]}
#
# re / im / theta accept rational strings "p/q", decimal strings, or ints.

def load_configuration(text: str) -> Configuration:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValueError("config root must be an object")
    if "genus" not in doc:
        raise ValueError("config field missing: genus")
    if "points" not in doc or not isinstance(doc["points"], list):
        raise ValueError("config field missing or malformed: points")
    genus = doc["genus"]
    if not isinstance(genus, int) or genus < 0:
        raise ValueError(f"config field genus must be a non-negative integer, got {genus!r}")
    entries = []
    for k, item in enumerate(doc["points"]):
        if not isinstance(item, dict) or "position" not in item or "theta" not in item:
            raise ValueError(f"points[{k}] must carry fields 'position' and 'theta'")
        try:
            pos = _parse_position(item["position"])
        except ValueError as e:
            raise ValueError(f"points[{k}].position: {e}") from None
        try:
            th = ConeParameter(parse_rational(item["theta"]))
        except ValueError as e:
            raise ValueError(f"points[{k}].theta: {e}") from None
        entries.append(MarkedPoint(pos, th))
    return Configuration(genus, tuple(entries))


def load_configuration_file(path) -> Configuration:
    with open(path, "r", encoding="utf-8") as fh:
        return load_configuration(fh.read())


def dump_configuration(cfg: Configuration) -> str:
    points = []
    for p in cfg.points:
        if is_infinity(p.position):
            pos = "inf"
        else:
            pos = [format_rational(p.position.re), format_rational(p.position.im)]
        points.append({"position": pos, "theta": format_rational(p.theta.value)})
    return json.dumps({"genus": cfg.genus, "points": points}, indent=2)
