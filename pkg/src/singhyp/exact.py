"""Exact arithmetic primitives: rationals, Gaussian rationals, points on the
extended plane, and Moebius maps with exact coefficients.

Everything downstream of the PDE solver is float; everything upstream
(admissibility, divisors, weights, degrees, slopes) is exact and lives on the
types defined here.  Positions are Gaussian rationals (rational real and
imaginary parts), which are closed under the Moebius normalisations we
generate, so no precision flag is ever needed in practice.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction


def parse_rational(text: str | int | float | Fraction) -> Fraction:
    """Parse "p/q", decimal strings, or numbers into an exact Fraction.

    Floats are rejected unless they are integral: a decimal written as a
    float literal has already lost exactness upstream.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        if text != int(text):
            raise ValueError(
                f"refusing inexact float {text!r}; write it as a string like '1/4' or '0.25'"
            )
        return Fraction(int(text))
    s = str(text).strip()
    if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)(/\d+)?", s):
        raise ValueError(f"not a rational: {text!r}")
    return Fraction(s)


def format_rational(x: Fraction) -> str:
    """Render a Fraction as "p/q", or plain "p" for integers."""
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class QQi:
    """A Gaussian rational re + im*i with exact components."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @staticmethod
    def of(re, im=0) -> "QQi":
        return QQi(parse_rational(re), parse_rational(im))

    def __add__(self, other: "QQi") -> "QQi":
        return QQi(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "QQi") -> "QQi":
        return QQi(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "QQi":
        return QQi(-self.re, -self.im)

    def __mul__(self, other: "QQi") -> "QQi":
        return QQi(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def __truediv__(self, other: "QQi") -> "QQi":
        n2 = other.re * other.re + other.im * other.im
        if n2 == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return QQi(
            (self.re * other.re + self.im * other.im) / n2,
            (self.im * other.re - self.re * other.im) / n2,
        )

    def conjugate(self) -> "QQi":
        return QQi(self.re, -self.im)

    def norm2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def to_complex(self) -> complex:
        return complex(self.re, self.im)

    def __repr__(self) -> str:
        if self.im == 0:
            return format_rational(self.re)
        return f"({format_rational(self.re)}{'+' if self.im >= 0 else ''}{format_rational(self.im)}i)"


QQI_ZERO = QQi()
QQI_ONE = QQi(Fraction(1))


class _Infinity:
    """The point at infinity on the extended plane (a singleton)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "inf"

    def __eq__(self, other) -> bool:
        return isinstance(other, _Infinity)

    def __hash__(self) -> int:
        return hash("singhyp-infinity")


INFINITY = _Infinity()

#: A point of the extended complex plane with exact coordinates.
Point = QQi | _Infinity


def is_infinity(p: Point) -> bool:
    return isinstance(p, _Infinity)


def point_to_complex(p: Point) -> complex:
    if is_infinity(p):
        raise ValueError("cannot coerce the point at infinity to a complex number")
    return p.to_complex()


@dataclass(frozen=True)
class MobiusMap:
    """z -> (a z + b)/(c z + d) with exact Gaussian-rational coefficients."""

    a: QQi
    b: QQi
    c: QQi
    d: QQi

    def __post_init__(self):
        if (self.a * self.d - self.b * self.c).is_zero():
            raise ValueError("degenerate Moebius map (ad - bc = 0)")

    def __call__(self, p: Point) -> Point:
        if is_infinity(p):
            if self.c.is_zero():
                return INFINITY
            return self.a / self.c
        den = self.c * p + self.d
        if den.is_zero():
            return INFINITY
        return (self.a * p + self.b) / den

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    def determinant(self) -> QQi:
        return self.a * self.d - self.b * self.c

    def is_identity(self) -> bool:
        return self.b.is_zero() and self.c.is_zero() and self.a == self.d


IDENTITY_MAP = MobiusMap(QQI_ONE, QQI_ZERO, QQI_ZERO, QQI_ONE)


def normalizing_map(p1: Point, p2: Point, p3: Point) -> MobiusMap:
    """The unique Moebius map sending p1 -> 0, p2 -> 1, p3 -> infinity."""
    if len({repr(p1), repr(p2), repr(p3)}) != 3:
        raise ValueError("normalizing map needs three distinct points")
    one, zero = QQI_ONE, QQI_ZERO
    if is_infinity(p1):
        # z -> (p2 - p3)/(z - p3)
        return MobiusMap(zero, p2 - p3, one, -p3)
    if is_infinity(p2):
        # z -> (z - p1)/(z - p3)
        return MobiusMap(one, -p1, one, -p3)
    if is_infinity(p3):
        # z -> (z - p1)/(p2 - p1)
        return MobiusMap(one, -p1, zero, p2 - p1)
    # cross ratio (z - p1)(p2 - p3) / ((z - p3)(p2 - p1))
    u = p2 - p3
    v = p2 - p1
    return MobiusMap(u, -p1 * u, v, -p3 * v)
