"""The rank-2 parabolic Higgs bundle attached to a configuration: weights,
filtration jumps, parabolic degrees, slope stability, and the degrees and
dimensions of the quadratic-differential twist spaces used by the
deformation machinery.

The underlying bundle is K^{1/2} + (K^{-1/2} twisted by Dt - D), where D is
the reduced divisor of marked points and Dt the floor-part divisor.  The
nilpotent Higgs field phi has lower-left entry (1/2) 1_Dt; deformations add
an upper-right quadratic differential.  Everything here is exact rational
arithmetic; no floats.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .surfaces import (
    ConeParameter,
    Configuration,
    Divisor,
    DivisorSet,
    admissible,
    divisors,
)


class FlagKind(enum.Enum):
    FULL = "full"
    TRIVIAL = "trivial"


class Verdict(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    STRICTLY_SEMISTABLE = "strictly-semistable"


class TwistVariant(enum.Enum):
    """Twist divisors T in K^2 (x) O(T) appearing in the deformation theory."""

    D_MINUS_DT = "D-Dt"            # ambient space of deformations
    D = "D"                        # small-angle corollary space
    VANISHING = "D-2Dt-D3-D4"      # norm of rho(a) vanishes at all punctures
    BOUNDED = "D-2Dt+D1-D4"        # norm of rho(a) stays bounded

    @staticmethod
    def parse(text: str) -> "TwistVariant":
        for v in TwistVariant:
            if v.value == text:
                return v
        raise ValueError(
            f"unknown twist variant {text!r}; choose from "
            + ", ".join(v.value for v in TwistVariant)
        )


@dataclass(frozen=True)
class ParabolicPoint:
    flag: FlagKind
    weights: tuple[Fraction, ...]   # (w1, w2) for full flags, (1/2,) trivial


@dataclass(frozen=True)
class ParabolicStructure:
    points: tuple[ParabolicPoint, ...]


@dataclass(frozen=True)
class HiggsSpec:
    """phi0 is the nilpotent field; 'deformed' carries a quadratic differential."""

    kind: str = "phi0"              # "phi0" | "deformed"
    direction: object | None = None  # a QuadraticDifferential for "deformed"

    def __post_init__(self):
        if self.kind not in ("phi0", "deformed"):
            raise ValueError(f"unknown Higgs kind {self.kind!r}")
        if self.kind == "deformed" and self.direction is None:
            raise ValueError("deformed Higgs field needs a direction")


PHI0 = HiggsSpec("phi0")


@dataclass(frozen=True)
class StabilityReport:
    deg_e0: int
    parabolic_deg: Fraction
    sub_parabolic_deg: Fraction
    slope: Fraction
    sub_slope: Fraction
    verdict: Verdict
    certificate: str               # "subbundle-slope" | "scaling-argument"
    margin: Fraction               # -chi + m - sum(theta); stable iff > 0


def filtration_jumps(theta: ConeParameter) -> tuple[Fraction, Fraction]:
    """Jump locations of the two filtration steps; both collapse to 1/2 at
    integer theta."""
    f = theta.frac
    return (Fraction(1, 2) * (1 - f), Fraction(1, 2) * (1 + f))


def build_parabolic(cfg: Configuration) -> ParabolicStructure:
    ok, margin = admissible(cfg)
    if not ok:
        from .surfaces import InadmissibleError

        raise InadmissibleError(
            f"configuration is inadmissible (margin {margin}); no stable structure"
        )
    pts = []
    for p in cfg.points:
        if p.theta.frac == 0:
            pts.append(ParabolicPoint(FlagKind.TRIVIAL, (Fraction(1, 2),)))
        else:
            pts.append(ParabolicPoint(FlagKind.FULL, filtration_jumps(p.theta)))
    return ParabolicStructure(tuple(pts))


def parabolic_degrees(cfg: Configuration) -> tuple[int, Fraction, Fraction]:
    """(deg E0, parabolic degree of E, parabolic degree of the invariant
    subbundle), all exact.

    deg E0 = sum[theta] - m splits as deg K^{1/2} = -chi/2 plus
    deg K^{-1/2}(Dt - D) = chi/2 + sum[theta] - m.  Each point adds total
    weight 1, so the parabolic degree telescopes to sum[theta].  The unique
    phi-invariant subbundle is the second summand with the upper weights.
    """
    chi = Fraction(cfg.euler_characteristic())
    m = cfg.m
    floors = sum(p.theta.floor for p in cfg.points)
    fracs = sum((p.theta.frac for p in cfg.points), Fraction(0))
    deg_e0 = floors - m
    par_deg = Fraction(floors)
    sub_deg = chi / 2 + floors - Fraction(m, 2) + fracs / 2
    return deg_e0, par_deg, sub_deg


def stability(cfg: Configuration, higgs: HiggsSpec = PHI0) -> StabilityReport:
    """Slope-stability of (E0, phi) or its deformation (E0, Phi_a).

    For phi0 the unique invariant subbundle is known in closed form, so the
    verdict is the sign of -chi + m - sum(theta).  Deformed fields are stable
    whenever phi0 is: conjugating by diag(eps, 1) rescales the deformation
    to an arbitrarily small one, and stability is open.
    """
    deg_e0, par_deg, sub_deg = parabolic_degrees(cfg)
    slope = par_deg / 2
    margin = -Fraction(cfg.euler_characteristic()) + cfg.m - sum(
        (t for t in cfg.thetas), Fraction(0)
    )
    # slope(sub) < slope(E)  <=>  margin > 0; margin 0 is the semistable wall
    if margin > 0:
        verdict = Verdict.STABLE
    elif margin == 0:
        verdict = Verdict.STRICTLY_SEMISTABLE
    else:
        verdict = Verdict.UNSTABLE
    certificate = "subbundle-slope"
    if higgs.kind == "deformed":
        if verdict is not Verdict.STABLE:
            raise ValueError(
                "the scaling argument needs a stable undeformed bundle; "
                f"this configuration is {verdict.value}"
            )
        certificate = "scaling-argument"
    return StabilityReport(
        deg_e0=deg_e0,
        parabolic_deg=par_deg,
        sub_parabolic_deg=sub_deg,
        slope=slope,
        sub_slope=sub_deg,
        verdict=verdict,
        certificate=certificate,
        margin=margin,
    )


def twist_divisor(dset: DivisorSet, variant: TwistVariant) -> Divisor:
    if variant is TwistVariant.D_MINUS_DT:
        return dset.d - dset.d_tilde
    if variant is TwistVariant.D:
        return dset.d
    if variant is TwistVariant.VANISHING:
        return dset.d - 2 * dset.d_tilde - dset.d3 - dset.d4
    if variant is TwistVariant.BOUNDED:
        return dset.d - 2 * dset.d_tilde + dset.d1 - dset.d4
    raise ValueError(f"unknown variant {variant!r}")


def pole_bounds(cfg: Configuration, variant: TwistVariant) -> tuple[int, ...]:
    """Per-point pole-order bounds for sections of K^2 (x) O(T); negative
    entries force zeros of that order."""
    dset = divisors(cfg)
    tw = twist_divisor(dset, variant)
    out = []
    for c in tw.coefficients:
        if c.denominator != 1:
            raise ValueError("twist divisor must be integral")
        out.append(int(c))
    return tuple(out)


def quad_diff_space_degree(cfg: Configuration, variant: TwistVariant) -> int:
    """deg K^2 (x) O(T) = 2(2g - 2) + deg T, exact."""
    tw = twist_divisor(divisors(cfg), variant)
    deg = 2 * (2 * cfg.genus - 2) + tw.degree
    if deg.denominator != 1:
        raise ValueError("twist degree must be integral")
    return int(deg)


def quad_diff_space_dim(cfg: Configuration, variant: TwistVariant) -> tuple[int, bool]:
    """(dimension, exact?) of H^0(K^2 (x) O(T)) by Riemann-Roch.

    Genus 0 is exact: max(0, deg + 1).  For genus >= 1 the value is exact
    when deg > 2g - 2, otherwise only the lower bound max(0, deg - g + 1)
    is returned, flagged inexact.
    """
    deg = quad_diff_space_degree(cfg, variant)
    g = cfg.genus
    if g == 0:
        return max(0, deg + 1), True
    if deg > 2 * g - 2:
        return deg - g + 1, True
    return max(0, deg - g + 1), False


def norm_exponent(theta: ConeParameter, pole_order: int) -> tuple[Fraction, str]:
    """Decay exponent of ||rho(a)|| at a puncture where the quadratic
    differential a has pole order `pole_order` (chart-invariant).

    Cone points: ||rho(a)|| ~ r^e with e = 2 - 2*theta - p; the paper's
    frame coefficient f relates to a by the frame factor z^{1-[theta]},
    which converts its exponent 1 - [theta] - 2{theta} to this form.
    Cusps: ||rho(a)|| ~ r^{2-p} |log r|^2, reported as class "cusp-log";
    p <= 1 guarantees decay.
    """
    p = pole_order
    if theta.is_cusp:
        return Fraction(2 - p), "cusp-log"
    e = 2 - 2 * theta.value - p
    if e > 0:
        cls = "vanishing"
    elif e == 0:
        cls = "bounded"
    else:
        cls = "unbounded"
    return e, cls
