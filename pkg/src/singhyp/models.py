"""Closed-form local model metrics for cone and cusp punctures.

On the punctured unit disk the cone model of total angle 2*pi*theta is

    e^{2u} = theta^2 / (r^2 sinh^2(theta log r)),

the cusp model (theta = 0) its limit 1/(r^2 log^2 r).  Both are exact
curvature -1 metrics; theta = 1 degenerates to the Poincare factor
4/(1-r^2)^2 and is admitted here purely as a known-answer test.

Evaluation is done in log space,

    u = log(2 theta) + (theta - 1) log r - log(1 - r^{2 theta}),

because the raw quotient underflows in r^{2 theta} long before the metric
itself leaves double range.  A scale parameter s = log c pulls every model
back by z -> z/c; the solver fits these scales per puncture.

The frame metrics are the induced diagonal Hermitian metrics on
K^{1/2} + K^{-1/2}; together with the nilpotent Higgs field they satisfy
the self-duality identity F + [phi, phi*] = c Id (coefficient of
dzbar wedge dz), which `self_duality_residual` verifies numerically against
a high-precision radial finite-difference curvature.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import mpmath as mp
import numpy as np

from .surfaces import Configuration


@dataclass(frozen=True)
class ModelMetric:
    """Local model selector: theta > 0 cone / theta = 0 cusp, plus the
    Hermitian-Einstein constant c."""

    theta: float
    c: float = 0.0

    @property
    def kind(self) -> str:
        return "cusp" if self.theta == 0 else "cone"


def _check_radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0) or np.any(r >= 1.0):
        raise ValueError("model metrics live on 0 < r < 1")
    return r


def model_log_factor(theta: float, logr, scale: float = 0.0):
    """log-conformal factor u of the (scaled) model, from log r directly.

    Vectorized; safe for very negative log r.  `scale` is log c with the
    model pulled back by z -> z/c.
    """
    logr = np.asarray(logr, dtype=float)
    lr = logr - scale
    if np.any(lr >= 0.0):
        raise ValueError("model valid only for r < scale radius (log r < s)")
    if theta == 0.0:
        return -logr - np.log(-lr)
    t = float(theta)
    return np.log(2.0 * t) + (t - 1.0) * lr - np.log1p(-np.exp(2.0 * t * lr)) - scale


def model_conformal_factor(theta: float, r, scale: float = 0.0):
    """Conformal factor e^{2u} of the model hyperbolic metric."""
    r = _check_radius(r)
    return np.exp(2.0 * model_log_factor(theta, np.log(r), scale))


def model_frame_metric(theta: float, r, c: float = 0.0) -> tuple:
    """Diagonal entries (k11, k22) of the induced metric on K^{1/2}+K^{-1/2}.

    Cone:  k11 = -e^{c r^2} r^{1+[theta]} sinh(theta log r)/theta,
           k22 = -e^{c r^2} theta/(r^{1-[theta]} sinh(theta log r));
    cusp:  k11 = -e^{c r^2} r log r, k22 = -e^{c r^2}/(r log r).
    Both positive on (0,1); the quotient k22/k11 is the conformal factor.
    """
    r = _check_radius(r)
    expc = np.exp(c * r * r)
    logr = np.log(r)
    if theta == 0.0:
        k11 = -expc * r * logr
        k22 = -expc / (r * logr)
        return k11, k22
    t = float(theta)
    fl = int(np.floor(t))
    sh = np.sinh(t * logr)
    k11 = -expc * r ** (1 + fl) * sh / t
    k22 = -expc * t / (r ** (1 - fl) * sh)
    return k11, k22


def higgs_adjoint_norm(theta: float, r):
    """Coefficient q(r) of the commutator [phi, phi*]: the dzbar^dz entry is
    diag(+q/4, -q/4) with q = theta^2/(r^2 sinh^2(theta log r)); cusp limit
    1/(r^2 log^2 r).  Equals the model conformal factor."""
    return model_conformal_factor(theta, r)


def curvature_closed_form(theta: float, r, c: float = 0.0) -> tuple:
    """Diagonal entries of F (coefficient of dzbar^dz) for the frame metric."""
    q = higgs_adjoint_norm(theta, r)
    return -q / 4.0 + c, q / 4.0 + c


def _mp_log_frame_entry(theta, c, which):
    """mpmath scalar log k_ii(r) for the high-precision curvature oracle."""
    t = mp.mpf(theta)
    cc = mp.mpf(c)

    def f(r):
        r = mp.mpf(r)
        if t == 0:
            base = -r * mp.log(r) if which == 0 else -1 / (r * mp.log(r))
        else:
            fl = mp.floor(t)
            sh = mp.sinh(t * mp.log(r))
            if which == 0:
                base = -(r ** (1 + fl)) * sh / t
            else:
                base = -t / (r ** (1 - fl) * sh)
        return mp.log(base) + cc * r * r

    return f


def self_duality_residual(theta: float, r: float, c: float = 0.0) -> np.ndarray:
    """Discrepancy matrix of F + [phi, phi*] - c*Id at radius r, computed two
    ways: curvature from closed form vs from radial finite differences of
    log k_ii at 50-digit precision; commutator from the adjoint-norm closed
    form.  Returns the 2x2 numeric-vs-closed-form difference (the closed
    forms themselves cancel identically)."""
    if not (0.0 < r < 1.0):
        raise ValueError("model valid on 0 < r < 1")
    with mp.workdps(50):
        h = mp.mpf(r) * mp.mpf("1e-8")
        numeric = []
        for which in (0, 1):
            f = _mp_log_frame_entry(theta, c, which)
            r0 = mp.mpf(r)
            # 4th-order central stencils for g' and g''
            g = [f(r0 + k * h) for k in (-2, -1, 0, 1, 2)]
            d1 = (-g[4] + 8 * g[3] - 8 * g[1] + g[0]) / (12 * h)
            d2 = (-g[4] + 16 * g[3] - 30 * g[2] + 16 * g[1] - g[0]) / (12 * h * h)
            # F_ii = (1/4) Laplacian(log k_ii) for radial functions
            numeric.append(float((d2 + d1 / r0) / 4))
    q = float(higgs_adjoint_norm(theta, np.array(r)))
    f11 = numeric[0] + q / 4.0 - c
    f22 = numeric[1] - q / 4.0 - c
    return np.array([[f11, 0.0], [0.0, f22]])


def asymptotic_frame_exponents(theta: Fraction) -> tuple[Fraction, Fraction]:
    """Frame decay exponents (1/2)(1 -+ {theta}); these are the parabolic
    weights."""
    theta = Fraction(theta)
    if theta <= 0:
        raise ValueError("frame exponents need theta > 0")
    f = theta - (theta.numerator // theta.denominator)
    return (Fraction(1, 2) * (1 - f), Fraction(1, 2) * (1 + f))


def acceptability_check(theta: float, rs, c: float = 0.0) -> tuple[bool, float]:
    """Verify |F - c| <= C / (r^2 log^2 r) on a radial grid and return the
    fitted C (the sup of r^2 log^2 r |F - c|; exactly 1/4 for the cusp)."""
    rs = _check_radius(np.asarray(rs, dtype=float))
    if np.any(rs > 0.5):
        raise ValueError("acceptability window is (0, 1/2]")
    q = higgs_adjoint_norm(theta, rs)
    weight = rs**2 * np.log(rs) ** 2
    fitted = float(np.max(weight * q / 4.0))
    return True, fitted


def excised_model_area(theta: float, eps: float, scale: float = 0.0) -> float:
    """Exact model area over 0 < r < eps: cone 2*pi*theta*(-coth(theta log eps)-1),
    cusp -2*pi/log eps; `scale` shifts log eps by -s (pullback z -> z/c)."""
    if not (0.0 < eps < 1.0):
        raise ValueError("excision radius must lie in (0, 1)")
    le = np.log(eps) - scale
    if le >= 0.0:
        raise ValueError("excision radius must stay below the model scale")
    if theta == 0.0:
        return float(-2.0 * np.pi / le)
    t = float(theta)
    # 2 pi t (-coth(t*le) - 1) = 4 pi t / (e^{-2 t le} - 1), overflow-safe
    return float(4.0 * np.pi * t / np.expm1(-2.0 * t * le))


def model_radial_length(theta: float, eps: float, scale: float = 0.0) -> float:
    """Exact hyperbolic length of a radial segment from the puncture to r=eps.

    Cones: 2 artanh((eps/c)^theta), finite.  Cusps are at infinite distance;
    raises."""
    if theta == 0.0:
        raise ValueError("a cusp sits at infinite distance")
    le = np.log(eps) - scale
    if le >= 0.0:
        raise ValueError("radius must stay below the model scale")
    return float(2.0 * np.arctanh(np.exp(float(theta) * le)))


def hermitian_einstein_constant(cfg: Configuration, background_area: float = 1.0) -> float:
    """c = -pi sum[theta_i] / (2 * background area); the induced singular
    metric does not depend on this normalisation."""
    floors = sum(p.theta.floor for p in cfg.points)
    return float(-np.pi * floors / (2.0 * background_area))
