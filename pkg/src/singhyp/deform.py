"""Quadratic-differential deformations of the singular hyperbolic metric.

A deformation direction is a meromorphic quadratic differential a = f dz^2
with per-point pole orders bounded by a twist divisor.  Against the solved
metric h = e^{2u}|dz|^2 its pointwise norm is ||rho(a)|| = |f| e^{-2u}, and
while the sup stays below 1/2 the symmetric form

    h_a^ = 2a + h + 2 abar + 4 a abar / h

is a Riemannian metric of curvature -1 on the punctured sphere (for a new
complex structure; the Beltrami coefficient has |beta| = 2 ||rho(a)||).
This module builds monomial bases of the twist spaces, assembles h_a^,
checks its Brioschi curvature and the Bochner identity, and sweeps rays
t -> t*a re-solving the metric self-consistently at each step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import poly
from .bundle import TwistVariant, pole_bounds
from .exact import MobiusMap, is_infinity, point_to_complex
from .grids import EXCISED, INTERIOR, GridField, GridSpec
from .solver import (
    ConvergenceError,
    SolveResult,
    SolverOptions,
    area_integral,
    solve_hyperbolic,
)
from .surfaces import Configuration


@dataclass(frozen=True)
class QuadraticDifferential:
    """f(z) dz^2 with f = numerator / prod (z - p_i)^{k_i}.

    Negative k_i forces a zero of that order at p_i.  The pole order at
    infinity is not stored: it follows from degree counting and is checked
    against its bound where one applies.
    """

    numerator: tuple[complex, ...]
    poles: tuple[tuple[complex, int], ...]

    def __post_init__(self):
        seen = set()
        for p, _ in self.poles:
            if p in seen:
                raise ValueError("duplicate pole position")
            seen.add(p)

    @property
    def is_zero(self) -> bool:
        return poly.degree(list(self.numerator)) < 0

    def order_at_infinity(self) -> int:
        """Pole order at z = infinity: 4 + deg(num) - sum k_i (negative
        values are zeros)."""
        if self.is_zero:
            raise ValueError("the zero differential has no order")
        return 4 + poly.degree(list(self.numerator)) - sum(k for _, k in self.poles)

    def pole_order_at(self, z: complex) -> int:
        for p, k in self.poles:
            if p == z:
                return k
        return 0

    def evaluate(self, z):
        """f(z), vectorised; infinite at the poles."""
        z = np.asarray(z, dtype=complex)
        val = poly.evaluate(list(self.numerator), z)
        with np.errstate(divide="ignore", invalid="ignore"):
            for p, k in self.poles:
                if k:
                    val = val * (z - p) ** (-k)
        return val

    def scaled(self, t: complex) -> "QuadraticDifferential":
        return QuadraticDifferential(
            tuple(t * c for c in self.numerator), self.poles
        )

    def zeros(self) -> np.ndarray:
        """Zeros of f in the finite plane (numerator roots plus forced
        zeros), for diagnostic masking."""
        zs = list(poly.roots(list(self.numerator)))
        for p, k in self.poles:
            if k < 0:
                zs.extend([p] * (-k))
        return np.asarray(zs, dtype=complex)

    def transformed(self, mob: MobiusMap) -> "QuadraticDifferential":
        """Push forward under w = mob(z): returns the representation of the
        same differential in the w coordinate (q~(w) = f(z(w)) (dz/dw)^2)."""
        a = mob.a.to_complex()
        b = mob.b.to_complex()
        c = mob.c.to_complex()
        d = mob.d.to_complex()
        det = a * d - b * c
        # z = (d w - b)/(-c w + a); linear pieces as polynomials in w
        P_num = [-b, d]
        P_den = [a, -c]
        num = list(self.numerator)
        n = max(poly.degree(num), 0)
        new_num = poly.compose_linear_pair(num, P_num, P_den, n)
        new_num = poly.scale(new_num, det * det)
        e_den = sum(k for _, k in self.poles) - n - 4  # exponent of (-c w + a)
        new_poles: list[tuple[complex, int]] = []
        for p, k in self.poles:
            lead = d + c * p
            if abs(lead) < 1e-300:
                # p maps to infinity: (z - p) = const/(-c w + a)
                const = -(b + a * p)
                new_num = poly.scale(new_num, const ** (-k) if k < 0 else 1.0 / const**k)
                e_den += k
                continue
            image = (b + a * p) / lead
            new_num = poly.scale(new_num, lead ** (-k) if k < 0 else 1.0 / lead**k)
            new_poles.append((image, k))
        if abs(c) > 0:
            w0 = a / c  # image of infinity
            if e_den > 0:
                new_num = poly.mul(new_num, poly.poly_pow([a, -c], e_den))
            elif e_den < 0:
                new_num = poly.scale(new_num, (-c) ** e_den)  # split leading coeff
                new_poles.append((w0, -e_den))
                new_num = poly.scale(new_num, (-c) ** (-e_den))  # undo: keep monic factor
                # (z - w0) factors: (-c w + a)^|e| = (-c)^|e| (w - w0)^|e|
                new_num = poly.scale(new_num, (-c) ** e_den)
        else:
            # map fixes infinity; (-c w + a) = a is constant
            new_num = poly.scale(new_num, a**e_den)
        return QuadraticDifferential(tuple(new_num), tuple(new_poles))


def basis(cfg: Configuration, variant: TwistVariant) -> list[QuadraticDifferential]:
    """Monomial basis z^j / prod (z - p_i)^{k_i} dz^2 of the twist space,
    j = 0 .. dim-1; empty when the space is trivial."""
    if cfg.genus != 0:
        raise ValueError("bases are computed on the sphere only")
    from .bundle import quad_diff_space_dim

    dim, exact = quad_diff_space_dim(cfg, variant)
    if dim == 0:
        return []
    bounds = pole_bounds(cfg, variant)
    poles = []
    for p, k in zip(cfg.points, bounds):
        if is_infinity(p.position):
            continue
        if k != 0:
            poles.append((point_to_complex(p.position), k))
    out = []
    for j in range(dim):
        num = tuple([0j] * j + [1.0 + 0j])
        qd = QuadraticDifferential(num, tuple(poles))
        inf_idx = cfg.infinity_index()
        cap = bounds[inf_idx] if inf_idx is not None else 0
        if qd.order_at_infinity() > cap:
            raise AssertionError("basis element violates the infinity bound")
        out.append(qd)
    return out


def sample_abs(qd: QuadraticDifferential, spec: GridSpec) -> np.ndarray:
    """|f| on the grid nodes (infinite at poles; the solver only reads
    interior nodes)."""
    ax = spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    vals = np.abs(qd.evaluate(X + 1j * Y))
    return np.nan_to_num(vals, nan=np.inf, posinf=np.inf)


def solve_deformed(
    cfg: Configuration,
    spec: GridSpec,
    qd: QuadraticDifferential,
    t: float = 1.0,
    tol: float = 1e-8,
    options: SolverOptions | None = None,
    initial_scales: dict | None = None,
) -> SolveResult:
    """Re-solve the metric with source |t f| (the self-consistent h_a)."""
    source = t * sample_abs(qd, spec) if not qd.is_zero else None
    if t == 0.0:
        source = None
    return solve_hyperbolic(
        cfg, spec, source_abs=source, tol=tol, options=options, initial_scales=initial_scales
    )


def rho_norm_field(qd: QuadraticDifferential, res: SolveResult, t: float = 1.0) -> GridField:
    """||rho(t a)|| = |t f| e^{-2u} nodewise (zero outside the interior)."""
    vals = t * sample_abs(qd, res.spec) * np.exp(-2.0 * res.u.values)
    vals = np.where(res.u.mask == INTERIOR, vals, 0.0)
    return GridField(vals, res.u.mask, res.spec)


@dataclass(frozen=True)
class MetricField:
    """First fundamental form E dx^2 + 2F dx dy + G dy^2 of h_a^."""

    E: GridField
    F: GridField
    G: GridField

    @property
    def mask(self) -> np.ndarray:
        return self.E.mask

    def determinant(self) -> np.ndarray:
        return self.E.values * self.G.values - self.F.values**2


def assemble_metric(qd: QuadraticDifferential | None, res: SolveResult, t: float = 1.0) -> MetricField:
    """h_a^ in real coordinates: with g = e^{2u} and b = g + 4|f|^2/g,

        E = b + 4 Re f,  G = b - 4 Re f,  F = -4 Im f,

    so EG - F^2 = (g - 4|f|^2/g)^2 degenerates exactly at ||rho|| = 1/2."""
    g = np.exp(2.0 * res.u.values)
    if qd is None or qd.is_zero or t == 0.0:
        f = np.zeros_like(g, dtype=complex)
    else:
        ax = res.spec.axis()
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        f = t * qd.evaluate(X + 1j * Y)
        f = np.where(res.u.mask == INTERIOR, f, 0.0)
    b = g + 4.0 * np.abs(f) ** 2 / g
    E = b + 4.0 * f.real
    G = b - 4.0 * f.real
    F = -4.0 * f.imag
    mk = res.u.mask
    # non-interior nodes hold the conformal background so the fields stay finite
    E = np.where(mk == INTERIOR, E, g)
    G = np.where(mk == INTERIOR, G, g)
    F = np.where(mk == INTERIOR, F, 0.0)
    return MetricField(GridField(E, mk, res.spec), GridField(F, mk, res.spec), GridField(G, mk, res.spec))


def beltrami(qd: QuadraticDifferential, res: SolveResult, t: float = 1.0) -> tuple[GridField, float]:
    """|beta| = 2 |f| e^{-2u} nodewise and its interior sup; identically
    2 ||rho(a)||."""
    rho = rho_norm_field(qd, res, t)
    vals = 2.0 * rho.values
    fld = GridField(vals, res.u.mask, res.spec)
    return fld, fld.sup_interior()


def curvature_nonconformal(M: MetricField, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian curvature of E,F,G via the Brioschi formula with centred
    differences.  Returns (K, valid mask); nodes without a full stencil or
    with degenerate determinant are masked out."""
    E, F, G = M.E.values, M.F.values, M.G.values
    h = spacing

    def dx(A):
        out = np.full_like(A, np.nan)
        out[1:-1, :] = (A[2:, :] - A[:-2, :]) / (2 * h)
        return out

    def dy(A):
        out = np.full_like(A, np.nan)
        out[:, 1:-1] = (A[:, 2:] - A[:, :-2]) / (2 * h)
        return out

    def dxx(A):
        out = np.full_like(A, np.nan)
        out[1:-1, :] = (A[2:, :] - 2 * A[1:-1, :] + A[:-2, :]) / h**2
        return out

    def dyy(A):
        out = np.full_like(A, np.nan)
        out[:, 1:-1] = (A[:, 2:] - 2 * A[:, 1:-1] + A[:, :-2]) / h**2
        return out

    E_x, E_y = dx(E), dy(E)
    G_x, G_y = dx(G), dy(G)
    F_x, F_y = dx(F), dy(F)
    E_yy, G_xx, F_xy = dyy(E), dxx(G), dx(dy(F))

    det1 = (
        (-0.5 * E_yy + F_xy - 0.5 * G_xx) * (E * G - F * F)
        - (0.5 * E_x) * ((F_y - 0.5 * G_x) * G - F * (0.5 * G_y))
        + (F_x - 0.5 * E_y) * ((F_y - 0.5 * G_x) * F - E * (0.5 * G_y))
    )
    det2 = (
        0.0 * (E * G - F * F)
        - (0.5 * E_y) * (0.5 * E_y * G - F * 0.5 * G_x)
        + (0.5 * G_x) * (0.5 * E_y * F - E * 0.5 * G_x)
    )
    den = (E * G - F * F) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (det1 - det2) / den
    valid = np.isfinite(K) & (E * G - F * F > 1e-30)
    return K, valid


def curvature_check_mask(res: SolveResult, margin_factor: float = 0.5) -> np.ndarray:
    """Interior nodes far enough from excisions and the outer rim for the
    finite-difference curvature to be trustworthy: outside margin_factor *
    rho around each puncture, inside 0.9 R."""
    ax = res.spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    Z = X + 1j * Y
    ok = res.u.mask == INTERIOR
    ok &= np.abs(Z) < 0.9 * res.spec.half_width
    for i, zp, rho in res.layout.cutoffs:
        ok &= np.abs(Z - zp) > margin_factor * rho
    return ok


def bochner_residual(
    qd: QuadraticDifferential, res: SolveResult, t: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Residual of Lap log||rho||^2 = 4 e^{2u} (4||rho||^2 - 1).

    log||rho||^2 = log|t f|^2 - 4u with log|f|^2 harmonic away from zeros
    and poles of f, so the identity reduces to -4x the discrete PDE
    residual; evaluating it through the solver's own discretisation makes
    the check read the converged residual, not the stencil error.  Nodes
    within 3 cells of a zero of f are masked.
    """
    if qd is None or qd.is_zero or t == 0.0:
        raise ValueError("the Bochner identity needs a nonzero differential")
    from .solver import pde_residual_field

    r = pde_residual_field(res)
    vals = -4.0 * r
    mask = res.u.mask == INTERIOR
    ax = res.spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    Z = X + 1j * Y
    hh = 3.0 * res.spec.spacing
    for z0 in qd.zeros():
        mask &= np.abs(Z - z0) > hh
    return vals, mask


def harmonicity_residual(qd: QuadraticDifferential, res: SolveResult) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Laplacian of log|f|^2, which must vanish to stencil accuracy
    away from zeros and poles of f."""
    ax = res.spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    Z = X + 1j * Y
    with np.errstate(divide="ignore", invalid="ignore"):
        lf = np.log(np.abs(qd.evaluate(Z)) ** 2)
    h2 = res.spec.spacing**2
    lap = np.full_like(lf, np.nan)
    lap[1:-1, 1:-1] = (
        lf[2:, 1:-1] + lf[:-2, 1:-1] + lf[1:-1, 2:] + lf[1:-1, :-2] - 4 * lf[1:-1, 1:-1]
    ) / h2
    mask = np.isfinite(lap) & (res.u.mask == INTERIOR)
    guard = 4.0 * res.spec.spacing
    for z0 in qd.zeros():
        mask &= np.abs(Z - z0) > guard
    for p, k in qd.poles:
        if k > 0:
            mask &= np.abs(Z - p) > guard
    return lap, mask


@dataclass(frozen=True)
class SweepSample:
    t: float
    converged: bool
    sup_rho: float
    beltrami_sup: float
    curvature_residual: float | None
    area: float | None


@dataclass(frozen=True)
class SweepResult:
    variant: str
    direction_index: int | None
    t_star: float
    samples: tuple[SweepSample, ...]


def sweep_ray(
    cfg: Configuration,
    spec: GridSpec,
    direction: QuadraticDifferential,
    t_max: float,
    steps: int = 5,
    tol: float = 1e-8,
    options: SolverOptions | None = None,
    variant: str = "",
    direction_index: int | None = None,
    refine_rounds: int = 3,
    check_curvature: bool = True,
) -> SweepResult:
    """Walk t in (0, t_max], re-solving self-consistently; t_star is the
    largest verified scale (convergence and sup||rho|| < 1/2), refined by
    bisection when the threshold is crossed inside the range."""
    if direction.is_zero:
        return SweepResult(variant, direction_index, t_max, tuple())
    base = solve_hyperbolic(cfg, spec, tol=tol, options=options)
    warm = dict(base.scales)

    samples: list[SweepSample] = []

    def probe(t: float) -> SweepSample:
        try:
            res = solve_deformed(cfg, spec, direction, t, tol, options, initial_scales=warm)
        except (ConvergenceError, ValueError):
            return SweepSample(t, False, np.inf, np.inf, None, None)
        rho = rho_norm_field(direction, res, t)
        sup_rho = rho.sup_interior()
        _, bsup = beltrami(direction, res, t)
        curv = None
        if check_curvature:
            M = assemble_metric(direction, res, t)
            K, valid = curvature_nonconformal(M, res.spec.spacing)
            valid &= curvature_check_mask(res)
            curv = float(np.max(np.abs(K[valid] + 1.0))) if np.any(valid) else None
        return SweepSample(t, True, sup_rho, bsup, curv, area_integral(res))

    ts = np.linspace(t_max / steps, t_max, steps)
    t_star = 0.0
    first_bad = None
    for t in ts:
        s = probe(float(t))
        samples.append(s)
        if s.converged and s.sup_rho < 0.5:
            t_star = float(t)
        else:
            first_bad = float(t)
            break
    if first_bad is not None:
        lo, hi = t_star, first_bad
        for _ in range(refine_rounds):
            mid = 0.5 * (lo + hi)
            s = probe(mid)
            samples.append(s)
            if s.converged and s.sup_rho < 0.5:
                lo = mid
                t_star = mid
            else:
                hi = mid
    samples.sort(key=lambda s: s.t)
    return SweepResult(variant, direction_index, t_star, tuple(samples))


def first_order_preview(
    qd: QuadraticDifferential, base: SolveResult, ts: np.ndarray
) -> list[tuple[float, float]]:
    """Cheap preview flagged first-order: sup||rho(t a)|| against the fixed
    undeformed metric (linear in t)."""
    rho1 = rho_norm_field(qd, base, 1.0).sup_interior()
    return [(float(t), float(t) * rho1) for t in np.asarray(ts, dtype=float)]


def sup_difference(res_a: SolveResult, res_b: SolveResult) -> float:
    """Mutual-boundedness proxy: sup |u_a - u_b| over common interior."""
    inter = (res_a.u.mask == INTERIOR) & (res_b.u.mask == INTERIOR)
    return float(np.max(np.abs(res_a.u.values[inter] - res_b.u.values[inter])))
