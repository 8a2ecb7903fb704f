"""Damped-Newton solver for the scalar self-duality reduction

    Lap u = e^{2u} - 4 |f|^2 e^{-2u}

on the marked sphere, in a single chart with one marked point at infinity.

Strategy.  Each puncture gets an exact local model (cone or cusp), glued by
radial cutoffs into a global graft u_g; the far field uses the model at
infinity pulled back through w = 1/z (which contributes -2 log|z|).  The
solver computes u = u_g + v with the correction v a grid unknown.

Local models carry a free scale (the pullback z -> z/c is again an exact
solution), and the true solution picks scales the graft cannot know in
advance; for cones the offset does not even decay as the excision shrinks.
The correction therefore uses *reflection* (zero normal derivative)
conditions at excision circles and the outer boundary, which are exact for
the scale mode, and an outer loop fits the per-puncture log-scales until
the ring averages of v vanish.  Secant acceleration makes that loop
converge in a handful of rounds.  Excised-disk and far-field areas are then
completed with the closed-form model areas at the fitted scales.

Everything is deterministic: sparse LU (or a fixed-configuration AMG-CG
beyond ~1.5M unknowns) and fixed iteration order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exact import is_infinity, point_to_complex
from .grids import EXCISED, EXTERIOR, INTERIOR, Grid, GridField, GridSpec, default_grid_spec
from .models import excised_model_area, model_log_factor, model_radial_length
from .surfaces import Configuration, InadmissibleError, admissible, gauss_bonnet_area


class ConvergenceError(RuntimeError):
    """Newton failed; carries the residual history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_newton: int = 40
    max_scale_rounds: int = 30
    scale_tol: float = 1e-9
    newton_step_cap: float = 60.0  # overflow guard only; energy search tames steps
    bootstrap: bool = True
    linear_solver: str = "auto"          # auto | splu | amg
    source_preflight_bound: float = 1e-6


@dataclass(frozen=True)
class GraftLayout:
    """Cutoff geometry: per finite puncture (index, position, radius rho),
    plus the far-field band in the w = 1/z chart."""

    cutoffs: tuple[tuple[int, complex, float], ...]
    rho_inf: float
    inf_index: int | None
    inf_theta: float


@dataclass
class Diagnostics:
    gb_area: float
    area: float | None = None
    final_residual: float | None = None
    newton_iterations: int = 0
    scale_rounds: int = 0
    scales: dict = field(default_factory=dict)
    scale_residual: float | None = None
    background: float | None = None
    exponent_fits: dict = field(default_factory=dict)
    source_preflight: float | None = None
    residual_history: list = field(default_factory=list)


@dataclass
class SolveResult:
    u: GridField
    graft: GridField
    correction: GridField
    iterations: int
    final_residual: float
    diagnostics: Diagnostics
    cfg: Configuration
    spec: GridSpec
    layout: GraftLayout
    scales: dict
    background: float
    source_abs: np.ndarray | None = None    # sampled |f| on the grid, if any

    @property
    def conformal_factor(self) -> np.ndarray:
        return np.exp(2.0 * self.u.values)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def build_layout(cfg: Configuration, spec: GridSpec) -> GraftLayout:
    """Cutoff radii: a third of the minimal pairwise distance (finite points;
    the infinity cutoff lives in the w chart).  Raises when disks collide or
    the far-field band does not close inside the grid."""
    if cfg.genus != 0:
        raise ValueError("solver is genus-0 only")
    inf_index = cfg.infinity_index()
    if inf_index is None:
        raise ValueError(
            "unsupported chart layout: place one marked point at infinity "
            "(mobius_normalize does this for m >= 3)"
        )
    finite = [
        (i, point_to_complex(p.position))
        for i, p in enumerate(cfg.points)
        if not is_infinity(p.position)
    ]
    if not finite:
        raise ValueError("unsupported chart layout: no finite marked points")
    R = spec.half_width
    h = spec.spacing
    for _, z in finite:
        if max(abs(z.real), abs(z.imag)) >= R / 2:
            raise ValueError("finite punctures must lie inside (-R/2, R/2)^2")
    # pairwise separations in the z chart
    if len(finite) > 1:
        dmin = min(
            abs(z1 - z2) for k, (_, z1) in enumerate(finite) for _, z2 in finite[k + 1 :]
        )
    else:
        dmin = R
    rho = dmin / 3.0
    # w-chart cutoff at infinity: a third of the minimal w-distance when the
    # grid affords it, widened as needed so the chi=1 far shell keeps at
    # least a dozen cells before the rim (the scale fit reads v there)
    maxabs = max(abs(z) for _, z in finite if z != 0) if any(z != 0 for _, z in finite) else 1.0
    shell = max(0.4, 12.0 * h)
    lo = 2.0 / (R - shell) if R > shell else np.inf
    hi = 0.95 / (maxabs + rho)
    rho_inf = min(max(1.0 / (3.0 * maxabs), lo), hi)
    if rho_inf < lo or 2.0 / rho_inf >= R - 4.0 * h:
        raise ValueError("points too close for grid: far-field band does not close before R")
    if 1.0 / rho_inf <= maxabs + rho:
        raise ValueError("points too close for grid: far-field band overlaps a cutoff disk")
    for k, (_, z1) in enumerate(finite):
        for _, z2 in finite[k + 1 :]:
            if abs(z1 - z2) < 2 * rho * 0.999:
                raise ValueError("points too close for grid: cutoff disks overlap")
    for (i, z), e in zip(
        [(i, z) for i, z in finite],
        [e for e in spec.excision_radii if e is not None],
        strict=True,
    ):
        if e > rho / 2 * 0.96:
            raise ValueError(
                f"excision radius {e} at point {i} reaches the cutoff transition "
                f"(rho/2 = {rho / 2}); refine the grid or shrink the excision"
            )
    cutoffs = tuple((i, z, rho) for i, z in finite)
    return GraftLayout(
        cutoffs=cutoffs,
        rho_inf=rho_inf,
        inf_index=inf_index,
        inf_theta=float(cfg.points[inf_index].theta.value),
    )


def evaluate_graft(
    cfg: Configuration,
    layout: GraftLayout,
    z,
    scales: dict | None = None,
    background: float = 0.0,
) -> np.ndarray:
    """Analytic graft u_g at arbitrary points z (vectorised).

    scales maps point index -> log model scale (missing means 0); the
    infinity entry scales the far-field model in the w chart.
    """
    z = np.asarray(z, dtype=complex)
    scales = scales or {}
    u = np.zeros(z.shape, dtype=float)
    chi_total = np.zeros(z.shape, dtype=float)
    for i, zp, rho in layout.cutoffs:
        r = np.abs(z - zp)
        chi = _smoothstep((rho - r) / (rho / 2.0))
        live = chi > 0.0
        if np.any(live):
            th = float(cfg.points[i].theta.value)
            s = float(scales.get(i, 0.0))
            with np.errstate(divide="ignore"):
                um = np.where(
                    live, model_log_factor(th, np.log(np.where(live, r, 0.5)), s), 0.0
                )
            u += chi * um
        chi_total += chi
    # far field through w = 1/z
    absz = np.abs(z)
    w = 1.0 / np.maximum(absz, 1e-300)
    chi = _smoothstep((layout.rho_inf - w) / (layout.rho_inf / 2.0))
    live = chi > 0.0
    if np.any(live):
        s = float(scales.get(layout.inf_index, 0.0))
        logw = -np.log(np.where(live, absz, 2.0))
        uf = np.where(live, model_log_factor(layout.inf_theta, logw, s) - 2.0 * np.log(np.where(live, absz, 2.0)), 0.0)
        u += chi * uf
    chi_total += chi
    return u + (1.0 - chi_total) * background


class _Workspace:
    """Grid realisation plus everything the Newton/scale loops reuse."""

    def __init__(self, cfg: Configuration, spec: GridSpec):
        ok, margin = admissible(cfg)
        if not ok:
            raise InadmissibleError(
                f"inadmissible configuration (margin {margin}); solver refuses"
            )
        self.cfg = cfg
        self.spec = spec
        self.layout = build_layout(cfg, spec)
        self.grid = Grid(spec, cfg)
        g = self.grid
        self._check_node_collision()
        self.absz = np.abs(g.z)
        self.gb = float(gauss_bonnet_area(cfg)) * np.pi
        # per finite puncture: radii field and scale-fit ring
        self.rings: dict[int, np.ndarray] = {}
        self.r_fields: dict[int, np.ndarray] = {}
        h = g.h
        for (i, zp, rho), e in zip(
            self.layout.cutoffs,
            [e for e in spec.excision_radii if e is not None],
            strict=True,
        ):
            r = np.abs(g.z - zp)
            self.r_fields[i] = r
            hi = min(e + 3.0 * h, 0.48 * rho)
            ring = g.interior & (r >= e) & (r < hi)
            if not np.any(ring):
                raise ValueError(f"no ring nodes outside excision {i}; refine the grid")
            self.rings[i] = ring
        # the far ring sits at the inner edge of the chi=1 far shell, away
        # from the pinned rim where v is forced to zero
        inner = 2.0 / self.layout.rho_inf
        ring_inf = g.interior & (self.absz > inner) & (self.absz < inner + 3.0 * h)
        if not np.any(ring_inf):
            raise ValueError("no ring nodes inside the outer boundary")
        self.rings[self.layout.inf_index] = ring_inf
        self.lap = self._interior_laplacian(neumann=True)
        self.lap_pinned = self._interior_laplacian(neumann=False)
        self.n = g.n_interior

    def _check_node_collision(self):
        h = self.grid.h
        ax = self.grid.x
        for _, zp, _ in self.layout.cutoffs:
            ix = np.argmin(np.abs(ax - zp.real))
            iy = np.argmin(np.abs(ax - zp.imag))
            node = complex(ax[ix], ax[iy])
            if abs(node - zp) < h * 1e-9:
                raise ValueError(
                    f"puncture {zp} coincides with a grid node; nudge R or N"
                )

    def _interior_laplacian(self, neumann: bool = True) -> sp.csr_matrix:
        # 5-point stencil on interior unknowns.  Excised neighbours are
        # mirrored when neumann=True (zero normal derivative for v at the
        # puncture circles, so the local scale mode passes freely) and
        # pinned to v = 0 otherwise; exterior neighbours are always pinned.
        # Pinning the outer rim keeps the operator strictly negative
        # definite: a reflected rim would leave the constant mode governed
        # by the sign of the discrete graft flux, which discretisation
        # error can flip.
        g = self.grid
        h2 = g.h * g.h
        I, J = np.where(g.interior)
        k = g.index[I, J]
        rows, cols, vals = [], [], []
        diag = np.full(g.n_interior, -4.0 / h2)
        for dI, dJ in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            In, Jn = I + dI, J + dJ
            nb = g.index[In, Jn]
            m = nb >= 0
            rows.append(k[m])
            cols.append(nb[m])
            vals.append(np.full(int(m.sum()), 1.0 / h2))
            if neumann:
                mirrored = (~m) & (g.mask[In, Jn] == EXCISED)
                diag[k[mirrored]] += 1.0 / h2
        rows.append(k)
        cols.append(k)
        vals.append(diag)
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(g.n_interior, g.n_interior),
        )
        A.sum_duplicates()
        return A

    # -- graft -------------------------------------------------------------
    def graft_grid(self, scales: dict, background: float | None = None):
        u_partial = evaluate_graft(self.cfg, self.layout, self.grid.z, scales, 0.0)
        chi = self._chi_total()
        if background is None:
            background = self._fit_background(u_partial, chi, scales)
        return u_partial + (1.0 - chi) * background, background

    def _chi_total(self) -> np.ndarray:
        if not hasattr(self, "_chi_cache"):
            z = self.grid.z
            chi = np.zeros(z.shape)
            for i, zp, rho in self.layout.cutoffs:
                chi += _smoothstep((rho - np.abs(z - zp)) / (rho / 2.0))
            w = 1.0 / np.maximum(self.absz, 1e-300)
            chi += _smoothstep((self.layout.rho_inf - w) / (self.layout.rho_inf / 2.0))
            self._chi_cache = chi
        return self._chi_cache

    def completions(self, scales: dict) -> float:
        total = 0.0
        for (i, _, _), e in zip(
            self.layout.cutoffs,
            [e for e in self.spec.excision_radii if e is not None],
            strict=True,
        ):
            th = float(self.cfg.points[i].theta.value)
            total += excised_model_area(th, e, float(scales.get(i, 0.0)))
        total += excised_model_area(
            self.layout.inf_theta,
            1.0 / self.spec.half_width,
            float(scales.get(self.layout.inf_index, 0.0)),
        )
        return total

    def interior_area(self, u: np.ndarray) -> float:
        if not hasattr(self, "_area_mask"):
            self._area_mask = (self.absz < self.spec.half_width) & (
                self.grid.mask != EXCISED
            )
        return float(np.sum(np.exp(2.0 * u[self._area_mask]))) * self.grid.h**2

    def _edge_level(self, scales) -> float:
        # plateau anchor: mean model value where the cutoffs hand over
        vals = []
        for i, zp, rho in self.layout.cutoffs:
            th = float(self.cfg.points[i].theta.value)
            vals.append(
                float(model_log_factor(th, np.log(0.75 * rho), float(scales.get(i, 0.0))))
            )
        s = float(scales.get(self.layout.inf_index, 0.0))
        edge = 0.75 * self.layout.rho_inf
        vals.append(
            float(model_log_factor(self.layout.inf_theta, np.log(edge), s)) + 2.0 * np.log(edge)
        )
        return float(np.mean(vals))

    def _fit_background(self, u_partial, chi, scales) -> float:
        # bisect the plateau constant toward the Gauss-Bonnet budget, but
        # only within a band around the cutoff-edge level: the budget can be
        # unreachable while the scales are still wrong, and a runaway
        # plateau destabilises the first Newton pass
        comp = self.completions(scales)
        target_interior = max(self.gb - comp, 0.2 * self.gb)
        anchor = self._edge_level(scales)
        lo, hi = anchor - 2.5, anchor + 2.5
        if self.interior_area(u_partial + (1.0 - chi) * lo) > target_interior:
            return lo
        if self.interior_area(u_partial + (1.0 - chi) * hi) < target_interior:
            return hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            a = self.interior_area(u_partial + (1.0 - chi) * mid)
            if a < target_interior:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # -- Newton ------------------------------------------------------------
    def lap_full(self, u: np.ndarray) -> np.ndarray:
        h2 = self.grid.h**2
        L = np.zeros_like(u)
        L[1:-1, 1:-1] = (
            u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1]
        ) / h2
        return L

    def _amg_preconditioner(self):
        # hierarchy built once on the pure (negated) Laplacian; the mass
        # shift only helps CG, so the frozen hierarchy stays a good
        # preconditioner for every Newton Jacobian on this grid
        if not hasattr(self, "_amg_M"):
            import pyamg

            np.random.seed(20240001)  # pyamg probes spectra with global RNG
            ml = pyamg.smoothed_aggregation_solver((-self.lap).tocsr(), max_coarse=500)
            self._amg_M = ml.aspreconditioner(cycle="V")
        return self._amg_M

    def _linear_solve(self, J: sp.csr_matrix, rhs: np.ndarray, opts: SolverOptions) -> np.ndarray:
        method = opts.linear_solver
        if method == "auto":
            method = "splu" if self.n <= 400_000 else "amg"
        if method == "splu":
            return spla.splu(J.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
        if method == "amg":
            x, info = spla.cg(
                -J.tocsr(), -rhs, rtol=1e-11, atol=0.0, M=self._amg_preconditioner(), maxiter=600
            )
            if info != 0:
                # fall back to a direct solve rather than return garbage
                return spla.splu(J.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
            return x
        raise ValueError(f"unknown linear solver {method!r}")

    def newton(self, ug, v0, source2, opts: SolverOptions, pinned: bool = False):
        """Solve for the interior correction; returns (v grid, sup residual,
        iterations, history).  pinned=True uses the v = 0 boundary operator
        (warm-start pass only).

        The equation is the Euler-Lagrange equation of the strictly convex
        energy E(v) = -v'Av/2 - v'lap(u_g) + sum(e^{2u}/2 + 2|f|^2 e^{-2u}),
        whose linear term (the graft's boundary flux) rules out the uniform
        downward drift that a residual-norm line search tolerates; Armijo is
        therefore run on E, with the Newton direction a guaranteed descent
        direction."""
        g = self.grid
        mask = g.interior
        A = self.lap_pinned if pinned else self.lap
        lap_ug = self.lap_full(ug)[mask]
        s2 = source2[mask] if isinstance(source2, np.ndarray) else None

        def residual(vi):
            u = np.clip(ug[mask] + vi, -200.0, 200.0)
            r = lap_ug + A.dot(vi) - np.exp(2.0 * u)
            if s2 is not None:
                r = r + 4.0 * s2 * np.exp(-2.0 * u)
            return r

        def energy(vi):
            u = np.clip(ug[mask] + vi, -200.0, 200.0)
            e = -0.5 * float(vi @ A.dot(vi)) - float(vi @ lap_ug) + 0.5 * float(
                np.sum(np.exp(2.0 * u))
            )
            if s2 is not None:
                e += 2.0 * float(np.sum(s2 * np.exp(-2.0 * u)))
            return e

        vi = v0[mask].astype(float).copy()
        r = residual(vi)
        en = energy(vi)
        history = [float(np.max(np.abs(r)))]
        it = 0
        for it in range(1, opts.max_newton + 1):
            if history[-1] <= opts.tol:
                it -= 1
                break
            u = np.clip(ug[mask] + vi, -200.0, 200.0)
            massd = 2.0 * np.exp(2.0 * u)
            if s2 is not None:
                massd = massd + 8.0 * s2 * np.exp(-2.0 * u)
            J = A - sp.diags(massd)
            d = self._linear_solve(J, -r, opts)
            dmax = float(np.max(np.abs(d)))
            if dmax > opts.newton_step_cap:
                d *= opts.newton_step_cap / dmax
            r_inf = history[-1]
            if r_inf > 1e-3:
                # globalised phase: Armijo on the convex energy
                slope = -float(r @ d)
                t = 1.0
                accepted = False
                for _ in range(50):
                    e2 = energy(vi + t * d)
                    if np.isfinite(e2) and e2 <= en + 1e-4 * t * slope:
                        accepted = True
                        break
                    t *= 0.5
                if not accepted:
                    break
                vi = vi + t * d
                en = e2
                r = residual(vi)
            else:
                # quadratic basin: the energy comparison drowns in rounding
                # here, so take damped steps against the sup-residual itself
                t = 1.0
                accepted = False
                for _ in range(10):
                    r2 = residual(vi + t * d)
                    if float(np.max(np.abs(r2))) < r_inf:
                        accepted = True
                        break
                    t *= 0.5
                if not accepted:
                    break
                vi = vi + t * d
                r = r2
                en = energy(vi)
            history.append(float(np.max(np.abs(r))))
        v = np.zeros_like(ug)
        v[mask] = vi
        return v, history[-1], it, history


def _scale_gain_diag(cfg: Configuration, ws: _Workspace, i: int, s: float) -> float:
    """Model derivative d(ring offset)/d(log scale) at puncture i: -theta
    for cones, -1/(L + s) for cusps (L the ring's mean |log r|)."""
    th = float(cfg.points[i].theta.value)
    if th > 0.0:
        return -th
    if i == ws.layout.inf_index:
        lbar = float(np.mean(np.log(ws.absz[ws.rings[i]])))
    else:
        lbar = float(np.mean(-np.log(ws.r_fields[i][ws.rings[i]])))
    return -1.0 / (lbar + s)


def _initial_scales(cfg: Configuration) -> dict:
    # cones start at the unit model; cusp scales start near log 16, the
    # thrice-punctured-sphere value, to keep the first graft sane
    out = {}
    for i, p in enumerate(cfg.points):
        out[i] = 0.0 if p.theta.value > 0 else 2.0
    return out


def solve_hyperbolic(
    cfg: Configuration,
    spec: GridSpec | None = None,
    source_abs: np.ndarray | None = None,
    tol: float = 1e-8,
    options: SolverOptions | None = None,
    initial_correction: np.ndarray | None = None,
    initial_scales: dict | None = None,
) -> SolveResult:
    """Solve the scalar self-duality equation; f enters via |f| sampled on
    the grid (source_abs).  Deterministic.  Raises ConvergenceError with the
    residual history when Newton stalls."""
    opts = options or SolverOptions()
    if opts.tol != tol:
        opts = replace(opts, tol=tol)
    if spec is None:
        spec = default_grid_spec(cfg)
    ws = _Workspace(cfg, spec)

    scales = dict(initial_scales) if initial_scales is not None else None
    if scales is None and opts.bootstrap and spec.resolution > 320 and source_abs is None:
        scales = _bootstrap_scales(cfg, spec, opts)
    if scales is None:
        scales = _initial_scales(cfg)

    source2 = None
    preflight = None
    if source_abs is not None:
        source2 = np.square(np.asarray(source_abs, dtype=float))
        preflight, spec, ws = _source_preflight(cfg, spec, ws, scales, source2, opts)

    diag = Diagnostics(gb_area=ws.gb)
    diag.source_preflight = preflight

    ug, background = ws.graft_grid(scales)
    v = np.zeros_like(ug)
    if initial_correction is not None:
        v = np.where(ws.grid.interior, np.asarray(initial_correction, dtype=float), 0.0)

    total_newton = 0
    prev_s = prev_d = None
    indices = [i for i, _, _ in ws.layout.cutoffs] + [ws.layout.inf_index]
    last_residual = np.inf
    history_all: list[float] = []
    rounds = 0
    scale_res = np.inf
    # cold starts first solve the coercive pinned problem, then release
    if initial_correction is None:
        v, _, its0, hist0 = ws.newton(ug, v, source2, opts, pinned=True)
        total_newton += its0
        history_all.extend(hist0)
    for rounds in range(1, opts.max_scale_rounds + 1):
        v, res, its, hist = ws.newton(ug, v, source2, opts)
        total_newton += its
        history_all.extend(hist)
        last_residual = res
        # a stalled round still yields informative ring offsets: update the
        # scales and keep going; only the final state must meet tol
        deltas = np.array([float(np.mean(v[ws.rings[i]])) for i in indices])
        svec = np.array([scales[i] for i in indices])
        scale_res = float(np.max(np.abs(deltas)))
        if res <= opts.tol and scale_res < opts.scale_tol:
            break
        new_s = svec.copy()
        for k, i in enumerate(indices):
            naive = _scale_gain(cfg, ws, i, svec[k], deltas[k])
            if prev_s is not None and abs(deltas[k] - prev_d[k]) > 1e-14 * (1 + abs(deltas[k])):
                step = -deltas[k] * (svec[k] - prev_s[k]) / (deltas[k] - prev_d[k])
                if not np.isfinite(step) or abs(step) > 12.0 * abs(naive) + 1e-12:
                    step = naive
            else:
                step = 0.6 * naive
            new_s[k] = svec[k] + float(np.clip(step, -2.0, 2.0))
        prev_s, prev_d = svec, deltas
        scales = {i: float(new_s[k]) for k, i in enumerate(indices)}
        ug_new, background = ws.graft_grid(scales)
        v = np.where(ws.grid.interior, v + (ug - ug_new), 0.0)
        ug = ug_new
    if last_residual > opts.tol or not np.isfinite(last_residual):
        raise ConvergenceError(
            f"solver did not reach tol {opts.tol:.1e}: sup-residual "
            f"{last_residual:.3e} after {rounds} scale rounds",
            history_all,
        )

    u = np.where(ws.grid.interior, ug + v, ug)
    diag.final_residual = last_residual
    diag.newton_iterations = total_newton
    diag.scale_rounds = rounds
    diag.scales = dict(scales)
    diag.scale_residual = float(np.max(np.abs([np.mean(v[ws.rings[i]]) for i in indices])))
    diag.background = background
    diag.residual_history = history_all

    mk = ws.grid.mask
    result = SolveResult(
        u=GridField(u, mk, spec),
        graft=GridField(ug, mk, spec),
        correction=GridField(v, mk, spec),
        iterations=total_newton,
        final_residual=last_residual,
        diagnostics=diag,
        cfg=cfg,
        spec=spec,
        layout=ws.layout,
        scales=dict(scales),
        background=background,
        source_abs=None if source_abs is None else np.asarray(source_abs, dtype=float),
    )
    diag.area = area_integral(result)
    return result


def _bootstrap_scales(cfg: Configuration, spec: GridSpec, opts: SolverOptions) -> dict:
    """Fit the scales cheaply on a coarse standalone grid."""
    finite = [point_to_complex(p.position) for p in cfg.points if not is_infinity(p.position)]
    extent = max(max(abs(z.real), abs(z.imag)) for z in finite)
    R = max(3.2 * extent + 0.5, 3.5)
    R = min(R, spec.half_width)
    N = 256
    try:
        cspec = default_grid_spec(cfg, resolution=N, half_width=R)
        copts = replace(opts, bootstrap=False, tol=max(opts.tol, 1e-7), linear_solver="splu")
        res = solve_hyperbolic(cfg, cspec, tol=copts.tol, options=copts)
        return dict(res.scales)
    except (ValueError, InadmissibleError, ConvergenceError):
        return _initial_scales(cfg)


def _source_preflight(cfg, spec, ws, scales, source2, opts):
    """Check 4|f|^2 e^{-4 u_g} on excision rings; shrink offending excisions
    toward the 4-cell floor, then record whatever bound was achieved."""
    h = spec.spacing
    floor = 4.0 * h
    ug, _ = ws.graft_grid(scales)
    worst = 0.0
    radii = list(spec.excision_radii)
    changed = False
    for i, _, _ in ws.layout.cutoffs:
        ring = ws.rings[i]
        val = float(np.max(4.0 * source2[ring] * np.exp(-4.0 * ug[ring])))
        if val > opts.source_preflight_bound and radii[i] is not None and radii[i] > floor * 1.01:
            radii[i] = floor
            changed = True
        worst = max(worst, val)
    if changed:
        spec = GridSpec(spec.half_width, spec.resolution, tuple(radii))
        ws = _Workspace(cfg, spec)
        ug, _ = ws.graft_grid(scales)
        worst = 0.0
        for i, _, _ in ws.layout.cutoffs:
            ring = ws.rings[i]
            worst = max(worst, float(np.max(4.0 * source2[ring] * np.exp(-4.0 * ug[ring]))))
    return worst, spec, ws


# ---------------------------------------------------------------------------
# diagnostics on a converged result

def pde_residual_field(res: SolveResult) -> np.ndarray:
    """Discrete residual Lap u - e^{2u} + 4|f|^2 e^{-2u} on interior nodes
    (zero elsewhere), using the solver's own mixed discretisation: graft
    values at excised neighbours, reflection for the correction."""
    ws = _Workspace(res.cfg, res.spec)
    mask = ws.grid.interior
    ug = res.graft.values
    v = res.correction.values
    u = ug[mask] + v[mask]
    r = ws.lap_full(ug)[mask] + ws.lap.dot(v[mask]) - np.exp(2.0 * u)
    if res.source_abs is not None:
        r = r + 4.0 * np.square(res.source_abs[mask]) * np.exp(-2.0 * u)
    out = np.zeros_like(ug)
    out[mask] = r
    return out


def area_integral(res: SolveResult) -> float:
    """Midpoint-rule area over all non-excised cells inside the outer disk
    (exterior-masked cells inside it carry the exact far-field model), plus
    closed-form model completions inside the excisions and beyond R."""
    ax = res.spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    covered = (np.hypot(X, Y) < res.spec.half_width) & (res.u.mask != EXCISED)
    h = res.spec.spacing
    total = float(np.sum(np.exp(2.0 * res.u.values[covered]))) * h * h
    for (i, _, _), e in zip(
        res.layout.cutoffs,
        [e for e in res.spec.excision_radii if e is not None],
        strict=True,
    ):
        th = float(res.cfg.points[i].theta.value)
        total += excised_model_area(th, e, res.scales.get(i, 0.0))
    total += excised_model_area(
        res.layout.inf_theta,
        1.0 / res.spec.half_width,
        res.scales.get(res.layout.inf_index, 0.0),
    )
    return total


def exponent_fit(res: SolveResult, point_index: int) -> float:
    """Least-squares singular exponent at a finite puncture.

    Cones: slope of log e^{2u} against log r over the annulus
    (rho/2, rho), with the model's bounded tail log(1 - (r/c)^{2 theta})^2
    removed so the fit reads the pure power; expect 2 theta - 2.
    Cusps: slope of log(e^{2u} r^2) against log(-log(r/c)); expect -2.
    """
    entry = next((c for c in res.layout.cutoffs if c[0] == point_index), None)
    if entry is None:
        raise ValueError(f"point {point_index} is not a finite puncture")
    _, zp, rho = entry
    ax_r = np.abs(_grid_z(res) - zp)
    sel = (res.u.mask == INTERIOR) & (ax_r > rho / 2) & (ax_r < rho)
    if int(sel.sum()) < 24:
        raise ValueError("annulus under-resolved for an exponent fit")
    th = float(res.cfg.points[point_index].theta.value)
    s = float(res.scales.get(point_index, 0.0))
    lr = np.log(ax_r[sel])
    y = 2.0 * res.u.values[sel]
    if th > 0.0:
        y = y + 2.0 * np.log1p(-np.exp(2.0 * th * (lr - s)))
        x = lr
    else:
        y = y + 2.0 * lr
        x = np.log(-(lr - s))
    A = np.stack([x, np.ones_like(x)], axis=1)
    slope = float(np.linalg.lstsq(A, y, rcond=None)[0][0])
    return slope


def _grid_z(res: SolveResult) -> np.ndarray:
    ax = res.spec.axis()
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return X + 1j * Y


def geodesic_distance(
    res: SolveResult,
    i: int,
    j: int,
    mode: str = "segment",
    symmetric: bool = False,
) -> float:
    """Distance between marked points i and j in the solved metric.

    segment: integrates e^u along the straight segment (requires the caller
    to declare a reflection symmetry fixing it, which makes the segment a
    geodesic), completed by exact model lengths inside the excisions.
    graph: 8-neighbour shortest path, an upper bound.
    """
    if i == j:
        return 0.0
    cut = {c[0]: c for c in res.layout.cutoffs}
    if i not in cut or j not in cut:
        raise ValueError("geodesic endpoints must be finite marked points")
    zi, zj = cut[i][1], cut[j][1]
    eps = {k: e for (k, _, _), e in zip(
        res.layout.cutoffs, [e for e in res.spec.excision_radii if e is not None], strict=True
    )}
    th_i = float(res.cfg.points[i].theta.value)
    th_j = float(res.cfg.points[j].theta.value)
    if th_i == 0.0 or th_j == 0.0:
        raise ValueError("cusp endpoints sit at infinite distance")
    tail = model_radial_length(th_i, eps[i], res.scales.get(i, 0.0)) + model_radial_length(
        th_j, eps[j], res.scales.get(j, 0.0)
    )
    if mode == "segment":
        if not symmetric:
            raise ValueError(
                "segment mode needs a declared reflection symmetry fixing the segment"
            )
        from scipy.interpolate import RegularGridInterpolator

        ax = res.spec.axis()
        f = RegularGridInterpolator((ax, ax), res.u.values, method="linear")
        seg = zj - zi
        L = abs(seg)
        t0, t1 = eps[i] / L, 1.0 - eps[j] / L
        ts = np.linspace(t0, t1, 4001)
        pts = np.stack([(zi + ts * seg).real, (zi + ts * seg).imag], axis=1)
        vals = np.exp(f(pts))
        mid = float(np.trapezoid(vals, ts * L))
        return tail + mid
    if mode == "graph":
        return tail + _graph_distance(res, zi, zj, eps[i], eps[j])
    raise ValueError(f"unknown mode {mode!r}")


def _graph_distance(res, zi, zj, ei, ej) -> float:
    from scipy.sparse.csgraph import dijkstra

    Z = _grid_z(res)
    interior = res.u.mask == INTERIOR
    N = res.spec.resolution
    idx = -np.ones((N, N), dtype=np.int64)
    n = int(interior.sum())
    idx[interior] = np.arange(n)
    eu = np.exp(res.u.values)
    h = res.spec.spacing
    rows, cols, vals = [], [], []
    I, J = np.where(interior)
    for dI, dJ in ((1, 0), (0, 1), (1, 1), (1, -1)):
        In, Jn = I + dI, J + dJ
        ok = (In >= 0) & (In < N) & (Jn >= 0) & (Jn < N)
        src = idx[I[ok], J[ok]]
        dst = idx[In[ok], Jn[ok]]
        good = dst >= 0
        step = h * (np.sqrt(2.0) if dI != 0 and dJ != 0 else 1.0)
        w = step * 0.5 * (eu[I[ok], J[ok]][good] + eu[In[ok], Jn[ok]][good])
        rows.append(src[good])
        cols.append(dst[good])
        vals.append(w)
    Gm = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    src_node = _nearest_ring_node(Z, interior, idx, zi, ei)
    dst_node = _nearest_ring_node(Z, interior, idx, zj, ej)
    dist = dijkstra(Gm, directed=False, indices=[src_node])[0, dst_node]
    return float(dist)


def _nearest_ring_node(Z, interior, idx, zp, e) -> int:
    r = np.abs(Z - zp)
    cand = interior & (r >= e)
    masked = np.where(cand, r, np.inf)
    flat = int(np.argmin(masked))
    return int(idx.flat[flat])


def uniqueness_probe(
    cfg: Configuration,
    spec: GridSpec,
    init_a: np.ndarray | float = 0.0,
    init_b: np.ndarray | float = 0.3,
    tol: float = 1e-8,
    options: SolverOptions | None = None,
) -> float:
    """Solve twice from different initial corrections; returns
    sup |u_1 - u_2| over interior nodes."""
    N = spec.resolution
    va = np.broadcast_to(np.asarray(init_a, dtype=float), (N, N)).copy()
    vb = np.broadcast_to(np.asarray(init_b, dtype=float), (N, N)).copy()
    r1 = solve_hyperbolic(cfg, spec, tol=tol, options=options, initial_correction=va)
    r2 = solve_hyperbolic(cfg, spec, tol=tol, options=options, initial_correction=vb)
    inter = r1.u.mask == INTERIOR
    return float(np.max(np.abs(r1.u.values[inter] - r2.u.values[inter])))
