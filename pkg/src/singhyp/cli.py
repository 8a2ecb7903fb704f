"""Command-line interface.

Subcommands: check (exact bundle/stability report), models (local-model
residual tables), solve (hyperbolic metric on a config), deform (ray sweeps
of quadratic-differential deformations), sweep (deform over all basis
directions).  Exit codes: 0 success, 2 parse error, 3 inadmissible or
unsupported, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .bundle import (
    PHI0,
    TwistVariant,
    build_parabolic,
    filtration_jumps,
    norm_exponent,
    parabolic_degrees,
    pole_bounds,
    quad_diff_space_degree,
    quad_diff_space_dim,
    stability,
)
from .exact import format_rational, is_infinity
from .grids import INTERIOR, default_grid_spec
from .gridio import GridDump, write_grid_csv, write_grid_dump
from .models import self_duality_residual
from .solver import (
    ConvergenceError,
    SolverOptions,
    area_integral,
    exponent_fit,
    solve_hyperbolic,
    uniqueness_probe,
)
from .surfaces import (
    Configuration,
    InadmissibleError,
    admissible,
    divisors,
    gauss_bonnet_area,
    load_configuration_file,
    mobius_normalize,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_UNSUPPORTED = 3
EXIT_NO_CONVERGENCE = 4


def _manifest(args, config_path: str | None) -> dict:
    out = {
        "command": " ".join(sys.argv[1:]),
        "tool_version": __version__,
    }
    if config_path:
        out["config_path"] = str(config_path)
        try:
            with open(config_path, "rb") as fh:
                out["config_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        except OSError:
            pass
    for key in ("resolution", "half_width", "tol", "seed", "eps_cells"):
        if hasattr(args, key) and getattr(args, key) is not None:
            out[key] = getattr(args, key)
    return out


def _emit(doc: dict, path: str | None):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_config(path: str) -> Configuration:
    try:
        return load_configuration_file(path)
    except OSError as e:
        raise SystemExit(_fail(EXIT_PARSE, f"cannot read config: {e}"))
    except ValueError as e:
        raise SystemExit(_fail(EXIT_PARSE, f"config error: {e}"))


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _rational(x: Fraction) -> str:
    return format_rational(x)


# ---------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    ok, margin = admissible(cfg)
    dset = divisors(cfg)
    report: dict = {
        "manifest": _manifest(args, args.config),
        "genus": cfg.genus,
        "m": cfg.m,
        "euler_characteristic": cfg.euler_characteristic(),
        "admissible": ok,
        "gauss_bonnet_margin": _rational(margin),
        "divisors": {
            "D": [_rational(c) for c in dset.d.coefficients],
            "Dt": [_rational(c) for c in dset.d_tilde.coefficients],
            "Dhat": [_rational(c) for c in dset.d_hat.coefficients],
            "D0": [_rational(c) for c in dset.d0.coefficients],
            "D1": [_rational(c) for c in dset.d1.coefficients],
            "D2": [_rational(c) for c in dset.d2.coefficients],
            "D3": [_rational(c) for c in dset.d3.coefficients],
            "D4": [_rational(c) for c in dset.d4.coefficients],
        },
    }
    rep = stability(cfg, PHI0)
    report["stability"] = {
        "verdict": rep.verdict.value,
        "certificate": rep.certificate,
        "deg_E0": rep.deg_e0,
        "parabolic_degree": _rational(rep.parabolic_deg),
        "subbundle_parabolic_degree": _rational(rep.sub_parabolic_deg),
        "slope": _rational(rep.slope),
        "subbundle_slope": _rational(rep.sub_slope),
        "stability_margin": _rational(rep.margin),
    }
    weights = []
    for i, p in enumerate(cfg.points):
        j1, j2 = filtration_jumps(p.theta)
        weights.append(
            {
                "point": i,
                "theta": _rational(p.theta.value),
                "flag": "trivial" if p.theta.frac == 0 else "full",
                "weights": [_rational(j1)] if p.theta.frac == 0 else [_rational(j1), _rational(j2)],
            }
        )
    report["parabolic_weights"] = weights
    if ok:
        # present even when inadmissible? degrees need no admissibility, but
        # the flag table above already covers the exact data; keep twist
        # table unconditional
        pass
    twists = []
    for variant in TwistVariant:
        deg = quad_diff_space_degree(cfg, variant)
        dim, exact = quad_diff_space_dim(cfg, variant)
        bounds = pole_bounds(cfg, variant)
        exps = []
        for i, p in enumerate(cfg.points):
            e, cls = norm_exponent(p.theta, bounds[i])
            exps.append({"point": i, "pole_bound": bounds[i], "exponent": _rational(e), "class": cls})
        twists.append(
            {
                "variant": variant.value,
                "degree": deg,
                "dimension": dim,
                "dimension_exact": exact,
                "norm_exponents": exps,
            }
        )
    report["twist_spaces"] = twists
    _emit(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# models

def cmd_models(args) -> int:
    try:
        thetas = [Fraction(t) for t in args.theta]
    except ValueError as e:
        return _fail(EXIT_PARSE, f"bad theta: {e}")
    rs = np.linspace(args.rmin, args.rmax, args.samples)
    lines = ["theta,c,r,res11,res22"]
    for th in thetas:
        for c in args.c:
            for r in rs:
                res = self_duality_residual(float(th), float(r), float(c))
                lines.append(f"{format_rational(th)},{c!r},{r!r},{res[0,0]!r},{res[1,1]!r}")
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve

def _normalized(cfg: Configuration) -> Configuration:
    if cfg.infinity_index() is not None:
        return cfg
    if cfg.genus == 0 and cfg.m >= 3:
        cfg2, _ = mobius_normalize(cfg)
        return cfg2
    return cfg


def _grid_spec(cfg, args):
    return default_grid_spec(
        cfg,
        resolution=args.resolution,
        half_width=args.half_width,
        eps_cells=args.eps_cells,
    )


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    ok, margin = admissible(cfg)
    if not ok:
        rep = stability(cfg, PHI0)
        return _fail(
            EXIT_UNSUPPORTED,
            f"inadmissible configuration (verdict {rep.verdict.value}, "
            f"margin {format_rational(margin)}); no hyperbolic metric exists",
        )
    cfg = _normalized(cfg)
    if cfg.infinity_index() is None:
        return _fail(EXIT_UNSUPPORTED, "unsupported chart layout: cannot place a point at infinity")
    try:
        spec = _grid_spec(cfg, args)
        opts = SolverOptions(tol=args.tol, linear_solver=args.linear_solver)
        res = solve_hyperbolic(cfg, spec, tol=args.tol, options=opts)
    except ConvergenceError as e:
        doc = {"error": str(e), "residual_history": e.history}
        _emit(doc, args.diagnostics)
        return EXIT_NO_CONVERGENCE
    except (ValueError, InadmissibleError) as e:
        return _fail(EXIT_UNSUPPORTED, str(e))

    diag = {
        "manifest": _manifest(args, args.config),
        "area": res.diagnostics.area,
        "gauss_bonnet_area": res.diagnostics.gb_area,
        "area_relative_error": (res.diagnostics.area - res.diagnostics.gb_area)
        / res.diagnostics.gb_area,
        "final_residual": res.final_residual,
        "newton_iterations": res.iterations,
        "scale_rounds": res.diagnostics.scale_rounds,
        "model_log_scales": {str(k): v for k, v in res.scales.items()},
        "background": res.background,
        "exponent_fits": {},
    }
    for i, p in enumerate(cfg.points):
        if is_infinity(p.position):
            continue
        try:
            slope = exponent_fit(res, i)
        except ValueError:
            continue
        target = -2.0 if p.theta.is_cusp else 2.0 * float(p.theta.value) - 2.0
        diag["exponent_fits"][str(i)] = {"fit": slope, "target": target}
    if args.probe_uniqueness:
        diag["uniqueness_sup_diff"] = uniqueness_probe(cfg, spec, 0.0, 0.3, tol=args.tol)
    if args.out_grid:
        punctures = []
        for p, e in zip(cfg.points, spec.excision_radii):
            if is_infinity(p.position):
                punctures.append((np.inf, np.inf, float(p.theta.value), np.nan))
            else:
                z = complex(p.position.re, p.position.im)
                punctures.append((z.real, z.imag, float(p.theta.value), e))
        write_grid_dump(
            args.out_grid,
            GridDump(spec.half_width, tuple(punctures), (res.u.values,)),
        )
        diag["grid_dump"] = args.out_grid
    if args.out_csv:
        write_grid_csv(args.out_csv, spec.axis(), res.u.values)
        diag["csv"] = args.out_csv
    _emit(diag, args.diagnostics)
    return EXIT_OK


# ---------------------------------------------------------------------------
# deform / sweep

def cmd_deform(args, all_directions: bool = False) -> int:
    from .deform import basis, sweep_ray

    cfg = _load_config(args.config)
    ok, margin = admissible(cfg)
    if not ok:
        return _fail(EXIT_UNSUPPORTED, f"inadmissible configuration (margin {format_rational(margin)})")
    cfg = _normalized(cfg)
    if cfg.infinity_index() is None:
        return _fail(EXIT_UNSUPPORTED, "unsupported chart layout: cannot place a point at infinity")
    try:
        variant = TwistVariant.parse(args.variant)
    except ValueError as e:
        return _fail(EXIT_PARSE, str(e))
    dirs = basis(cfg, variant)
    if not dirs:
        doc = {
            "manifest": _manifest(args, args.config),
            "variant": variant.value,
            "outcome": "deformation space is trivial",
            "dimension": 0,
        }
        _emit(doc, args.out)
        return EXIT_OK
    if all_directions:
        wanted = list(range(len(dirs)))
    else:
        j = args.direction
        if j < 0 or j >= len(dirs):
            return _fail(
                EXIT_PARSE,
                f"direction index {j} out of range; basis has {len(dirs)} element(s)",
            )
        wanted = [j]
    try:
        spec = _grid_spec(cfg, args)
    except ValueError as e:
        return _fail(EXIT_UNSUPPORTED, str(e))
    opts = SolverOptions(tol=args.tol, linear_solver=args.linear_solver)
    sweeps = []
    for j in wanted:
        try:
            sw = sweep_ray(
                cfg,
                spec,
                dirs[j],
                t_max=args.tmax,
                steps=args.steps,
                tol=args.tol,
                options=opts,
                variant=variant.value,
                direction_index=j,
            )
        except (ValueError, InadmissibleError) as e:
            return _fail(EXIT_UNSUPPORTED, str(e))
        sweeps.append(
            {
                "direction": j,
                "t_star": sw.t_star,
                "samples": [
                    {
                        "t": s.t,
                        "converged": s.converged,
                        "sup_rho": s.sup_rho,
                        "beltrami_sup": s.beltrami_sup,
                        "curvature_residual": s.curvature_residual,
                        "area": s.area,
                    }
                    for s in sw.samples
                ],
            }
        )
    doc = {
        "manifest": _manifest(args, args.config),
        "variant": variant.value,
        "dimension": len(dirs),
        "sweeps": sweeps,
    }
    if args.dump_metric and not all_directions:
        from .deform import assemble_metric, solve_deformed

        t = args.t if args.t is not None else sweeps[0]["t_star"]
        res = solve_deformed(cfg, spec, dirs[wanted[0]], t, tol=args.tol, options=opts)
        M = assemble_metric(dirs[wanted[0]], res, t)
        punctures = []
        for p, e in zip(cfg.points, spec.excision_radii):
            if is_infinity(p.position):
                punctures.append((np.inf, np.inf, float(p.theta.value), np.nan))
            else:
                z = complex(p.position.re, p.position.im)
                punctures.append((z.real, z.imag, float(p.theta.value), e))
        write_grid_dump(
            args.dump_metric,
            GridDump(
                spec.half_width,
                tuple(punctures),
                (M.E.values, M.F.values, M.G.values),
            ),
        )
        doc["metric_dump"] = {"path": args.dump_metric, "t": t, "fields": ["E", "F", "G"]}
    _emit(doc, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="singhyp",
        description="Singular hyperbolic metrics on the marked sphere: exact "
        "parabolic-Higgs stability checks and a grafted Liouville solver.",
    )
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread budget (best effort)")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="exact stability and twist-space report")
    c.add_argument("config")
    c.add_argument("--out", default=None, help="write JSON here instead of stdout")
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("models", help="local-model self-duality residual table (CSV)")
    m.add_argument("--theta", action="append", required=True, help="repeatable; rational like 3/10")
    m.add_argument("--c", action="append", type=float, default=None)
    m.add_argument("--rmin", type=float, default=0.05)
    m.add_argument("--rmax", type=float, default=0.9)
    m.add_argument("--samples", type=int, default=18)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_models)

    def add_grid_flags(p):
        p.add_argument("--resolution", type=int, default=512)
        p.add_argument("--half-width", dest="half_width", type=float, default=None)
        p.add_argument("--eps-cells", dest="eps_cells", type=float, default=4.0)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--linear-solver", choices=("auto", "splu", "amg"), default="auto")

    s = sub.add_parser("solve", help="solve the singular hyperbolic metric")
    s.add_argument("config")
    add_grid_flags(s)
    s.add_argument("--out-grid", default=None, help="HYPGRID1 dump of u")
    s.add_argument("--out-csv", default=None)
    s.add_argument("--diagnostics", default=None, help="JSON diagnostics path (default stdout)")
    s.add_argument("--probe-uniqueness", action="store_true")
    s.set_defaults(func=cmd_solve)

    def add_deform_flags(p):
        p.add_argument("config")
        p.add_argument("--variant", default=TwistVariant.VANISHING.value)
        add_grid_flags(p)
        p.add_argument("--tmax", type=float, default=1.0)
        p.add_argument("--steps", type=int, default=5)
        p.add_argument("--t", type=float, default=None, help="metric dump scale (deform only)")
        p.add_argument("--out", default=None)
        p.add_argument("--dump-metric", default=None, help="HYPGRID1 dump of E,F,G")

    d = sub.add_parser("deform", help="sweep one deformation direction")
    add_deform_flags(d)
    d.add_argument("--direction", type=int, default=0)
    d.set_defaults(func=lambda a: cmd_deform(a, all_directions=False))

    w = sub.add_parser("sweep", help="sweep every basis direction")
    add_deform_flags(w)
    w.set_defaults(func=lambda a: cmd_deform(a, all_directions=True))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if getattr(args, "c", None) is None and args.command == "models":
        args.c = [0.0, -0.5]
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
