"""Command line front end: ``arctic <command> [options]``.

Reports are JSON with a ``"format": 1`` field, bulk data is CSV and figures
are SVG.  Every file is written to a temporary name and renamed into place,
so a failed run leaves no partial output.  Progress goes to stderr.
"""
import argparse
import json
import math
import os
import sys
import tempfile
import time

from .errors import ArcticError

FORMAT = 1


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _atomic_write(path, writer):
    """Call writer(tmp_path) and rename the result onto ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _write_json(path, obj):
    def w(tmp):
        with open(tmp, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    _atomic_write(path, w)


def _write_text(path, text):
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    _atomic_write(path, w)


def _json_default(o):
    import numpy as np
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _parse_triple(text):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b,c integers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return tuple(vals)


def _parse_point(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,t floats, got {text!r}")
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return tuple(vals)


def _spec_from_args(args):
    """(PolygonSpec, n) from --hexagon or --domain (JSON file or inline JSON)."""
    from .lattice import hexagon_spec, parse_domain_json

    if getattr(args, "domain", None):
        text = args.domain
        if os.path.exists(text):
            with open(text) as fh:
                text = fh.read()
        spec, n = parse_domain_json(text)
        if getattr(args, "n", None):
            n = args.n
        return spec, n
    if getattr(args, "hexagon", None):
        return hexagon_spec(*args.hexagon), (args.n or 1)
    raise UsageError("give a domain with --hexagon a,b,c or --domain FILE|JSON")


class UsageError(ArcticError):
    exit_code = 1


def _rng(args):
    from .rng import RngStream
    return RngStream(args.seed)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _check_samples(N):
    if N is not None and N <= 0:
        raise UsageError("--samples must be positive")


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args):
    from .dynamics import budget_sample, flip_mixing_budget, run_flip_dynamics
    from .lattice import boundary_height, build_domain, extremal_heights
    from .tiling import height_to_tiling, render_tiling_svg

    spec, n = _spec_from_args(args)
    domain = build_domain(spec, n)
    bh = boundary_height(domain)
    lo, hi = extremal_heights(domain, bh)
    rng = _rng(args)
    out = _outdir(args)
    engine = args.engine
    steps = 0
    if engine == "exact":
        from .enumeration import exact_sample
        H = exact_sample(domain, bh, rng)
    elif engine == "cftp":
        from .dynamics import cftp_sample
        H = cftp_sample(domain, bh, rng).sample
    else:
        steps = flip_mixing_budget(domain, 0.01) if args.steps == "auto" else int(args.steps)
        if steps < 0:
            raise UsageError("--steps must be non-negative")
        if steps > args.max_steps:
            if args.steps != "auto":
                from .errors import CapacityError
                raise CapacityError(f"{steps} steps exceed --max-steps {args.max_steps}")
            # the budget only promises a sample within 1% of uniform; a
            # perfect sample is the same target reached exactly
            from .dynamics import cftp_sample
            _progress(f"sample: budget {steps} exceeds --max-steps, using coupling from the past")
            H = cftp_sample(domain, bh, rng).sample
            engine = "cftp"
        elif engine == "sweeps":
            H = budget_sample(domain, bh, sweeps=steps, rng=rng)
        else:
            _progress(f"sample: {steps} flip steps on {domain.num_vertices} vertices")
            H = run_flip_dynamics(hi, steps, rng)
    tiling = height_to_tiling(H, bh)
    _atomic_write(os.path.join(out, "height.csv"), H.to_csv)
    _write_text(os.path.join(out, "tiling.svg"), render_tiling_svg(tiling))
    meta = {"format": FORMAT, "command": "sample", "domain": spec.to_json(), "n": n,
            "engine": engine, "steps": steps, "seed": args.seed,
            "counts": list(tiling.counts())}
    _write_json(os.path.join(out, "run.json"), meta)
    print(json.dumps(meta, sort_keys=True))
    return 0


def cmd_count(args):
    from .enumeration import count_tilings
    from .lattice import build_domain

    spec, n = _spec_from_args(args)
    domain = build_domain(spec, n)
    print(count_tilings(domain, width_cap=args.width_cap))
    return 0


def cmd_limit_shape(args):
    from .lattice import build_domain
    from .limitshape import (extract_liquid_region, hausdorff_to_conic, hexagon_inscribed_ellipse,
                             solve_limit_shape, write_arctic_svg)

    spec, _ = _spec_from_args(args)
    if not args.mesh > 0:
        raise UsageError("--mesh must be positive")
    out = _outdir(args)
    t0 = time.time()
    Hc = solve_limit_shape(spec, args.mesh, tol=args.tol)
    _progress(f"limit-shape: solved in {time.time() - t0:.1f}s")
    conic = None
    report = {"format": FORMAT, "command": "limit-shape", "domain": spec.to_json(),
              "mesh": args.mesh, **Hc.to_json_meta()}
    if args.hexagon:
        conic = hexagon_inscribed_ellipse(*args.hexagon)
        lr = extract_liquid_region(Hc, args.liquid_tol)
        if lr.polylines:
            dist = max(hausdorff_to_conic(pl, conic) for pl in lr.polylines)
            report["hausdorff_cells"] = dist / args.mesh
            _progress(f"limit-shape: ellipse overlay residual {dist / args.mesh:.3f} mesh cells")
    _atomic_write(os.path.join(out, "limit_shape.csv"), Hc.to_csv)
    _atomic_write(os.path.join(out, "arctic.svg"),
                  lambda p: write_arctic_svg(Hc, p, conic=conic, tol=args.liquid_tol))
    _write_json(os.path.join(out, "limit_shape.json"), report)
    print(json.dumps(report, sort_keys=True, default=_json_default))
    return 0


def slope_check_suite(hexagon=(1, 1, 1), mesh=1 / 32, alpha=1.01, field_source="solver", progress=None):
    """The slope-module checks on the hexagon in one pass, as a JSON-ready dict."""
    import numpy as np
    from scipy.optimize import brentq

    from .lattice import hexagon_spec
    from .limitshape import HexagonOracle, curvature_params, solve_limit_shape
    from .slope import (burgers_residual, complex_slope_field, conic_parametrization,
                        deformed_endpoint_check, derivative_identity_check, field_from_function,
                        interior_log_perturbation_check, jet_q0prime, lqq_check,
                        ratio_identity_residual, reconstruct_q0_jets,
                        sampled_q0prime)

    a, b, c = hexagon
    oracle = HexagonOracle(a, b, c)
    if field_source == "solver":
        Hc = solve_limit_shape(hexagon_spec(a, b, c), mesh)
        field = complex_slope_field(Hc)
    elif field_source == "oracle":
        nx = int(round((a + c) / mesh)) + 1
        ny = int(round((b + c) / mesh)) + 1
        mask = np.ones((nx, ny), dtype=bool)
        field = field_from_function(oracle.f, mask, mesh)
    else:
        raise UsageError(f"unknown field source {field_source!r}")
    if not field.mask.any():
        from .errors import InfeasibleError
        raise InfeasibleError("the slope field is empty (no liquid region)")
    if progress:
        progress("slope-checks: field ready")
    br = burgers_residual(field)
    ratio_res, ratio_mask = ratio_identity_residual(field)
    P = conic_parametrization(oracle.conic)
    thetas = np.linspace(0, 2 * np.pi, 17)[:-1] + 0.1
    jets, lqq = [], []
    for th in thetas:
        try:
            jet = reconstruct_q0_jets(P, [th])[0]
            cp = curvature_params(oracle.conic, jet.point)
        except ArcticError:
            continue
        jets.append(jet)
        rl, rq = lqq_check(jet.point, jet, cp)
        lqq.append({"point": list(jet.point), "rel_l": rl, "rel_q": rq})
    x0 = oracle.conic.x_on_row(oracle.center[1])[1]
    t0 = float(oracle.center[1])
    th0 = brentq(lambda th: P(th)[1] - t0, -1.0, -1e-3)
    right = reconstruct_q0_jets(P, [th0])[0]
    ends = []
    for k, da in enumerate((alpha - 1.0, (alpha - 1.0) / 2)):
        r = deformed_endpoint_check(right.point, right, 1.0 + da)
        ends.append({"alpha": r.alpha, "predicted": r.predicted, "solved": r.solved,
                     "residual": r.residual})
    ratio_endpoint = (ends[0]["residual"] / ends[1]["residual"]) if ends[1]["residual"] > 0 else None
    logs = []
    for d in (0.05, 0.2):
        x, t = right.point[0] - d, right.point[1]
        u = complex(oracle.f(x, t))
        for _ in range(50):
            u -= (right.model(u) - x * (u + 1) + t * u) / (right.model_d1(u) - x + t)
        r = interior_log_perturbation_check(right, (x, t), u, alpha)
        logs.append({"depth": d, "alpha": alpha, "relative_residual": r.relative_residual,
                     "bound": abs(alpha - 1) / d + math.sqrt(abs(alpha - 1))})
    rx, rt = derivative_identity_check(field, jet_q0prime(jets)) if jets else (np.array([]), np.array([]))
    from scipy import ndimage
    dist = ndimage.distance_transform_edt(np.pad(field.mask, 1))[1:-1, 1:-1]
    sx, st = derivative_identity_check(field, sampled_q0prime(field), band=dist >= 10)
    return {
        "format": FORMAT, "hexagon": list(hexagon), "mesh": mesh, "field": field_source,
        "right_point": [x0, t0],
        "burgers": br.to_json(), "ratio_identity_median": float(np.median(ratio_res[ratio_mask])),
        "lqq": lqq, "lqq_max": max(max(r["rel_l"], r["rel_q"]) for r in lqq) if lqq else None,
        "endpoint": ends, "endpoint_halving_ratio": ratio_endpoint,
        "log_perturbation": logs,
        "derivative_identity_median": [float(np.median(rx)) if len(rx) else None,
                                       float(np.median(rt)) if len(rt) else None],
        "derivative_identity_sampled": {
            "cells": int(len(sx)), "min_depth_cells": 10,
            "median": [float(np.median(sx)) if len(sx) else None, float(np.median(st)) if len(st) else None]},
    }


def cmd_slope_checks(args):
    out = _outdir(args)
    rep = slope_check_suite(tuple(args.hexagon or (1, 1, 1)), args.mesh, args.alpha, args.field,
                            progress=_progress)
    _write_json(os.path.join(out, "slope_checks.json"), rep)
    print(json.dumps(rep, sort_keys=True, default=_json_default))
    return 0


def cmd_edge_stats(args):
    from .edge import edge_statistics_experiment, quadratic_barrier_experiment

    _check_samples(args.samples)
    out = _outdir(args)
    rng = _rng(args)
    if args.barrier:
        l, q = args.barrier
        rep = quadratic_barrier_experiment(l, q, args.n, args.samples, rng)
    else:
        hexagon = tuple(args.hexagon or (1, 1, 1))
        point = args.point
        if point is None:
            from .limitshape import HexagonOracle
            o = HexagonOracle(*hexagon)
            t = float(o.center[1])
            point = (o.conic.x_on_row(t)[1], t)
        rep = edge_statistics_experiment(hexagon, args.n, args.samples, point, rng, engine=args.engine,
                                         times=tuple(args.times), threads=args.threads,
                                         progress=_progress)
    js = rep.to_json()
    js["seed"] = args.seed
    _atomic_write(os.path.join(out, "edge_samples.csv"), rep.to_csv)
    _write_text(os.path.join(out, "edge_hist.svg"), _histogram_svg(rep.X1, rep.cell_width))
    _write_json(os.path.join(out, "edge_stats.json"), js)
    print(json.dumps(js, sort_keys=True, default=_json_default))
    return 0


def _histogram_svg(samples, width, lo=-6.0, hi=3.0, scale=60.0):
    """Cell-spread histogram of rescaled samples with the TW-GUE density on top."""
    import numpy as np

    from .edge import tw_gue_pdf

    bins = np.arange(lo, hi + 1e-9, 0.25)
    x = np.asarray(samples, dtype=float)
    # each sample is spread uniformly over [x, x + width]
    grid = np.linspace(lo, hi, 721)
    dens = np.zeros_like(grid)
    for v in x:
        dens += ((grid >= v) & (grid < v + width)) / width
    dens /= max(1, len(x))
    hist = [dens[(grid >= a) & (grid < b)].mean() for a, b in zip(bins[:-1], bins[1:])]
    H = 200.0
    parts = []
    for a, h in zip(bins[:-1], hist):
        parts.append(f'<rect x="{(a - lo) * scale:.1f}" y="{H - h * 400:.1f}" width="{0.25 * scale:.1f}" '
                     f'height="{h * 400:.1f}" fill="#9fb6d9" stroke="#3b5b92"/>')
    pdf = tw_gue_pdf(grid)
    pts = " ".join(f"{(g - lo) * scale:.1f},{H - p * 400:.1f}" for g, p in zip(grid, pdf))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    w = (hi - lo) * scale
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{H + 10:.0f}" '
            f'viewBox="0 0 {w:.0f} {H + 10:.0f}">\n' + "\n".join(parts) + "\n</svg>\n")


def cmd_concentration(args):
    import csv

    from .edge import concentration_experiment

    _check_samples(args.samples)
    spec, _ = _spec_from_args(args)
    out = _outdir(args)
    rep = concentration_experiment(spec, args.ns, args.samples, args.delta, _rng(args),
                                   threads=args.threads, engine=args.engine, progress=_progress)
    js = rep.to_json()
    js["seed"] = args.seed

    def w(tmp):
        with open(tmp, "w", newline="") as fh:
            fh.write("# format: 1\n")
            wr = csv.writer(fh)
            wr.writerow(["n", "sample", "sup_deviation"])
            for n in rep.ns:
                for k, v in enumerate(rep.deviations[n]):
                    wr.writerow([n, k, repr(float(v))])
    _atomic_write(os.path.join(out, "concentration.csv"), w)
    _write_json(os.path.join(out, "concentration.json"), js)
    print(json.dumps(js, sort_keys=True, default=_json_default))
    return 0


def cmd_mix_check(args):
    from .dynamics import stationarity_check
    from .lattice import build_domain

    _check_samples(args.samples)
    spec, n = _spec_from_args(args)
    domain = build_domain(spec, n)
    out = _outdir(args)
    reports = []
    for dyn in args.dynamics:
        _progress(f"mix-check: {dyn}")
        rep = stationarity_check(domain, dyn, args.samples, _rng(args).child(dyn.encode()[0]),
                                 budget_eps=args.budget_eps)
        reports.append(rep.to_json())
    js = {"format": FORMAT, "command": "mix-check", "domain": spec.to_json(), "n": n,
          "seed": args.seed, "runs": reports}
    _write_json(os.path.join(out, "mix_check.json"), js)
    print(json.dumps(js, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser


def _env_int(name, default):
    val = os.environ.get(name)
    if val is None or val == "":
        return default
    try:
        return int(val)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {val!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="arctic", description="Random lozenge tilings and their limits.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, domain=True):
        if domain:
            sp.add_argument("--hexagon", type=_parse_triple, help="hexagon side lengths a,b,c")
            sp.add_argument("--domain", help="domain JSON file or inline JSON")
        sp.add_argument("--n", type=int, default=None, help="scale factor")
        sp.add_argument("--seed", type=int, default=None, help="seed (default: $ARCTIC_SEED or 0)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: $ARCTIC_THREADS or 1)")
        sp.add_argument("--out", default=".", help="output directory")

    s = sub.add_parser("sample", help="sample a tiling")
    common(s)
    s.add_argument("--steps", default="auto", help="flip steps, or 'auto' for the mixing budget")
    s.add_argument("--engine", choices=("flip", "sweeps", "exact", "cftp"), default="flip")
    s.add_argument("--max-steps", type=int, default=10 ** 9,
                   help="largest flip budget run directly; larger auto budgets use coupling from the past")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("count", help="count tilings exactly")
    common(s)
    s.add_argument("--width-cap", type=int, default=20)
    s.set_defaults(func=cmd_count)

    s = sub.add_parser("limit-shape", help="solve the variational problem")
    common(s)
    s.add_argument("--mesh", type=float, default=1 / 64)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--liquid-tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_limit_shape)

    s = sub.add_parser("slope-checks", help="complex slope identities on the hexagon")
    common(s, domain=False)
    s.add_argument("--hexagon", type=_parse_triple, default=(1, 1, 1))
    s.add_argument("--mesh", type=float, default=1 / 32)
    s.add_argument("--alpha", type=float, default=1.01)
    s.add_argument("--field", choices=("solver", "oracle"), default="solver")
    s.set_defaults(func=cmd_slope_checks)

    s = sub.add_parser("edge-stats", help="top-walk statistics against Tracy-Widom")
    common(s, domain=False)
    s.add_argument("--hexagon", type=_parse_triple, default=None)
    s.add_argument("--point", type=_parse_point, default=None, help="arctic point x,t (default: right point)")
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--engine", choices=("walks", "slice", "cftp", "flip"), default="walks")
    s.add_argument("--times", type=float, nargs="+", default=[0.0])
    s.add_argument("--barrier", type=float, nargs=2, metavar=("L", "Q"), default=None,
                   help="run the quadratic-wall experiment with curvature parameters L Q instead")
    s.set_defaults(func=cmd_edge_stats)

    s = sub.add_parser("concentration", help="height concentration around n H*")
    common(s)
    s.add_argument("--ns", type=int, nargs="+", default=[16, 32, 64])
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--delta", type=float, default=0.3)
    s.add_argument("--engine", choices=("auto", "hexagon", "dp", "cftp"), default="auto")
    s.set_defaults(func=cmd_concentration)

    s = sub.add_parser("mix-check", help="stationarity of the dynamics after their budgets")
    common(s)
    s.add_argument("--dynamics", nargs="+", default=["flip", "region", "censored", "alternating"],
                   choices=("flip", "region", "censored", "alternating"))
    s.add_argument("--samples", type=int, default=100000)
    s.add_argument("--budget-eps", type=float, default=0.005)
    s.set_defaults(func=cmd_mix_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        if args.seed is None:
            args.seed = _env_int("ARCTIC_SEED", 0)
        if args.threads is None:
            args.threads = _env_int("ARCTIC_THREADS", 1)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if args.n is not None and args.n < 1:
            raise UsageError("--n must be positive")
        if getattr(args, "n", None) is None and args.command in ("edge-stats",):
            args.n = 48
        return args.func(args)
    except ArcticError as exc:
        print(f"arctic: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"arctic: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
