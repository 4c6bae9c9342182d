"""Command-line front end.

Subcommands: geom, eval, direct, green, solve, count, cost, fit, sweep.
All outputs are JSON (CSV for sweep grids); measured times live under a
top-level "timings" key so byte-level determinism checks can exclude
them.  Exit codes: 0 success, 1 argument/validation error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import costmodel, geometry
from .driver import (EvalParams, Mode, UnsupportedModeError, evaluate,
                     greens_identity_residual, solve_exterior_neumann)
from .expansion import ExpansionOrders
from .kernels import Equation, KernelSpec, Variant, direct_sum
from .tree import TreeParams

_VARIANTS = {"s": Variant.SINGLE_LAYER, "sprime": Variant.TARGET_NORMAL_DERIV,
             "d": Variant.SOURCE_NORMAL_DERIV}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _add_eval_args(p, with_mode=True):
    p.add_argument("--geometry", required=True, help="geometry JSON file")
    p.add_argument("--kernel", choices=["laplace", "helmholtz"],
                   default="laplace")
    p.add_argument("--k", type=float, default=None,
                   help="Helmholtz wavenumber")
    p.add_argument("--variant", choices=["s", "sprime", "d"], default="s")
    p.add_argument("--pqbx", type=int, default=5)
    p.add_argument("--pfmm", type=int, default=15)
    p.add_argument("--nmax", type=int, default=128)
    p.add_argument("--nmpole", type=str, default="0",
                   help="multipole source-count threshold (or 'inf')")
    p.add_argument("--tf", type=float, default=0.9,
                   help="target confinement factor")
    if with_mode:
        p.add_argument("--mode", choices=["base", "ts", "direct"],
                       default="ts")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output JSON path")


def _parse_nmpole(text):
    if text in ("inf", "Inf", "INF"):
        return math.inf
    return float(text)


def _spec_from(args):
    if args.kernel == "helmholtz":
        if args.k is None:
            raise ValueError("--k is required with --kernel helmholtz")
        return KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=args.k,
                          variant=_VARIANTS[args.variant])
    if args.k is not None:
        raise ValueError("--k is only valid with --kernel helmholtz")
    return KernelSpec(variant=_VARIANTS[args.variant])


def _params_from(args, mode=None):
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("GIGAQBX_THREADS", "1"))
    mode = mode if mode is not None else Mode(args.mode)
    return EvalParams(
        orders=ExpansionOrders(p_qbx=args.pqbx, p_fmm=args.pfmm),
        tree=TreeParams(nmax=args.nmax, t_f=args.tf),
        nmpole=_parse_nmpole(args.nmpole),
        mode=mode,
        spec=_spec_from(args),
        threads=threads,
    )


def _load_geometry(args):
    disc, centers = geometry.load_geometry(args.geometry)
    if centers is None:
        centers = geometry.place_qbx_centers(disc, +1, 0.5)
    return disc, centers


def _density(args, disc):
    if args.density == "const":
        return np.ones(disc.n_nodes)
    rng = np.random.default_rng(args.seed)
    return rng.normal(size=disc.n_nodes)


def _complex_list(values):
    return [[format(v.real, ".17g"), format(v.imag, ".17g")] for v in values]


def _emit(doc, out):
    text = json.dumps(doc, sort_keys=True, indent=1)
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _cmd_geom(args):
    if args.shape == "sphere":
        disc = geometry.make_sphere(args.radius, args.refine, args.quad_order,
                                    target_order=args.target_order)
    elif args.shape == "urchin":
        disc = geometry.make_urchin(args.shape_k, args.refine, args.quad_order,
                                    target_order=args.target_order)
    elif args.shape == "torus-grid":
        disc = geometry.make_torus_grid(args.shape_k, args.refine,
                                        args.quad_order,
                                        target_order=args.target_order)
    else:
        raise ValueError(f"unknown shape {args.shape}")
    side = +1 if args.side == "exterior" else -1
    centers = geometry.place_qbx_centers(disc, side, args.alpha)
    geometry.save_geometry(args.out, disc, centers)
    return 0


def _result_doc(args, params, res):
    return {
        "mode": params.mode.value,
        "kernel": params.spec.equation.value,
        "variant": params.spec.variant.value,
        "p_qbx": params.orders.p_qbx,
        "p_fmm": params.orders.p_fmm,
        "nmax": params.tree.nmax,
        "nmpole": ("inf" if math.isinf(params.nmpole) else params.nmpole),
        "tf": params.tree.t_f,
        "qbx_values": _complex_list(res.qbx_values),
        "counts": dict(res.interaction_counts)
        if isinstance(res.interaction_counts, dict)
        else res.interaction_counts.asdict(),
        "timings": res.stage_timings,
    }


def _cmd_eval(args, mode=None):
    disc, centers = _load_geometry(args)
    params = _params_from(args, mode=mode)
    dens = _density(args, disc)
    res = evaluate(disc, centers, dens, params)
    _emit(_result_doc(args, params, res), args.out)
    return 0


def _cmd_green(args):
    disc, centers = _load_geometry(args)
    params = _params_from(args)
    field = "PointChargeInside" if centers.side > 0 else "PointChargeOutside"
    resid = greens_identity_residual(disc, centers, params, field)
    _emit({
        "residual": resid,
        "test_field": field,
        "mode": params.mode.value,
        "p_qbx": params.orders.p_qbx,
        "p_fmm": params.orders.p_fmm,
        "timings": {},
    }, args.out)
    return 0


def _cmd_solve(args):
    disc, _ = _load_geometry(args)
    params = _params_from(args)
    from .driver import _interior_point

    x0 = _interior_point(disc)
    g = direct_sum(
        KernelSpec(variant=Variant.TARGET_NORMAL_DERIV),
        x0[None, :], np.ones(1, dtype=np.complex128), disc.target_nodes,
        target_normals=disc.target_normals).real
    mu, info = solve_exterior_neumann(disc, params, g, rtol=args.rtol)

    # reconstruction check at exterior probe points
    centroid = disc.nodes.mean(axis=0)
    rmax = np.linalg.norm(disc.nodes - centroid, axis=1).max()
    rng = np.random.default_rng(args.seed)
    dirs = rng.normal(size=(16, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    probes = centroid + dirs * (2.0 * rmax)
    u_num = direct_sum(KernelSpec(), disc.nodes,
                       (disc.weights * mu).astype(np.complex128), probes).real
    u_ref = direct_sum(KernelSpec(), x0[None, :],
                       np.ones(1, dtype=np.complex128), probes).real
    rel = float(np.max(np.abs(u_num - u_ref)) / np.max(np.abs(u_ref)))
    _emit({
        "mu": [format(v, ".17g") for v in mu],
        "gmres_applications": info["n_apply"],
        "exterior_rel_error": rel,
        "rtol": args.rtol,
        "timings": {},
    }, args.out)
    return 0


def _cmd_count(args):
    disc, centers = _load_geometry(args)
    params = _params_from(args, mode=Mode.TARGET_SPECIFIC
                          if args.mode != "base" else Mode.BASELINE)
    from .ilists import compute_lists
    from .tree import build_tree

    tree = build_tree(disc.nodes, np.zeros((0, 3)), centers.centers,
                      centers.radii, params.tree)
    lists = compute_lists(tree, params.nmpole)
    counts = costmodel.count_interactions(
        tree, lists, "ts" if params.mode is Mode.TARGET_SPECIFIC else "base")
    if args.dump_tree:
        with open(args.dump_tree, "w") as f:
            tree.dump(f)
    doc = lists.pair_counts(tree)
    doc["counts"] = counts.asdict()
    doc["n_boxes"] = tree.n_boxes
    doc["n_levels"] = tree.n_levels
    doc["timings"] = {}
    _emit(doc, args.out)
    return 0


def _load_constants(path):
    if path is None:
        return costmodel.CalibrationConstants.reference()
    with open(path) as f:
        doc = json.load(f)
    if "constants" in doc:
        doc = doc["constants"]
    return costmodel.CalibrationConstants(
        **{k: float(doc[k]) for k in costmodel.REFERENCE_CONSTANTS})


def _cmd_cost(args):
    disc, centers = _load_geometry(args)
    params = _params_from(args, mode=Mode.TARGET_SPECIFIC
                          if args.mode != "base" else Mode.BASELINE)
    from .ilists import compute_lists
    from .tree import build_tree

    tree = build_tree(disc.nodes, np.zeros((0, 3)), centers.centers,
                      centers.radii, params.tree)
    lists = compute_lists(tree, params.nmpole)
    counts = costmodel.count_interactions(
        tree, lists, "ts" if params.mode is Mode.TARGET_SPECIFIC else "base")
    constants = _load_constants(args.constants)
    report = costmodel.modeled_time(counts, params.orders, constants)
    doc = report.asdict()
    doc["mc_statistic"] = costmodel.mc_statistic(
        centers.centers, centers.radii, disc.nodes, params.tree.t_f)
    doc["nmpole_optimum"] = costmodel.nmpole_optimum(constants, params.orders)
    doc["timings"] = {}
    _emit(doc, args.out)
    return 0


def _cmd_fit(args):
    runs = []
    for path in args.runs:
        with open(path) as f:
            doc = json.load(f)
        counts = costmodel.InteractionCounts(**doc["counts"])
        runs.append((doc["timings"], counts))
    orders = ExpansionOrders(p_qbx=args.pqbx, p_fmm=args.pfmm)
    fit = costmodel.fit_constants(runs, orders)
    _emit({
        "constants": fit.constants.asdict(),
        "residual_norm": fit.residual_norm,
        "relative_residual": fit.relative_residual,
        "timings": {},
    }, args.out)
    return 0


def _cmd_sweep(args):
    disc, centers = _load_geometry(args)
    orders = ExpansionOrders(p_qbx=args.pqbx, p_fmm=args.pfmm)
    constants = _load_constants(args.constants)
    nmax_grid = [int(x) for x in args.nmax_grid.split(",")]
    nmpole_grid = [_parse_nmpole(x) for x in args.nmpole_grid.split(",")]
    result = costmodel.balance_sweep(
        disc.nodes, np.zeros((0, 3)), centers.centers, centers.radii,
        orders, nmax_grid, nmpole_grid, constants,
        mode=("ts" if args.mode != "base" else "base"), t_f=args.tf)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            csv.writer(f).writerows(result.rows())
    _emit({
        "best_nmax": result.best.nmax,
        "best_nmpole": ("inf" if math.isinf(result.best.nmpole)
                        else result.best.nmpole),
        "best_total": result.best.report.total,
        "n_points": len(result.points),
        "timings": {},
    }, args.out)
    return 0


def build_parser():
    top = _Parser(prog="gigaqbx")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geom", help="generate a geometry file")
    p.add_argument("--shape", choices=["sphere", "urchin", "torus-grid"],
                   required=True)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--shape-k", type=int, default=2,
                   help="urchin index or torus grid half-count")
    p.add_argument("--refine", type=int, default=1)
    p.add_argument("--quad-order", type=int, default=6)
    p.add_argument("--target-order", type=int, default=2,
                   help="degree of the per-element on-surface target lattice")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="expansion radius as a fraction of element size")
    p.add_argument("--side", choices=["exterior", "interior"],
                   default="exterior")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_geom)

    p = sub.add_parser("eval", help="evaluate a layer potential")
    _add_eval_args(p)
    p.add_argument("--density", choices=["const", "random"], default="const")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("direct", help="global-QBX reference evaluation")
    _add_eval_args(p, with_mode=False)
    p.add_argument("--density", choices=["const", "random"], default="const")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=lambda a: _cmd_eval(a, mode=Mode.DIRECT_REFERENCE))

    p = sub.add_parser("green", help="Green's identity residual")
    _add_eval_args(p)
    p.set_defaults(func=_cmd_green)

    p = sub.add_parser("solve", help="exterior Neumann solve (Laplace)")
    _add_eval_args(p)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("count", help="interaction-list pair counts")
    _add_eval_args(p)
    p.add_argument("--dump-tree", default=None, help="write a tree dump here")
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("cost", help="modeled process time")
    _add_eval_args(p)
    p.add_argument("--constants", default=None,
                   help="JSON file with calibration constants")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("fit", help="fit calibration constants")
    p.add_argument("--runs", nargs="+", required=True,
                   help="eval output JSON files with timings and counts")
    p.add_argument("--pqbx", type=int, default=5)
    p.add_argument("--pfmm", type=int, default=15)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sweep", help="nmax/nmpole balance sweep")
    _add_eval_args(p)
    p.add_argument("--nmax-grid", required=True,
                   help="comma-separated nmax values")
    p.add_argument("--nmpole-grid", required=True,
                   help="comma-separated nmpole values ('inf' allowed)")
    p.add_argument("--constants", default=None)
    p.add_argument("--csv", default=None, help="write the sweep grid here")
    p.set_defaults(func=_cmd_sweep)

    return top


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, UnsupportedModeError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (RuntimeError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
