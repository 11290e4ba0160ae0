"""Command-line harness for the standard transfer experiments.

Subcommands generate meshes, run one-step and repeated transfers between
the icosphere/cubed-sphere ladder, sweep the cut-off radius ratio, dump
detector indicators, and sample great-circle traces. Results are written
as CSV (or JSON) with a JSON metadata sidecar so runs are reproducible
and machine readable. Exit status: 0 on success, 2 on configuration
errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import detector as det
from .errors import ConfigError, SurfremapError
from .fields import error_norms, convergence_rate, field_by_name, to_spherical
from .mesh import (
    cubed_sphere_for_level,
    gen_cubed_sphere,
    gen_icosphere,
    gen_planar_grid,
    global_edge_length,
    icosphere_for_level,
    save_mesh,
)
from .remap import LinearPlan, RemapConfig, build_plan, conservation_error, repeated_transfer
from .wls import WeightScheme, build_fit_rows, build_stencil

SCHEMA = "surfremap/v1"


def _write_records(path: Path, records: list[dict], fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(records, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        if not records:
            return
        writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(v) for k, v in rec.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)  # shortest digits that round-trip exactly
    return v


def _write_meta(out: Path, command: str, args: argparse.Namespace) -> None:
    meta = {
        "schema": SCHEMA,
        "version": __version__,
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
    }
    side = out.with_suffix(out.suffix + ".meta.json")
    with open(side, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _mesh_pair(source_level: int, target_level: int, reverse: bool = False):
    ico = icosphere_for_level(source_level if not reverse else target_level)
    cs = cubed_sphere_for_level(target_level if not reverse else source_level)
    return (cs, ico) if reverse else (ico, cs)


def _plan_for(method: str, source, target, args) -> LinearPlan:
    if method == "linear":
        return LinearPlan(source, target)
    cfg = RemapConfig(
        degree=args.degree,
        eno_degree=args.eno_degree,
        sigma=args.sigma,
        eno=(method == "wls-enor"),
    )
    return build_plan(source, target, cfg)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_mesh(args) -> int:
    if args.kind == "icosphere":
        mesh = gen_icosphere(args.level)
    elif args.kind == "cubed-sphere":
        mesh = gen_cubed_sphere(args.n)
    elif args.kind == "planar":
        mesh = gen_planar_grid(args.nx, args.ny, args.element_kind)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown mesh kind {args.kind}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, out)
    _write_meta(out, "gen-mesh", args)
    print(f"wrote {mesh.n_nodes} nodes, {mesh.n_elements} elements to {out}")
    return 0


def cmd_remap(args) -> int:
    field = field_by_name(args.field)
    source, target = _mesh_pair(args.source_level, args.target_level, args.reverse)
    plan = _plan_for(args.method, source, target, args)
    res = plan.apply(field(source.nodes))
    exact = field(target.nodes)
    l2, linf = error_norms(res.values, exact)
    theta, phi = to_spherical(target.nodes)
    records = [
        {
            "node": t,
            "theta": float(theta[t]),
            "phi": float(phi[t]),
            "value": float(res.values[t]),
            "exact": float(exact[t]),
            "marked": int(res.target_markers[t]),
        }
        for t in range(target.n_nodes)
    ]
    out = Path(args.out)
    _write_records(out, records, args.format)
    _write_meta(out, "remap", args)
    print(f"l2={l2:.6e} linf={linf:.6e} marked={int(res.target_markers.sum())}")
    return 0


def cmd_convergence(args) -> int:
    levels = args.levels
    if len(levels) < 2:
        raise ConfigError("convergence needs at least two levels")
    field = field_by_name(args.field)
    records = []
    for reverse in (False, True):
        direction = "cubed-to-ico" if reverse else "ico-to-cubed"
        prev = None
        for lvl in levels:
            source, target = _mesh_pair(lvl, lvl, reverse)
            plan = _plan_for(args.method, source, target, args)
            res = plan.apply(field(source.nodes))
            l2, linf = error_norms(res.values, field(target.nodes))
            rate = ""
            if prev is not None:
                rate = convergence_rate(prev[0], prev[1], l2, target.n_nodes)
            records.append(
                {
                    "direction": direction,
                    "level": lvl,
                    "n_source": source.n_nodes,
                    "n_target": target.n_nodes,
                    "l2": l2,
                    "linf": linf,
                    "rate": rate,
                }
            )
            prev = (l2, target.n_nodes)
    out = Path(args.out)
    _write_records(out, records, args.format)
    _write_meta(out, "convergence", args)
    for rec in records:
        print(
            f"{rec['direction']} L{rec['level']}: l2={rec['l2']:.6e}"
            + (f" rate={rec['rate']:.3f}" if rec["rate"] != "" else "")
        )
    return 0


def sigma_sweep(source, target, field, degrees, sigmas, include_inverse_distance=True):
    """Per-sigma l2 errors for each degree, reusing stencils across sigma.

    Returns {degree: (errors, id_error)}; id_error is None when not requested.
    """
    fs = field(source.nodes)
    ft = field(target.nodes)
    out = {}
    for p in degrees:
        stencils = []
        for t in range(target.n_nodes):
            st, _ = build_stencil(source, target.nodes[t], p)
            stencils.append(st)
        errs = []
        for sig in sigmas:
            scheme = WeightScheme("scaled-buhmann", sigma=float(sig))
            vals = np.empty(target.n_nodes)
            for t, st in enumerate(stencils):
                rows, _ = build_fit_rows(st, p, scheme, np.zeros((1, 2)), allow_drop=True)
                vals[t] = rows[0] @ fs[st.node_ids]
            errs.append(error_norms(vals, ft)[0])
        id_err = None
        if include_inverse_distance:
            scheme = WeightScheme("inverse-distance")
            vals = np.empty(target.n_nodes)
            for t, st in enumerate(stencils):
                rows, _ = build_fit_rows(st, p, scheme, np.zeros((1, 2)), allow_drop=True)
                vals[t] = rows[0] @ fs[st.node_ids]
            id_err = error_norms(vals, ft)[0]
        out[p] = (np.array(errs), id_err)
    return out


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, step, hi = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ConfigError(f"sigma grid must be lo:step:hi, got {spec!r}") from None
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 10)


def cmd_sweep_sigma(args) -> int:
    field = field_by_name(args.field)
    source, target = _mesh_pair(args.source_level, args.target_level, args.reverse)
    sigmas = _parse_grid(args.sigma_grid)
    sweep = sigma_sweep(source, target, field, args.degrees, sigmas)
    records = []
    for p, (errs, id_err) in sweep.items():
        for sig, e in zip(sigmas, errs):
            records.append({"degree": p, "sigma": float(sig), "l2": float(e)})
        if id_err is not None:
            records.append({"degree": p, "sigma": "inverse-distance", "l2": float(id_err)})
        best = sigmas[int(np.argmin(errs))]
        print(f"degree {p}: argmin sigma = {best:.1f}, l2 = {errs.min():.6e}")
    out = Path(args.out)
    _write_records(out, records, args.format)
    _write_meta(out, "sweep-sigma", args)
    return 0


def cmd_repeat(args) -> int:
    field = field_by_name(args.field)
    source, target = _mesh_pair(args.source_level, args.target_level)
    plan_ab = _plan_for(args.method, source, target, args)
    plan_ba = _plan_for(args.method, target, source, args)
    trace_at = set(args.trace_at or [])

    def snapshot(step, values):
        return great_circle_trace(source, values, args.trace_phi)

    res = repeated_transfer(
        plan_ab,
        plan_ba,
        field(source.nodes),
        args.steps,
        exact_field=field,
        record_integral=True,
        snapshot_at=trace_at,
        snapshot_fn=snapshot,
    )
    records = []
    for rec in res.records:
        records.append(
            {
                "step": rec.step,
                "l2": rec.l2,
                "linf": rec.linf,
                "min": rec.vmin,
                "max": rec.vmax,
                "integral": rec.integral,
            }
        )
    out = Path(args.out)
    _write_records(out, records, args.format)
    _write_meta(out, "repeat", args)
    for step, (ids, thetas, values) in sorted(res.snapshots.items()):
        tpath = out.with_suffix(f".trace{step}{out.suffix}")
        _write_records(
            tpath,
            [
                {"node": int(n), "theta": float(t), "value": float(v)}
                for n, t, v in zip(ids, thetas, values)
            ],
            args.format,
        )
    final = res.records[-1]
    ce = conservation_error(
        source,
        res.final,
        field,
        degree=plan_ab.config.degree if plan_ab.config.degree in (4, 6) else 2,
    )
    print(
        f"after {args.steps} round trips: l2={final.l2:.6e} min={final.vmin:.9f} "
        f"max={final.vmax:.9f} conservation={ce:.6e}"
    )
    return 0


def cmd_detect(args) -> int:
    field = field_by_name(args.field)
    source, target = _mesh_pair(args.source_level, args.target_level)
    f = field(source.nodes)
    ind = det.compute_indicators(source, f)
    markers, tau = det.dual_threshold(source, ind.alpha, ind.beta, f)
    plan = build_plan(source, target, RemapConfig(degree=args.degree, eno=False))
    target_markers = det.transfer_markers(markers, (plan.stencil_offsets, plan.stencil_ids))
    ms = det.MarkerSet(
        source_markers=markers,
        target_markers=target_markers,
        kappa=det.KAPPA,
        tau=tau,
        c_local=det.C_LOCAL,
        c_global=det.C_GLOBAL,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    det.write_indicator_csv(out, ind, ms)
    _write_meta(out, "detect", args)
    tpath = out.with_suffix(".targets.csv")
    _write_records(
        tpath,
        [{"node": v, "marked": int(target_markers[v])} for v in range(target.n_nodes)],
        "csv",
    )
    print(
        f"source markers: {int(markers.sum())} of {source.n_nodes}; "
        f"target markers: {int(target_markers.sum())} of {target.n_nodes}"
    )
    return 0


def great_circle_trace(mesh, values, phi0: float):
    """Nearest mesh nodes to the meridian great circle at phi0, by theta.

    Samples the half-circle phi = phi0 densely, snaps each sample to its
    nearest node, and deduplicates; returns (node_ids, thetas, values).
    """
    from scipy.spatial import cKDTree

    h = global_edge_length(mesh)
    m = max(16, int(np.ceil(np.pi / (0.5 * h))))
    thetas = np.linspace(0.0, np.pi, m)
    pts = np.column_stack(
        [
            np.sin(thetas) * np.cos(phi0),
            np.sin(thetas) * np.sin(phi0),
            np.cos(thetas),
        ]
    )
    tree = mesh._cache.get("kdtree")
    if tree is None:
        tree = cKDTree(mesh.nodes)
        mesh._cache["kdtree"] = tree
    _, idx = tree.query(pts)
    ids = np.array(sorted(set(int(i) for i in idx)), dtype=np.int64)
    node_theta = np.arccos(np.clip(mesh.nodes[ids, 2], -1.0, 1.0))
    order = np.argsort(node_theta, kind="stable")
    ids = ids[order]
    return ids, node_theta[order], np.asarray(values)[ids]


def cmd_trace(args) -> int:
    field = field_by_name(args.field)
    source, target = _mesh_pair(args.source_level, args.target_level)
    plan = _plan_for(args.method, source, target, args)
    res = plan.apply(field(source.nodes))
    ids, thetas, values = great_circle_trace(target, res.values, args.phi)
    records = [
        {"node": int(n), "theta": float(t), "value": float(v)}
        for n, t, v in zip(ids, thetas, values)
    ]
    out = Path(args.out)
    _write_records(out, records, args.format)
    _write_meta(out, "trace", args)
    print(f"trace of {len(records)} nodes along phi={args.phi}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfremap", description="field transfer experiments on sphere meshes"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, method=True):
        p.add_argument("--source-level", type=int, default=1)
        p.add_argument("--target-level", type=int, default=1)
        p.add_argument("--field", default="f1", choices=["f1", "f2", "f3", "f4", "const"])
        if method:
            p.add_argument(
                "--method", default="wls-enor", choices=["wls-enor", "wls", "linear"]
            )
            p.add_argument("--degree", type=int, default=4)
            p.add_argument("--eno-degree", type=int, default=2)
            p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--format", default="csv", choices=["csv", "json"])

    g = sub.add_parser("gen-mesh", help="generate and save a mesh")
    g.add_argument("--kind", required=True, choices=["icosphere", "cubed-sphere", "planar"])
    g.add_argument("--level", type=int, default=1, help="icosphere subdivision depth")
    g.add_argument("--n", type=int, default=13, help="cubed-sphere cells per face edge")
    g.add_argument("--nx", type=int, default=4)
    g.add_argument("--ny", type=int, default=4)
    g.add_argument("--element-kind", default="quad", choices=["quad", "tri"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_mesh)

    r = sub.add_parser("remap", help="one-step transfer with error report")
    add_common(r)
    r.add_argument("--reverse", action="store_true", help="cubed-sphere to icosphere")
    r.set_defaults(func=cmd_remap)

    c = sub.add_parser("convergence", help="per-level errors and rates, both directions")
    add_common(c)
    c.add_argument("--levels", type=_int_list, default=[1, 2, 3])
    c.set_defaults(func=cmd_convergence)

    s = sub.add_parser("sweep-sigma", help="cut-off radius ratio sweep")
    add_common(s, method=False)
    s.add_argument("--degrees", type=_int_list, default=[2, 4, 6])
    s.add_argument("--sigma-grid", default="1.0:0.1:3.0")
    s.add_argument("--reverse", action="store_true")
    s.set_defaults(func=cmd_sweep_sigma)

    p = sub.add_parser("repeat", help="repeated back-and-forth transfer")
    add_common(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--trace-at", type=_int_list, default=[])
    p.add_argument("--trace-phi", type=float, default=0.0)
    p.set_defaults(func=cmd_repeat)

    d = sub.add_parser("detect", help="discontinuity indicators and markers")
    add_common(d, method=False)
    d.add_argument("--degree", type=int, default=4)
    d.set_defaults(func=cmd_detect)

    t = sub.add_parser("trace", help="great-circle trace of a one-step transfer")
    add_common(t)
    t.add_argument("--phi", type=float, default=0.0)
    t.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SurfremapError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
