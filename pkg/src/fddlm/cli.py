"""Command-line front end for the circle benchmark studies.

Subcommands: solve (single mesh pair), converge (uniform refinement study),
adapt (estimator-driven loop), check (invariant self-test).  Options may
also come from a flat "key = value" config file; command-line flags win.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import adaptivity, benchmark, estimator, kernels, solver, spaces, vtkio
from .coupling import AssemblyMode, CouplingForm
from .errors import IncompatibleConfigError, NoConvergenceError
from .intersection import REL_AREA_CUTOFF, BoxIndex, build_intersection_map
from .mesh import build_disk_mesh, build_rect_mesh, check_mesh, mesh_size, uniform_refine

_DEFAULTS = {
    "element": "p1bubble-p0",
    "coupling": "l2",
    "assembly": "exact",
    "precond": "tri",
    "inner": "dd",
    "gmres_tol": 1e-12,
    "gmres_restart": 200,
    "alpha1": 0.6,
    "tol": 5e-2,
    "levels": 5,
    "max_loops": 25,
    "bg_n": 8,
    "disk_level": 2,
    "out": "out",
    "serial": False,
}


def _read_config(path):
    values = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _resolve(args, key):
    cli_val = getattr(args, key, None)
    if cli_val is not None:
        return cli_val
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        raw = cfg[key]
        default = _DEFAULTS[key]
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        return type(default)(raw)
    return _DEFAULTS[key]


def _add_common(p):
    p.add_argument("--config", help="flat key = value option file")
    p.add_argument("--element", choices=["p1p1p1", "p1bubble-p0"])
    p.add_argument("--coupling", choices=["l2", "h1"])
    p.add_argument("--assembly", help="exact | inexact:<degree>")
    p.add_argument("--precond", choices=["none", "diag", "tri"])
    p.add_argument("--inner", choices=["dd", "md"])
    p.add_argument("--gmres-tol", type=float, dest="gmres_tol")
    p.add_argument("--gmres-restart", type=int, dest="gmres_restart")
    p.add_argument("--bg-n", type=int, dest="bg_n",
                   help="initial background subdivisions per axis")
    p.add_argument("--disk-level", type=int, dest="disk_level",
                   help="initial refinement level of the disk mesh")
    p.add_argument("--out", help="output directory")
    p.add_argument("--serial", action="store_const", const=True,
                   help="deterministic reference mode (zeroes the wall-clock "
                        "column of results.csv)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fddlm",
        description="Unfitted interface-problem benchmark driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single solve on one mesh pair")
    _add_common(p)
    p.add_argument("--levels", type=int, help="uniform refinements before solving")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="uniform refinement study")
    _add_common(p)
    p.add_argument("--levels", type=int, help="number of uniform levels")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("adapt", help="adaptive refinement study")
    _add_common(p)
    p.add_argument("--alpha1", type=float, help="bulk marking fraction")
    p.add_argument("--tol", type=float, help="stop when eta + eta2 <= tol")
    p.add_argument("--max-loops", type=int, dest="max_loops")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("check", help="run the invariant self-test suite")
    p.set_defaults(func=cmd_check)
    return parser


def _setup(args, adapt=False):
    opts = {}
    for key in _DEFAULTS:
        opts[key] = _resolve(args, key)
    if adapt:
        # adaptive runs start coarser by default
        cfgvals = getattr(args, "_config_values", {})
        if args.bg_n is None and "bg_n" not in cfgvals:
            opts["bg_n"] = 4
        if args.disk_level is None and "disk_level" not in cfgvals:
            opts["disk_level"] = 1

    mode = AssemblyMode.parse(opts["assembly"])
    solver.validate_element_coupling(opts["element"], opts["coupling"])
    precond = solver.PrecondConfig(
        variant=opts["precond"],
        inner_a="direct" if opts["inner"] == "dd" else "multigrid")

    geom, data, exact = benchmark.circle_benchmark()
    bg = build_rect_mesh(benchmark.BOX, opts["bg_n"])
    imm = build_disk_mesh(geom, opts["disk_level"])
    os.makedirs(opts["out"], exist_ok=True)
    return opts, mode, precond, data, exact, bg, imm


def _metadata(opts, mode):
    meta = {
        "kernel_backend": kernels.BACKEND,
        "sliver_area_cutoff_rel": REL_AREA_CUTOFF,
        "marking_convention": "bulk fraction applies to squared indicators",
        "assembly_mode": mode.label(),
    }
    if mode.kind == "inexact":
        meta["inexact_degree"] = mode.degree
        if opts["coupling"] == "h1":
            meta["accuracy_note"] = ("reduced accuracy: inexact quadrature of "
                                     "the gradient pairing does not vanish "
                                     "with refinement at fixed mesh ratio")
    return meta


def _dump_level(outdir, level, result, ind):
    bg_mesh = result.bg_space.mesh
    imm_mesh = result.v2_space.mesh
    vtkio.write_vtk(os.path.join(outdir, f"background_{level:02d}.vtk"), bg_mesh,
                    point_data={"u": vtkio.vertex_field(result.bg_space, result.u)},
                    cell_data={"eta_E": ind.eta_E, "osc_E": ind.osc_E})
    imm_cell = {"eta_E2": ind.eta_E2, "osc_E2": ind.osc_E2}
    imm_point = {"u2": vtkio.vertex_field(result.v2_space, result.u2)}
    if result.lambda_space.family == spaces.BasisFamily.P0:
        imm_cell["lambda"] = result.lam
    else:
        imm_point["lambda"] = vtkio.vertex_field(result.lambda_space, result.lam)
    vtkio.write_vtk(os.path.join(outdir, f"immersed_{level:02d}.vtk"), imm_mesh,
                    point_data=imm_point, cell_data=imm_cell)


def _write_outputs(opts, mode, records, reports, rates=None):
    outdir = opts["out"]
    vtkio.write_results_csv(os.path.join(outdir, "results.csv"), records,
                            serial=opts["serial"])
    summary = {
        "config": {k: opts[k] for k in sorted(opts)},
        "metadata": _metadata(opts, mode),
        "levels": reports,
    }
    if rates is not None:
        summary["eoc"] = rates
    with open(os.path.join(outdir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)


def cmd_solve(args):
    opts, mode, precond, data, exact, bg, imm = _setup(args)
    extra = (args.levels if args.levels is not None
             else int(getattr(args, "_config_values", {}).get("levels", 0)))
    for _ in range(extra):
        bg = uniform_refine(bg)
        imm = uniform_refine(imm)
    reports = []

    def on_level(level, result, ind, rec):
        _dump_level(opts["out"], level, result, ind)
        reports.append({"level": level, **result.report.to_dict()})

    records = benchmark.uniform_study(
        data, bg, imm, 1, exact=exact, element=opts["element"],
        form=opts["coupling"], mode=mode, precond=precond,
        gmres_tol=opts["gmres_tol"], on_level=on_level, dirichlet=exact.u1)
    _write_outputs(opts, mode, records, reports)
    print(f"ndof={records[0].ndof} its={records[0].gmres_its} "
          f"errH1_u={records[0].errH1_u:.6e} eta={records[0].eta:.6e}")
    return 0


def cmd_converge(args):
    opts, mode, precond, data, exact, bg, imm = _setup(args)
    levels = _resolve(args, "levels")
    reports = []

    def on_level(level, result, ind, rec):
        _dump_level(opts["out"], level, result, ind)
        reports.append({"level": level, **result.report.to_dict()})

    records = benchmark.uniform_study(
        data, bg, imm, levels, exact=exact, element=opts["element"],
        form=opts["coupling"], mode=mode, precond=precond,
        gmres_tol=opts["gmres_tol"], on_level=on_level, dirichlet=exact.u1)
    hs = [r.h for r in records]
    if len(records) >= 2:
        rates = {
            "L2_u": benchmark.eoc([r.errL2_u for r in records], hs),
            "H1_u": benchmark.eoc([r.errH1_u for r in records], hs),
            "H1_u2": benchmark.eoc([r.errH1_u2 for r in records], hs),
        }
    else:
        rates = {"L2_u": [], "H1_u": [], "H1_u2": []}
    _write_outputs(opts, mode, records, reports, rates)
    for rec in records:
        print(f"level={rec.level} ndof={rec.ndof} errL2_u={rec.errL2_u:.6e} "
              f"errH1_u={rec.errH1_u:.6e} eta={rec.eta:.6e} its={rec.gmres_its}")
    return 0


def cmd_adapt(args):
    opts, mode, precond, data, exact, bg, imm = _setup(args, adapt=True)
    cfg = adaptivity.AdaptConfig(
        alpha1=opts["alpha1"], tol=opts["tol"], max_loops=opts["max_loops"],
        element=opts["element"], form=opts["coupling"], mode=mode,
        precond=precond, gmres_tol=opts["gmres_tol"])
    reports = []

    def on_level(level, result, ind, rec):
        _dump_level(opts["out"], level, result, ind)
        reports.append({"level": level, **result.report.to_dict()})

    def error_fn(result):
        return benchmark.error_norms(result, exact)

    try:
        records = adaptivity.adaptive_loop(cfg, data, bg, imm,
                                           error_fn=error_fn, on_level=on_level,
                                           dirichlet=exact.u1)
    except NoConvergenceError as err:
        records = err.records
        _write_outputs(opts, mode, records, reports)
        print(f"solver failed: {err}", file=sys.stderr)
        return 1
    ndofs = [r.ndof for r in records]
    if len(records) >= 2:
        rates = {
            "L2_u_vs_ndof": benchmark.dof_eoc([r.errL2_u for r in records], ndofs),
            "H1_u_vs_ndof": benchmark.dof_eoc([r.errH1_u for r in records], ndofs),
        }
    else:
        rates = {"L2_u_vs_ndof": [], "H1_u_vs_ndof": []}
    _write_outputs(opts, mode, records, reports, rates)
    last = records[-1]
    print(f"levels={len(records)} ndof={last.ndof} eta+eta2="
          f"{last.eta + last.eta2:.6e} errH1_u={last.errH1_u:.6e}")
    return 0


def cmd_check(args):
    failures = 0

    def report(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    import math as _math

    rule = spaces.triangle_rule(4)
    ok = True
    for a in range(5):
        for b in range(5 - a):
            val = 0.5 * float(rule.weights @ (rule.points[:, 0] ** a
                                              * rule.points[:, 1] ** b))
            ref = _math.factorial(a) * _math.factorial(b) / _math.factorial(a + b + 2)
            ok &= abs(val - ref) <= 1e-14
    report("quadrature exactness (degree 4)", ok)

    geom, data, sol = benchmark.circle_benchmark()
    bg = build_rect_mesh(benchmark.BOX, 8)
    imm = build_disk_mesh(geom, 2)
    try:
        check_mesh(bg)
        check_mesh(imm)
        ok = True
    except ValueError:
        ok = False
    report("mesh invariants (background and disk)", ok)

    rng = np.random.default_rng(42)
    pts = rng.random((200, 2))
    pts = pts[pts.sum(axis=1) <= 1.0]
    vals = spaces.basis_values(spaces.BasisFamily.P1, pts)
    report("P1 partition of unity", bool(np.abs(vals.sum(axis=1) - 1).max() <= 1e-13))

    space = spaces.FeSpace(bg, spaces.BasisFamily.P1)
    A = spaces.assemble_stiffness(space, 1.0)
    report("stiffness annihilates constants",
           bool(np.abs(A @ np.ones(space.ndof)).max() <= 1e-12))

    imap = build_intersection_map(imm, bg)
    report("intersection area conservation",
           bool(imap.area_defects().max() <= 1e-12))

    from . import coupling as cpl
    v2 = spaces.FeSpace(imm, spaces.BasisFamily.P1_BUBBLE)
    lam = spaces.FeSpace(imm, spaces.BasisFamily.P0)
    bgs = spaces.FeSpace(bg, spaces.BasisFamily.P1, zero_boundary=True)
    C1 = cpl.assemble_C1(lam, bgs, imap, "l2", AssemblyMode("exact"))
    C2 = cpl.assemble_C2(lam, v2, "l2")
    col1 = np.asarray(C1.sum(axis=1)).ravel()
    vmask = v2.cell_dofs[:, :3]
    col2 = np.zeros(lam.ndof)
    c2d = C2.toarray()
    for k in range(lam.ndof):
        col2[k] = c2d[k, np.unique(vmask[vmask >= 0])].sum()
    report("cross-mesh column-sum identity (L2 form)",
           bool(np.abs(col1 - col2).max() <= 1e-12))

    index = BoxIndex(bg)
    from .intersection import locate_point
    pts = rng.uniform(-1.4, 1.4, size=(1000, 2))
    coords = bg.cell_coords()
    ok = True
    for p in pts[:200]:
        got = locate_point(index, bg, p)
        d1 = coords[:, 1] - coords[:, 0]
        d2 = coords[:, 2] - coords[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = p[None, :] - coords[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (1 - l1 - l2 >= -1e-12)
        want = int(np.nonzero(inside)[0][0]) if inside.any() else None
        ok &= got == want
    report("point location vs brute force", ok)

    theta = rng.uniform(0, 2 * np.pi, 100)
    on_circle = np.column_stack([np.cos(theta), np.sin(theta)])
    ok = bool(np.abs(sol.u1(on_circle) - sol.u2(on_circle)).max() <= 1e-13)
    flux1 = data.nu * (sol.grad1(on_circle) * on_circle).sum(axis=1)
    flux2 = data.nu2 * (sol.grad2(on_circle) * on_circle).sum(axis=1)
    ok &= bool(np.abs(flux1 - flux2).max() <= 1e-13)
    report("exact solution: continuity and flux on the circle", ok)

    print(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 0 if failures == 0 else 1


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args._config_values = _read_config(args.config)
    else:
        args._config_values = {}
    try:
        return args.func(args)
    except (IncompatibleConfigError, ValueError) as err:
        parser.exit(2, f"error: {err}\n")


if __name__ == "__main__":
    sys.exit(main())
