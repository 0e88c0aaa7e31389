"""Command-line interface: solves, sweeps, and permeability-field tooling.

Exit codes: 0 on success (and convergence), 2 when a solve does not reach
the residual target, 1 on usage or input errors.  The output directory can
be overridden with the POROUSMG_OUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from porousmg.discretization import AssemblyError, compute_divergence
from porousmg.driver import (
    ProblemSpec,
    ProblemSpecError,
    build_problem,
    run_sweep,
    solve_assembled,
)
from porousmg.fields import (
    FieldError,
    contrast as field_contrast,
    generate_field,
    invert_permeability,
    load_field,
    rescale_field,
    slice_field,
    write_field,
)
from porousmg.multigrid import CoarseSolveError
from porousmg.reports import write_report_csv, write_sweep_csv
from porousmg.smoother import SmootherError
from porousmg.vtkio import solution_cell_data, write_vtk_cell_data


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit with code 1
        raise UsageError(message)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _out_dir(args) -> Path:
    d = os.environ.get("POROUSMG_OUT_DIR", args.out_dir)
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["darcy", "brinkman"], default="darcy")
    p.add_argument("--mu", type=float, default=None, help="viscosity (0 for darcy)")
    p.add_argument("--degree", type=int, choices=[0, 1], default=0)
    p.add_argument("--dim", type=int, choices=[2, 3], default=2)
    p.add_argument("--grid", type=_ints, default=(128,), help="finest cells per axis")
    p.add_argument("--coarse", type=_ints, default=None, help="level-0 cells per axis")
    p.add_argument(
        "--field",
        default="constant",
        choices=[
            "constant",
            "checkerboard",
            "open_foam",
            "inclusions",
            "connected_inclusions",
            "file",
        ],
    )
    p.add_argument("--field-file", default=None)
    p.add_argument("--field-format", choices=["raw_binary", "ascii_list"], default="raw_binary")
    p.add_argument("--field-dims", type=_ints, default=None)
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--kappa-high", type=float, default=1.0)
    p.add_argument("--kappa-low", type=float, default=None)
    p.add_argument("--reverse-roles", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--g", type=_floats, default=None, help="boundary velocity, e.g. 1,0")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--m-finest", type=int, default=2)
    p.add_argument("--standard-cycle", action="store_true")
    p.add_argument("--coarse-cap", type=int, default=50_000)


def _spec_from_args(args) -> ProblemSpec:
    grid = args.grid if len(args.grid) > 1 else args.grid[0]
    mu = args.mu
    if args.model == "brinkman" and mu is not None and mu <= 0:
        raise UsageError("the brinkman model needs --mu > 0")
    if args.model == "darcy" and mu not in (None, 0.0):
        raise UsageError("the darcy model needs --mu 0 (or omit the flag)")
    return ProblemSpec(
        model=args.model,
        mu=mu,
        degree=args.degree,
        dim=args.dim,
        grid=grid,
        coarse=args.coarse,
        field_kind=args.field,
        field_path=args.field_file,
        field_format=args.field_format,
        field_dims=args.field_dims,
        contrast=args.contrast,
        kappa_high=args.kappa_high,
        kappa_low=args.kappa_low,
        reverse_roles=args.reverse_roles,
        seed=args.seed,
        velocity_bc=args.g,
        tol=args.tol,
        max_iter=args.max_iter,
        m_finest=args.m_finest,
        variable_cycle=not args.standard_cycle,
        coarse_cap=args.coarse_cap,
    )


def cmd_solve(args) -> int:
    spec = _spec_from_args(args)
    prob = build_problem(spec)
    u, p, report = solve_assembled(prob)
    out = _out_dir(args)
    layout = prob.layout
    lvl = layout.level
    div = compute_divergence(u, layout)
    write_vtk_cell_data(
        out / f"{args.prefix}.vtk",
        lvl.cells_per_axis,
        solution_cell_data(layout, u, p, divergence=div),
        origin=lvl.origin,
        spacing=lvl.cell_size,
        title=f"{spec.model} solution",
    )
    write_report_csv(report, out / f"{args.prefix}_report.csv")
    status = "converged" if report.converged else "NOT converged"
    print(
        f"{spec.model} {spec.grid_dims()}: {report.iterations} iterations, {status}, "
        f"true residual {report.final_relative_residual:.3e}"
    )
    print(f"wrote {out / (args.prefix + '.vtk')} and {out / (args.prefix + '_report.csv')}")
    return 0 if report.converged else 2


def cmd_sweep(args) -> int:
    # On this subcommand --reverse-roles runs both permeability assignments
    # and writes a second CSV for the reversed one.
    spec = _spec_from_args(args)
    both = spec.reverse_roles
    if both:
        from dataclasses import replace

        spec = replace(spec, reverse_roles=False)
    grids = list(args.grids)
    contrasts = list(args.contrasts)
    degrees = list(args.degrees) if args.degrees else None
    out = _out_dir(args)
    table = run_sweep(spec, grids, contrasts, degrees=degrees, jobs=args.jobs)
    path = out / f"{args.prefix}.csv"
    write_sweep_csv(table, path)
    print(f"wrote {path}")
    code = 0 if not any("DNF" in row for row in table.counts) else 2
    if both:
        from dataclasses import replace

        rtable = run_sweep(
            replace(spec, reverse_roles=True), grids, contrasts, degrees=degrees, jobs=args.jobs
        )
        rpath = out / f"{args.prefix}_reversed.csv"
        write_sweep_csv(rtable, rpath)
        print(f"wrote {rpath}")
        if any("DNF" in row for row in rtable.counts):
            code = 2
    return code


def _build_cli_field(args):
    if args.kind == "file":
        raise UsageError("gen-field generates synthetic fields; use convert-field for files")
    low = args.kappa_low if args.kappa_low is not None else args.kappa_high / args.contrast
    params = {}
    if args.block is not None:
        params["block"] = args.block
    if args.count is not None:
        params["count"] = args.count
    return generate_field(args.kind, args.dims, args.kappa_high, low, seed=args.seed, **params)


def cmd_gen_field(args) -> int:
    fld = _build_cli_field(args)
    write_field(fld, args.out)
    print(f"wrote {args.out}: dims {fld.dims}, contrast {field_contrast(fld):g}")
    if args.vtk:
        write_vtk_cell_data(args.vtk, fld.dims, {"kappa": fld.values}, title="permeability")
        print(f"wrote {args.vtk}")
    return 0


def _load_cli_field(path, fmt, dims):
    return load_field(path, fmt=fmt, dims=dims)


def cmd_field_info(args) -> int:
    fld = _load_cli_field(args.path, args.format, args.dims)
    v = fld.values
    print(f"dims: {fld.dims}")
    print(f"cells: {fld.n_cells}")
    print(f"min: {v.min():.6e}")
    print(f"max: {v.max():.6e}")
    print(f"mean: {v.mean():.6e}")
    print(f"contrast: {field_contrast(fld):.6e}")
    return 0


def cmd_convert_field(args) -> int:
    fld = _load_cli_field(args.input, args.in_format, args.dims)
    if args.invert is not None:
        fld = invert_permeability(fld, scale=args.invert)
    if args.slice is not None:
        axis, index = args.slice
        fld = slice_field(fld, int(axis), int(index))
    if args.rescale is not None:
        fld = rescale_field(fld, args.rescale)
    if args.out_format == "raw_binary":
        write_field(fld, args.output)
    else:
        with open(args.output, "w") as f:
            f.write("\n".join(repr(float(v)) for v in fld.values) + "\n")
    print(f"wrote {args.output}: dims {fld.dims}, contrast {field_contrast(fld):g}")
    if args.vtk:
        write_vtk_cell_data(args.vtk, fld.dims, {"kappa": fld.values}, title="permeability")
        print(f"wrote {args.vtk}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="porousmg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one solve; writes VTK and a report CSV")
    _add_problem_flags(ps)
    ps.add_argument("--out-dir", default=".")
    ps.add_argument("--prefix", default="solution")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="iteration-count table over grids x contrasts")
    _add_problem_flags(pw)
    pw.add_argument("--grids", type=_ints, required=True)
    pw.add_argument("--contrasts", type=_floats, required=True)
    pw.add_argument("--degrees", type=_ints, default=None)
    pw.add_argument("--jobs", type=int, default=1)
    pw.add_argument("--out-dir", default=".")
    pw.add_argument("--prefix", default="sweep")
    pw.set_defaults(func=cmd_sweep)

    pg = sub.add_parser("gen-field", help="generate a synthetic permeability field")
    pg.add_argument("--kind", required=True, choices=[
        "checkerboard", "open_foam", "inclusions", "connected_inclusions"])
    pg.add_argument("--dims", type=_ints, required=True)
    pg.add_argument("--contrast", type=float, default=1e4)
    pg.add_argument("--kappa-high", type=float, default=1.0)
    pg.add_argument("--kappa-low", type=float, default=None)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--block", type=int, default=None)
    pg.add_argument("--count", type=int, default=None)
    pg.add_argument("--out", required=True)
    pg.add_argument("--vtk", default=None, help="also write a VTK preview")
    pg.set_defaults(func=cmd_gen_field)

    pi = sub.add_parser("field-info", help="print statistics of a field file")
    pi.add_argument("path")
    pi.add_argument("--format", choices=["raw_binary", "ascii_list"], default="raw_binary")
    pi.add_argument("--dims", type=_ints, default=None)
    pi.set_defaults(func=cmd_field_info)

    pc = sub.add_parser("convert-field", help="convert, invert, slice, or rescale a field")
    pc.add_argument("input")
    pc.add_argument("output")
    pc.add_argument("--in-format", choices=["raw_binary", "ascii_list"], default="raw_binary")
    pc.add_argument("--out-format", choices=["raw_binary", "ascii_list"], default="raw_binary")
    pc.add_argument("--dims", type=_ints, default=None)
    pc.add_argument("--invert", type=float, nargs="?", const=1.0, default=None,
                    help="map raw permeability K to kappa = SCALE / K")
    pc.add_argument("--slice", type=_ints, default=None, metavar="AXIS,INDEX")
    pc.add_argument("--rescale", type=_ints, default=None)
    pc.add_argument("--vtk", default=None)
    pc.set_defaults(func=cmd_convert_field)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ProblemSpecError, FieldError, AssemblyError, CoarseSolveError, SmootherError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
