"""Command line: convergence studies, single solves, reference comparison, theory checks."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, analysis
from .geometry import cube_network, dump_topology
from .solver import SolverError
from .study import (SpecError, StudySpec, reference_rows_to_csv, run_convergence,
                    run_reference_compare, run_theory_check, solve_level, levels,
                    theory_ok, theory_rows_to_csv)

EXIT_OK, EXIT_SOLVER, EXIT_SPEC = 0, 1, 2


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    if t in ("auto", "none", ""):
        return None
    raise argparse.ArgumentTypeError(f"expected on/off/auto, got {text!r}")


def read_config(path):
    """key = value lines; '#' comments; keys use the long flag names (dashes or underscores)."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip("\"'")
    return out


def _study_args(p, levels_default=4):
    p.add_argument("--case", default="edge-mms",
                   help="edge-mms, plane-mms, low-reg:s=<v>, cube-net or file:<topology>")
    p.add_argument("--mesh", dest="mesh_file", help="external coarse mesh (netdg-mesh v1)")
    p.add_argument("--variant", default="sipg", choices=["sipg", "iipg", "nipg"])
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--levels", type=int, default=levels_default)
    p.add_argument("--coarse-h", type=float)
    p.add_argument("--eta-f", type=float)
    p.add_argument("--eta-gamma", type=float)
    p.add_argument("--over-penalize", type=_bool, default=None, metavar="{on,off,auto}")
    p.add_argument("--g-gamma-weight", default="mean", choices=["mean", "sum"])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--solver", default="auto", choices=["auto", "dense", "direct", "cg", "gmres"])
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--config", help="key = value file; command-line flags take precedence")


def build_parser():
    ap = argparse.ArgumentParser(prog="netdg", description=__doc__)
    ap.add_argument("--version", action="version", version=f"netdg {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="error table and rates over uniform refinements")
    _study_args(p)

    p = sub.add_parser("solve", help="solve on one refinement level")
    _study_args(p, levels_default=1)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--export-matrix", help="write the stiffness matrix (MatrixMarket)")

    p = sub.add_parser("compare-reference", help="relative L2 differences to a fine-level solution")
    _study_args(p)
    p.add_argument("--reference-level", type=int, required=True)

    p = sub.add_parser("check-theory", help="empirical stability constants and coercivity probe")
    _study_args(p, levels_default=3)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="generate a topology file")
    p.add_argument("what", choices=["cube-net"])
    p.add_argument("--n", type=int, default=3, help="subdivisions per cube edge")
    p.add_argument("--out")
    return ap


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        # re-parse with file values as defaults so explicit flags win
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in known:
                raise SpecError(f"unknown config key {k!r}")
            act = known[k]
            defaults[k] = act.type(v) if act.type else v
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def spec_from(args) -> StudySpec:
    return StudySpec(case=args.case, variant=args.variant, p=args.p, levels=args.levels,
                     eta_f=args.eta_f, eta_gamma=args.eta_gamma,
                     over_penalize=args.over_penalize, tol=args.tol, solver=args.solver,
                     coarse_h=args.coarse_h, g_gamma_weight=args.g_gamma_weight,
                     mesh_file=args.mesh_file, out=args.out)


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_convergence(args):
    spec = spec_from(args)
    reports, ok = run_convergence(spec)
    _emit(analysis.reports_to_csv(reports, spec.meta()), spec.out)
    return EXIT_OK if ok and len(reports) == spec.levels else EXIT_SOLVER


def cmd_solve(args):
    spec = spec_from(args)
    spec.validate(min_levels=1)
    if args.level < 0:
        raise SpecError("level must be >= 0")
    case = spec.load_case()
    config = spec.scheme()
    mesh = None
    for _, mesh in levels(spec, case, args.level + 1):
        pass
    sol = solve_level(mesh, case, spec, config)
    if args.export_matrix:
        from .assembly import assemble
        assemble(sol.space, case.coefficients(), config).export_matrix_market(
            args.export_matrix, comment=f"netdg {case.name} {spec.variant} p={spec.p} level={args.level}")
    if case.has_exact:
        rep = analysis.error_vs_exact(sol.space, config, sol.solution, case.value, case.gradient,
                                      level=args.level)
        rep.iterations, rep.method = sol.iterations, sol.method
        text = analysis.reports_to_csv([rep], spec.meta())
    else:
        text = (f"# netdg-solve v1\nlevel,h,dofs,iterations,method,residual\n"
                f"{args.level},{mesh.h:.10e},{sol.space.ndofs},{sol.iterations},{sol.method},"
                f"{sol.residual:.3e}\n")
    _emit(text, spec.out)
    return EXIT_OK if sol.converged else EXIT_SOLVER


def cmd_compare(args):
    spec = spec_from(args)
    rows, ok = run_reference_compare(spec, args.reference_level)
    meta = dict(spec.meta(), reference_level=args.reference_level)
    _emit(reference_rows_to_csv(rows, meta), spec.out)
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_check_theory(args):
    spec = spec_from(args)
    rows = run_theory_check(spec, samples=args.samples, seed=args.seed)
    meta = dict(spec.meta(), samples=args.samples, seed=args.seed)
    _emit(theory_rows_to_csv(rows, meta), spec.out)
    return EXIT_OK if theory_ok(rows) else EXIT_SOLVER


def cmd_gen(args):
    if args.n < 2:
        raise SpecError("n must be >= 2")
    _emit(dump_topology(cube_network(args.n)), args.out)
    return EXIT_OK


COMMANDS = {"convergence": cmd_convergence, "solve": cmd_solve,
            "compare-reference": cmd_compare, "check-theory": cmd_check_theory, "gen": cmd_gen}


def main(argv=None):
    try:
        args = parse(argv)
    except SpecError as e:
        print(f"netdg: error: {e}", file=sys.stderr)
        return EXIT_SPEC
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SpecError as e:
        print(f"netdg: error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except SolverError as e:
        print(f"netdg: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
