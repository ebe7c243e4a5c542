"""Experiment drivers shared by the command line and the scripts."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis
from .assembly import SchemeConfig, assemble
from .manufactured import ManufacturedCase, get_case
from .mesh import NetworkMesh, load_mesh, mesh_network, refine
from .solver import SolverError, min_eigenvalue_probe, solve
from .space import DGSpace

log = logging.getLogger(__name__)

VARIANTS = ("sipg", "iipg", "nipg")


class SpecError(ValueError):
    """Invalid study specification (CLI exit code 2)."""


@dataclass
class StudySpec:
    case: str = "edge-mms"
    variant: str = "sipg"
    p: int = 1
    levels: int = 4
    eta_f: Optional[float] = None
    eta_gamma: Optional[float] = None
    over_penalize: Optional[bool] = None
    tol: float = 1e-10
    solver: str = "auto"
    coarse_h: Optional[float] = None
    g_gamma_weight: str = "mean"
    mesh_file: Optional[str] = None
    out: Optional[str] = None

    def validate(self, min_levels=2):
        if self.variant not in VARIANTS:
            raise SpecError(f"variant must be one of {VARIANTS}")
        if self.p < 1:
            raise SpecError("p must be >= 1")
        if self.levels < min_levels:
            raise SpecError(f"levels must be >= {min_levels}")
        if not 0 < self.tol < 1:
            raise SpecError("tol must lie in (0, 1)")
        if self.solver not in ("auto", "dense", "direct", "cg", "gmres"):
            raise SpecError(f"unknown solver {self.solver!r}")
        if self.coarse_h is not None and not self.coarse_h > 0:
            raise SpecError("coarse-h must be positive")
        try:
            self.scheme()
        except ValueError as e:
            raise SpecError(str(e)) from e
        return self

    def scheme(self) -> SchemeConfig:
        return SchemeConfig.variant(self.variant, eta_F=self.eta_f, eta_gamma=self.eta_gamma,
                                    over_penalize=self.over_penalize,
                                    g_gamma_weight=self.g_gamma_weight)

    def load_case(self) -> ManufacturedCase:
        try:
            return get_case(self.case)
        except (ValueError, OSError) as e:
            raise SpecError(str(e)) from e

    def coarse_mesh(self, case) -> NetworkMesh:
        if self.mesh_file:
            with open(self.mesh_file, encoding="utf-8") as fh:
                return load_mesh(fh.read(), case.topo)
        return mesh_network(case.topo, self.coarse_h or case.coarse_h)

    def meta(self):
        return {"case": self.case, "variant": self.variant, "p": self.p, "levels": self.levels,
                "eta_f": self.eta_f, "eta_gamma": self.eta_gamma,
                "over_penalize": self.over_penalize, "tol": self.tol}


@dataclass
class LevelSolution:
    space: DGSpace
    solution: np.ndarray
    iterations: int
    method: str
    converged: bool
    residual: float


def solve_level(mesh, case, spec: StudySpec, config=None) -> LevelSolution:
    config = config or spec.scheme()
    space = DGSpace(mesh, spec.p)
    system = assemble(space, case.coefficients(), config)
    rep = solve(system, tol=spec.tol, method=spec.solver)
    return LevelSolution(space, rep.solution, rep.iterations, rep.method, rep.converged,
                         rep.final_relative_residual)


def levels(spec: StudySpec, case, count):
    mesh = spec.coarse_mesh(case)
    for k in range(count):
        yield k, mesh
        if k + 1 < count:
            mesh = refine(mesh)


def run_convergence(spec: StudySpec, case=None):
    """Error table over ``spec.levels`` uniform refinements.

    Returns (reports, all_converged).  Requires a case with an exact solution.
    """
    spec.validate()
    case = case or spec.load_case()
    if not case.has_exact:
        raise SpecError(f"case {case.name!r} has no exact solution; use compare-reference")
    config = spec.scheme()
    reports, ok = [], True
    for k, mesh in levels(spec, case, spec.levels):
        t0 = time.perf_counter()
        sol = solve_level(mesh, case, spec, config)
        rep = analysis.error_vs_exact(sol.space, config, sol.solution, case.value, case.gradient,
                                      level=k)
        rep.iterations, rep.method = sol.iterations, sol.method
        reports.append(rep)
        ok &= sol.converged
        log.info("level %d: %d dofs, dg %.3e, l2 %.3e (%s, %d its, %.1fs)", k, rep.dofs,
                 rep.dg_error, rep.l2_error, sol.method, sol.iterations, time.perf_counter() - t0)
        if not sol.converged:
            break
    analysis.fill_rates(reports)
    return reports, ok


@dataclass
class ReferenceRow:
    level: int
    h: float
    dofs: int
    rel_l2_diff: float
    iterations: int


def run_reference_compare(spec: StudySpec, reference_level: int, case=None):
    """Relative L2 differences of levels 0..spec.levels-1 to the solution on ``reference_level``."""
    spec.validate()
    if reference_level < spec.levels - 1:
        raise SpecError("reference level must not be coarser than the compared levels")
    case = case or spec.load_case()
    config = spec.scheme()
    sols, ok = [], True
    for k, mesh in levels(spec, case, reference_level + 1):
        if k < spec.levels or k == reference_level:
            sol = solve_level(mesh, case, spec, config)
            ok &= sol.converged
            sols.append((k, sol))
            log.info("level %d: %d dofs (%s, %d its)", k, sol.space.ndofs, sol.method, sol.iterations)
    ref = sols[-1][1]
    rows = []
    for k, sol in sols:
        if k >= spec.levels:
            continue
        d = analysis.relative_l2_difference(sol.space, sol.solution, ref.space, ref.solution)
        rows.append(ReferenceRow(k, sol.space.mesh.h, sol.space.ndofs, d, sol.iterations))
    return rows, ok


def reference_rows_to_csv(rows, meta=None):
    lines = ["# netdg-reference v1"]
    lines += [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append("level,h,dofs,rel_l2_diff,iterations")
    for r in rows:
        lines.append(f"{r.level},{r.h:.10e},{r.dofs},{r.rel_l2_diff:.10e},{r.iterations}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ theory checks

def smooth_test_function(X):
    """A smooth ambient function with its gradient, used when a case has no exact solution."""
    a = np.array([1.3, 0.7, 0.9])[: X.shape[1]]
    s = np.sin(X @ a + 0.3)
    c = np.cos(X @ a + 0.3)
    return s, c[:, None] * a


@dataclass
class TheoryRow:
    level: int
    h: float
    dofs: int
    enrich_l2: float
    enrich_grad: float
    enrich_jump: float
    poincare: float
    projection: float
    min_eig: float
    asymmetry: float


def run_theory_check(spec: StudySpec, samples=200, seed=0, case=None):
    """Empirical constants of the enriching map, Poincare and projection bounds, and
    the min-eigenvalue probe of the (symmetric part of the) stiffness matrix, per level."""
    spec.validate(min_levels=1)
    case = case or spec.load_case()
    config = spec.scheme()
    if case.has_exact:
        func, grad = case.value, case.gradient
    else:
        func = lambda i, X: smooth_test_function(X)[0]   # noqa: E731
        grad = lambda i, X: smooth_test_function(X)[1]   # noqa: E731
    rows = []
    for k, mesh in levels(spec, case, spec.levels):
        space = DGSpace(mesh, 1)
        vs = analysis.random_vectors(space, samples, seed + k)
        e1, e2, ej = analysis.enrichment_constants(space, config, vs)
        pc = analysis.poincare_constant(space, config, vs)
        ps = analysis.projection_stability(space, config, func, grad)
        A = assemble(DGSpace(mesh, spec.p), case.coefficients(), config).matrix
        amax = abs(A).max()
        asym = float(abs(A - A.T).max() / amax)
        lam = min_eigenvalue_probe(0.5 * (A + A.T), seed=seed)
        rows.append(TheoryRow(k, mesh.h, space.ndofs, e1, e2, ej, pc, ps, lam, asym))
    return rows


def theory_rows_to_csv(rows, meta=None):
    cols = ["level", "h", "dofs", "enrich_l2", "enrich_grad", "enrich_jump", "poincare",
            "projection", "min_eig", "asymmetry"]
    lines = ["# netdg-theory v1"]
    lines += [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append(",".join(cols))
    for r in rows:
        vals = [getattr(r, c) for c in cols]
        lines.append(",".join(str(v) if isinstance(v, int) else f"{v:.10e}" for v in vals))
    return "\n".join(lines) + "\n"


def theory_ok(rows):
    finite = all(math.isfinite(v) for r in rows for v in
                 (r.enrich_l2, r.enrich_grad, r.poincare, r.projection, r.min_eig))
    return finite and all(r.min_eig > 0 for r in rows)
