"""Norms, errors, convergence rates and numerical checks of the discrete stability estimates."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import SchemeConfig
from .space import DGSpace, TraceTable

CSV_VERSION = "netdg-convergence v1"


# ------------------------------------------------------------------ field sampling

def _volume_fields(space, v, value, gradient, extra_degree):
    """Values and local gradients of ``value - v`` at volume quadrature points."""
    X, w, vals, grads = space.volume_table(extra_degree)
    nE, nq = w.shape
    fv = np.zeros((nE, nq))
    fg = np.zeros((nE, nq, space.dim))
    if v is not None:
        V = np.asarray(v).reshape(nE, -1)
        fv -= V @ vals.T
        fg -= np.einsum("eb,eqbd->eqd", V, grads)
    if value is not None:
        _, frame = space.cell_frames
        for d in space.mesh.topo.domains:
            idx = space.mesh.elements(d.id)
            P = X[idx].reshape(-1, X.shape[-1])
            fv[idx] += np.asarray(value(d.id, P)).reshape(len(idx), nq)
            if gradient is not None:
                G = np.asarray(gradient(d.id, P)).reshape(len(idx), nq, -1)
                fg[idx] += G @ d.frame.T
    return w, fv, fg


def _trace_fields(space, tab: TraceTable, v, value):
    """Side values (nF, S, nq) of ``value - v`` on a facet table."""
    nF, S, nq = tab.values.shape[:3]
    out = np.zeros((nF, S, nq))
    if v is not None:
        V = np.asarray(v).reshape(space.mesh.n_cells, -1)
        out -= np.einsum("fsb,fsqb->fsq", V[tab.cells], tab.values)
    if value is not None:
        dom = space.mesh.cell_domain[tab.cells]
        for d in space.mesh.topo.domains:
            f_idx, s_idx = np.nonzero(dom == d.id)
            if len(f_idx):
                P = tab.points[f_idx].reshape(-1, tab.points.shape[-1])
                out[f_idx, s_idx] += np.asarray(value(d.id, P)).reshape(len(f_idx), nq)
    return out


def norm_parts(space: DGSpace, config: SchemeConfig, v=None, value=None, gradient=None,
               extra_degree=0):
    """Squared contributions of the DG norm of ``value - v``.

    ``v`` is a dof vector; ``value(domain, X)`` / ``gradient(domain, X)`` are
    callables on ambient points (gradient in ambient coordinates).  Either
    part may be omitted.  Keys: l2, grad, interior, boundary, bifurcation.
    """
    eta_F, eta_g = config.penalties(space.p, space.dim)
    w, fv, fg = _volume_fields(space, v, value, gradient, extra_degree)
    parts = {"l2": float(np.sum(w * fv ** 2)),
             "grad": float(np.sum(w[..., None] * fg ** 2))}
    mesh = space.mesh
    parts["interior"] = parts["boundary"] = parts["bifurcation"] = 0.0
    if len(mesh.interior):
        tab = space.facet_trace(mesh.interior, extra_degree)
        t = _trace_fields(space, tab, v, value)
        parts["interior"] = float(np.sum(eta_F / tab.h[:, None] * tab.weights * (t[:, 0] - t[:, 1]) ** 2))
    if len(mesh.boundary):
        tab = space.facet_trace(mesh.boundary, extra_degree)
        t = _trace_fields(space, tab, v, value)
        parts["boundary"] = float(np.sum(eta_F / tab.h[:, None] * tab.weights * t[:, 0] ** 2))
    hg = mesh.h_gamma if space.dim == 1 else None
    total = 0.0
    for g, facets in mesh.bifurcation.items():
        tab = space.facet_trace(facets, extra_degree)
        t = _trace_fields(space, tab, v, value)
        S = t.shape[1]
        pair = sum((t[:, i] - t[:, j]) ** 2 for i, j in itertools.combinations(range(S), 2))
        h = np.full(len(facets), hg[g]) if space.dim == 1 else tab.h
        total += float(np.sum(eta_g / h[:, None] * tab.weights * pair))
    parts["bifurcation"] = total
    return parts


def _dg_from_parts(parts):
    return math.sqrt(max(parts["grad"] + parts["interior"] + parts["boundary"] + parts["bifurcation"], 0.0))


def dg_norm(space: DGSpace, config: SchemeConfig, v, gradient: Optional[Callable] = None,
            extra_degree=0) -> float:
    """DG norm with the configured penalty weights (always 1/h, never 1/h^2).

    ``v`` is a dof vector, or a callable ``v(domain, X)`` together with its
    ambient ``gradient``.
    """
    if callable(v):
        parts = norm_parts(space, config, value=v, gradient=gradient, extra_degree=extra_degree)
    else:
        parts = norm_parts(space, config, v=-np.asarray(v, dtype=float), extra_degree=extra_degree)
    return _dg_from_parts(parts)


def l2_norm(space: DGSpace, v, extra_degree=0) -> float:
    if callable(v):
        w, fv, _ = _volume_fields(space, None, v, None, extra_degree)
    else:
        w, fv, _ = _volume_fields(space, -np.asarray(v, dtype=float), None, None, extra_degree)
    return math.sqrt(float(np.sum(w * fv ** 2)))


def grad_norm(space: DGSpace, v) -> float:
    w, _, fg = _volume_fields(space, -np.asarray(v, dtype=float), None, None, 0)
    return math.sqrt(float(np.sum(w[..., None] * fg ** 2)))


def jump_parts(space, config, v):
    """Jump contributions (interior, boundary, bifurcation) of a dof vector."""
    p = norm_parts(space, config, v=-np.asarray(v, dtype=float))
    return {k: p[k] for k in ("interior", "boundary", "bifurcation")}


# ------------------------------------------------------------------ errors and rates

@dataclass
class ErrorReport:
    level: int
    h: float
    dofs: int
    dg_error: float
    l2_error: float
    rate_dg: Optional[float] = None
    rate_l2: Optional[float] = None
    iterations: int = 0
    method: str = ""


def error_vs_exact(space: DGSpace, config: SchemeConfig, uh, value, gradient,
                   extra_degree=4, level=0) -> ErrorReport:
    """DG and L2 errors of ``uh`` against an exact solution given by callables."""
    parts = norm_parts(space, config, v=uh, value=value, gradient=gradient,
                       extra_degree=extra_degree)
    return ErrorReport(level, space.mesh.h, space.ndofs, _dg_from_parts(parts),
                       math.sqrt(parts["l2"]))


def observed_rate(e_coarse, e_fine, h_coarse, h_fine):
    """log(e_coarse/e_fine)/log(h_coarse/h_fine); log2 of the error ratio when h halves."""
    if e_coarse <= 0 or e_fine <= 0:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def fill_rates(reports: Sequence[ErrorReport]):
    for prev, cur in zip(reports, reports[1:]):
        cur.rate_dg = observed_rate(prev.dg_error, cur.dg_error, prev.h, cur.h)
        cur.rate_l2 = observed_rate(prev.l2_error, cur.l2_error, prev.h, cur.h)
    return reports


CSV_FIELDS = ["level", "h", "dofs", "dg_error", "l2_error", "rate_dg", "rate_l2", "iterations", "method"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10e}"
    return str(v)


def reports_to_csv(reports: Sequence[ErrorReport], meta: Optional[dict] = None) -> str:
    """CSV text with a commented version header (gnuplot skips '#' lines)."""
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_FIELDS)
    for r in reports:
        d = asdict(r)
        wr.writerow([_fmt(d[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def read_reports_csv(text: str):
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rd = csv.DictReader(rows)
    out = []
    for row in rd:
        conv = {k: (None if row[k] == "" else row[k]) for k in CSV_FIELDS}
        out.append(ErrorReport(int(conv["level"]), float(conv["h"]), int(conv["dofs"]),
                               float(conv["dg_error"]), float(conv["l2_error"]),
                               None if conv["rate_dg"] is None else float(conv["rate_dg"]),
                               None if conv["rate_l2"] is None else float(conv["rate_l2"]),
                               int(conv["iterations"] or 0), conv["method"] or ""))
    return out


# ------------------------------------------------------------------ transfers between levels

def evaluate_at(space: DGSpace, u, cells, X):
    """Values of dof vector ``u`` at ambient points ``X`` (n, amb) inside ``cells`` (n,)."""
    origin, frame = space.cell_frames
    loc = np.einsum("na,nda->nd", X - origin[cells], frame[cells])
    ref = space.to_reference(cells, loc)
    v, _ = space.evaluate(u, cells, ref)
    return v


def children_per_cell(dim):
    return 2 if dim == 1 else 4


def relative_l2_difference(coarse: DGSpace, u_coarse, fine: DGSpace, u_fine, extra_degree=0):
    """||u_fine - u_coarse|| / ||u_fine|| on the fine mesh; meshes must be nested by refine()."""
    k = fine.mesh.level - coarse.mesh.level
    if k < 0:
        raise ValueError("fine mesh is coarser than the coarse mesh")
    r = children_per_cell(fine.dim) ** k
    if fine.mesh.n_cells != coarse.mesh.n_cells * r:
        raise ValueError("meshes are not nested by uniform refinement")
    U = np.asarray(u_fine).reshape(fine.mesh.n_cells, -1)
    num = den = 0.0
    for start in range(0, fine.mesh.n_cells, 200_000):
        idx = np.arange(start, min(start + 200_000, fine.mesh.n_cells))
        X, w, vals, _ = fine.volume_table(extra_degree, cells=idx)
        nq = w.shape[1]
        uf = U[idx] @ vals.T
        parent = np.repeat(idx // r, nq)
        uc = evaluate_at(coarse, u_coarse, parent, X.reshape(-1, X.shape[-1])).reshape(len(idx), nq)
        num += float(np.sum(w * (uf - uc) ** 2))
        den += float(np.sum(w * uf ** 2))
    return math.sqrt(num / den)


# ------------------------------------------------------------------ stability checks

def _require_p1(space):
    if space.p != 1:
        raise ValueError("operation is defined for p = 1 only")


def enriching_map(space: DGSpace, v) -> np.ndarray:
    """Vertex averaging over all cells sharing a vertex; zero on boundary vertices."""
    _require_p1(space)
    mesh = space.mesh
    cells = mesh.cells
    vals = np.asarray(v, dtype=float).reshape(cells.shape)
    nV = len(mesh.vertices)
    s = np.bincount(cells.ravel(), weights=vals.ravel(), minlength=nV)
    c = np.bincount(cells.ravel(), minlength=nV)
    avg = np.divide(s, c, out=np.zeros(nV), where=c > 0)
    avg[mesh.boundary_vertices()] = 0.0
    return avg[cells].ravel()


def l2_projection(space: DGSpace, func: Callable, extra_degree=4) -> np.ndarray:
    """Element-wise L2 projection of ``func(domain, X)`` onto the space."""
    X, w, vals, _ = space.volume_table(extra_degree)
    nE, nq = w.shape
    F = np.empty((nE, nq))
    for d in space.mesh.topo.domains:
        idx = space.mesh.elements(d.id)
        F[idx] = np.asarray(func(d.id, X[idx].reshape(-1, X.shape[-1]))).reshape(len(idx), nq)
    ref_w = w / w.sum(axis=1, keepdims=True)  # detJ-free weights (affine cells)
    Mref = np.einsum("q,qa,qb->ab", ref_w[0], vals, vals)
    rhs = np.einsum("eq,eq,qa->ea", ref_w, F, vals)
    return np.linalg.solve(Mref, rhs.T).T.ravel()


def poincare_ratio(space: DGSpace, config: SchemeConfig, v) -> float:
    """sum ||v||^2_L2 / ||v||^2_DG."""
    parts = norm_parts(space, config, v=-np.asarray(v, dtype=float))
    dg2 = _dg_from_parts(parts) ** 2
    if parts["l2"] == 0:
        raise ValueError("v must be nonzero")
    return parts["l2"] / dg2


@dataclass
class TheoryLevel:
    level: int
    h: float
    dofs: int
    enrich_l2: float
    enrich_grad: float
    enrich_jump: float
    poincare: float
    projection: float
    min_eig: Optional[float] = None


def random_vectors(space, n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, space.ndofs))


def enrichment_constants(space, config, samples):
    """Max over samples of ||E v - v|| / (h ||v||_DG), ||grad E v|| / ||v||_DG and E v's jumps."""
    h = space.mesh.h
    r1 = r2 = jmax = 0.0
    for v in samples:
        dg = dg_norm(space, config, v)
        Ev = enriching_map(space, v)
        r1 = max(r1, l2_norm(space, Ev - v) / (h * dg))
        r2 = max(r2, grad_norm(space, Ev) / dg)
        jmax = max(jmax, max(jump_parts(space, config, Ev).values()))
    return r1, r2, math.sqrt(jmax)


def poincare_constant(space, config, samples):
    return max(poincare_ratio(space, config, v) for v in samples)


def projection_stability(space, config, func, gradient):
    """||pi_h v||_DG / ||v||_DG for a smooth callable with ambient gradient."""
    pv = l2_projection(space, func)
    return dg_norm(space, config, pv) / dg_norm(space, config, func, gradient, extra_degree=4)


def bounded_across_levels(values, factor=2.0):
    """Max over levels within ``factor`` of the coarsest-level value."""
    return max(values) <= factor * values[0]
