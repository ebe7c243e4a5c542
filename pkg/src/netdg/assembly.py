"""Interior penalty DG stiffness matrix and load vector on networks.

Every facet family reduces to one kernel.  A facet with S sides carries two
S x S side-coupling matrices: ``flux`` multiplies (flux of one side) x
(trace of another), ``pen`` multiplies trace x trace.

* boundary facet:     flux = [[1]],               pen = [[1]]
* interior facet:     flux = 1/2 (c c^T),         pen = c c^T,   c = (1, -1)
* bifurcation, card c: flux = I - 11^T / c,        pen = c I - 11^T

The bifurcation matrices are the pair sums over D_gamma written in matrix
form: sum_{i<j} (a_i - a_j)(b_i - b_j) = a^T (c I - 11^T) b.  With outward
side normals, a card-2 bifurcation coincides with an interior facet.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .space import DGSpace, TraceTable

log = logging.getLogger(__name__)

Scalar = Union[float, Callable]


@dataclass(frozen=True)
class SchemeConfig:
    """Variant and penalty selection.

    ``epsilon`` is the bifurcation symmetrization sign, ``epsilon_i`` the
    per-domain one (scalar or {domain: value}); -1 SIPG, 0 IIPG, +1 NIPG.
    ``eta_F`` / ``eta_gamma`` default to 10p (edge-networks) or 20p
    (plane-networks).  ``over_penalize`` defaults to True for IIPG/NIPG.
    """

    epsilon: int = -1
    epsilon_i: Optional[Union[int, Mapping[int, int]]] = None
    eta_F: Optional[float] = None
    eta_gamma: Optional[float] = None
    over_penalize: Optional[bool] = None
    g_gamma_weight: str = "mean"

    def __post_init__(self):
        for e in self._eps_values():
            if e not in (-1, 0, 1):
                raise ValueError(f"epsilon must be -1, 0 or 1, got {e}")
        for name in ("eta_F", "eta_gamma"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.g_gamma_weight not in ("mean", "sum"):
            raise ValueError("g_gamma_weight must be 'mean' or 'sum'")

    def _eps_values(self):
        vals = [self.epsilon]
        if isinstance(self.epsilon_i, Mapping):
            vals += list(self.epsilon_i.values())
        elif self.epsilon_i is not None:
            vals.append(self.epsilon_i)
        return vals

    @classmethod
    def variant(cls, name, **kw):
        eps = {"sipg": -1, "iipg": 0, "nipg": 1}[name.lower()]
        return cls(epsilon=eps, **kw)

    def eps_domain(self, i):
        if self.epsilon_i is None:
            return self.epsilon
        if isinstance(self.epsilon_i, Mapping):
            return self.epsilon_i.get(i, self.epsilon)
        return self.epsilon_i

    @property
    def symmetric(self):
        return all(e == -1 for e in self._eps_values())

    def penalties(self, p, dim):
        base = (10.0 if dim == 1 else 20.0) * p
        eF = self.eta_F if self.eta_F is not None else base
        eg = self.eta_gamma if self.eta_gamma is not None else base
        return eF, eg

    @property
    def overpenalized(self):
        if self.over_penalize is not None:
            return self.over_penalize
        return self.epsilon in (0, 1)


@dataclass
class Coefficients:
    """Per-domain data; callables take ambient points of shape (n, amb).

    ``kappa`` may be a float, a {domain: float|callable} map or one callable.
    ``dirichlet`` is optional boundary data (homogeneous when absent);
    ``g_gamma`` maps bifurcation ids to the flux imbalance sum sigma_i . n_i.
    """

    f: Union[Scalar, Mapping[int, Scalar]] = 0.0
    kappa: Union[Scalar, Mapping[int, Scalar]] = 1.0
    dirichlet: Optional[Union[Scalar, Mapping[int, Scalar]]] = None
    g_gamma: Optional[Mapping[int, Scalar]] = None

    def _lookup(self, data, i, name):
        if isinstance(data, Mapping):
            if i not in data:
                raise KeyError(f"coefficient {name!r} missing on domain {i}")
            return data[i]
        return data

    def sample(self, name, i, X):
        v = self._lookup(getattr(self, name), i, name)
        X = np.asarray(X)
        if callable(v):
            out = np.asarray(v(X.reshape(-1, X.shape[-1])), dtype=float)
            return np.broadcast_to(out, (int(np.prod(X.shape[:-1])),)).reshape(X.shape[:-1])
        return np.full(X.shape[:-1], float(v))

    def kappa_at(self, i, X):
        k = self.sample("kappa", i, X)
        if np.any(k <= 0):
            raise ValueError(f"non-positive kappa sample on domain {i}")
        return k


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric_hint: bool = False
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]

    def export_matrix_market(self, path, comment=""):
        scipy.io.mmwrite(str(path), self.matrix, comment=comment)


# ------------------------------------------------------------------ helpers

def side_kappa(space, coeffs, tab: TraceTable):
    """kappa on each side at facet points: (nF, S, nq)."""
    nF, S, nq = tab.values.shape[:3]
    out = np.empty((nF, S, nq))
    dom = space.mesh.cell_domain[tab.cells]
    for d in space.mesh.topo.domains:
        m = dom == d.id
        if not m.any():
            continue
        f_idx, s_idx = np.nonzero(m)
        out[f_idx, s_idx] = coeffs.kappa_at(d.id, tab.points[f_idx])
    return out


def side_flux(space, coeffs, tab: TraceTable):
    """kappa grad(phi) . n_side for every side basis function: (nF, S, nq, nb)."""
    k = side_kappa(space, coeffs, tab)
    gn = np.einsum("fsqbd,fsd->fsqb", tab.grads, tab.normals)
    return k[..., None] * gn


def coupling_matrices(kind, S):
    if kind == "boundary":
        return np.ones((1, 1)), np.ones((1, 1))
    if kind == "interior":
        c = np.array([1.0, -1.0])
        return 0.5 * np.outer(c, c), np.outer(c, c)
    one = np.ones((S, S))
    return np.eye(S) - one / S, S * np.eye(S) - one


def penalty_scale(h, eta, over):
    return eta / (h ** 2 if over else h)


def facet_kernel(tab, flux, eps, pen, Mflux, Mpen):
    """Local matrices (nF, S*nb, S*nb): rows test (side l, basis a), cols trial (k, b).

    ``eps`` may be per facet (nF,) when sides of interior facets belong to
    domains with different epsilon_i.
    """
    w = tab.weights
    v = tab.values
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (len(w),))
    consist = np.einsum("fq,lk,fkqb,flqa->flakb", w, Mflux, flux, v)
    symm = np.einsum("fq,lk,flqa,fkqb->flakb", w, Mflux, flux, v)
    penal = np.einsum("fq,lk,fkqb,flqa->flakb", w, Mpen, v, v)
    A = -consist + eps[:, None, None, None, None] * symm + pen[:, None, None, None, None] * penal
    nF, S, nb = v.shape[0], v.shape[1], v.shape[3]
    return A.reshape(nF, S * nb, S * nb)


class _Accumulator:
    """COO triplets flushed into a CSR sum once ``limit`` entries are pending.

    Keeps peak memory bounded on large meshes; chunk boundaries are fixed so
    the floating point summation order is reproducible run to run.
    """

    def __init__(self, n, limit=20_000_000):
        self.n, self.limit = n, limit
        self.rows, self.cols, self.data = [], [], []
        self.pending = 0
        self.total = None

    def add(self, space, cells, local):
        dofs = space.dofs(cells).reshape(len(cells), -1).astype(np.int32 if self.n < 2**31 else np.int64)
        m = dofs.shape[1]
        self.rows.append(np.repeat(dofs, m, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, m)).ravel())
        self.data.append(local.ravel())
        self.pending += local.size
        if self.pending >= self.limit:
            self.flush()

    def flush(self):
        if not self.pending:
            return
        part = sp.coo_matrix((np.concatenate(self.data),
                              (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(self.n, self.n)).tocsr()
        self.rows, self.cols, self.data, self.pending = [], [], [], 0
        self.total = part if self.total is None else self.total + part

    def matrix(self):
        self.flush()
        A = self.total if self.total is not None else sp.csr_matrix((self.n, self.n))
        A.sum_duplicates()
        A.sort_indices()
        return A


CHUNK = 100_000


def _index_chunks(idx, size=CHUNK):
    for start in range(0, len(idx), size):
        yield idx[start:start + size]


# ------------------------------------------------------------------ assembly

TERMS = ("volume", "interior", "boundary", "bifurcation")


def assemble(space: DGSpace, coeffs: Coefficients, config: SchemeConfig,
             terms=TERMS) -> SparseSystem:
    """Stiffness matrix and load vector of the network IPDG scheme.

    Terms are added volume -> interior facets -> boundary facets -> bifurcation
    facets, in fixed chunks of cells/facets.  ``terms`` selects a subset of
    these families (mainly for inspection and tests).
    """
    unknown = set(terms) - set(TERMS)
    if unknown:
        raise ValueError(f"unknown term families {sorted(unknown)}")
    mesh = space.mesh
    p, dim = space.p, space.dim
    eta_F, eta_g = config.penalties(p, dim)
    over = config.overpenalized
    acc = _Accumulator(space.ndofs)
    b = np.zeros(space.ndofs)
    nb = space.basis.n

    # (a) volume
    for d in (mesh.topo.domains if "volume" in terms else ()):
        for idx in _index_chunks(mesh.elements(d.id)):
            X, w, vals, grads = space.volume_table(cells=idx)
            kap = coeffs.kappa_at(d.id, X)
            fvals = coeffs.sample("f", d.id, X)
            Ke = np.einsum("eq,eqad,eqbd->eab", w * kap, grads, grads)
            acc.add(space, idx[:, None], Ke)
            b[space.dofs(idx)] += np.einsum("eq,qa->ea", w * fvals, vals)

    # (b) interior facets
    Mf, Mp = coupling_matrices("interior", 2)
    for facets in (mesh.interior.chunks(CHUNK) if "interior" in terms else ()):
        tab = space.facet_trace(facets)
        flux = side_flux(space, coeffs, tab)
        dom = mesh.cell_domain[tab.cells]
        eps = np.array([config.eps_domain(i) for i in dom[:, 0]], dtype=float)
        A = facet_kernel(tab, flux, eps, penalty_scale(tab.h, eta_F, over), Mf, Mp)
        acc.add(space, tab.cells, A)

    # (c) boundary facets (Nitsche)
    Mf, Mp = coupling_matrices("boundary", 1)
    for facets in (mesh.boundary.chunks(CHUNK) if "boundary" in terms else ()):
        tab = space.facet_trace(facets)
        flux = side_flux(space, coeffs, tab)
        dom = mesh.cell_domain[tab.cells[:, 0]]
        eps = np.array([config.eps_domain(i) for i in dom], dtype=float)
        pen = penalty_scale(tab.h, eta_F, over)
        A = facet_kernel(tab, flux, eps, pen, Mf, Mp)
        acc.add(space, tab.cells, A)
        if coeffs.dirichlet is not None:
            gD = np.empty(tab.weights.shape)
            for d in mesh.topo.domains:
                m = dom == d.id
                if m.any():
                    gD[m] = _sample_opt(coeffs.dirichlet, d.id, tab.points[m])
            loc = (pen[:, None, None] * tab.values[:, 0]
                   + eps[:, None, None] * flux[:, 0])
            contrib = np.einsum("fq,fq,fqa->fa", tab.weights, gD, loc)
            np.add.at(b, space.dofs(tab.cells[:, 0]), contrib)

    # (d) bifurcation facets
    hg = mesh.h_gamma if dim == 1 else None
    for g in (sorted(mesh.bifurcation) if "bifurcation" in terms else ()):
        for facets in mesh.bifurcation[g].chunks(CHUNK):
            tab = space.facet_trace(facets)
            S = facets.cells.shape[1]
            flux = side_flux(space, coeffs, tab)
            Mf, Mp = coupling_matrices("bifurcation", S)
            h = np.full(len(facets), hg[g]) if dim == 1 else tab.h
            A = facet_kernel(tab, flux, config.epsilon, penalty_scale(h, eta_g, over), Mf, Mp)
            acc.add(space, tab.cells, A)
            if coeffs.g_gamma is not None and g in coeffs.g_gamma:
                gg = _sample_opt(coeffs.g_gamma[g], None, tab.points)
                weight = 1.0 / S if config.g_gamma_weight == "mean" else 1.0
                contrib = weight * np.einsum("fq,fq,fsqa->fsa", tab.weights, gg, tab.values)
                np.add.at(b, space.dofs(tab.cells), contrib)

    info = {"eta_F": eta_F, "eta_gamma": eta_g, "over_penalize": over, "nb": nb}
    return SparseSystem(acc.matrix(), b, symmetric_hint=config.symmetric, info=info)


def _sample_opt(v, i, X):
    if isinstance(v, Mapping):
        v = v[i]
    X = np.asarray(X)
    if callable(v):
        out = np.asarray(v(X.reshape(-1, X.shape[-1])), dtype=float)
        return np.broadcast_to(out, (int(np.prod(X.shape[:-1])),)).reshape(X.shape[:-1])
    return np.full(X.shape[:-1], float(v))


# ------------------------------------------------------------------ matrix-free

def apply_bilinear(space: DGSpace, coeffs: Coefficients, config: SchemeConfig, w, v) -> float:
    """a(w, v) from traces of the two functions, pair by pair over D_gamma."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if w.shape != (space.ndofs,) or v.shape != (space.ndofs,):
        raise ValueError(f"vectors must have length {space.ndofs}")
    mesh = space.mesh
    eta_F, eta_g = config.penalties(space.p, space.dim)
    over = config.overpenalized
    W = w.reshape(-1, space.basis.n)
    Vv = v.reshape(-1, space.basis.n)
    total = 0.0

    X, wq, vals, grads = space.volume_table()
    gw = np.einsum("eb,eqbd->eqd", W, grads)
    gv = np.einsum("eb,eqbd->eqd", Vv, grads)
    for d in mesh.topo.domains:
        idx = mesh.elements(d.id)
        k = coeffs.kappa_at(d.id, X[idx])
        total += np.sum(wq[idx] * k * np.sum(gw[idx] * gv[idx], axis=-1))

    def fields(tab, U):
        val = np.einsum("fsb,fsqb->fsq", U[tab.cells], tab.values)
        kap = side_kappa(space, coeffs, tab)
        fl = kap * np.einsum("fsb,fsqbd,fsd->fsq", U[tab.cells], tab.grads, tab.normals)
        return val, fl

    if len(mesh.interior):
        tab = space.facet_trace(mesh.interior)
        vw, fw = fields(tab, W)
        vv, fv = fields(tab, Vv)
        # n_F = outward normal of side 0: flux_F = fl_0 = -fl_1
        jw, jv = vw[:, 0] - vw[:, 1], vv[:, 0] - vv[:, 1]
        aw = 0.5 * (fw[:, 0] - fw[:, 1])
        av = 0.5 * (fv[:, 0] - fv[:, 1])
        eps = np.array([config.eps_domain(i) for i in mesh.cell_domain[tab.cells[:, 0]]])
        pen = penalty_scale(tab.h, eta_F, over)
        total += np.sum(tab.weights * (-aw * jv + eps[:, None] * av * jw + pen[:, None] * jw * jv))

    if len(mesh.boundary):
        tab = space.facet_trace(mesh.boundary)
        vw, fw = fields(tab, W)
        vv, fv = fields(tab, Vv)
        eps = np.array([config.eps_domain(i) for i in mesh.cell_domain[tab.cells[:, 0]]])
        pen = penalty_scale(tab.h, eta_F, over)
        total += np.sum(tab.weights * (-fw[:, 0] * vv[:, 0] + eps[:, None] * fv[:, 0] * vw[:, 0]
                                       + pen[:, None] * vw[:, 0] * vv[:, 0]))

    hg = mesh.h_gamma if space.dim == 1 else None
    for g, facets in mesh.bifurcation.items():
        b = mesh.topo.bifurcation(g)
        tab = space.facet_trace(facets)
        vw, fw = fields(tab, W)
        vv, fv = fields(tab, Vv)
        h = np.full(len(facets), hg[g]) if space.dim == 1 else tab.h
        pen = penalty_scale(h, eta_g, over)
        pos = {dom: k for k, dom in enumerate(b.incident)}
        avg_jump_wv = avg_jump_vw = jump_jump = 0.0
        for i, j in b.pairs:
            a, c = pos[i], pos[j]
            jw_ij = vw[:, a] - vw[:, c]
            jv_ij = vv[:, a] - vv[:, c]
            sw_ij = fw[:, a] - fw[:, c]   # fl already carries the side's outward normal
            sv_ij = fv[:, a] - fv[:, c]
            avg_jump_wv = avg_jump_wv + sw_ij * jv_ij
            avg_jump_vw = avg_jump_vw + sv_ij * jw_ij
            jump_jump = jump_jump + jw_ij * jv_ij
        card = b.card
        total += np.sum(tab.weights * (-avg_jump_wv / card + config.epsilon * avg_jump_vw / card
                                       + pen[:, None] * jump_jump))
    return float(total)
