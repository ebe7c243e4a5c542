"""Broken polynomial spaces, reference bases, quadrature and trace tables."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import FacetSet, NetworkMesh


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)


def gauss_interval(n):
    """n-point Gauss-Legendre on [0, 1]; exact to degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(((x + 1) / 2)[:, None], w / 2)


def gauss_triangle(n):
    """Collapsed (Duffy) Gauss product rule on the unit triangle; exact to degree 2n-1."""
    x, wx = np.polynomial.legendre.leggauss(n)
    a = (x + 1) / 2
    # Gauss-Jacobi(1,0) for the collapsed direction absorbs the (1-b) Jacobian
    b, wb = _gauss_jacobi_10(n)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wx / 2, wb, indexing="ij")
    pts = np.stack([A * (1 - B), B], axis=-1).reshape(-1, 2)
    return QuadratureRule(pts, (WA * WB).ravel())


def _gauss_jacobi_10(n):
    # nodes/weights on [0,1] for weight (1-t); Golub-Welsch on the Jacobi(1,0) recurrence
    from scipy.special import roots_jacobi
    x, w = roots_jacobi(n, 1.0, 0.0)
    return (x + 1) / 2, w / 4


def quadrature(dim, degree):
    n = degree // 2 + 1
    return gauss_interval(n) if dim == 1 else gauss_triangle(n)


class LagrangeBasis:
    """Nodal basis on equispaced reference nodes (interval [0,1] or unit triangle)."""

    def __init__(self, dim, p):
        if p < 1:
            raise ValueError("polynomial degree must be >= 1")
        self.dim, self.p = dim, p
        if dim == 1:
            self.nodes = (np.arange(p + 1) / p)[:, None]
            # vertex nodes first: 0, 1, then interior
            self.nodes = np.concatenate([self.nodes[[0, p]], self.nodes[1:p]])
            self.exponents = [(k,) for k in range(p + 1)]
        else:
            nodes = [(i / p, j / p) for j in range(p + 1) for i in range(p + 1 - j)]
            verts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
            rest = [q for q in nodes if q not in verts]
            self.nodes = np.array(verts + rest)
            self.exponents = [(i, j) for i in range(p + 1) for j in range(p + 1 - i)]
        V = self._monomials(self.nodes)
        self.coef = np.linalg.inv(V)  # column k = coefficients of basis k

    @property
    def n(self):
        return len(self.exponents)

    def _monomials(self, X):
        X = np.atleast_2d(X)
        return np.stack([np.prod([X[:, d] ** e[d] for d in range(self.dim)], axis=0)
                         for e in self.exponents], axis=1)

    def _monomial_grads(self, X):
        X = np.atleast_2d(X)
        out = np.zeros((len(X), len(self.exponents), self.dim))
        for k, e in enumerate(self.exponents):
            for d in range(self.dim):
                if e[d] == 0:
                    continue
                term = e[d] * X[:, d] ** (e[d] - 1)
                for o in range(self.dim):
                    if o != d:
                        term = term * X[:, o] ** e[o]
                out[:, k, d] = term
        return out

    def values(self, X):
        """(n_points, n_basis)"""
        return self._monomials(X) @ self.coef

    def grads(self, X):
        """(n_points, n_basis, dim) reference gradients."""
        G = self._monomial_grads(X)
        return np.einsum("qmd,mb->qbd", G, self.coef)


@dataclass
class TraceTable:
    """Side data of a facet set at facet quadrature points.

    Shapes: ``values`` (nF, S, nq, nb); ``grads`` (nF, S, nq, nb, dim) local
    frame; ``normals`` (nF, S, dim) outward normal of each side cell;
    ``weights`` (nF, nq) including |F|; ``points`` (nF, nq, amb) ambient.
    """

    cells: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    h: np.ndarray


class DGSpace:
    """V_h^p on a network mesh: one independent block of dofs per cell."""

    def __init__(self, mesh: NetworkMesh, p: int):
        self.mesh = mesh
        self.p = p
        self.basis = LagrangeBasis(mesh.dim, p)

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def dofs_per_element(self):
        return self.basis.n

    @property
    def ndofs(self):
        return self.mesh.n_cells * self.basis.n

    @property
    def global_offsets(self):
        return np.arange(self.mesh.n_cells) * self.basis.n

    def dofs(self, cells):
        cells = np.asarray(cells)
        return cells[..., None] * self.basis.n + np.arange(self.basis.n)

    # ------------------------------------------------------------ geometry
    @cached_property
    def _affine(self):
        X = self.mesh.local_coords()  # (nE, dim+1, dim)
        x0 = X[:, 0]
        J = np.stack([X[:, k + 1] - x0 for k in range(self.dim)], axis=-1)  # (nE, dim, dim)
        return x0, J, np.linalg.inv(J), np.abs(np.linalg.det(J))

    def to_reference(self, cells, local):
        x0, _, Jinv, _ = self._affine
        return np.einsum("...ij,...j->...i", Jinv[cells], local - x0[cells])

    def _cell_frames(self):
        topo = self.mesh.topo
        origin = np.empty((self.mesh.n_cells, topo.amb))
        frame = np.empty((self.mesh.n_cells, self.dim, topo.amb))
        for d in topo.domains:
            idx = self.mesh.elements(d.id)
            origin[idx] = d.origin
            frame[idx] = d.frame
        return origin, frame

    @cached_property
    def cell_frames(self):
        return self._cell_frames()

    # ------------------------------------------------------------ evaluation
    def eval_basis(self, element, point):
        """Basis values and local-frame gradients of one cell at a reference point."""
        if not 0 <= element < self.mesh.n_cells:
            raise IndexError(f"element {element} out of range")
        _, _, Jinv, _ = self._affine
        X = np.atleast_2d(np.asarray(point, dtype=float))
        vals = self.basis.values(X)[0]
        g = self.basis.grads(X)[0] @ Jinv[element]
        return vals, g

    def volume_table(self, extra_degree=0, cells=None):
        """Element quadrature: (points ambient, weights, values, local gradients).

        ``cells`` restricts the table to a subset (index array or slice).
        """
        rule = quadrature(self.dim, 2 * self.p + 2 + extra_degree)
        x0, J, Jinv, detJ = self._affine
        origin, frame = self.cell_frames
        if cells is not None:
            x0, J, Jinv, detJ = x0[cells], J[cells], Jinv[cells], detJ[cells]
            origin, frame = origin[cells], frame[cells]
        vals = self.basis.values(rule.points)                     # (nq, nb)
        rg = self.basis.grads(rule.points)                        # (nq, nb, dim)
        grads = np.einsum("qbk,ekd->eqbd", rg, Jinv)              # (nE, nq, nb, dim)
        loc = x0[:, None, :] + np.einsum("eij,qj->eqi", J, rule.points)
        X = origin[:, None, :] + np.einsum("eqi,eia->eqa", loc, frame)
        w = detJ[:, None] * rule.weights[None, :]
        return X, w, vals, grads

    def facet_rule(self, extra_degree=0):
        if self.dim == 1:
            return np.zeros(1), np.ones(1)
        rule = gauss_interval((2 * self.p + 2 + extra_degree) // 2 + 1)
        return rule.points[:, 0], rule.weights

    def facet_trace(self, facets: FacetSet, extra_degree=0) -> TraceTable:
        """Evaluate all sides of ``facets`` at common physical quadrature points."""
        V = self.mesh.vertices
        t, wq = self.facet_rule(extra_degree)
        nF, S = facets.cells.shape
        if self.dim == 1:
            P = V[facets.verts[:, 0]][:, None, :]                # (nF, 1, amb)
            meas = np.ones(nF)
        else:
            A, B = V[facets.verts[:, 0]], V[facets.verts[:, 1]]
            P = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
            meas = np.linalg.norm(B - A, axis=1)
        nq = P.shape[1]
        origin, frame = self.cell_frames
        x0, J, Jinv, _ = self._affine
        cells = facets.cells
        loc = np.einsum("fsqa,fsda->fsqd", P[:, None] - origin[cells][:, :, None, :], frame[cells])
        ref = np.einsum("fsij,fsqj->fsqi", Jinv[cells], loc - x0[cells][:, :, None, :])
        ref = np.clip(ref, 0.0, 1.0)
        flat = ref.reshape(-1, self.dim)
        vals = self.basis.values(flat).reshape(nF, S, nq, -1)
        rg = self.basis.grads(flat).reshape(nF, S, nq, self.basis.n, self.dim)
        grads = np.einsum("fsqbk,fskd->fsqbd", rg, Jinv[cells])
        normals = self._side_normals(facets, loc)
        w = meas[:, None] * wq[None, :]
        return TraceTable(cells, vals, grads, normals, w, P, facets.h)

    def _side_normals(self, facets, loc):
        """Outward normal of every side cell at the facet (local frame)."""
        cells = facets.cells
        Xc = self.mesh.local_coords()[cells]                       # (nF, S, dim+1, dim)
        centroid = Xc.mean(axis=2)
        if self.dim == 1:
            n = np.sign(loc[:, :, 0, 0] - centroid[:, :, 0])[..., None]
            return n
        # facet direction from the two facet points in each side's frame
        V = self.mesh.vertices
        origin, frame = self.cell_frames
        A, B = V[facets.verts[:, 0]], V[facets.verts[:, 1]]
        a = np.einsum("fsa,fsda->fsd", A[:, None] - origin[cells], frame[cells])
        b = np.einsum("fsa,fsda->fsd", B[:, None] - origin[cells], frame[cells])
        d = b - a
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        flip = np.einsum("fsd,fsd->fs", n, centroid - a) > 0
        n[flip] *= -1
        return n

    # ------------------------------------------------------------ functions
    def evaluate(self, u, cells, ref):
        """Values and local gradients of dof vector ``u`` at reference points of ``cells``."""
        _, _, Jinv, _ = self._affine
        shape = np.shape(cells)
        flat_c = np.ravel(cells)
        flat_r = np.reshape(ref, (-1, self.dim))
        vals = self.basis.values(flat_r)
        rg = self.basis.grads(flat_r)
        coef = np.asarray(u).reshape(-1, self.basis.n)[flat_c]
        v = np.sum(vals * coef, axis=1)
        g = np.einsum("qb,qbk,qkd->qd", coef, rg, Jinv[flat_c])
        return v.reshape(shape), g.reshape(shape + (self.dim,))

    def interpolate(self, func):
        """Nodal interpolation of ``func(domain_id, X_ambient)``."""
        x0, J, _, _ = self._affine
        origin, frame = self.cell_frames
        loc = x0[:, None, :] + np.einsum("eij,qj->eqi", J, self.basis.nodes)
        X = origin[:, None, :] + np.einsum("eqi,eia->eqa", loc, frame)
        out = np.empty((self.mesh.n_cells, self.basis.n))
        for d in self.mesh.topo.domains:
            idx = self.mesh.elements(d.id)
            out[idx] = np.asarray(func(d.id, X[idx].reshape(-1, X.shape[-1]))).reshape(len(idx), -1)
        return out.ravel()


def rule_exact_to(rule, dim, degree):
    """Check a rule integrates all monomials up to ``degree`` on the reference cell."""
    from math import factorial
    for e in itertools.product(range(degree + 1), repeat=dim):
        if sum(e) > degree:
            continue
        val = np.sum(rule.weights * np.prod(rule.points ** np.array(e), axis=1))
        if dim == 1:
            exact = 1.0 / (e[0] + 1)
        else:
            exact = factorial(e[0]) * factorial(e[1]) / factorial(e[0] + e[1] + 2)
        if abs(val - exact) > 1e-13:
            return False
    return True
