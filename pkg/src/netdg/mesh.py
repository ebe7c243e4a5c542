"""Per-domain interval / triangle meshes with classified facets.

All domains share one global vertex table (ambient coordinates); vertices
on bifurcations are merged, so facet adjacency across domains falls out of
plain vertex-key lookups.  Cells are stored as global vertex ids with a
``cell_domain`` tag, ordered domain-major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CONTAIN_TOL, HypergraphTopology, _point_in_polygon, _point_on_segment

MESH_HEADER = "netdg-mesh v1"
MATCH_TOL = 1e-12


class MeshError(ValueError):
    pass


@dataclass
class FacetSet:
    """Facets of one kind; ``cells[f, k]`` is side k of facet f.

    ``verts`` holds the global vertex ids of each facet (1 for point
    facets, 2 for edges, oriented).  ``h`` is h_F.
    """

    cells: np.ndarray
    verts: np.ndarray
    h: np.ndarray

    def __len__(self):
        return len(self.cells)

    def subset(self, sl):
        return FacetSet(self.cells[sl], self.verts[sl], self.h[sl])

    def chunks(self, size):
        for start in range(0, len(self), size):
            yield self.subset(slice(start, start + size))


@dataclass
class NetworkMesh:
    topo: HypergraphTopology
    vertices: np.ndarray        # (nV, amb)
    cells: np.ndarray           # (nE, dim+1) global vertex ids, CCW in local frame
    cell_domain: np.ndarray     # (nE,)
    interior: FacetSet          # sides ordered so n_F points from side 0 to side 1
    boundary: FacetSet
    bifurcation: dict           # gamma id -> FacetSet, sides ordered as incident
    level: int = 0

    @property
    def dim(self):
        return self.topo.dim

    @property
    def n_cells(self):
        return len(self.cells)

    def elements(self, i):
        return np.flatnonzero(self.cell_domain == i)

    def local_coords(self):
        """(nE, dim+1, dim) cell vertex coordinates in each domain's local frame."""
        out = np.empty((self.n_cells, self.dim + 1, self.dim))
        for d in self.topo.domains:
            idx = self.elements(d.id)
            out[idx] = d.to_local(self.vertices[self.cells[idx]])
        return out

    @property
    def h_cell(self):
        X = self.vertices[self.cells]
        if self.dim == 1:
            return np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
        e = [np.linalg.norm(X[:, (k + 1) % 3] - X[:, k], axis=1) for k in range(3)]
        return np.max(e, axis=0)

    @property
    def h(self):
        return float(self.h_cell.max())

    @property
    def h_gamma(self):
        """Edge-networks: longest interval touching each bifurcation point."""
        hc = self.h_cell
        return {g: float(hc[fs.cells].max()) for g, fs in self.bifurcation.items()}

    def cell_measure(self):
        X = self.local_coords()
        if self.dim == 1:
            return np.abs(X[:, 1, 0] - X[:, 0, 0])
        a, b = X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def boundary_vertices(self):
        """Vertex ids lying on ∂G."""
        return np.unique(self.boundary.verts)

    def min_angle(self):
        if self.dim != 2:
            return None
        X = self.vertices[self.cells]
        ang = []
        for k in range(3):
            u = X[:, (k + 1) % 3] - X[:, k]
            w = X[:, (k + 2) % 3] - X[:, k]
            c = np.sum(u * w, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(ang))


# --------------------------------------------------------------------- construction

def mesh_network(topo: HypergraphTopology, target_h: float) -> NetworkMesh:
    """Structured mesh with cell edges no longer than ``target_h``.

    Segments are cut into ceil(L/target_h) equal intervals.  Polygons must be
    rectangles or axis-aligned (in their local frame) L-shapes; cells of the
    tensor grid are split along one diagonal.
    """
    if not target_h > 0:
        raise MeshError("target_h must be positive")
    pts, cells, dom = [], [], []
    offset = 0
    seg_parts = _bifurcation_partitions(topo, target_h) if topo.dim == 2 else {}
    for d in topo.domains:
        if topo.dim == 1:
            L = d.measure
            n = max(1, math.ceil(L / target_h - 1e-9))
            s = np.linspace(0.0, L, n + 1)
            P = d.to_ambient(s[:, None])
            C = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        else:
            loc, C = _structured_polygon(d, target_h, seg_parts)
            P = d.to_ambient(loc)
        pts.append(P)
        cells.append(C + offset)
        dom.append(np.full(len(C), d.id))
        offset += len(P)
    V = np.vstack(pts)
    C = np.vstack(cells)
    V, C = _merge_vertices(V, C)
    return build_mesh(topo, V, C, np.concatenate(dom))


def _bifurcation_partitions(topo, target_h):
    out = {}
    for b in topo.bifurcations:
        L = float(np.linalg.norm(b.geometry[1] - b.geometry[0]))
        n = max(1, math.ceil(L / target_h - 1e-9))
        out[b.id] = (b.geometry, np.linspace(0.0, 1.0, n + 1))
    return out


def _axis_grid(breaks, extra, target_h):
    # breakpoints + forced points, then uniform fill of the remaining gaps
    pts = np.unique(np.round(np.concatenate([breaks, extra]), 14))
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-13:
            continue
        n = max(1, math.ceil((b - a) / target_h - 1e-9))
        out.extend(np.linspace(a, b, n + 1)[1:])
    return np.array(out)


def _structured_polygon(d, target_h, seg_parts):
    P = d.local_vertices
    E = np.roll(P, -1, axis=0) - P
    if np.any((np.abs(E[:, 0]) > 1e-12 * d.diameter) & (np.abs(E[:, 1]) > 1e-12 * d.diameter)):
        raise MeshError(
            f"domain {d.id}: built-in mesher needs axis-aligned rectangles or L-shapes; "
            "supply an external mesh")
    if len(P) not in (4, 6):
        raise MeshError(f"domain {d.id}: unsupported polygon with {len(P)} corners")
    extra_x, extra_y = [], []
    for geo, ts in seg_parts.values():
        a, b = d.to_local(geo[0]), d.to_local(geo[1])
        if np.linalg.norm(d.to_ambient(a) - geo[0]) > 1e-10 or \
                np.linalg.norm(d.to_ambient(b) - geo[1]) > 1e-10:
            continue
        if not (_on_boundary(a, P) and _on_boundary(b, P)):
            continue
        q = a[None, :] + ts[:, None] * (b - a)[None, :]
        if abs(b[0] - a[0]) > abs(b[1] - a[1]):
            extra_x.extend(q[:, 0])
        else:
            extra_y.extend(q[:, 1])
    xs = _axis_grid(P[:, 0], np.array(extra_x), target_h)
    ys = _axis_grid(P[:, 1], np.array(extra_y), target_h)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    loc = np.stack([X.ravel(), Y.ravel()], axis=1)
    tol = 1e-12 * d.diameter
    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = np.array([(xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2])
            if not _point_in_polygon(c, P, tol):
                continue
            v00, v10 = i * ny + j, (i + 1) * ny + j
            v01, v11 = i * ny + j + 1, (i + 1) * ny + j + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    C = np.array(tris, dtype=np.int64)
    used = np.unique(C)
    remap = -np.ones(len(loc), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return loc[used], remap[C]


def _on_boundary(q, P):
    n = len(P)
    scale = max(np.ptp(P[:, 0]), np.ptp(P[:, 1]))
    return any(_point_on_segment(q, P[k], P[(k + 1) % n], 1e-10 * scale) for k in range(n))


def _merge_vertices(V, C):
    scale = max(float(np.ptp(V, axis=0).max()), 1.0)
    tree = cKDTree(V)
    pairs = tree.query_pairs(r=CONTAIN_TOL * scale, output_type="ndarray")
    parent = np.arange(len(V))
    if len(pairs):
        import scipy.sparse as sp
        from scipy.sparse.csgraph import connected_components
        g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(V), len(V)))
        _, parent = connected_components(g, directed=False)
    else:
        parent = np.arange(len(V))
    # representative = first occurrence, keeps deterministic ordering
    _, first, inv = np.unique(parent, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    newid = rank[inv]
    newV = V[np.sort(first)]
    return newV, newid[C]


def build_mesh(topo, V, C, cell_domain, level=0) -> NetworkMesh:
    """Classify facets of a raw cell list into interior / ∂G / bifurcation."""
    C = np.asarray(C, dtype=np.int64)
    cell_domain = np.asarray(cell_domain)
    if topo.dim == 2:
        C = _orient_ccw(topo, V, C, cell_domain)
    dim = topo.dim
    # facet key -> list of (cell, local facet index)
    if dim == 1:
        keys = C.reshape(-1, 1)
        fv = keys
    else:
        fv = np.stack([C[:, [1, 2]], C[:, [2, 0]], C[:, [0, 1]]], axis=1).reshape(-1, 2)
        keys = np.sort(fv, axis=1)
    nloc = dim + 1
    owner = np.repeat(np.arange(len(C)), nloc)
    uk, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])

    hc = _cell_size(V, C, dim)
    first = order[starts[:-1]]
    c_first = owner[first]
    v_first = fv[first]
    second = order[np.minimum(starts[:-1] + 1, len(order) - 1)]
    c_second = owner[second]
    same = cell_domain[c_first] == cell_domain[c_second]
    is_int = (counts == 2) & same
    is_bnd = counts == 1
    multi = np.flatnonzero(~is_int & ~is_bnd)

    # interior facets
    c0, c1 = c_first[is_int], c_second[is_int]
    iv = v_first[is_int]
    if dim == 1:
        swap = C[c0, 1] != iv[:, 0]
        c0, c1 = np.where(swap, c1, c0), np.where(swap, c0, c1)
        ih = np.maximum(hc[c0], hc[c1])
    else:
        ih = np.linalg.norm(V[iv[:, 1]] - V[iv[:, 0]], axis=1)
    interior = FacetSet(np.stack([c0, c1], axis=1), iv, ih)

    bv = v_first[is_bnd]
    bc = c_first[is_bnd]
    on_bif = _on_any_bifurcation(topo, V, bv)
    if on_bif.any():
        k = np.flatnonzero(on_bif)[0]
        raise MeshError(
            f"facet at vertices {bv[k].tolist()} lies on a bifurcation but has a single "
            "neighbour (non-matching meshes?)")
    bh = hc[bc] if dim == 1 else np.linalg.norm(V[bv[:, 1]] - V[bv[:, 0]], axis=1)
    boundary = FacetSet(bc[:, None], bv, bh)

    bif = {b.id: ([], [], []) for b in topo.bifurcations}
    bif_of = _bifurcation_locator(topo, V)
    for f in multi:
        occ = order[starts[f]:starts[f + 1]]
        cs = owner[occ]
        doms = cell_domain[cs]
        verts = fv[occ[0]]
        g = bif_of(verts)
        if g is None:
            raise MeshError(
                f"facet {verts.tolist()} shared by {len(cs)} cells of domains "
                f"{sorted(set(doms.tolist()))} outside any bifurcation")
        b = topo.bifurcation(g)
        if sorted(doms.tolist()) != list(b.incident):
            raise MeshError(
                f"bifurcation {g}: facet at vertices {verts.tolist()} touches domains "
                f"{sorted(doms.tolist())}, expected {list(b.incident)} (non-matching meshes?)")
        side = [cs[np.flatnonzero(doms == i)[0]] for i in b.incident]
        if dim == 2:
            verts = _orient_along(V, verts, b.geometry)
            hF = np.linalg.norm(V[verts[1]] - V[verts[0]])
        else:
            hF = hc[side].max()
        bif[g][0].append(side)
        bif[g][1].append(verts)
        bif[g][2].append(hF)

    bifs = {}
    for g, (c, v, h) in bif.items():
        if not c:
            raise MeshError(f"bifurcation {g}: no mesh facet found on it")
        card = topo.bifurcation(g).card
        bifs[g] = FacetSet(np.array(c, dtype=np.int64).reshape(-1, card),
                           np.array(v, dtype=np.int64).reshape(-1, dim), np.array(h, dtype=float))
    return NetworkMesh(topo, V, C, cell_domain, interior, boundary, bifs, level)


def _on_any_bifurcation(topo, V, fverts):
    scale = max(float(np.ptp(V, axis=0).max()), 1.0)
    tol = CONTAIN_TOL * scale
    out = np.zeros(len(fverts), dtype=bool)
    for b in topo.bifurcations:
        hit = np.ones(len(fverts), dtype=bool)
        for k in range(fverts.shape[1]):
            P = V[fverts[:, k]]
            if topo.dim == 1:
                hit &= np.linalg.norm(P - b.geometry[0], axis=1) <= tol
            else:
                a, d = b.geometry[0], b.geometry[1] - b.geometry[0]
                t = np.clip((P - a) @ d / (d @ d), 0.0, 1.0)
                hit &= np.linalg.norm(a + t[:, None] * d - P, axis=1) <= tol
        out |= hit
    return out


def _cell_size(V, C, dim):
    X = V[C]
    if dim == 1:
        return np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
    return np.max([np.linalg.norm(X[:, (k + 1) % 3] - X[:, k], axis=1) for k in range(3)], axis=0)


def _orient_ccw(topo, V, C, cell_domain):
    C = C.copy()
    for d in topo.domains:
        idx = np.flatnonzero(cell_domain == d.id)
        X = d.to_local(V[C[idx]])
        a, b = X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]
        cw = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) < 0
        C[idx[cw]] = C[idx[cw]][:, [0, 2, 1]]
    return C


def _orient_along(V, verts, geo):
    d = V[verts[1]] - V[verts[0]]
    return verts if d @ (geo[1] - geo[0]) > 0 else verts[::-1].copy()


def _bifurcation_locator(topo, V):
    scale = max(float(np.ptp(V, axis=0).max()), 1.0)
    tol = CONTAIN_TOL * scale
    bifs = topo.bifurcations

    def locate(verts):
        pts = V[verts]
        for b in bifs:
            if topo.dim == 1:
                if np.linalg.norm(pts[0] - b.geometry[0]) <= tol:
                    return b.id
            elif all(_point_on_segment(p, b.geometry[0], b.geometry[1], tol) for p in pts):
                return b.id
        return None

    return locate


def refine(mesh: NetworkMesh) -> NetworkMesh:
    """Uniform refinement: interval bisection / triangle quadrisection."""
    V, C = mesh.vertices, mesh.cells
    if mesh.dim == 1:
        mids = 0.5 * (V[C[:, 0]] + V[C[:, 1]])
        m = len(V) + np.arange(len(C))
        newC = np.empty((2 * len(C), 2), dtype=np.int64)
        newC[0::2] = np.stack([C[:, 0], m], axis=1)
        newC[1::2] = np.stack([m, C[:, 1]], axis=1)
        newV = np.vstack([V, mids])
        dom = np.repeat(mesh.cell_domain, 2)
    else:
        edges = np.sort(np.stack([C[:, [1, 2]], C[:, [2, 0]], C[:, [0, 1]]], axis=1).reshape(-1, 2), axis=1)
        ue, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel().reshape(-1, 3) + len(V)
        newV = np.vstack([V, 0.5 * (V[ue[:, 0]] + V[ue[:, 1]])])
        a, b, c = C[:, 0], C[:, 1], C[:, 2]
        ma, mb, mc = inv[:, 0], inv[:, 1], inv[:, 2]  # midpoints opposite a, b, c
        kids = np.stack([
            np.stack([a, mc, mb], axis=1),
            np.stack([mc, b, ma], axis=1),
            np.stack([mb, ma, c], axis=1),
            np.stack([ma, mb, mc], axis=1),
        ], axis=1)
        newC = kids.reshape(-1, 3)
        dom = np.repeat(mesh.cell_domain, 4)
    return build_mesh(mesh.topo, newV, newC, dom, mesh.level + 1)


def refine_n(mesh, n):
    for _ in range(n):
        mesh = refine(mesh)
    return mesh


# --------------------------------------------------------------------- external meshes

def load_mesh(text: str, topo: HypergraphTopology) -> NetworkMesh:
    """Read per-domain triangulations (local coordinates) and check matching.

    Format::

        netdg-mesh v1
        domain 3
        vertices 4
        0.0 0.0
        ...
        triangles 2
        0 1 2
        ...
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != MESH_HEADER:
        raise MeshError(f"expected header '{MESH_HEADER}'")
    if topo.dim != 2:
        raise MeshError("external meshes are supported for plane-networks only")
    k = 1
    pts, cells, dom = [], [], []
    offset = 0
    seen = set()
    while k < len(lines):
        tok = lines[k].split()
        if tok[0] != "domain":
            raise MeshError(f"expected 'domain <id>', got {lines[k]!r}")
        i = int(tok[1])
        d = topo.domain(i)
        nv = int(lines[k + 1].split()[1])
        loc = np.array([[float(x) for x in lines[k + 2 + j].split()] for j in range(nv)])
        k += 2 + nv
        nt = int(lines[k].split()[1])
        T = np.array([[int(x) for x in lines[k + 1 + j].split()] for j in range(nt)], dtype=np.int64)
        k += 1 + nt
        pts.append(d.to_ambient(loc))
        cells.append(T + offset)
        dom.append(np.full(nt, i))
        offset += nv
        seen.add(i)
    if seen != set(topo.domain_ids):
        raise MeshError(f"mesh file covers domains {sorted(seen)}, topology has {topo.domain_ids}")
    V, C = _merge_vertices(np.vstack(pts), np.vstack(cells))
    return build_mesh(topo, V, C, np.concatenate(dom))


def dump_mesh(mesh: NetworkMesh) -> str:
    if mesh.dim != 2:
        raise MeshError("only plane-network meshes are written")
    out = [MESH_HEADER]
    for d in mesh.topo.domains:
        idx = mesh.elements(d.id)
        used, T = np.unique(mesh.cells[idx], return_inverse=True)
        T = T.reshape(-1, 3)
        loc = d.to_local(mesh.vertices[used])
        out.append(f"domain {d.id}")
        out.append(f"vertices {len(used)}")
        out.extend(f"{x!r} {y!r}" for x, y in loc.tolist())
        out.append(f"triangles {len(T)}")
        out.extend(" ".join(map(str, t)) for t in T.tolist())
    return "\n".join(out) + "\n"
