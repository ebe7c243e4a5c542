"""Hypergraph topology: domains, bifurcations, outer boundary.

A network is either an *edge-network* (straight segments glued at
bifurcation points) or a *plane-network* (planar polygons glued along
bifurcation segments).  Every domain carries its own local frame; all
element-level math happens in those local coordinates.

The text format handled by :func:`load_topology` / :func:`dump_topology`::

    netdg-topology v1
    dim 1
    vertices
      1  0.0 0.0
      2  0.0 1.0
    domains
      1: 1 2
    bifurcations
      1: point 2 | 1 2 3
    boundary
      1: 1

``#`` starts a comment.  ``vertices`` lines are ``id x y [z]``; ``domains``
lines list vertex ids (segment endpoints in in→out order, polygon corners
counter-clockwise).  A bifurcation is ``id: point v | domains...`` or
``id: segment va vb | domains...``.  ``boundary`` lines are
``domain: v`` (dim 1) or ``domain: va vb`` (dim 2).  When ``bifurcations``
or ``boundary`` is omitted it is derived from shared vertices / edges.
"""
from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

HEADER = "netdg-topology v1"
CONTAIN_TOL = 1e-10
PLANE_TOL = 1e-12
CARD_WARN = 16


class TopologyError(ValueError):
    """Invalid network description."""


class TopologyParseError(TopologyError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class DomainDescriptor:
    """One segment or planar polygon of the network.

    ``origin`` and ``frame`` define local coordinates:
    ``local = (x - origin) @ frame.T`` with ``frame`` of shape (dim, amb).
    """

    id: int
    dim: int
    vertex_ids: tuple
    embedding: np.ndarray
    origin: np.ndarray
    frame: np.ndarray

    def to_local(self, X):
        X = np.asarray(X, dtype=float)
        return (X - self.origin) @ self.frame.T

    def to_ambient(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.origin + xi @ self.frame

    @property
    def local_vertices(self):
        return self.to_local(self.embedding)

    @property
    def diameter(self):
        E = self.embedding
        return max(np.linalg.norm(a - b) for a, b in itertools.combinations(E, 2))

    @property
    def measure(self):
        P = self.local_vertices
        if self.dim == 1:
            return float(abs(P[1, 0] - P[0, 0]))
        x, y = P[:, 0], P[:, 1]
        return float(0.5 * (x @ np.roll(y, -1) - y @ np.roll(x, -1)))

    def endpoint_normal(self, k):
        """n_i at endpoint k of a segment: -1 at the in-vertex, +1 at the out-vertex."""
        if self.dim != 1:
            raise TopologyError("endpoint normals are defined for segments only")
        return -1.0 if k == 0 else 1.0

    def edge_normals(self):
        """In-plane outward unit normals (local coordinates) of the polygon edges."""
        P = self.local_vertices
        d = np.roll(P, -1, axis=0) - P
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def boundary_entities(self):
        """Vertex-id keys of the boundary pieces: endpoints or polygon edges."""
        v = self.vertex_ids
        if self.dim == 1:
            return [(v[0],), (v[1],)]
        return [(v[k], v[(k + 1) % len(v)]) for k in range(len(v))]


@dataclass(frozen=True)
class Bifurcation:
    id: int
    geometry: np.ndarray  # (1, amb) point or (2, amb) oriented segment
    incident: tuple
    vertex_ids: tuple = ()

    @property
    def card(self):
        return len(self.incident)

    @property
    def pairs(self):
        return list(itertools.combinations(self.incident, 2))


@dataclass(frozen=True)
class HypergraphTopology:
    dim: int
    amb: int
    vertices: dict
    domains: tuple
    bifurcations: tuple
    boundary: tuple = field(default=())

    def domain(self, i) -> DomainDescriptor:
        return self._domain_map[i]

    @property
    def _domain_map(self):
        return {d.id: d for d in self.domains}

    @property
    def domain_ids(self):
        return [d.id for d in self.domains]

    def bifurcation(self, g) -> Bifurcation:
        for b in self.bifurcations:
            if b.id == g:
                return b
        raise KeyError(g)

    def classify(self):
        """Map (domain id, boundary entity) -> bifurcation id or None (on ∂G)."""
        out = {}
        for d in self.domains:
            for ent in d.boundary_entities():
                hits = [b.id for b in self.bifurcations
                        if d.id in b.incident and _entity_in(self, d, ent, b)]
                if len(hits) > 1:
                    raise TopologyError(
                        f"domain {d.id}: boundary entity {ent} lies in bifurcations {hits}")
                out[(d.id, ent)] = hits[0] if hits else None
        return out


def _entity_in(topo, dom, ent, bif):
    pts = np.array([topo.vertices[v] for v in ent])
    tol = CONTAIN_TOL * max(dom.diameter, 1.0)
    if topo.dim == 1:
        return bool(np.linalg.norm(pts[0] - bif.geometry[0]) <= tol)
    return all(_point_on_segment(p, bif.geometry[0], bif.geometry[1], tol) for p in pts)


def _point_on_segment(p, a, b, tol):
    d = b - a
    L2 = d @ d
    t = np.clip((p - a) @ d / L2, 0.0, 1.0)
    return bool(np.linalg.norm(a + t * d - p) <= tol)


def _point_in_polygon(q, P, tol):
    """Closed point-in-polygon test in 2D local coordinates."""
    n = len(P)
    for k in range(n):
        if _point_on_segment(q, P[k], P[(k + 1) % n], tol):
            return True
    inside = False
    x, y = q
    for k in range(n):
        (x1, y1), (x2, y2) = P[k], P[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def make_domain(i, vertex_ids, vertices, dim):
    """Build a descriptor with its local frame; validates the geometric invariants."""
    E = np.array([vertices[v] for v in vertex_ids], dtype=float)
    amb = E.shape[1]
    if dim == 1:
        if len(vertex_ids) != 2:
            raise TopologyError(f"domain {i}: a segment needs exactly 2 vertices")
        d = E[1] - E[0]
        L = np.linalg.norm(d)
        if L == 0.0:
            raise TopologyError(f"domain {i}: segment endpoints coincide")
        frame = (d / L)[None, :]
    else:
        if len(vertex_ids) < 3:
            raise TopologyError(f"domain {i}: a polygon needs at least 3 vertices")
        if amb == 2:
            E = np.hstack([E, np.zeros((len(E), 1))])
        # Newell normal: polygon is CCW about it by construction
        nrm = np.zeros(3)
        for a, b in zip(E, np.roll(E, -1, axis=0)):
            nrm += np.cross(a, b)
        if np.linalg.norm(nrm) == 0.0:
            raise TopologyError(f"domain {i}: degenerate polygon")
        nrm /= np.linalg.norm(nrm)
        e1 = E[1] - E[0]
        e1 /= np.linalg.norm(e1)
        e1 = e1 - (e1 @ nrm) * nrm
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(nrm, e1)
        frame = np.stack([e1, e2])
        diam = max(np.linalg.norm(a - b) for a, b in itertools.combinations(E, 2))
        off = np.abs((E - E[0]) @ nrm)
        if off.max() > PLANE_TOL * diam:
            raise TopologyError(f"domain {i}: vertices are not coplanar (offset {off.max():.3e})")
        if amb == 2:
            frame = frame[:, :2]
            E = E[:, :2]
    if np.abs(frame @ frame.T - np.eye(dim)).max() > 1e-12:
        raise TopologyError(f"domain {i}: local frame not orthonormal")
    dom = DomainDescriptor(i, dim, tuple(vertex_ids), E, E[0].copy(), frame)
    if dim == 2:
        P = dom.local_vertices
        n = len(P)
        if dom.measure <= 0:
            raise TopologyError(f"domain {i}: polygon is not counter-clockwise")
        for a in range(n):
            for b in range(a + 2, n):
                if a == 0 and b == n - 1:
                    continue
                if _segments_cross(P[a], P[(a + 1) % n], P[b], P[(b + 1) % n]):
                    raise TopologyError(f"domain {i}: polygon is not simple")
    return dom


def _derive_bifurcations(dim, vertices, domains):
    """Shared endpoints (dim 1) or shared polygon edges (dim 2) become bifurcations."""
    shared = {}
    for d in domains:
        for ent in d.boundary_entities():
            shared.setdefault(tuple(sorted(ent)), []).append((d.id, ent))
    out = []
    for key in sorted(shared):
        owners = shared[key]
        ids = sorted({o[0] for o in owners})
        if len(ids) < 2:
            continue
        # keep the orientation of the lowest-id incident domain
        ent = min(owners)[1]
        geo = np.array([vertices[v] for v in ent], dtype=float)
        out.append((geo, tuple(ids), tuple(ent)))
    return [Bifurcation(k + 1, g, inc, vids) for k, (g, inc, vids) in enumerate(out)]


def build_topology(dim, vertices, domains, bifurcations=None, boundary=None):
    """Assemble and validate a topology.

    ``vertices``: {id: coords}; ``domains``: {id: vertex-id list};
    ``bifurcations``: optional {id: (geometry vertex ids, incident ids)}.
    """
    vertices = {int(k): np.asarray(v, dtype=float) for k, v in vertices.items()}
    ambs = {len(v) for v in vertices.values()}
    if len(ambs) != 1:
        raise TopologyError("all vertices need the same number of coordinates")
    amb = ambs.pop()
    if amb not in (2, 3):
        raise TopologyError("vertices must live in R^2 or R^3")
    if dim not in (1, 2):
        raise TopologyError("dim must be 1 or 2")
    doms = tuple(make_domain(i, vids, vertices, dim) for i, vids in sorted(domains.items()))
    if bifurcations is None:
        bifs = _derive_bifurcations(dim, vertices, doms)
    else:
        bifs = []
        for g, (vids, inc) in sorted(bifurcations.items()):
            for v in vids:
                if v not in vertices:
                    raise TopologyError(f"bifurcation {g}: unknown vertex {v}")
            geo = np.array([vertices[v] for v in vids], dtype=float)
            bifs.append(Bifurcation(g, geo, tuple(sorted(inc)), tuple(vids)))
    topo = HypergraphTopology(dim, amb, vertices, doms, tuple(bifs))
    validate(topo)
    derived = tuple(sorted((i, ent) for (i, ent), g in topo.classify().items() if g is None))
    if boundary is not None:
        given = tuple(sorted((i, tuple(ent)) for i, ent in boundary))
        if {(i, tuple(sorted(e))) for i, e in given} != {(i, tuple(sorted(e))) for i, e in derived}:
            raise TopologyError("boundary section does not match the unshared domain boundary")
    return HypergraphTopology(dim, amb, vertices, doms, tuple(bifs), derived)


def validate(topo):
    ids = [d.id for d in topo.domains]
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate domain ids")
    if {d.dim for d in topo.domains} != {topo.dim}:
        raise TopologyError("mixed edge/plane networks are not supported")
    dmap = topo._domain_map
    for b in topo.bifurcations:
        if b.card < 2:
            raise TopologyError(f"bifurcation {b.id}: needs at least 2 incident domains")
        if b.card > CARD_WARN:
            log.warning("bifurcation %d has %d incident domains", b.id, b.card)
        expected = 1 if topo.dim == 1 else 2
        if b.geometry.shape[0] != expected:
            raise TopologyError(f"bifurcation {b.id}: wrong geometric entity for dim {topo.dim}")
        for i in b.incident:
            if i not in dmap:
                raise TopologyError(f"bifurcation {b.id}: unknown domain {i}")
            if not _contains(dmap[i], b.geometry):
                raise TopologyError(f"bifurcation {b.id}: not contained in domain {i}")
    topo.classify()


def _contains(dom, geo):
    tol = CONTAIN_TOL * max(dom.diameter, 1.0)
    if dom.dim == 1:
        return any(np.linalg.norm(geo[0] - e) <= tol for e in dom.embedding)
    pts = [geo[0], geo[1], 0.5 * (geo[0] + geo[1])]
    P = dom.local_vertices
    for p in pts:
        loc = dom.to_local(p)
        if np.linalg.norm(dom.to_ambient(loc) - p) > tol:
            return False
        if not _point_in_polygon(loc, P, tol):
            return False
    return True


# --------------------------------------------------------------------- text format

_SECTIONS = ("vertices", "domains", "bifurcations", "boundary")


def load_topology(text: str) -> HypergraphTopology:
    lines = text.splitlines()
    body = []
    for n, raw in enumerate(lines, start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            body.append((n, s))
    if not body or body[0][1] != HEADER:
        raise TopologyParseError(f"expected header '{HEADER}'", body[0][0] if body else 1)
    dim = None
    section = None
    vertices, domains, bifs, bnd = {}, {}, None, None
    for n, s in body[1:]:
        head = s.split()
        if head[0] == "dim":
            if len(head) != 2 or head[1] not in ("1", "2"):
                raise TopologyParseError("dim must be 1 or 2", n)
            dim = int(head[1])
            section = None
            continue
        if s in _SECTIONS:
            section = s
            if s == "bifurcations":
                bifs = {}
            if s == "boundary":
                bnd = []
            continue
        if section is None:
            raise TopologyParseError(f"entry outside of a section: {s!r}", n)
        try:
            if section == "vertices":
                vid, *xs = head
                if len(xs) not in (2, 3):
                    raise TopologyParseError("vertex needs 2 or 3 coordinates", n)
                vid = int(vid)
                if vid in vertices:
                    raise TopologyParseError(f"duplicate vertex id {vid}", n)
                vertices[vid] = [float(x) for x in xs]
            elif section == "domains":
                key, rest = _split_colon(s, n)
                vids = [int(t) for t in rest.split()]
                if key in domains:
                    raise TopologyParseError(f"duplicate domain id {key}", n)
                domains[key] = vids
            elif section == "bifurcations":
                key, rest = _split_colon(s, n)
                if "|" not in rest:
                    raise TopologyParseError("bifurcation needs 'geometry | domains'", n)
                g, inc = rest.split("|", 1)
                kind, *gv = g.split()
                if kind not in ("point", "segment") or len(gv) != (1 if kind == "point" else 2):
                    raise TopologyParseError("geometry must be 'point v' or 'segment va vb'", n)
                bifs[key] = ([int(t) for t in gv], [int(t) for t in inc.split()])
            else:
                key, rest = _split_colon(s, n)
                bnd.append((key, tuple(int(t) for t in rest.split())))
        except ValueError as exc:
            if isinstance(exc, TopologyParseError):
                raise
            raise TopologyParseError(f"in section {section}: {exc}", n) from None
    if dim is None:
        raise TopologyParseError("missing 'dim' section")
    for key, vids in domains.items():
        for v in vids:
            if v not in vertices:
                raise TopologyError(f"domain {key}: unknown vertex {v}")
    return build_topology(dim, vertices, domains, bifs, bnd)


def _split_colon(s, n):
    m = re.match(r"^\s*(-?\d+)\s*:(.*)$", s)
    if not m:
        raise TopologyParseError(f"expected 'id: ...', got {s!r}", n)
    return int(m.group(1)), m.group(2)


def dump_topology(topo: HypergraphTopology) -> str:
    out = [HEADER, f"dim {topo.dim}", "vertices"]
    for vid in sorted(topo.vertices):
        out.append(f"  {vid} " + " ".join(repr(float(x)) for x in topo.vertices[vid]))
    out.append("domains")
    for d in topo.domains:
        out.append(f"  {d.id}: " + " ".join(str(v) for v in d.vertex_ids))
    out.append("bifurcations")
    for b in topo.bifurcations:
        vids = b.vertex_ids or _lookup_ids(topo, b.geometry)
        kind = "point" if topo.dim == 1 else "segment"
        out.append(f"  {b.id}: {kind} " + " ".join(map(str, vids)) + " | "
                   + " ".join(map(str, b.incident)))
    out.append("boundary")
    for i, ent in topo.boundary:
        out.append(f"  {i}: " + " ".join(map(str, ent)))
    return "\n".join(out) + "\n"


def _lookup_ids(topo, geo):
    ids = []
    for p in geo:
        for vid, x in topo.vertices.items():
            if np.linalg.norm(x - p) <= CONTAIN_TOL:
                ids.append(vid)
                break
        else:
            raise TopologyError("bifurcation geometry is not at a listed vertex")
    return ids


# --------------------------------------------------------------------- constructions

def extrude(topo: HypergraphTopology, length: float) -> HypergraphTopology:
    """Sweep an edge-network in R^2 along +z: segments become rectangles."""
    if topo.dim != 1:
        raise TopologyError("extrude expects an edge-network")
    if topo.amb != 2:
        raise TopologyError("extrude expects an edge-network embedded in R^2")
    if not length > 0:
        raise TopologyError("extrusion length must be positive")
    shift = max(topo.vertices) + 1
    verts = {}
    for vid, x in topo.vertices.items():
        verts[vid] = [x[0], x[1], 0.0]
        verts[vid + shift] = [x[0], x[1], float(length)]
    doms = {}
    for d in topo.domains:
        a, b = d.vertex_ids
        doms[d.id] = [a, b, b + shift, a + shift]
    bifs = {}
    for bf in topo.bifurcations:
        (v,) = bf.vertex_ids or _lookup_ids(topo, bf.geometry)
        bifs[bf.id] = ([v, v + shift], list(bf.incident))
    return build_topology(2, verts, doms, bifs)


def edge_mms_network() -> HypergraphTopology:
    """The 10-edge, 3-bifurcation graph in R^2 used by the smooth edge-network study."""
    verts = {
        1: (0.0, 0.0), 2: (0.0, 1.0), 3: (-1.0, 2.0), 4: (1.0, 2.0),
        5: (-1.5, 3.0), 6: (-0.5, 3.0), 7: (0.5, 3.0), 8: (1.5, 3.0),
        9: (-1.0, 3.0), 10: (0.5, 2.0), 11: (1.5, 2.0),
    }
    doms = {
        1: [1, 2], 2: [2, 3], 3: [2, 4],
        4: [3, 5], 5: [3, 6], 6: [4, 7], 7: [4, 8],
        8: [3, 9], 9: [4, 10], 10: [4, 11],
    }
    return build_topology(1, verts, doms)


def low_regularity_network() -> HypergraphTopology:
    """L-shape in z=0 with two vertical rectangles hinged on its outer edges.

    The rectangles at x=-1 and y=-1 span z in (-1, 1), so the bifurcation
    segments run through their middle; each is split at z=0 into a lower
    and an upper half, which makes both segments card-3 bifurcations.
    """
    verts = {
        # L-shape (-1,1)^2 minus (-1,0)^2, counter-clockwise seen from +z
        1: (0.0, -1.0, 0.0), 2: (1.0, -1.0, 0.0), 3: (1.0, 1.0, 0.0),
        4: (-1.0, 1.0, 0.0), 5: (-1.0, 0.0, 0.0), 6: (0.0, 0.0, 0.0),
        # x = -1 wall
        7: (-1.0, 0.0, -1.0), 8: (-1.0, 1.0, -1.0), 9: (-1.0, 1.0, 1.0), 10: (-1.0, 0.0, 1.0),
        # y = -1 wall
        11: (0.0, -1.0, -1.0), 12: (1.0, -1.0, -1.0), 13: (1.0, -1.0, 1.0), 14: (0.0, -1.0, 1.0),
    }
    doms = {
        1: [1, 2, 3, 4, 5, 6],
        2: [7, 8, 4, 5],     # x=-1, z<0
        3: [5, 4, 9, 10],    # x=-1, z>0
        4: [11, 12, 2, 1],   # y=-1, z<0
        5: [1, 2, 13, 14],   # y=-1, z>0
    }
    return build_topology(2, verts, doms)


def cube_network(n: int = 3) -> HypergraphTopology:
    """Interior faces of a unit cube cut into n^3 subcubes (boundary faces removed)."""
    vid = {}

    def v(i, j, k):
        key = (i, j, k)
        if key not in vid:
            vid[key] = len(vid) + 1
        return vid[key]

    doms = {}
    for axis in range(3):
        for c in range(1, n):
            for a in range(n):
                for b in range(n):
                    quad = []
                    for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        idx = [0, 0, 0]
                        idx[axis] = c
                        idx[(axis + 1) % 3] = a + da
                        idx[(axis + 2) % 3] = b + db
                        quad.append(v(*idx))
                    doms[len(doms) + 1] = quad
    verts = {k: tuple(x / n for x in key) for key, k in vid.items()}
    return build_topology(2, verts, doms)


def domain_measure_total(topo):
    return math.fsum(d.measure for d in topo.domains)
