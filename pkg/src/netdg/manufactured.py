"""Exact solutions and data for the convergence experiments.

Callables take ambient points ``X`` of shape (n, amb).  Gradients are
returned in ambient coordinates; projected onto a domain's frame they give
the intrinsic gradient, because every exact solution here is the restriction
of an ambient expression whose tangential part is what matters.  Sources
are intrinsic Laplacians, differentiated by hand.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .assembly import Coefficients
from .geometry import (HypergraphTopology, cube_network, edge_mms_network, extrude,
                       load_topology, low_regularity_network)

TWO_PI = 2.0 * np.pi
SQ2 = np.sqrt(2.0)
SQ125 = np.sqrt(1.25)


@dataclass
class ManufacturedCase:
    name: str
    topo: HypergraphTopology
    u: Optional[Dict[int, Callable]]
    grad: Optional[Dict[int, Callable]]
    f: Dict[int, Callable]
    g_gamma: Optional[Dict[int, Callable]] = None
    s: Optional[float] = None
    kappa: float = 1.0
    coarse_h: float = 0.25
    meta: dict = field(default_factory=dict)

    @property
    def has_exact(self):
        return self.u is not None

    def coefficients(self) -> Coefficients:
        return Coefficients(f=self.f, kappa=self.kappa,
                            dirichlet=self.u if self.has_exact else None,
                            g_gamma=self.g_gamma)

    def value(self, i, X):
        return self.u[i](np.atleast_2d(X))

    def gradient(self, i, X):
        return self.grad[i](np.atleast_2d(X))


# ------------------------------------------------------------------ edge network

def _edge_branches():
    """(u, du/dy, d2u/dy2) per branch of the piecewise solution in y."""
    c = 1.0 + SQ2 / 2

    def A(y):
        return y + np.cos(TWO_PI * y), 1 - TWO_PI * np.sin(TWO_PI * y), -TWO_PI ** 2 * np.cos(TWO_PI * y)

    def B(y):
        return 2 + SQ2 / 2 * (y - 1), np.full_like(y, SQ2 / 2), np.zeros_like(y)

    def C(y):
        return (c + SQ125 / 8 * (y - 2) + np.cos(TWO_PI * y),
                SQ125 / 8 - TWO_PI * np.sin(TWO_PI * y),
                -TWO_PI ** 2 * np.cos(TWO_PI * y))

    def D(y):
        return np.full_like(y, 2 + SQ2 / 2), np.zeros_like(y), np.zeros_like(y)

    return {1: A, 2: B, 3: B, 4: C, 5: C, 6: C, 7: C, 8: D, 9: D, 10: D}


def _edge_flux_imbalance(topo):
    # sum_i sigma_i n_i at each junction, derived by hand:
    # (0,1): 1 - 2 * 1/2 = 0; (-1,2) and (1,2): 1/2 - 2 * 1/8 = 1/4
    out = {}
    for b in topo.bifurcations:
        y = b.geometry[0][1]
        out[b.id] = 0.0 if abs(y - 1.0) < 1e-12 else 0.25
    return out


def case_edge_mms() -> ManufacturedCase:
    topo = edge_mms_network()
    br = _edge_branches()
    u, grad, f = {}, {}, {}
    for d in topo.domains:
        ty = d.frame[0, 1]
        fn = br[d.id]
        u[d.id] = lambda X, fn=fn: fn(X[:, 1])[0]
        grad[d.id] = lambda X, fn=fn: np.stack([np.zeros(len(X)), fn(X[:, 1])[1]], axis=1)
        f[d.id] = lambda X, fn=fn, ty=ty: -fn(X[:, 1])[2] * ty ** 2
    g = {gid: (lambda X, v=v: np.full(len(X), v)) for gid, v in _edge_flux_imbalance(topo).items()}
    return ManufacturedCase("edge-mms", topo, u, grad, f, g, coarse_h=0.25)


def case_plane_mms() -> ManufacturedCase:
    topo = extrude(edge_mms_network(), 1.0)
    br = _edge_branches()
    base = edge_mms_network()
    u, grad, f = {}, {}, {}
    for d in topo.domains:
        ty = base.domain(d.id).frame[0, 1]
        fn = br[d.id]

        def uu(X, fn=fn):
            return fn(X[:, 1])[0] * np.sin(TWO_PI * X[:, 2])

        def gg(X, fn=fn):
            v, vy, _ = fn(X[:, 1])
            sz, cz = np.sin(TWO_PI * X[:, 2]), np.cos(TWO_PI * X[:, 2])
            return np.stack([np.zeros(len(X)), vy * sz, TWO_PI * v * cz], axis=1)

        def ff(X, fn=fn, ty=ty):
            v, _, vyy = fn(X[:, 1])
            return (-vyy * ty ** 2 + TWO_PI ** 2 * v) * np.sin(TWO_PI * X[:, 2])

        u[d.id], grad[d.id], f[d.id] = uu, gg, ff
    g = {gid: (lambda X, v=v: v * np.sin(TWO_PI * X[:, 2]))
         for gid, v in _edge_flux_imbalance(base).items()}
    return ManufacturedCase("plane-mms", topo, u, grad, f, g, coarse_h=0.25)


# ------------------------------------------------------------------ low regularity

def polar_angle(x, y):
    """atan2 with the branch cut in the removed quadrant (direction (-1,-1))."""
    th = np.arctan2(y, x)
    return np.where(th < -0.75 * np.pi, th + 2 * np.pi, th)


def corner_singularity(s, X):
    """Im(w^s) with w = x + iy: value, (d/dx, d/dy) and Im of the second derivative."""
    x, y = X[:, 0], X[:, 1]
    r = np.hypot(x, y)
    th = polar_angle(x, y)
    val = r ** s * np.sin(s * th)
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = s * r ** (s - 1) * np.sin((s - 1) * th)
        gy = s * r ** (s - 1) * np.cos((s - 1) * th)
        d2 = s * (s - 1) * r ** (s - 2) * np.sin((s - 2) * th)
    return val, gx, gy, d2


def case_low_regularity(s: float) -> ManufacturedCase:
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    topo = low_regularity_network()
    walls = {}
    for d in topo.domains:
        c = d.embedding
        if np.allclose(c[:, 2], 0):
            walls[d.id] = "floor"
        elif np.allclose(c[:, 0], -1):
            walls[d.id] = "x"
        else:
            walls[d.id] = "y"
    u, grad, f = {}, {}, {}
    for i, kind in walls.items():
        def uu(X, kind=kind):
            v = corner_singularity(s, X)[0]
            if kind == "x":
                v = v + X[:, 2]
            elif kind == "y":
                v = v + X[:, 2] ** 2
            return v

        def gg(X, kind=kind):
            _, gx, gy, _ = corner_singularity(s, X)
            gz = np.zeros(len(X))
            if kind == "x":
                gz = np.ones(len(X))
            elif kind == "y":
                gz = 2 * X[:, 2]
            return np.stack([gx, gy, gz], axis=1)

        def ff(X, kind=kind):
            d2 = corner_singularity(s, X)[3]
            if kind == "floor":
                return np.zeros(len(X))
            if kind == "x":
                # -d2/dy2 Im(w^s) = Im((w^s)'')
                return d2
            return -d2 - 2.0

        u[i], grad[i], f[i] = uu, gg, ff
    g = {}
    for b in topo.bifurcations:
        if np.allclose(b.geometry[:, 0], -1):
            # floor outward normal -x; the two wall halves cancel (d/dz of z is 1 and -1)
            g[b.id] = lambda X: -corner_singularity(s, X)[1]
        else:
            # floor outward normal -y; wall halves give 2z = 0 on z = 0
            g[b.id] = lambda X: -corner_singularity(s, X)[2]
    return ManufacturedCase(f"low-reg:s={s:g}", topo, u, grad, f, g, s=s, coarse_h=0.5,
                            meta={"walls": walls})


# ------------------------------------------------------------------ reference-only cases

def case_constant_source(topo: HypergraphTopology, name="custom", coarse_h=0.25) -> ManufacturedCase:
    """f = 1, kappa = 1, homogeneous Dirichlet; no exact solution."""
    f = {d.id: 1.0 for d in topo.domains}
    return ManufacturedCase(name, topo, None, None, f, coarse_h=coarse_h)


def case_cube_net() -> ManufacturedCase:
    return case_constant_source(cube_network(), "cube-net", coarse_h=1 / 3)


def get_case(name: str) -> ManufacturedCase:
    """Resolve 'edge-mms', 'plane-mms', 'low-reg:s=<v>', 'cube-net' or 'file:<path>'."""
    if name == "edge-mms":
        return case_edge_mms()
    if name == "plane-mms":
        return case_plane_mms()
    if name == "cube-net":
        return case_cube_net()
    m = re.fullmatch(r"low-reg:s=([0-9.eE+-]+)", name)
    if m:
        return case_low_regularity(float(m.group(1)))
    if name.startswith("file:"):
        path = name[5:]
        with open(path, encoding="utf-8") as fh:
            topo = load_topology(fh.read())
        return case_constant_source(topo, name)
    raise ValueError(f"unknown case {name!r}")


# ------------------------------------------------------------------ self checks

def flux_sum(case, gid, X):
    """sum_i kappa grad u_i . n_i at points X on bifurcation ``gid``."""
    topo = case.topo
    b = topo.bifurcation(gid)
    total = np.zeros(len(X))
    for i in b.incident:
        d = topo.domain(i)
        G = case.gradient(i, X) @ d.frame.T  # intrinsic gradient
        total += case.kappa * G @ _outward_at(d, b)
    return total


def _outward_at(d, b):
    if d.dim == 1:
        k = 0 if np.linalg.norm(d.embedding[0] - b.geometry[0]) < 1e-10 else 1
        return np.array([d.endpoint_normal(k)])
    P = d.local_vertices
    mid = d.to_local(0.5 * (b.geometry[0] + b.geometry[1]))
    normals = d.edge_normals()
    for k in range(len(P)):
        a, c = P[k], P[(k + 1) % len(P)]
        t = c - a
        if abs(t[0] * (mid - a)[1] - t[1] * (mid - a)[0]) < 1e-10 * np.linalg.norm(t) and \
                -1e-12 <= (mid - a) @ t <= t @ t + 1e-12:
            return normals[k]
    raise ValueError(f"bifurcation {b.id} is not on the boundary of domain {d.id}")


def interface_points(case, gid, n=7):
    b = case.topo.bifurcation(gid)
    if case.topo.dim == 1:
        return b.geometry[:1]
    t = np.linspace(0.0, 1.0, n)[:, None]
    return b.geometry[0] + t * (b.geometry[1] - b.geometry[0])


def check_case(case: ManufacturedCase, n=7):
    """Continuity and flux-balance residuals at sampled interface points."""
    report = {}
    for b in case.topo.bifurcations:
        X = interface_points(case, b.id, n)
        vals = np.array([case.value(i, X) for i in b.incident])
        cont = float(np.max(np.abs(vals - vals[0])))
        fs = flux_sum(case, b.id, X)
        target = case.g_gamma[b.id](X) if case.g_gamma else np.zeros(len(X))
        report[b.id] = {"continuity": cont, "kirchhoff": float(np.max(np.abs(fs - target))),
                        "flux_sum": fs}
    return report
