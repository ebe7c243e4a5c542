import numpy as np
import pytest

from netdg.geometry import build_topology, extrude


def segment(length=1.0):
    return build_topology(1, {1: (0.0, 0.0), 2: (length, 0.0)}, {1: [1, 2]})


def y_junction():
    """Three unit segments leaving the origin."""
    verts = {1: (0.0, 0.0), 2: (1.0, 0.0), 3: (-0.5, np.sqrt(3) / 2), 4: (-0.5, -np.sqrt(3) / 2)}
    return build_topology(1, verts, {1: [1, 2], 2: [1, 3], 3: [1, 4]})


def three_segments():
    """Trunk (0,0)-(0,1) splitting into two branches at (0,1)."""
    verts = {1: (0.0, 0.0), 2: (0.0, 1.0), 3: (-1.0, 2.0), 4: (1.0, 2.0)}
    return build_topology(1, verts, {1: [1, 2], 2: [2, 3], 3: [2, 4]})


def unit_square():
    verts = {1: (0, 0, 0), 2: (1, 0, 0), 3: (1, 1, 0), 4: (0, 1, 0)}
    return build_topology(2, verts, {1: [1, 2, 3, 4]})


def plane_y_junction():
    return extrude(y_junction(), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- patch cases
# Piecewise polynomials on the (extruded) Y-junction that are continuous at the
# junction and have zero flux imbalance there, so the scheme reproduces them.

BETA = {1: 1.0, 2: -2.0, 3: 1.0}


def _directions(topo):
    return {d.id: d.frame[0, :2] for d in topo.domains}


def patch_case(dim, p):
    """(topology, Coefficients, value, gradient) with an exact solution of degree p."""
    from netdg.assembly import Coefficients

    topo = y_junction() if dim == 1 else plane_y_junction()
    t = _directions(y_junction())
    quad = p >= 2
    alpha = {i: -1.0 - b for i, b in BETA.items()} if quad else {i: 0.0 for i in BETA}

    def value(i, X):
        s = X[:, :2] @ t[i]
        u = 1.0 + BETA[i] * s + alpha[i] * s ** 2
        if dim == 2:
            u = u + (0.5 * X[:, 2] * (1 - X[:, 2]) if quad else 0.5 * X[:, 2])
        return u

    def gradient(i, X):
        s = X[:, :2] @ t[i]
        du = BETA[i] + 2 * alpha[i] * s
        G = np.zeros_like(X, dtype=float)
        G[:, :2] = du[:, None] * t[i]
        if dim == 2:
            G[:, 2] = 0.5 - X[:, 2] if quad else 0.5
        return G

    def source(i):
        c = -2 * alpha[i] + (1.0 if dim == 2 and quad else 0.0)
        return lambda X: np.full(len(X), c)

    coeffs = Coefficients(f={i: source(i) for i in BETA}, kappa=1.0,
                          dirichlet={i: (lambda X, i=i: value(i, X)) for i in BETA})
    return topo, coeffs, value, gradient
