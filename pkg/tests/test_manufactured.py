"""Symbolic oracles for the manufactured solutions.

Sources and interface data are re-derived with sympy from the solution
formulas alone and compared against the hand-coded callables.
"""
import numpy as np
import pytest
import sympy as S

from netdg.manufactured import (case_cube_net, case_edge_mms, case_low_regularity,
                                case_plane_mms, check_case, flux_sum, get_case)

x, y, z, t = S.symbols("x y z t", real=True)
PI2 = 2 * S.pi
EDGE_U = {
    1: y + S.cos(PI2 * y),
    2: 2 + S.sqrt(2) / 2 * (y - 1),
    4: 1 + S.sqrt(2) / 2 + S.sqrt(S.Rational(5, 4)) / 8 * (y - 2) + S.cos(PI2 * y),
    8: 2 + S.sqrt(2) / 2 + 0 * y,
}
BRANCH = {1: 1, 2: 2, 3: 2, 4: 4, 5: 4, 6: 4, 7: 4, 8: 8, 9: 8, 10: 8}


def edge_points(d, n=9, rng=None):
    s = np.linspace(0.05, 0.95, n) if rng is None else rng.uniform(0.01, 0.99, n)
    a, b = d.embedding
    return a + s[:, None] * (b - a)


def numeric(expr, *syms):
    return S.lambdify(syms, expr, "numpy")


def test_edge_solution_values():
    case = case_edge_mms()
    assert case.value(1, np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)
    assert case.value(1, np.array([[0.0, 1.0]]))[0] == pytest.approx(2.0)
    assert case.value(2, np.array([[0.0, 1.0]]))[0] == pytest.approx(2.0)
    assert len(case.topo.boundary) == 8
    pts = sorted(tuple(b.geometry[0]) for b in case.topo.bifurcations)
    assert pts == [(-1.0, 2.0), (0.0, 1.0), (1.0, 2.0)]


def test_edge_source_is_minus_second_arclength_derivative(rng):
    case = case_edge_mms()
    for d in case.topo.domains:
        a, b = d.embedding
        L = np.linalg.norm(b - a)
        ty = (b - a)[1] / L
        u = EDGE_U[BRANCH[d.id]].subs(y, a[1] + t * ty)
        X = edge_points(d, rng=rng)
        ts = (X - a) @ (b - a) / L
        np.testing.assert_allclose(case.value(d.id, X), numeric(u, t)(ts) + 0 * ts, atol=1e-12)
        f = numeric(-S.diff(u, t, 2), t)(ts) + 0 * ts
        np.testing.assert_allclose(case.f[d.id](X), f, atol=1e-9)
        du = numeric(S.diff(u, t), t)(ts) + 0 * ts
        np.testing.assert_allclose(case.gradient(d.id, X) @ ((b - a) / L), du, atol=1e-10)


def symbolic_flux_sum(topo, b):
    """sum of du/dt times the endpoint normal over the edges meeting at b."""
    total = 0
    for i in b.incident:
        d = topo.domain(i)
        a, e = d.embedding
        L = np.linalg.norm(e - a)
        at_start = np.allclose(a, b.geometry[0])
        u = EDGE_U[BRANCH[i]].subs(y, S.nsimplify(a[1]) + t * S.nsimplify((e - a)[1] / L))
        du = S.diff(u, t).subs(t, 0 if at_start else S.nsimplify(L))
        total += -du if at_start else du
    return float(total)


def test_edge_interface_data():
    case = case_edge_mms()
    for r in check_case(case).values():
        assert r["continuity"] < 1e-10
        assert r["kirchhoff"] < 1e-8
    for b in case.topo.bifurcations:
        X = b.geometry[:1]
        want = symbolic_flux_sum(case.topo, b)
        assert want == pytest.approx(0.0 if b.geometry[0][1] == 1.0 else 0.25, abs=1e-12)
        assert flux_sum(case, b.id, X)[0] == pytest.approx(want, abs=1e-12)
        assert case.g_gamma[b.id](X)[0] == pytest.approx(want)


def test_plane_solution_vanishes_on_caps():
    case = case_plane_mms()
    for d in case.topo.domains:
        for zc in (0.0, 1.0):
            X = np.array([[*p[:2], zc] for p in d.embedding])
            np.testing.assert_allclose(case.value(d.id, X), 0.0, atol=1e-12)


def test_plane_source_on_omega2(rng):
    case = case_plane_mms()
    d = case.topo.domain(2)
    X = np.array([d.to_ambient(q) for q in rng.uniform(0.05, 0.95, (20, 2)) *
                  np.ptp(d.local_vertices, axis=0) + d.local_vertices.min(axis=0)])
    yy, zz = X[:, 1], X[:, 2]
    want = 4 * np.pi ** 2 * (2 + np.sqrt(2) / 2 * (yy - 1)) * np.sin(2 * np.pi * zz)
    np.testing.assert_allclose(case.f[2](X), want, rtol=1e-12, atol=1e-12)


def test_plane_source_is_minus_intrinsic_laplacian(rng):
    case = case_plane_mms()
    for d in case.topo.domains:
        a, b = d.embedding[0][:2], d.embedding[1][:2]
        L = np.linalg.norm(b - a)
        ty = (b - a)[1] / L
        u = EDGE_U[BRANCH[d.id]].subs(y, a[1] + t * ty) * S.sin(PI2 * z)
        f = numeric(-(S.diff(u, t, 2) + S.diff(u, z, 2)), t, z)
        ts, zs = rng.uniform(0.01, 0.99, 15) * L, rng.uniform(0.01, 0.99, 15)
        X = np.column_stack([a + ts[:, None] * (b - a) / L, zs])
        np.testing.assert_allclose(case.f[d.id](X), f(ts, zs) + 0 * ts, atol=1e-8)
        np.testing.assert_allclose(case.value(d.id, X), numeric(u, t, z)(ts, zs) + 0 * ts, atol=1e-12)


def test_plane_interface_data():
    for r in check_case(case_plane_mms()).values():
        assert r["continuity"] < 1e-10 and r["kirchhoff"] < 1e-8


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_low_regularity_sources_match_symbolic_laplacian(s, rng):
    case = case_low_regularity(s)
    r = S.sqrt(x ** 2 + y ** 2)
    core = r ** s * S.sin(s * S.atan2(y, x))
    walls = case.meta["walls"]
    # intrinsic second derivatives on each plane
    lap = {"floor": S.diff(core, x, 2) + S.diff(core, y, 2),
           "x": S.diff(core + z, y, 2) + S.diff(core + z, z, 2),
           "y": S.diff(core + z ** 2, x, 2) + S.diff(core + z ** 2, z, 2)}
    for i, kind in walls.items():
        d = case.topo.domain(i)
        lo, hi = d.local_vertices.min(axis=0), d.local_vertices.max(axis=0)
        Q = lo + rng.uniform(0.05, 0.95, (40, 2)) * (hi - lo)
        X = d.to_ambient(Q)
        if kind == "floor":
            X = X[~((X[:, 0] < 0.05) & (X[:, 1] < 0.05))]   # outside the removed quadrant
        f = numeric(-lap[kind], x, y, z)(X[:, 0], X[:, 1], X[:, 2]) + 0 * X[:, 0]
        np.testing.assert_allclose(case.f[i](X), f, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_low_regularity_interface_data(s):
    case = case_low_regularity(s)
    r = S.sqrt(x ** 2 + y ** 2)
    core = r ** s * S.sin(s * S.atan2(y, x))
    for g, rep in check_case(case, n=9).items():
        assert rep["continuity"] < 1e-10
        assert rep["kirchhoff"] < 1e-8
    for b in case.topo.bifurcations:
        P = b.geometry[0] + np.linspace(0.1, 0.9, 5)[:, None] * (b.geometry[1] - b.geometry[0])
        # floor's outward normal points to -x on x = -1 and to -y on y = -1
        axis = x if np.allclose(b.geometry[:, 0], -1) else y
        want = numeric(-S.diff(core, axis), x, y)(P[:, 0], P[:, 1])
        np.testing.assert_allclose(case.g_gamma[b.id](P), want, rtol=1e-10)


def test_low_regularity_vanishes_at_the_corner():
    case = case_low_regularity(0.5)
    np.testing.assert_allclose(case.value(1, np.array([[0.0, 0.0, 0.0]])), 0.0)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.3, 1.5])
def test_low_regularity_rejects_s_outside_unit_interval(s):
    with pytest.raises(ValueError):
        case_low_regularity(s)


def test_case_lookup(tmp_path):
    assert get_case("edge-mms").name == "edge-mms"
    assert get_case("low-reg:s=0.5").s == 0.5
    assert not get_case("cube-net").has_exact
    assert case_cube_net().coarse_h == pytest.approx(1 / 3)
    from netdg.geometry import dump_topology
    from conftest import y_junction
    path = tmp_path / "y.topo"
    path.write_text(dump_topology(y_junction()))
    c = get_case(f"file:{path}")
    assert not c.has_exact and len(c.topo.domains) == 3
    with pytest.raises(ValueError):
        get_case("no-such-case")
