import itertools

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from conftest import patch_case, plane_y_junction, segment, unit_square, y_junction
from netdg.analysis import error_vs_exact
from netdg.assembly import (Coefficients, SchemeConfig, apply_bilinear, assemble,
                            coupling_matrices)
from netdg.geometry import cube_network, edge_mms_network, low_regularity_network
from netdg.mesh import mesh_network
from netdg.solver import solve
from netdg.space import DGSpace

NETWORKS = [(segment, 0.25), (y_junction, 0.25), (edge_mms_network, 0.25), (unit_square, 0.25),
            (plane_y_junction, 0.5), (low_regularity_network, 0.5), (cube_network, 1 / 3)]


def system(make, h, p=1, config=None, **kw):
    sp_ = DGSpace(mesh_network(make(), h), p)
    return sp_, assemble(sp_, Coefficients(f=1.0), config or SchemeConfig(), **kw)


def test_interval_volume_block():
    sp_, sys_ = system(segment, 0.25, terms=("volume",))
    block = sys_.matrix.toarray()[:2, :2]
    np.testing.assert_allclose(block, [[4.0, -4.0], [-4.0, 4.0]], atol=1e-12)


def test_unknown_term_family_rejected():
    with pytest.raises(ValueError):
        system(segment, 0.25, terms=("volume", "nonsense"))


@pytest.mark.parametrize("make,h", NETWORKS, ids=lambda x: getattr(x, "__name__", str(x)))
@pytest.mark.parametrize("p", [1, 2])
def test_sipg_matrix_is_symmetric(make, h, p):
    _, sys_ = system(make, h, p)
    A = sys_.matrix
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    assert sys_.symmetric_hint


def test_nipg_matrix_is_not_symmetric():
    _, sys_ = system(y_junction, 0.25, 1, SchemeConfig.variant("nipg"))
    A = sys_.matrix
    assert abs(A - A.T).max() > 1e-3
    assert not sys_.symmetric_hint


@pytest.mark.parametrize("variant", ["sipg", "iipg", "nipg"])
@pytest.mark.parametrize("make,h", [(y_junction, 0.25), (plane_y_junction, 0.5)])
def test_matrix_free_form_matches_matrix(variant, make, h, rng):
    config = SchemeConfig.variant(variant)
    sp_ = DGSpace(mesh_network(make(), h), 2)
    coeffs = Coefficients(f=1.0, kappa={1: 1.0, 2: 2.5, 3: 0.5})
    A = assemble(sp_, coeffs, config).matrix
    for _ in range(100 if make is y_junction else 10):
        w, v = rng.standard_normal((2, sp_.ndofs))
        ref = v @ (A @ w)
        assert apply_bilinear(sp_, coeffs, config, w, v) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_zero_trial_gives_zero(rng):
    sp_ = DGSpace(mesh_network(y_junction(), 0.25), 1)
    v = rng.standard_normal(sp_.ndofs)
    assert apply_bilinear(sp_, Coefficients(), SchemeConfig(), np.zeros(sp_.ndofs), v) == 0.0


def test_nipg_energy_dominates_gradient_part(rng):
    # with a weak penalty the NIPG form still controls the broken gradient
    config = SchemeConfig.variant("nipg", eta_F=0.1, eta_gamma=0.1, over_penalize=False)
    sp_ = DGSpace(mesh_network(edge_mms_network(), 0.25), 2)
    A = assemble(sp_, Coefficients(), config).matrix
    Avol = assemble(sp_, Coefficients(), config, terms=("volume",)).matrix
    for _ in range(50):
        v = rng.standard_normal(sp_.ndofs)
        assert v @ (A @ v) >= v @ (Avol @ v) - 1e-9 * abs(v @ (A @ v))


def test_dropping_bifurcation_terms_decouples_domains():
    topo = edge_mms_network()
    sp_ = DGSpace(mesh_network(topo, 0.25), 1)
    full = assemble(sp_, Coefficients(f=1.0), SchemeConfig()).matrix
    cut = assemble(sp_, Coefficients(f=1.0), SchemeConfig(),
                   terms=("volume", "interior", "boundary")).matrix
    assert connected_components(abs(full) > 0, directed=False)[0] == 1
    assert connected_components(abs(cut) > 0, directed=False)[0] == len(topo.domains)


def test_coupling_matrix_pairing_example():
    q = np.array([1.0, 2.0, -3.0])
    v = np.array([1.0, 0.0, 0.0])
    Mflux, Mpen = coupling_matrices("bifurcation", 3)
    assert q @ Mflux @ v == pytest.approx(1.0)
    pairs = sum((q[i] - q[j]) * (v[i] - v[j]) for i, j in itertools.combinations(range(3), 2))
    assert pairs / 3 == pytest.approx(1.0)
    assert v @ Mpen @ v == pytest.approx(2.0)


def test_card2_bifurcation_equals_interior_facet():
    Mflux, Mpen = coupling_matrices("bifurcation", 2)
    Iflux, Ipen = coupling_matrices("interior", 2)
    np.testing.assert_allclose(Mflux, Iflux)
    np.testing.assert_allclose(Mpen, Ipen)


@pytest.mark.parametrize("variant", ["sipg", "iipg", "nipg"])
@pytest.mark.parametrize("dim,p", [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)])
def test_patch_solution_is_reproduced(variant, dim, p):
    topo, coeffs, value, gradient = patch_case(dim, p)
    config = SchemeConfig.variant(variant)
    sp_ = DGSpace(mesh_network(topo, 0.25 if dim == 1 else 0.5), p)
    rep = solve(assemble(sp_, coeffs, config), method="dense")
    err = error_vs_exact(sp_, config, rep.solution, value, gradient)
    assert err.dg_error < 1e-9
    assert err.l2_error < 1e-10


def test_missing_coefficient_raises():
    sp_ = DGSpace(mesh_network(y_junction(), 0.25), 1)
    with pytest.raises(KeyError):
        assemble(sp_, Coefficients(f={1: 1.0, 2: 1.0}), SchemeConfig())


def test_non_positive_kappa_raises():
    sp_ = DGSpace(mesh_network(y_junction(), 0.25), 1)
    with pytest.raises(ValueError):
        assemble(sp_, Coefficients(kappa=-1.0), SchemeConfig())


@pytest.mark.parametrize("kw", [{"epsilon": 2}, {"eta_F": 0.0}, {"eta_gamma": -1.0},
                                {"g_gamma_weight": "median"}, {"epsilon_i": {1: 3}}])
def test_invalid_scheme_config(kw):
    with pytest.raises(ValueError):
        SchemeConfig(**kw)


def test_scheme_defaults():
    assert SchemeConfig().penalties(2, 1) == (20.0, 20.0)
    assert SchemeConfig().penalties(1, 2) == (20.0, 20.0)
    assert not SchemeConfig.variant("sipg").overpenalized
    assert SchemeConfig.variant("iipg").overpenalized
    assert not SchemeConfig.variant("nipg", over_penalize=False).overpenalized


def test_assembly_is_deterministic():
    _, a = system(edge_mms_network, 0.25, 2)
    _, b = system(edge_mms_network, 0.25, 2)
    assert (a.matrix != b.matrix).nnz == 0
    np.testing.assert_array_equal(a.rhs, b.rhs)


def test_g_gamma_weighting_changes_only_bifurcation_load():
    sp_ = DGSpace(mesh_network(y_junction(), 0.25), 1)
    coeffs = Coefficients(g_gamma={1: 0.9})
    mean = assemble(sp_, coeffs, SchemeConfig(g_gamma_weight="mean"))
    total = assemble(sp_, coeffs, SchemeConfig(g_gamma_weight="sum"))
    diff = np.flatnonzero(np.abs(mean.rhs - total.rhs) > 0)
    assert len(diff) == 3
    np.testing.assert_allclose(total.rhs[diff], 3 * mean.rhs[diff])
    np.testing.assert_allclose(mean.rhs.sum(), 0.9, rtol=1e-12)


def test_matrix_market_export(tmp_path):
    _, sys_ = system(y_junction, 0.25, 1)
    path = tmp_path / "A.mtx"
    sys_.export_matrix_market(path, comment="y junction")
    B = sp.csr_matrix(scipy.io.mmread(str(path)))
    assert abs(B - sys_.matrix).max() <= 1e-14 * abs(sys_.matrix).max()
