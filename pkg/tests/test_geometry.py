import logging

import numpy as np
import pytest

from conftest import segment, three_segments, unit_square, y_junction
from netdg.geometry import (TopologyError, TopologyParseError, build_topology, cube_network,
                            dump_topology, edge_mms_network, extrude, load_topology,
                            low_regularity_network)

THREE_SEGMENTS_TEXT = """\
netdg-topology v1
dim 1
vertices
  1 0.0 0.0
  2 0.0 1.0
  3 -1.0 2.0
  4 1.0 2.0
domains
  1: 1 2
  2: 2 3
  3: 2 4
bifurcations
  1: point 2 | 1 2 3
"""


def test_single_segment_has_no_bifurcations():
    topo = segment()
    assert len(topo.domains) == 1
    assert topo.bifurcations == ()
    assert sorted(topo.boundary) == [(1, (1,)), (1, (2,))]


def test_three_segments_share_one_point():
    topo = load_topology(THREE_SEGMENTS_TEXT)
    assert len(topo.bifurcations) == 1
    b = topo.bifurcations[0]
    assert b.card == 3
    assert b.pairs == [(1, 2), (1, 3), (2, 3)]
    np.testing.assert_allclose(b.geometry[0], [0.0, 1.0])
    # derived and explicit bifurcation sections agree
    derived = three_segments().bifurcations[0]
    assert derived.incident == b.incident


def test_endpoint_normals_point_out_of_the_segment():
    d = segment().domain(1)
    assert d.endpoint_normal(0) == -1.0
    assert d.endpoint_normal(1) == 1.0


def test_frames_are_orthonormal():
    for topo in (edge_mms_network(), low_regularity_network(), cube_network()):
        for d in topo.domains:
            np.testing.assert_allclose(d.frame @ d.frame.T, np.eye(d.dim), atol=1e-14)
            back = d.to_ambient(d.to_local(d.embedding))
            np.testing.assert_allclose(back, d.embedding, atol=1e-14)


def test_extrude_single_segment_gives_one_rectangle():
    topo = extrude(segment(), 1.0)
    assert topo.dim == 2 and len(topo.domains) == 1
    assert topo.bifurcations == ()
    assert topo.domain(1).measure == pytest.approx(1.0)


def test_extrude_keeps_incidence():
    base = edge_mms_network()
    topo = extrude(base, 1.0)
    assert len(topo.domains) == 10
    assert [b.incident for b in topo.bifurcations] == [b.incident for b in base.bifurcations]
    assert sorted(b.card for b in topo.bifurcations) == [3, 4, 5]
    for b in topo.bifurcations:
        assert b.geometry.shape == (2, 3)


def test_extrude_rejects_plane_networks():
    with pytest.raises(TopologyError):
        extrude(unit_square(), 1.0)


def test_low_regularity_network_has_two_card3_segments():
    topo = low_regularity_network()
    assert len(topo.domains) == 5
    assert [b.card for b in topo.bifurcations] == [3, 3]


def test_cube_network_counts():
    topo = cube_network(3)
    assert len(topo.domains) == 54
    assert len(topo.bifurcations) == 36
    assert all(b.card == 4 for b in topo.bifurcations)


def test_round_trip_preserves_topology():
    for topo in (y_junction(), edge_mms_network(), low_regularity_network()):
        again = load_topology(dump_topology(topo))
        assert again.dim == topo.dim
        assert [d.vertex_ids for d in again.domains] == [d.vertex_ids for d in topo.domains]
        assert [b.incident for b in again.bifurcations] == [b.incident for b in topo.bifurcations]
        assert sorted(again.boundary) == sorted(topo.boundary)


def test_parse_error_reports_line_number():
    bad = THREE_SEGMENTS_TEXT.replace("  3: 2 4", "  3: 2 x")
    with pytest.raises(TopologyParseError) as exc:
        load_topology(bad)
    assert exc.value.line == 11


def test_missing_header_is_a_parse_error():
    with pytest.raises(TopologyParseError):
        load_topology(THREE_SEGMENTS_TEXT.replace("netdg-topology v1", "something else"))


def test_non_coplanar_polygon_rejected():
    verts = {1: (0, 0, 0), 2: (1, 0, 0), 3: (1, 1, 0.5), 4: (0, 1, 0)}
    with pytest.raises(TopologyError):
        build_topology(2, verts, {1: [1, 2, 3, 4]})


def test_bifurcation_must_lie_in_incident_domains():
    verts = {1: (0.0, 0.0), 2: (1.0, 0.0), 3: (2.0, 0.0), 4: (5.0, 5.0)}
    with pytest.raises(TopologyError):
        build_topology(1, verts, {1: [1, 2], 2: [2, 3]}, bifurcations={1: ([4], [1, 2])})


def test_wrong_boundary_section_rejected():
    verts = {1: (0.0, 0.0), 2: (1.0, 0.0)}
    with pytest.raises(TopologyError):
        build_topology(1, verts, {1: [1, 2]}, boundary=[(1, (1,))])


def test_high_cardinality_warns(caplog):
    n = 17
    verts = {0: (0.0, 0.0)}
    doms = {}
    for k in range(n):
        a = 2 * np.pi * k / n
        verts[k + 1] = (np.cos(a), np.sin(a))
        doms[k + 1] = [0, k + 1]
    with caplog.at_level(logging.WARNING, logger="netdg.geometry"):
        topo = build_topology(1, verts, doms)
    assert topo.bifurcations[0].card == 17
    assert any("17" in r.getMessage() for r in caplog.records)
