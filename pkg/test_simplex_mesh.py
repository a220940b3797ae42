import numpy as np
import pytest

from mesh_generators import rectangle_mesh, segment_mesh
from simplex_mesh import (SimplexMesh, all_element_measures, build_adjacency, collapse_edge, read_mesh,
                          straighten_elements, write_mesh)
from utilies import CollapseRejected, MeshTopologyError


def single_triangle():
    return SimplexMesh(2, 1, [[0, 0], [1, 0], [0, 1]], [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]],
                       [(0, 0, 1), (0, 1, 2), (0, 2, 3)])


def test_adjacency_is_symmetric():
    mesh = rectangle_mesh((0, 0), (2, 1), 4, 2, 2)
    for e, f in np.argwhere(mesh.neighbor >= 0):
        e2, f2 = mesh.neighbor[e, f], mesh.neighbor_face[e, f]
        assert mesh.neighbor[e2, f2] == e and mesh.neighbor_face[e2, f2] == f
    assert mesh.adjacency.n_interior_faces == (3 * 16 - 12) // 2
    assert len(mesh.boundary_faces) == 12


def test_boundary_tags_follow_the_box_convention():
    mesh = rectangle_mesh((0, 0), (1, 1), 2, 2)
    for e, f, tag in mesh.boundary_faces:
        mid = mesh.nodes[mesh.elements[e, mesh.face_local_nodes(f)]].mean(axis=0)
        expected = {1: mid[1] == 0, 2: mid[0] == 1, 3: mid[1] == 1, 4: mid[0] == 0}
        assert expected[tag]


def test_untagged_boundary_face_is_rejected():
    with pytest.raises(MeshTopologyError):
        build_adjacency([[0, 1, 2]], 2, [(0, 0, 1), (0, 1, 2)])


def test_face_shared_by_three_elements_is_rejected():
    with pytest.raises(MeshTopologyError):
        build_adjacency([[0, 1, 2], [1, 0, 3], [0, 1, 4]], 2, [])


def test_inverted_reference_element_is_rejected():
    with pytest.raises(MeshTopologyError):
        SimplexMesh(2, 1, [[0, 0], [0, 1], [1, 0]], [[0, 0], [0, 1], [1, 0]], [[0, 1, 2]],
                    [(0, 0, 1), (0, 1, 1), (0, 2, 1)])


def test_measures_of_an_undeformed_mesh():
    mesh = rectangle_mesh((-1, 0), (1, 1), 8, 4, 2)
    m = all_element_measures(mesh)
    assert m.v.sum() == pytest.approx(2.0)
    assert np.allclose(m.v, m.v0)
    assert np.allclose(m.g_inf, 1.0) and np.allclose(m.g_sup, 1.0)
    assert np.allclose(m.l_min, 0.25)


def test_curved_element_measures():
    mesh = rectangle_mesh((0, 0), (1, 1), 1, 1, 2)
    x = mesh.nodes.copy()
    # bow the midside node of the bottom edge downwards
    bottom = np.flatnonzero(np.isclose(x[:, 1], 0) & np.isclose(x[:, 0], 0.5))[0]
    x[bottom, 1] = -0.1
    m = all_element_measures(mesh, x)
    assert m.v.sum() == pytest.approx(1.0 + 2.0 / 3.0 * 0.1)
    assert np.any(m.g_sup > m.g_inf)


def test_straighten_resets_high_order_nodes():
    mesh = rectangle_mesh((0, 0), (1, 1), 1, 1, 2)
    x = mesh.nodes.copy()
    x[4:] += 0.05
    straight = straighten_elements(mesh, range(mesh.n_elems), x)
    assert np.allclose(straight[4:], mesh.nodes[4:])


@pytest.mark.parametrize('q', [1, 2, 3])
def test_mesh_file_round_trip_is_bitwise(tmp_path, q):
    mesh = rectangle_mesh((0, 0), (1, 1), 2, 1, q, fixed_points=[(0, 0)])
    x = mesh.nodes + 1e-3 * np.sin(np.arange(mesh.nodes.size)).reshape(mesh.nodes.shape) / 3.0
    mesh = mesh.with_nodes(x)
    back = read_mesh(write_mesh(mesh, tmp_path / 'm.mesh'))
    assert np.array_equal(back.nodes, mesh.nodes)
    assert np.array_equal(back.ref_nodes, mesh.ref_nodes)
    assert np.array_equal(back.elements, mesh.elements)
    assert np.array_equal(back.boundary_faces, mesh.boundary_faces)
    assert np.array_equal(back.fixed, mesh.fixed)


def test_single_element_round_trip(tmp_path):
    mesh = single_triangle()
    back = read_mesh(write_mesh(mesh, tmp_path / 'one.mesh'))
    assert np.array_equal(back.nodes, mesh.nodes) and np.array_equal(back.elements, mesh.elements)


def test_malformed_mesh_file(tmp_path):
    path = tmp_path / 'bad.mesh'
    path.write_text("2 1 three 1 3\n0 0 0 0\n")
    with pytest.raises(MeshTopologyError):
        read_mesh(path)


def vertex_at(mesh, point):
    return int(np.flatnonzero(np.all(np.isclose(mesh.nodes, point), axis=1))[0])


def test_collapse_of_an_interior_edge():
    mesh = rectangle_mesh((0, 0), (3, 3), 3, 3)
    a, b = vertex_at(mesh, (1, 1)), vertex_at(mesh, (2, 2))
    new, merge = collapse_edge(mesh, a, b, a)
    assert new.n_elems == mesh.n_elems - 2
    assert len(merge.removed_elements) == 2
    assert merge.node_map[b] == merge.node_map[a]
    assert new.n_nodes == mesh.n_nodes - 1
    assert len(new.boundary_faces) == len(mesh.boundary_faces)


def test_collapse_of_a_high_order_edge_merges_edge_nodes():
    mesh = rectangle_mesh((0, 0), (3, 3), 3, 3, 2)
    a, b = vertex_at(mesh, (1, 1)), vertex_at(mesh, (2, 2))
    new, merge = collapse_edge(mesh, a, b, a)
    # the dropped vertex, the midside node of the edge and the two merged midside nodes
    assert new.n_nodes == mesh.n_nodes - 4
    assert new.n_elems == mesh.n_elems - 2


def test_collapse_guards():
    mesh = rectangle_mesh((0, 0), (3, 3), 3, 3, fixed_points=[(1, 1)])
    a, b = vertex_at(mesh, (1, 1)), vertex_at(mesh, (2, 2))
    with pytest.raises(CollapseRejected):
        collapse_edge(mesh, b, a, b)
    with pytest.raises(ValueError):
        collapse_edge(mesh, a, b, -1)
    far = vertex_at(mesh, (0, 0))
    with pytest.raises(CollapseRejected):
        collapse_edge(mesh, far, vertex_at(mesh, (3, 3)), far)
    # diagonal of the top-left cell: both ends on the boundary, two owners
    left = vertex_at(mesh, (0, 2))
    with pytest.raises(CollapseRejected):
        collapse_edge(mesh, left, vertex_at(mesh, (1, 3)), left)


def test_segment_collapse():
    mesh = segment_mesh(0.0, 1.0, 4, 2)
    new, merge = collapse_edge(mesh, 1, 2, 1)
    assert new.n_elems == 3
    assert len(new.boundary_faces) == 2
