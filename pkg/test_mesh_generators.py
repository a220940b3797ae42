import numpy as np
import pytest

from boundary_param import classify_node
from mesh_generators import (DIAMOND_VERTICES, diamond_boundary_set, diamond_mesh, elevate, rectangle_mesh,
                             refine, segment_mesh, sod_mesh)
from simplex_mesh import all_element_measures
from utilies import MeshTopologyError


def total_area(mesh):
    return all_element_measures(mesh).v.sum()


def test_segment_mesh():
    mesh = segment_mesh(-1.0, 2.0, 6, 2)
    assert mesh.n_elems == 6 and mesh.n_nodes == 13
    assert sorted(mesh.boundary_faces[:, 2].tolist()) == [1, 2]
    assert total_area(mesh) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        segment_mesh(0.0, 1.0, 0)


@pytest.mark.parametrize('pattern', ['right', 'left', 'alternate'])
def test_rectangle_mesh_and_refinement(pattern):
    mesh = rectangle_mesh((0.0, 0.0), (3.0, 2.0), 6, 6, 1, pattern)
    assert mesh.n_elems == 72 and mesh.n_nodes == 49
    assert total_area(mesh) == pytest.approx(6.0)
    fine = refine(mesh)
    assert fine.n_elems == 288 and fine.n_nodes == 169
    assert total_area(fine) == pytest.approx(6.0)
    for tag in (1, 2, 3, 4):
        assert np.sum(fine.boundary_faces[:, 2] == tag) == 2 * np.sum(mesh.boundary_faces[:, 2] == tag)


def test_quadratic_nodes_are_shared():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 1, 1, 2)
    assert mesh.n_nodes == 9
    a, b = mesh.elements
    assert len(set(a) & set(b)) == 3


def test_elevate_keeps_vertices_first():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes, elements = elevate(2, 3, points, [[0, 1, 2]])
    assert len(nodes) == 10
    assert np.allclose(nodes[:3], points)
    assert elements[0, :3].tolist() == [0, 1, 2]


def test_sod_mesh_fixes_the_membrane_node():
    mesh = sod_mesh()
    assert mesh.n_elems == 100
    fixed = np.flatnonzero(mesh.fixed)
    assert len(fixed) == 1 and np.allclose(mesh.nodes[fixed[0]], (0.5, 0.0))
    assert refine(mesh).fixed.sum() == 1
    with pytest.raises(ValueError):
        sod_mesh(nx=9)


def test_fixed_point_must_be_a_vertex():
    with pytest.raises(MeshTopologyError):
        rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2, fixed_points=[(0.3, 0.0)])


def test_diamond_mesh():
    mesh = diamond_mesh()
    assert 5 in set(mesh.boundary_faces[:, 2].tolist())
    measures = all_element_measures(mesh)
    assert np.all(measures.v > 0)
    # channel minus the diamond, whose diagonals are 1.5 and 0.5
    assert measures.v.sum() == pytest.approx(5.0 * 1.5 - 0.375, rel=1e-10)
    boundaries = diamond_boundary_set()
    on_diamond = set()
    for e, f, tag in mesh.boundary_faces:
        if tag == 5:
            on_diamond.update(int(i) for i in mesh.elements[e, mesh.face_local_nodes(f)])
    for node in on_diamond:
        assert any(boundaries[i].tag == 5 for i in classify_node(mesh.nodes[node], boundaries))
    assert all(any(np.allclose(mesh.nodes[n], v) for n in on_diamond) for v in DIAMOND_VERTICES)
