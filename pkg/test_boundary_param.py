import numpy as np
import pytest

from boundary_param import (PlanarBoundary, PlanarBoundarySet, build_param, classify_node, node_constraint,
                            select_unconstrained)
from mesh_generators import diamond_boundary_set, diamond_mesh, rectangle_mesh
from utilies import RedundantBoundaryError


@pytest.fixture
def box():
    return PlanarBoundarySet.box((0.0, 0.0), (2.0, 1.0))


def test_corner_and_side_classification(box):
    assert classify_node((0.0, 0.0), box) == [0, 3]
    assert classify_node((2.0, 1.0), box) == [1, 2]
    assert classify_node((1.0, 0.0), box) == [0]
    assert classify_node((1.0, 0.5), box) == []


def test_tolerance_scales_with_the_box(box):
    assert box.tol == pytest.approx(2e-8)
    assert classify_node((1.0, 1e-9), box) == [0]
    assert classify_node((1.0, 1e-6), box) == []


def test_dependent_normals_are_rejected():
    planes = PlanarBoundarySet([PlanarBoundary([0.0, 1.0], 0.0), PlanarBoundary([0.0, 2.0], 0.0)])
    with pytest.raises(RedundantBoundaryError):
        classify_node((0.5, 0.0), planes)


def test_zero_normal_is_rejected():
    with pytest.raises(ValueError):
        PlanarBoundary([0.0, 0.0], 1.0)


def test_unconstrained_axis_prefers_the_plane_direction():
    unconstrained, constrained = select_unconstrained([[0.0, 1.0]], 2)
    assert unconstrained == [0] and constrained == [1]
    unconstrained, constrained = select_unconstrained([[1.0, 0.0]], 2)
    assert unconstrained == [1] and constrained == [0]
    assert select_unconstrained(np.zeros((0, 2)), 2) == ([0, 1], [])
    assert select_unconstrained(np.eye(2), 2) == ([], [0, 1])


def test_slanted_plane_keeps_the_node_on_it():
    plane = PlanarBoundary.through((1.0, 0.0), (1.0, 1.0))
    planes = PlanarBoundarySet([plane])
    nc = node_constraint((0.25, 0.75), planes)
    assert nc.A.shape == (2, 1)
    for t in np.linspace(-3.0, 3.0, 7):
        x = nc.A[:, 0] * t + nc.b
        assert abs(plane.normal @ x - plane.offset) < 1e-12


def test_fixed_node_stays_put(box):
    nc = node_constraint((1.0, 0.5), box, fixed=True)
    assert nc.A.shape == (2, 0)
    assert np.array_equal(nc.b, [1.0, 0.5])


def test_parameter_count_of_a_small_mesh(box):
    mesh = rectangle_mesh((0.0, 0.0), (2.0, 1.0), 2, 1)
    param = build_param(mesh, box)
    # four corners are pinned, the two mid-side nodes slide along their sides
    assert param.n_y == 2
    assert param.n_x == 12
    assert param.node_partition().sum() == 2


@pytest.mark.parametrize('q', [1, 2])
def test_random_parameters_keep_nodes_on_their_boundaries(box, q):
    mesh = rectangle_mesh((0.0, 0.0), (2.0, 1.0), 4, 2, q, fixed_points=[(1.0, 0.0)])
    param = build_param(mesh, box)
    rng = np.random.default_rng(3)
    for _ in range(100):
        y = rng.uniform(-3.0, 3.0, param.n_y)
        x = param.apply(y).reshape(-1, 2)
        for node, nc in enumerate(param.constraints):
            for i in nc.boundaries:
                assert abs(box[i].normal @ x[node] - box[i].offset) <= 1e-12
        assert np.array_equal(param.invert(x.reshape(-1)), y)
    fixed = np.flatnonzero(mesh.fixed)
    assert np.array_equal(param.apply(np.zeros(param.n_y)).reshape(-1, 2)[fixed], mesh.ref_nodes[fixed])


def test_reference_mesh_is_reproduced(box):
    mesh = rectangle_mesh((0.0, 0.0), (2.0, 1.0), 4, 2, 2)
    param = build_param(mesh, box)
    y0 = param.invert(mesh.ref_nodes.reshape(-1))
    assert np.allclose(param.apply(y0), mesh.ref_nodes.reshape(-1), atol=1e-14)


def test_diamond_walls_are_tracked():
    mesh = diamond_mesh()
    boundaries = diamond_boundary_set()
    param = build_param(mesh, boundaries)
    y0 = param.invert(mesh.ref_nodes.reshape(-1))
    assert np.allclose(param.apply(y0), mesh.ref_nodes.reshape(-1), atol=1e-12)
    assert param.n_y < param.n_x


def test_wrong_coordinate_count(box):
    param = build_param(rectangle_mesh((0.0, 0.0), (2.0, 1.0), 2, 1), box)
    with pytest.raises(ValueError):
        param.invert(np.zeros(5))
