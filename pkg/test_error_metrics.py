import numpy as np
import pytest

from boundary_param import PlanarBoundarySet
from claw_model import AdvectionModel
from dg_assembly import constant_injection
from error_metrics import (ConvergenceRecord, convergence_slopes, line_integral, locate, run_convergence_study,
                           shock_faces, skeleton_distance, triple_points)
from mesh_generators import rectangle_mesh
from sqp_solver import TrackingProblem
from utilies import KktSolveError


def advection_problem(lower, upper, nx, ny, degree=1):
    mesh = rectangle_mesh(lower, upper, nx, ny)
    model = AdvectionModel((1.0, 0.0), lambda x: 0.0 * x[..., 0])
    return TrackingProblem(model, mesh, degree, PlanarBoundarySet.box(lower, upper))


def test_convergence_slopes():
    assert convergence_slopes([1.0, 1.0 / 8.0], [1.0, 0.5]) == pytest.approx([3.0])
    slopes = convergence_slopes([1.0, 0.25, 0.0625], [0.4, 0.2, 0.1])
    assert np.allclose(slopes, 2.0)


def test_record_requires_decreasing_mesh_size():
    record = ConvergenceRecord(1, 1)
    record.add(0.5, 8, {'E': 1.0})
    with pytest.raises(ValueError):
        record.add(0.5, 32, {'E': 0.5})
    record.add(0.25, 32, {'E': 0.25, 'F': 1.0})
    assert record.metric_names == ['E', 'F']
    assert record.slopes('E') == pytest.approx([2.0])


def test_study_records_failing_levels():
    def solve(level):
        if level == 1:
            raise KktSolveError("KKT matrix is singular")
        h = 0.5 ** level
        return h, 4 ** level, {'E': h ** 2}, 'converged'

    record = run_convergence_study(solve, 3, 1, 1)
    assert [level['status'] for level in record.levels] == ['converged', 'failed', 'converged']
    h = [level['h'] for level in record.levels]
    assert h[0] == 1.0 and np.isnan(h[1]) and h[2] == 0.25
    slopes = record.slopes('E')
    # the last level is compared with the first one
    assert np.isnan(slopes[0])
    assert slopes[1] == pytest.approx(2.0)


def test_study_propagates_programming_errors():
    def solve(level):
        raise TypeError("bad call")

    with pytest.raises(TypeError):
        run_convergence_study(solve, 2, 1, 1)


def test_failed_level_skips_the_mesh_size_check():
    record = ConvergenceRecord(2, 1)
    record.add(0.5, 8, {'E': 1.0})
    record.add(np.nan, 0, {}, 'failed')
    with pytest.raises(ValueError):
        record.add(0.5, 32, {'E': 0.5})
    record.add(0.25, 32, {'E': 0.125})
    assert np.isnan(record.slopes('E')[0])
    assert record.slopes('E')[1] == pytest.approx(3.0)


def test_line_integral_of_a_linear_field():
    problem = advection_problem((0.0, 0.0), (1.0, 1.0), 2, 2)
    mesh = problem.mesh
    vertices = mesh.nodes[mesh.vertices]
    u = (1.0 + vertices[..., 0] + vertices[..., 1]).reshape(-1)
    x = mesh.nodes.reshape(-1)
    value = line_integral(problem, u, x, (0.3, 0.0), (0.0, 1.0), 1.0, lambda U, p: U[0])
    assert value == pytest.approx(1.0 + 0.3 + 0.5, rel=1e-10)


def test_locate():
    problem = advection_problem((0.0, 0.0), (1.0, 1.0), 2, 2)
    mesh = problem.mesh
    e, xi = locate(mesh, mesh.nodes, np.array([0.7, 0.2]))
    coords = mesh.element_coords()[e]
    assert np.allclose(mesh.basis.eval(xi[None, :])[0] @ coords, [0.7, 0.2])
    assert locate(mesh, mesh.nodes, np.array([1.5, 0.5])) == (None, None)


def test_triple_point_of_three_constant_regions():
    problem = advection_problem((0.0, 0.0), (2.0, 2.0), 2, 2)
    mesh = problem.mesh
    centers = mesh.nodes[mesh.vertices].mean(axis=1)
    values = np.where(centers[:, 0] < 1.0, 0.0, np.where(centers[:, 1] < 1.0, 1.0, 3.0))
    u = constant_injection(values[:, None], 1, 2)
    x = mesh.nodes.reshape(-1)
    assert len(shock_faces(problem, u, x, 0.5)) == 3
    assert triple_points(problem, u, x, 0.5) == [4]
    assert triple_points(problem, u, x, 5.0) == []


def test_skeleton_distance():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 1, 1)
    points = np.array([[0.5, 0.0], [0.5, 0.25], [0.2, 0.2]])
    assert np.allclose(skeleton_distance(mesh, mesh.nodes, points), [0.0, 0.25 / np.sqrt(2.0), 0.0])
