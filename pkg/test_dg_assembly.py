import numpy as np
import pytest

from claw_model import AdvectionModel, BurgersModel
from dg_assembly import DgAssembler, DgSpace, constant_injection, project_solution
from factory import create_case
from hoist import check_jacobians
from mesh_generators import rectangle_mesh, segment_mesh
from quadrature import n_basis
from sqp_solver import TrackingProblem

JACOBIAN_TOLERANCE = 1e-5


def unit_inflow(x):
    return 1.0 + 0.0 * x[..., 0]


def curved_mesh(q):
    mesh = rectangle_mesh((-1.0, 0.0), (1.0, 1.0), 4, 2, q)
    x = mesh.nodes.copy()
    interior = np.setdiff1d(np.arange(mesh.n_nodes), sorted(mesh.boundary_node_ids()))
    high_order = interior[interior >= 15]
    x[high_order] += 0.02 * np.column_stack([np.sin(7.0 * x[high_order, 1]), np.cos(5.0 * x[high_order, 0])])
    return mesh.with_nodes(x)


@pytest.mark.parametrize('p', [1, 2])
@pytest.mark.parametrize('q', [1, 2])
def test_free_stream_is_preserved(p, q):
    mesh = curved_mesh(q)
    asm = DgAssembler(AdvectionModel((1.0, 0.5), unit_inflow), mesh, p)
    u = np.ones(asm.space.n_dofs(mesh.n_elems))
    assert np.allclose(asm.residual(u), 0.0, atol=1e-12)
    assert np.allclose(asm.residual(u, test_degree=p + 1), 0.0, atol=1e-12)


def test_jacobian_shapes():
    mesh = rectangle_mesh((-1.0, 0.0), (1.0, 1.0), 2, 2, 2)
    asm = DgAssembler(BurgersModel(unit_inflow), mesh, 1)
    u = np.full(asm.space.n_dofs(mesh.n_elems), 0.5)
    standard = asm.linearize(u)
    enriched = asm.linearize(u, test_degree=2)
    assert standard.du.shape == (8 * 3, 8 * 3)
    assert standard.dx.shape == (8 * 3, 2 * mesh.n_nodes)
    assert enriched.du.shape == (8 * 6, 8 * 3)
    assert enriched.dx.shape == (8 * 6, 2 * mesh.n_nodes)
    assert np.allclose(standard.value, asm.residual(u))


def test_burgers_jacobians_match_finite_differences():
    case = create_case('iburg-form', p=1, q=2)
    mesh = rectangle_mesh(*case.BOX, 4, 2, 2, 'alternate')
    problem = TrackingProblem(case.model(), mesh, 1, case.boundaries())
    rng = np.random.default_rng(1)
    u = rng.uniform(-0.5, 0.5, problem.n_u)
    errors = check_jacobians(problem, u, mesh.nodes.reshape(-1), directions=5)
    assert max(errors.values()) < JACOBIAN_TOLERANCE


def test_nozzle_jacobians_match_finite_differences():
    case = create_case('nozzle', p=1)
    mesh = case.mesh()
    model = case.model()
    problem = TrackingProblem(model, mesh, 1, case.boundaries())
    centers = mesh.nodes[mesh.elements].mean(axis=1)
    rng = np.random.default_rng(2)
    rho = 1.0 + 0.1 * rng.uniform(size=mesh.n_elems)
    v = 0.3 + 0.1 * rng.uniform(size=(mesh.n_elems, 1))
    means = model.conservative(rho, v, np.ones(mesh.n_elems), centers)
    u = constant_injection(means, 1, 1) * (1.0 + 0.01 * rng.uniform(size=problem.n_u))
    errors = check_jacobians(problem, u, mesh.nodes.reshape(-1), directions=5)
    assert max(errors.values()) < JACOBIAN_TOLERANCE


def test_projection_identities():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(5 * 3 * 2)
    assert np.allclose(project_solution(u, 1, 1, 2, 2), u)
    assert np.allclose(project_solution(project_solution(u, 1, 3, 2, 2), 3, 1, 2, 2), u)
    means = rng.standard_normal((5, 2))
    assert np.allclose(project_solution(constant_injection(means, 0, 2), 0, 2, 2, 2),
                       constant_injection(means, 2, 2))


@pytest.mark.parametrize('dim', [1, 2])
@pytest.mark.parametrize('degree', [1, 2, 3])
def test_lowering_the_degree_keeps_lower_degree_content(dim, degree):
    rng = np.random.default_rng(degree)
    means = rng.standard_normal((4, 2))
    constant = constant_injection(means, degree, dim)
    lowered = project_solution(constant, degree, degree - 1, dim, 2)
    assert np.allclose(lowered, constant_injection(means, degree - 1, dim))
    # degree p - 1 data lifted to p and lowered again is unchanged
    lower = rng.standard_normal(4 * n_basis(dim, degree - 1) * 2)
    lifted = project_solution(lower, degree - 1, degree, dim, 2)
    assert np.allclose(project_solution(lifted, degree, degree - 1, dim, 2), lower)


def test_mean_face_jumps_of_piecewise_constants():
    mesh = rectangle_mesh((0.0, 0.0), (2.0, 1.0), 2, 1)
    asm = DgAssembler(AdvectionModel((1.0, 0.0), unit_inflow), mesh, 1)
    values = np.array([0.0, 1.0, 3.0, 7.0])
    jumps = asm.mean_face_jumps(constant_injection(values[:, None], 1, 2))
    for e in range(mesh.n_elems):
        for f in range(3):
            nb = mesh.neighbor[e, f]
            if nb < 0:
                assert np.isnan(jumps[e, f])
            else:
                assert jumps[e, f] == pytest.approx(values[e] - values[nb])


def test_dimension_and_size_checks():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 1, 1)
    with pytest.raises(ValueError):
        DgAssembler(BurgersModel(unit_inflow), segment_mesh(0.0, 1.0, 2), 1)
    with pytest.raises(ValueError):
        DgSpace(2, 1, 1).element_view(np.zeros(7), mesh.n_elems)
    with pytest.raises(ValueError):
        DgSpace(2, -1, 1)
