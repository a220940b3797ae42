import numpy as np
import pytest
import scipy.sparse as sp

import sqp_solver
from factory import create_case
from initialization import init_solution
from mesh_generators import rectangle_mesh
from robustness import Robustness
from sqp_solver import (SqpParams, TrackingProblem, assemble_elasticity, build_hessian, hoist_solve, initial_kappa,
                        line_search, merit_penalty, reset_kappa, solve_kkt, start_state, update_gamma,
                        update_kappa, with_overrides)
from utilies import ConfigError, InvertedElementError, KktSolveError, NonphysicalStateError


@pytest.fixture
def params():
    return SqpParams()


def test_kkt_toy_problem():
    dz, eta = solve_kkt(sp.identity(2, format='csr'), sp.csr_matrix([[1.0, 0.0]]), np.zeros(2), np.array([1.0]))
    assert np.allclose(dz, [-1.0, 0.0])
    assert np.allclose(eta, [1.0])


def test_singular_kkt_system_raises():
    with pytest.raises(KktSolveError):
        solve_kkt(sp.csr_matrix((2, 2)), sp.csr_matrix((1, 2)), np.zeros(2), np.ones(1))


def test_line_search_accepts_full_step(params):
    result = line_search(lambda a: (1.0 - a, 'payload'), 1.0, -1.0, params)
    assert result.alpha == 1.0 and result.backtracks == 0 and not result.flagged
    assert result.payload == 'payload'


def test_line_search_backtracks_over_evaluation_errors(params):
    def merit(alpha):
        if alpha > 0.6:
            raise NonphysicalStateError("negative density")
        return 1.0 - alpha, None

    result = line_search(merit, 1.0, -1.0, params)
    assert result.alpha == 0.5 and result.backtracks == 1


def test_line_search_without_descent_takes_minimal_step(params):
    result = line_search(lambda a: (1.0 + a, None), 1.0, 0.5, params)
    assert result.alpha == params.alpha_min and result.flagged


def test_line_search_without_decrease_rejects_the_step(params):
    result = line_search(lambda a: (2.0, None), 1.0, -1.0, params)
    assert result.alpha == 0.0 and result.flagged and result.merit == 1.0


def test_line_search_keeps_the_last_decrease(params):
    # decrease but never enough for the sufficient-decrease test
    result = line_search(lambda a: (1.0 - 1e-9, None), 1.0, -1.0, with_overrides(params, max_backtracks=3))
    assert result.flagged and result.alpha == 0.125


def test_penalty_is_monotone(params):
    rng = np.random.default_rng(0)
    mu = 0.0
    for _ in range(50):
        g, dz, r = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(3)
        new = merit_penalty(mu, g, dz, sp.identity(4), r, params)
        assert mu <= new <= params.mu_max
        mu = new
    assert merit_penalty(2.0, np.ones(2), np.ones(2), sp.identity(2), np.zeros(3), params) == 2.0


def test_gamma_adaptation(params):
    assert update_gamma(1.0, 0.0, params) == pytest.approx(1.0 / params.tau)
    assert update_gamma(1.0, 1.0, params) == pytest.approx(params.tau)
    assert update_gamma(1.0, 0.05, params) == 1.0
    assert update_gamma(params.gamma_min, 0.0, params) == params.gamma_min


def test_kappa_adaptation(params):
    assert update_kappa(1.0, 0.1, 1.0, 1, params) == pytest.approx(params.upsilon)
    assert update_kappa(1.0, 10.0, 1.0, 1, params) == 1.0
    assert update_kappa(params.kappa_min, 0.0, 1.0, 1, params) == params.kappa_min
    frozen = params.freeze_iteration + 1
    assert update_kappa(0.3, 0.0, 1.0, frozen, params) == 0.3
    no_adaptation = SqpParams(upsilon=None, xi=None)
    assert update_kappa(0.3, 0.0, 1.0, 1, no_adaptation) == 0.3


def test_kappa_reset_and_initial_value(params):
    assert reset_kappa(1.0, 4.0, 1.0, params) == pytest.approx(params.upsilon * 2.0)
    assert reset_kappa(1.0, 4.0, 0.0, params) == 1.0

    class Ev:
        f_err, f_msh = 9.0, 1.0
    assert initial_kappa(Ev, params) == pytest.approx(3.0)
    assert initial_kappa(Ev, SqpParams(kappa0=0.5)) == 0.5


@pytest.mark.parametrize('overrides', [dict(varpi=1.0), dict(rho=1.0), dict(upsilon=1.5), dict(tau=1.0),
                                       dict(sigma1=0.5, sigma2=0.1), dict(gamma0=1e-8, gamma_min=1e-6),
                                       dict(length_scale=0.0), dict(poisson=0.5)])
def test_invalid_parameters(overrides):
    with pytest.raises(ConfigError):
        SqpParams(**overrides).validate()


def test_elasticity_is_symmetric_with_rigid_modes():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2, 2)
    K = assemble_elasticity(mesh).toarray()
    assert np.allclose(K, K.T)
    translation = np.tile([1.0, 0.0], mesh.n_nodes)
    rotation = np.column_stack([-mesh.nodes[:, 1], mesh.nodes[:, 0]]).reshape(-1)
    assert np.allclose(K @ translation, 0.0, atol=1e-10)
    assert np.allclose(K @ rotation, 0.0, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(K) > -1e-10)


def planar_problem():
    case = create_case('advec2d-planar', p=0)
    mesh = rectangle_mesh(*case.BOX, 4, 2, 1, 'left', fixed_points=[(0.0, 0.0)])
    model = case.model()
    return case, TrackingProblem(model, mesh, 0, case.boundaries()), init_solution(model, mesh, 0)


def test_zero_iterations_records_the_start():
    case, problem, u0 = planar_problem()
    params = case.sqp_params(max_iterations=0)
    result = hoist_solve(problem, start_state(problem, u0, params), params)
    assert result.status in ('max_iterations', 'converged')
    assert len(result.state.history) == 1
    assert result.state.history[0].k == 0
    assert result.state.kappa == params.kappa0


def test_iterations_keep_mu_monotone_and_nodes_in_the_box():
    case, problem, u0 = planar_problem()
    params = case.sqp_params(max_iterations=10)
    result = hoist_solve(problem, start_state(problem, u0, params), params)
    history = result.state.history
    assert result.status in ('max_iterations', 'converged')
    assert [rec.k for rec in history] == list(range(len(history)))
    mus = [rec.mu for rec in history]
    assert all(a <= b for a, b in zip(mus, mus[1:]))
    # the accepted iterates stay in the boundary-preserving parametrization
    x = problem.coordinates(result.state.y).reshape(-1, 2)
    assert np.all(x[:, 0] >= -1.0 - 1e-10) and np.all(x[:, 0] <= 1.0 + 1e-10)
    assert np.all(x[:, 1] >= -1e-10) and np.all(x[:, 1] <= 1.0 + 1e-10)


def test_penalty_worked_example(params):
    # g.dz + dz.B.dz / 2 = 2 and ||r||_1 = 1 give mu_bar = 2 / (1 - rho) = 40
    g, dz, B, r = np.array([2.0]), np.array([1.0]), sp.csr_matrix((1, 1)), np.array([0.5, -0.5])
    assert merit_penalty(0.0, g, dz, B, r, params) == pytest.approx(48.0)
    assert merit_penalty(60.0, g, dz, B, r, params) == 60.0
    assert merit_penalty(0.0, g, dz, B, r, with_overrides(params, mu_max=10.0)) == 10.0


def test_kkt_solution_satisfies_the_linearized_constraint():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((8, 8))
    B = sp.csr_matrix(M @ M.T + np.eye(8))
    J = sp.csr_matrix(rng.standard_normal((3, 8)))
    g, r = rng.standard_normal(8), rng.standard_normal(3)
    dz, eta = solve_kkt(B, J, g, r)
    assert np.linalg.norm(J @ dz + r) <= 1e-10
    assert np.allclose(B @ dz + J.T @ eta, -g)


def nozzle_problem():
    case = create_case('nozzle')
    mesh = case.mesh()
    model = case.model()
    problem = TrackingProblem(model, mesh, case.p, case.boundaries())
    return case, problem, init_solution(model, mesh, case.p)


def test_nozzle_hessian_is_positive_definite():
    case, problem, u0 = nozzle_problem()
    params = case.sqp_params()
    ev = problem.evaluate(u0, problem.initial_y())
    A = problem.param.A
    B = build_hessian(ev, A, params.gamma0, initial_kappa(ev, params), problem.elasticity)
    assert problem.mesh.n_elems == 12
    assert np.allclose(B.toarray(), B.toarray().T)
    assert np.linalg.eigvalsh(B.toarray()).min() > 0
    shifted = build_hessian(ev, A, params.gamma0, initial_kappa(ev, params), problem.elasticity, shift=1e-3)
    assert np.allclose((shifted - B).toarray(), 1e-3 * np.eye(B.shape[0]))


@pytest.mark.parametrize('error', [np.linalg.LinAlgError("Singular matrix"),
                                   InvertedElementError("negative Jacobian"),
                                   KktSolveError("dr/du is singular")])
def test_failing_modification_ends_the_solve(error):
    class FailingModification:
        forced_backtracks = 5

        def apply(self, problem, state, ev, params, forced=False):
            raise error

    case, problem, u0 = planar_problem()
    params = case.sqp_params(max_iterations=5)
    result = hoist_solve(problem, start_state(problem, u0, params), params, FailingModification())
    assert result.status == 'failed'
    assert len(result.state.history) == 1
    assert result.state.k == 1


@pytest.mark.slow
def test_accepted_nozzle_steps_decrease_the_merit(monkeypatch):
    searches = []

    def recording_search(merit, phi0, dphi0, params):
        result = line_search(merit, phi0, dphi0, params)
        searches.append((phi0, dphi0, result))
        return result

    monkeypatch.setattr(sqp_solver, 'line_search', recording_search)
    case, problem, u0 = nozzle_problem()
    params = case.sqp_params()
    hoist_solve(problem, start_state(problem, u0, params), params, Robustness(case.robustness_params()))
    accepted = [(phi0, result) for phi0, dphi0, result in searches if dphi0 < 0 and result.alpha > 0]
    assert accepted
    assert all(result.merit < phi0 for phi0, result in accepted)
