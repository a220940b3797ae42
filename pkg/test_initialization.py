import numpy as np
import pytest

from claw_model import AdvectionModel
from factory import create_case
from initialization import PseudoTransientParams, init_solution, solve_piecewise_constant
from mesh_generators import rectangle_mesh
from utilies import ConfigError


def test_constant_inflow_gives_a_constant_solution():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 3, 3)
    model = AdvectionModel((1.0, 0.5), lambda x: 1.0 + 0.0 * x[..., 0])
    means, converged = solve_piecewise_constant(model, mesh)
    assert converged
    assert np.allclose(means, 1.0)
    u0 = init_solution(model, mesh, 2)
    assert u0.size == mesh.n_elems * 6
    assert np.allclose(u0, 1.0)


def test_planar_discontinuity_is_captured_monotonically():
    case = create_case('advec2d-planar')
    mesh = case.mesh()
    means, converged = solve_piecewise_constant(case.model(), mesh)
    assert converged
    assert np.all(means > -1e-8) and np.all(means < 1.0 + 1e-8)
    # the region upwind of the discontinuity keeps the inflow value
    centers = mesh.nodes[mesh.vertices].mean(axis=1)
    assert means[np.argmax(centers[:, 0] + 1.25 * centers[:, 1]), 0] > 0.5
    assert means[np.argmin(centers[:, 0] + 1.25 * centers[:, 1]), 0] < 0.5


@pytest.mark.parametrize('overrides', [dict(cfl0=0.0), dict(cfl0=10.0, cfl_max=1.0), dict(max_growth=1.0),
                                       dict(tol=0.0), dict(max_steps=0)])
def test_invalid_continuation_parameters(overrides):
    with pytest.raises(ConfigError):
        PseudoTransientParams(**overrides).validate()
