import numpy as np
import pytest

from export import load_state, save_state
from hoist import EXIT_ERROR, main, mesh_size, run_case
from hoist_config import HoistConfig
from mesh_generators import rectangle_mesh
from simplex_mesh import all_element_measures, read_mesh
from webapp import app


@pytest.fixture
def client():
    app.config['TESTING'] = True
    with app.test_client() as client:
        yield client


def write_config(tmp_path, text):
    path = tmp_path / 'run.yaml'
    path.write_text(text)
    return path


def test_mesh_size():
    assert mesh_size(rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2)) == pytest.approx(np.sqrt(1.0 / 8.0))


def test_missing_configuration_is_an_error(tmp_path):
    assert main(['run', str(tmp_path / 'missing.yaml')]) == EXIT_ERROR


def test_invalid_configuration_is_an_error(tmp_path):
    path = write_config(tmp_path, "case: nozzle\nsqp:\n  tau: 0.5\n")
    assert main(['--quiet', 'run', str(path)]) == EXIT_ERROR


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(['solve'])


def test_check_jacobians_command(tmp_path):
    path = write_config(tmp_path, "case: nozzle\ndiscretization:\n  p: 1\n")
    assert main(['check-jacobians', str(path), '--directions', '3', '--tolerance', '1e-4']) == 0


def test_export_command(tmp_path):
    mesh = rectangle_mesh((-1.0, 0.0), (1.0, 1.0), 2, 2)
    u = np.linspace(0.0, 1.0, mesh.n_elems * 3)
    archive = save_state(tmp_path / 'state.npz', 'advec2d-planar', mesh, u, 1)
    out = tmp_path / 'out'
    assert main(['export', str(archive), '--format', 'mesh', '--output', str(out)]) == 0
    assert np.array_equal(read_mesh(out / 'advec2d-planar.mesh').nodes, mesh.nodes)
    assert main(['export', str(archive), '--format', 'vtk', '--output', str(out)]) == 0
    assert (out / 'advec2d-planar.vtk').exists()
    assert main(['export', str(archive), '--format', 'csv', '--output', str(out)]) == 0
    assert (out / 'advec2d-planar_history.csv').read_text().startswith('k,')
    assert np.array_equal(load_state(archive)['u'], u)


@pytest.mark.slow
def test_run_command_writes_results(tmp_path, monkeypatch):
    monkeypatch.setenv('HOIST_OUTPUT_ROOT', str(tmp_path))
    path = write_config(tmp_path, "case: advec2d-planar\nsqp:\n  max_iterations: 5\n"
                                  "output:\n  directory: planar\n")
    assert main(['--quiet', 'run', str(path)]) in (0, 2)
    for name in ('advec2d-planar.mesh', 'advec2d-planar.vtk', 'advec2d-planar_history.csv',
                 'advec2d-planar_events.csv', 'advec2d-planar_state.npz'):
        assert (tmp_path / 'planar' / name).exists()


@pytest.mark.slow
def test_nozzle_run_tracks_the_shock():
    outcome = run_case(HoistConfig.from_dict({'case': 'nozzle'}))
    state = outcome.result.state
    assert outcome.result.status == 'converged'
    assert len(state.history) >= 2
    assert state.history[-1].r_norm < state.history[0].r_norm
    assert np.all(all_element_measures(outcome.mesh).v > 0)
    assert abs(outcome.metrics['x_s'] - 7.94) <= 0.02


def test_options_endpoint(client):
    response = client.get('/api/options')
    assert response.status_code == 200
    data = response.get_json()
    assert set(data['cases']) == {'advec2d-planar', 'advec2d-trig', 'iburg-acc', 'iburg-form', 'nozzle', 'sod',
                                  'diamond'}
    assert data['cases']['nozzle']['p'] == 2
    assert data['cases']['nozzle']['parameters']['upsilon']['default'] is None


def test_presets_endpoint(client):
    data = client.get('/api/presets').get_json()
    assert len(data['presets']) == 7
    sod = next(row for row in data['presets'] if row['name'] == 'sod')
    assert sod['gamma_min'] == 1e-8 and sod['tau'] == 1.2


@pytest.mark.parametrize('payload', [{'case': 'bogus'}, {'case': 'sod', 'sqp': {'rho': 2.0}},
                                     {'case': 'sod', 'parameters': {'no_such_constant': 1.0}}])
def test_run_endpoint_rejects_bad_requests(client, payload):
    response = client.post('/api/run', json=payload)
    assert response.status_code == 400
    assert 'error' in response.get_json()


@pytest.mark.slow
def test_run_endpoint(client):
    response = client.post('/api/run', json={'case': 'advec2d-planar', 'sqp': {'max_iterations': 3}})
    assert response.status_code == 200
    data = response.get_json()
    assert data['status'] in ('converged', 'max_iterations')
    assert [rec['k'] for rec in data['history']] == list(range(len(data['history'])))


@pytest.mark.slow
def test_linear_nozzle_run_completes():
    outcome = run_case(HoistConfig.from_dict({'case': 'nozzle', 'discretization': {'p': 1},
                                              'sqp': {'max_iterations': 20}}))
    assert outcome.result.status in ('converged', 'max_iterations')
    assert len(outcome.result.state.history) >= 2
