from pathlib import Path
import pytest

from distortion import IdealElement
from factory import PRESETS, Cases, create_case
from hoist_config import OUTPUT_ROOT_ENV, HoistConfig, OutputConfig, load_config
from utilies import ConfigError


def test_every_case_has_a_preset_row():
    assert set(PRESETS) == set(Cases) == {'advec2d-planar', 'advec2d-trig', 'iburg-acc', 'iburg-form', 'nozzle',
                                          'sod', 'diamond'}
    for name in Cases:
        config = HoistConfig.from_dict({'case': name})
        assert config.sqp.gamma0 == PRESETS[name]['gamma0']


def test_linear_solutions_change_the_case_constants():
    nozzle = HoistConfig.from_dict({'case': 'nozzle', 'discretization': {'p': 1}})
    assert nozzle.robustness.c8 == 0.1
    assert HoistConfig.from_dict({'case': 'nozzle'}).robustness.c8 == 1e-6
    burgers = HoistConfig.from_dict({'case': 'iburg-acc', 'discretization': {'p': 1}})
    assert burgers.sqp.gamma0 == 1.0 and burgers.sqp.gamma_min == 1.0


def test_case_options_and_overrides():
    config = HoistConfig.from_dict({'case': {'name': 'iburg-acc', 'mu1': 5.0},
                                    'sqp': {'gamma0': 0.5, 'max_iterations': 7},
                                    'robustness': {'c1': 0.3}})
    assert config.case_options == {'mu1': 5.0, 'gamma0': 0.5, 'c1': 0.3}
    assert config.sqp.gamma0 == 0.5 and config.sqp.max_iterations == 7
    assert config.robustness.c1 == 0.3
    assert config.tracking_case().exact.mu1 == 5.0


@pytest.mark.parametrize('data', [
    {'case': 'no-such-case'},
    {'case': {'mu1': 1.0}},
    {'case': 'sod', 'solver': {}},
    {'case': 'sod', 'sqp': {'no_such_key': 1}},
    {'case': 'sod', 'sqp': {'tau': 20.0}},
    {'case': 'sod', 'sqp': {'rho': 1.5}},
    {'case': {'name': 'iburg-acc', 'speed': 1.0}},
    {'case': 'sod', 'discretization': {'ideal': 'bogus'}},
    {'case': 'sod', 'discretization': {'q': 0}},
    {'case': 'sod', 'output': {'directory': ''}},
    ['sod'],
], ids=['case', 'case-name', 'section', 'key', 'range', 'sqp-check', 'case-option', 'ideal', 'degree',
        'output', 'mapping'])
def test_invalid_configurations(data):
    with pytest.raises(ConfigError):
        HoistConfig.from_dict(data)


def test_ideal_element_choice():
    assert HoistConfig.from_dict({'case': 'sod'}).ideal == Cases['sod'].IDEAL
    config = HoistConfig.from_dict({'case': 'sod', 'discretization': {'ideal': 'reference'}})
    assert config.ideal is IdealElement.REFERENCE


def test_yaml_exponents_are_numbers(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text("case: nozzle\n"
                    "discretization:\n  p: 2\n"
                    "sqp:\n  alpha_min: 1e-5\n  gamma_min: 1e-3\n")
    config = load_config(path)
    assert config.sqp.alpha_min == 1e-5
    assert config.sqp.gamma_min == 1e-3


def test_unreadable_configurations(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'missing.yaml')
    path = tmp_path / 'broken.yaml'
    path.write_text("case: [nozzle\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_output_root_from_environment(monkeypatch, tmp_path):
    output = OutputConfig(directory='runs/nozzle')
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert output.path == Path('runs/nozzle')
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert output.path == tmp_path / 'nozzle'


def test_create_case():
    case = create_case('nozzle', p=1)
    assert case.p == 1 and case.q == 1
    with pytest.raises(KeyError):
        create_case('nozle')
    with pytest.raises(KeyError):
        create_case('nozzle', no_such_constant=1.0)
    with pytest.raises(ValueError):
        create_case('nozzle', tau=0.5)
