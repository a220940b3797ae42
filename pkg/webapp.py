import math
from dataclasses import asdict, fields
from flask import Flask, jsonify, request

from factory import Cases, PRESET_COLUMNS, PRESETS
from hoist import run_case
from hoist_config import HoistConfig
from sqp_solver import SqpParams
from utilies import ConfigError, HoistError

app = Flask(__name__)

SQP_KEYS = {f.name for f in fields(SqpParams)}


def _get_class_parameters(cls):
    return {k: v._asdict() for k, v in cls.PARAMETERS.items()}


def _finite(value):
    """JSON has no NaN/inf; map them to null."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def _config_from_payload(payload):
    name = payload.get('case')
    if name not in Cases:
        raise KeyError(name)
    case_section = {'name': name, **(payload.get('case_options') or {})}
    data = {'case': case_section,
            'discretization': {k: payload[k] for k in ('p', 'q', 'refinement', 'ideal') if k in payload},
            'sqp': dict(payload.get('sqp') or {}),
            'robustness': dict(payload.get('robustness') or {})}
    # case constants may also come flat under 'parameters'
    for key, value in (payload.get('parameters') or {}).items():
        if key not in Cases[name].PARAMETERS:
            raise ConfigError(f"Unknown parameter {key!r} for case {name}")
        section = 'sqp' if key in SQP_KEYS else 'robustness'
        data[section][key] = value
    return HoistConfig.from_dict(data)


@app.route('/')
def index():
    return jsonify({'endpoints': ['/api/options', '/api/run', '/api/presets']})


@app.route('/api/options')
def options():
    data = {'cases': {}, 'defaults': {'case': 'nozzle'}}
    for name, cls in Cases.items():
        data['cases'][name] = {
            'class': cls.__name__,
            'description': (cls.__doc__ or '').strip(),
            'p': cls.DEFAULT_P,
            'q': cls.DEFAULT_Q,
            'parameters': _get_class_parameters(cls),
        }
    return jsonify(_finite(data))


@app.route('/api/run', methods=['POST'])
def run():
    """
    Run one case. JSON payload: case, optional p, q, refinement, ideal, case_options,
    parameters (case constants), sqp and robustness overrides.
    """
    payload = request.get_json(force=True) or {}
    try:
        config = _config_from_payload(payload)
        outcome = run_case(config)
        state = outcome.result.state
        return jsonify(_finite({
            'case': config.case,
            'status': outcome.result.status,
            'iterations': state.k,
            'n_elems': outcome.mesh.n_elems,
            'history': [asdict(rec) for rec in state.history],
            'events': [list(event) for event in state.events],
            'metrics': {k: float(v) for k, v in outcome.metrics.items()},
        }))
    except KeyError as e:
        return jsonify({'error': f'Unknown case: {e}'}), 400
    except ConfigError as e:
        return jsonify({'error': str(e)}), 400
    except HoistError as e:
        return jsonify({'error': str(e)}), 500
    except Exception as e:
        return jsonify({'error': str(e)}), 500


@app.route('/api/presets')
def presets():
    """Default solver constants of every case, one row per case."""
    rows = [{'name': name, **{k: row[k] for k in PRESET_COLUMNS}} for name, row in PRESETS.items()]
    return jsonify(_finite({'columns': PRESET_COLUMNS, 'presets': rows}))


if __name__ == '__main__':
    app.run(debug=True, port=5000)
