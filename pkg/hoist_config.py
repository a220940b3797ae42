import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
import yaml

from distortion import IdealElement
from factory import Cases
from robustness import RobustnessParams
from sqp_solver import SqpParams
from utilies import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = 'HOIST_OUTPUT_ROOT'
SECTIONS = ('case', 'discretization', 'sqp', 'robustness', 'output')


@dataclass
class DiscretizationConfig:
    """
    p, q: solution and geometry degree (None takes the case default)
    refinement: uniform refinement level of the coarse mesh
    ideal: 'reference' or 'regular' ideal element (None takes the case default)
    mesh: optional path of a mesh file replacing the built-in generator
    """
    p: int | None = None
    q: int | None = None
    refinement: int = 0
    ideal: str | None = None
    mesh: str | None = None

    def validate(self):
        if self.p is not None and self.p < 0:
            raise ConfigError("p must be non-negative")
        if self.q is not None and self.q < 1:
            raise ConfigError("q must be at least 1")
        if self.refinement < 0:
            raise ConfigError("refinement must be non-negative")
        if self.ideal is not None:
            try:
                IdealElement(self.ideal)
            except ValueError:
                raise ConfigError(f"ideal must be one of {[e.value for e in IdealElement]}") from None
        return self


@dataclass
class OutputConfig:
    directory: str = 'hoist_output'
    write_vtk: bool = True

    def validate(self):
        if not self.directory:
            raise ConfigError("output directory must not be empty")
        return self

    @property
    def path(self):
        """Output directory; its root is replaced by $HOIST_OUTPUT_ROOT when set."""
        root = os.environ.get(OUTPUT_ROOT_ENV)
        directory = Path(self.directory)
        if root:
            return Path(root) / directory.name
        return directory


@dataclass
class HoistConfig:
    """Everything one tracking run needs: case, discretization, solver and robustness constants, output."""
    case: str
    case_options: dict = field(default_factory=dict)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    sqp: SqpParams = field(default_factory=SqpParams)
    robustness: RobustnessParams = field(default_factory=RobustnessParams)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        if self.case not in Cases:
            raise ConfigError(f"Unknown case {self.case!r}; choose from {sorted(Cases)}")
        self.discretization.validate()
        self.sqp.validate()
        self.robustness.validate()
        self.output.validate()
        return self

    def tracking_case(self):
        d = self.discretization
        return Cases[self.case](d.p, d.q, **self.case_options)

    @property
    def ideal(self):
        if self.discretization.ideal is None:
            return Cases[self.case].IDEAL
        return IdealElement(self.discretization.ideal)

    @classmethod
    def from_dict(cls, data):
        """
        Build from a mapping with sections case, discretization, sqp, robustness and
        output. Values not given take the case defaults, then the global defaults.
        """
        if not isinstance(data, dict):
            raise ConfigError("Configuration must be a mapping of sections")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown configuration sections {sorted(unknown)}")
        case_section = data.get('case')
        if isinstance(case_section, str):
            name, case_options = case_section, {}
        elif isinstance(case_section, dict) and 'name' in case_section:
            case_options = dict(case_section)
            name = case_options.pop('name')
        else:
            raise ConfigError("Section 'case' must be a case name or a mapping with a 'name'")
        if name not in Cases:
            raise ConfigError(f"Unknown case {name!r}; choose from {sorted(Cases)}")
        case_cls = Cases[name]

        discretization = DiscretizationConfig(**_section(data, 'discretization', DiscretizationConfig)).validate()
        sqp_values = _section(data, 'sqp', SqpParams)
        robustness_values = _section(data, 'robustness', RobustnessParams)

        # constants declared by the case go through its range checks
        for values in (sqp_values, robustness_values):
            for key in [k for k in values if k in case_cls.PARAMETERS]:
                case_options[key] = values.pop(key)
        try:
            case = case_cls(discretization.p, discretization.q, **case_options)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid case options for {name!r}: {exc}") from exc

        config = cls(name, case_options, discretization, case.sqp_params(**sqp_values),
                     case.robustness_params(**robustness_values),
                     OutputConfig(**_section(data, 'output', OutputConfig)))
        return config.validate()


def _section(data, name, target):
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"Section {name!r} must be a mapping")
    allowed = {f.name for f in fields(target)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"Unknown keys in section {name!r}: {sorted(unknown)}")
    return {k: _number(v) for k, v in section.items()}


def _number(value):
    # YAML 1.1 reads exponents without a dot (1e-8) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def load_config(path):
    """Read a YAML configuration file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"Cannot read configuration {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Malformed configuration {path}: {exc}") from exc
    logger.debug("configuration %s: %s", path, data)
    return HoistConfig.from_dict(data or {})
