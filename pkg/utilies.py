from collections import namedtuple
from abc import ABCMeta
import numpy as np

ValueRange = namedtuple('ValueRange', ['min', 'default', 'max', 'step'], defaults=(None,))


class RangeCollectorMeta(ABCMeta):
    """Collects every ``*_RANGE`` class attribute into ``cls.PARAMETERS``."""
    def __new__(mcls, name, bases, namespace):
        cls = super().__new__(mcls, name, bases, namespace)
        params = {}
        for base in reversed(cls.__mro__):
            for k, v in getattr(base, "__dict__", {}).items():
                if k.endswith("_RANGE") and isinstance(v, ValueRange):
                    params[k[:-6].lower()] = v
        cls.PARAMETERS = params
        return cls


def check_range(name, value, value_range):
    """Raise ValueError if ``value`` lies outside ``value_range``."""
    if value is None:
        return value
    if value_range.min is not None and value < value_range.min:
        raise ValueError(f"{name} must be >= {value_range.min}, got {value}")
    if value_range.max is not None and value > value_range.max:
        raise ValueError(f"{name} must be <= {value_range.max}, got {value}")
    return value


class HoistError(Exception):
    """Base class of every error raised by the tracking library."""


class MeshTopologyError(HoistError, ValueError):
    pass


class CollapseRejected(MeshTopologyError):
    pass


class RedundantBoundaryError(HoistError, ValueError):
    pass


class InvertedElementError(HoistError):
    """A mapping Jacobian reached zero or changed sign where it is evaluated."""


class NonphysicalStateError(HoistError):
    """Density or pressure became non-positive inside a flux evaluation."""


class KktSolveError(HoistError):
    pass


class ConfigError(HoistError, ValueError):
    pass


# evaluation errors are turned into an infinite merit by the line search
EVALUATION_ERRORS = (InvertedElementError, NonphysicalStateError)
# numerical failures that end a solve with status 'failed'
SOLVE_ERRORS = EVALUATION_ERRORS + (KktSolveError, np.linalg.LinAlgError, FloatingPointError)

COMPLEX_STEP = 1e-30


def complex_step_jacobian(fun, args, index):
    """
    Derivative of ``fun(*args)`` with respect to the last axis of ``args[index]``.
    ``fun`` must be written with analytic operations only (no abs/max on the
    perturbed argument); comparisons must go through ``np.real``.
    :param fun: pointwise kernel returning an array
    :param args: positional arguments of ``fun``
    :param index: which argument to differentiate
    :return: array of shape ``fun(*args).shape + (n,)``
    """
    base = np.asarray(args[index])
    n = base.shape[-1]
    columns = []
    for k in range(n):
        perturbed = base.astype(complex)
        perturbed[..., k] += 1j * COMPLEX_STEP
        trial = list(args)
        trial[index] = perturbed
        columns.append(np.imag(fun(*trial)) / COMPLEX_STEP)
    return np.stack(columns, axis=-1)
