from abc import ABC, abstractmethod
from dataclasses import replace
import numpy as np

from boundary_param import PlanarBoundarySet
from claw_model import (AdvectionModel, BackPressureOutlet, BurgersModel, DensityPressureInlet, EulerModel,
                        Extrapolation, NozzleModel, PrescribedState, PrescribedVelocity, SlipWall)
from distortion import IdealElement
from error_metrics import burgers_errors, nozzle_errors, sod_feature_distances, triple_points
from exact_solutions import AcceleratingBurgersShock, forming_shock_initial_data, trigonometric_shock
from mesh_generators import diamond_boundary_set, diamond_mesh, rectangle_mesh, refine, segment_mesh, sod_mesh
from robustness import RobustnessParams
from sqp_solver import SqpParams
from utilies import RangeCollectorMeta, ValueRange, check_range


def heaviside(s):
    return np.where(np.real(s) >= 0, 1.0, 0.0)


class TrackingCase(ABC, metaclass=RangeCollectorMeta):
    """
    A tracking problem: conservation law, coarse mesh, planar boundaries and the
    solver constants it is run with.
    attributes:
        p, q: solution and geometry degrees
        parameters: current value of every *_RANGE constant
    """
    DEFAULT_P = 1
    DEFAULT_Q = 1
    IDEAL = IdealElement.REGULAR
    STRAIGHTEN_REINIT = False
    LENGTH_SCALE = 1.0
    MAX_ITERATIONS = 300

    GAMMA0_RANGE = ValueRange(0, 1e-2, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-6, 1e3)
    TAU_RANGE = ValueRange(1.0, 2.0, 10.0)
    SIGMA1_RANGE = ValueRange(0, 1e-2, 1.0)
    SIGMA2_RANGE = ValueRange(0, 1e-1, 10.0)
    KAPPA0_RANGE = ValueRange(0, 1e-2, 1e3)
    KAPPA_MIN_RANGE = ValueRange(0, 1e-10, 1.0)
    UPSILON_RANGE = ValueRange(0, 0.75, 1.0)
    XI_RANGE = ValueRange(0, 1.0, 1e3)
    C1_RANGE = ValueRange(0, 0.2, 1.0)
    C2_RANGE = ValueRange(0, 1e-10, 1.0)
    C3_RANGE = ValueRange(0, 0.2, 1.0)
    C4_RANGE = ValueRange(0, 0.0, 1.0)
    C4_ILL_RANGE = ValueRange(0, 0.05, 1.0)
    C5_RANGE = ValueRange(0, 1e-1, 1.0)
    C6_RANGE = ValueRange(0, 1e-2, 1.0)
    C7_RANGE = ValueRange(0, 1.0, 1e3)
    C8_RANGE = ValueRange(0, 1e-2, 1e3)

    def __init__(self, p=None, q=None, **overrides):
        self.p = self.DEFAULT_P if p is None else int(p)
        self.q = self.DEFAULT_Q if q is None else int(q)
        if self.p < 0:
            raise ValueError("Polynomial degree must be non-negative")
        if self.q < 1:
            raise ValueError("Geometry degree must be positive")
        self.parameters = self.degree_defaults(self.p)
        for name, value in overrides.items():
            if name not in self.PARAMETERS:
                raise KeyError(f"Unknown parameter {name!r} for case {self.NAME}")
            self.parameters[name] = check_range(name, value, self.PARAMETERS[name])

    @classmethod
    def degree_defaults(cls, p):
        return {k: v.default for k, v in cls.PARAMETERS.items()}

    @property
    @abstractmethod
    def NAME(self):
        pass

    @abstractmethod
    def model(self):
        pass

    @abstractmethod
    def mesh(self, level=0):
        pass

    def boundaries(self):
        return PlanarBoundarySet.box(*self.BOX)

    def refined_mesh(self, level=0):
        mesh = self.mesh()
        for _ in range(level):
            mesh = refine(mesh)
        return mesh

    def sqp_params(self, **overrides):
        v = self.parameters
        params = SqpParams(gamma0=v['gamma0'], gamma_min=v['gamma_min'], tau=v['tau'], sigma1=v['sigma1'],
                           sigma2=v['sigma2'], kappa0=v['kappa0'], kappa_min=v['kappa_min'],
                           upsilon=v['upsilon'], xi=v['xi'], length_scale=self.LENGTH_SCALE,
                           max_iterations=self.MAX_ITERATIONS)
        return replace(params, **overrides)

    def robustness_params(self, **overrides):
        v = self.parameters
        values = dict(c1=v['c1'], c2=v['c2'], c3=v['c3'], c4=v['c4'], c4_ill=v['c4_ill'], c5=v['c5'],
                      c6=v['c6'], c7=v['c7'], c8=v['c8'], straighten_reinit=self.STRAIGHTEN_REINIT)
        values.update(overrides)
        return RobustnessParams(**values)

    def metrics(self, problem, u, y):
        """Case-specific error measures of a tracked solution."""
        return {}


class AdvectionCase(TrackingCase):
    BOX = ((-1.0, 0.0), (1.0, 1.0))
    LENGTH_SCALE = 2.0
    MAX_ITERATIONS = 200
    GAMMA0_RANGE = ValueRange(0, 1e-2, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-6, 1e3)
    TAU_RANGE = ValueRange(1.0, 2.0, 10.0)
    KAPPA0_RANGE = ValueRange(0, 1e-10, 1e3)
    KAPPA_MIN_RANGE = ValueRange(0, 1e-10, 1.0)
    UPSILON_RANGE = ValueRange(0, None, 1.0)
    XI_RANGE = ValueRange(0, None, 1e3)
    C1_RANGE = ValueRange(0, 0.2, 1.0)
    C3_RANGE = ValueRange(0, 0.2, 1.0)
    C5_RANGE = ValueRange(0, None, 1.0)

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return rectangle_mesh(*self.BOX, 8, 4, self.q, 'left', fixed_points=[(0.0, 0.0)])


class PlanarAdvection(AdvectionCase):
    """Linear advection of a planar discontinuity through (0, 0), beta = (-1.25, 1)."""
    NAME = 'advec2d-planar'
    DEFAULT_P = 0
    DEFAULT_Q = 1
    C4_ILL_RANGE = ValueRange(0, None, 1.0)

    @staticmethod
    def exact(x):
        return heaviside(x[..., 0] + 1.25 * x[..., 1])

    def model(self):
        return AdvectionModel((-1.25, 1.0), self.exact, outflow_tags=(3, 4))


class TrigonometricAdvection(AdvectionCase):
    """Advection along beta = (-sin(pi y), 1) of a discontinuity that curves as it travels."""
    NAME = 'advec2d-trig'
    DEFAULT_P = 2
    DEFAULT_Q = 2
    C4_ILL_RANGE = ValueRange(0, 0.05, 1.0)

    @staticmethod
    def velocity(x):
        return np.stack([-np.sin(np.pi * x[..., 1]), np.ones_like(x[..., 1])], axis=-1)

    @staticmethod
    def exact(x):
        return heaviside(x[..., 0] - trigonometric_shock(np.real(x[..., 1])))

    def model(self):
        return AdvectionModel(self.velocity, self.exact, outflow_tags=(3, 4))


class AcceleratingShock(TrackingCase):
    """Space-time Burgers with a shock accelerating into a linear state (mu1 = 4, mu2 = 3)."""
    NAME = 'iburg-acc'
    DEFAULT_P = 2
    DEFAULT_Q = 2
    BOX = ((-0.2, 0.0), (1.0, 1.2))
    LENGTH_SCALE = 1.2
    GAMMA0_RANGE = ValueRange(0, 1e-2, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-2, 1e3)
    KAPPA0_RANGE = ValueRange(0, 1e-2, 1e3)
    UPSILON_RANGE = ValueRange(0, 0.75, 1.0)
    XI_RANGE = ValueRange(0, 1.0, 1e3)
    C4_ILL_RANGE = ValueRange(0, 0.05, 1.0)
    C5_RANGE = ValueRange(0, 1e-1, 1.0)
    C6_RANGE = ValueRange(0, 1e-2, 1.0)
    C7_RANGE = ValueRange(0, 1.0, 1e3)
    C8_RANGE = ValueRange(0, 1e-2, 1e3)

    def __init__(self, p=None, q=None, mu1=4.0, mu2=3.0, **overrides):
        self.exact = AcceleratingBurgersShock(mu1, mu2)
        super().__init__(p, q, **overrides)

    @classmethod
    def degree_defaults(cls, p):
        values = super().degree_defaults(p)
        if p == 1:
            values.update(gamma0=1.0, gamma_min=1.0)
        return values

    def boundary_data(self, x):
        z, t = x[..., 0], x[..., 1]
        mu1, mu2 = self.exact.mu1, self.exact.mu2
        left = np.real(z) < self.exact.shock_position(np.real(t))
        return np.where(left, mu1 + 0.0 * z, mu2 * (z - 1.0) / (1.0 + mu2 * t))

    def model(self):
        return BurgersModel(self.boundary_data, outflow_tags=(3,))

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return rectangle_mesh(*self.BOX, 6, 6, self.q, 'left', fixed_points=[(0.0, 0.0)])

    def metrics(self, problem, u, y):
        return burgers_errors(problem, u, y, self.exact, self.parameters['c7'])


class FormingShock(TrackingCase):
    """Space-time Burgers where two smooth pulses steepen into shocks that later merge."""
    NAME = 'iburg-form'
    DEFAULT_P = 2
    DEFAULT_Q = 2
    BOX = ((-1.0, 0.0), (1.0, 1.0))
    LENGTH_SCALE = 2.0
    STRAIGHTEN_REINIT = True
    GAMMA0_RANGE = ValueRange(0, 1e-4, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-4, 1e3)
    KAPPA0_RANGE = ValueRange(0, 1e-2, 1e3)
    C3_RANGE = ValueRange(0, 0.33, 1.0)
    C4_ILL_RANGE = ValueRange(0, 0.01, 1.0)
    C5_RANGE = ValueRange(0, 1e-1, 1.0)
    C7_RANGE = ValueRange(0, 0.2, 1e3)
    C8_RANGE = ValueRange(0, 1e-6, 1e3)

    @staticmethod
    def boundary_data(x):
        return forming_shock_initial_data(x[..., 0])

    def model(self):
        return BurgersModel(self.boundary_data, outflow_tags=(3,))

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return rectangle_mesh(*self.BOX, 20, 10, self.q, 'alternate')

    def metrics(self, problem, u, y):
        x = problem.coordinates(y)
        return {'triple_points': len(triple_points(problem, u, x, self.parameters['c7']))}


class Nozzle(TrackingCase):
    """Quasi-1D flow through a converging-diverging nozzle with a normal shock."""
    NAME = 'nozzle'
    DEFAULT_P = 2
    DEFAULT_Q = 1
    BOX = ((0.0,), (10.0,))
    LENGTH_SCALE = 10.0
    N_ELEMENTS = 12
    GAMMA0_RANGE = ValueRange(0, 10.0, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-2, 1e3)
    KAPPA0_RANGE = ValueRange(0, 0.0, 1e3)
    KAPPA_MIN_RANGE = ValueRange(0, 0.0, 1.0)
    UPSILON_RANGE = ValueRange(0, None, 1.0)
    XI_RANGE = ValueRange(0, None, 1e3)
    C4_ILL_RANGE = ValueRange(0, 0.05, 1.0)
    C5_RANGE = ValueRange(0, 1e-2, 1.0)
    C6_RANGE = ValueRange(0, 1e-2, 1.0)
    C7_RANGE = ValueRange(0, 0.25, 1e3)
    C8_RANGE = ValueRange(0, 1e-6, 1e3)

    INLET = (1.0, 1.0)
    BACK_PRESSURE = 0.7

    @classmethod
    def degree_defaults(cls, p):
        values = super().degree_defaults(p)
        if p == 1:
            values.update(c8=1e-1)
        return values

    def model(self):
        model = NozzleModel(boundary_conditions={1: DensityPressureInlet(*self.INLET),
                                                 2: BackPressureOutlet(self.BACK_PRESSURE)})
        model.free_stream = lambda x: model.conservative(np.ones(x.shape[:-1]), np.zeros(x.shape),
                                                         np.ones(x.shape[:-1]), x)
        return model

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return segment_mesh(0.0, 10.0, self.N_ELEMENTS, self.q)

    def metrics(self, problem, u, y):
        return nozzle_errors(problem, u, y, self.parameters['c7'])


def sod_states(model):
    left = model.conservative(1.0, np.zeros(1), 1.0)
    right = model.conservative(0.125, np.zeros(1), 0.1)
    return left, right


class SodShockTube(TrackingCase):
    """Space-time Sod problem on (0, 1) x (0, 0.2) with the membrane at z = 0.5."""
    NAME = 'sod'
    DEFAULT_P = 2
    DEFAULT_Q = 1
    BOX = ((0.0, 0.0), (1.0, 0.2))
    LENGTH_SCALE = 1.0
    GAMMA0_RANGE = ValueRange(0, 1e-5, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-8, 1e3)
    TAU_RANGE = ValueRange(1.0, 1.2, 10.0)
    KAPPA0_RANGE = ValueRange(0, 1e-6, 1e3)
    XI_RANGE = ValueRange(0, 2.0, 1e3)
    C1_RANGE = ValueRange(0, 0.15, 1.0)
    C4_RANGE = ValueRange(0, 0.05, 1.0)
    C4_ILL_RANGE = ValueRange(0, 0.05, 1.0)
    C5_RANGE = ValueRange(0, 1e-2, 1.0)
    C7_RANGE = ValueRange(0, 0.0, 1e3)
    C8_RANGE = ValueRange(0, 1e-6, 1e3)

    def model(self):
        model = EulerModel(space_dim=1, spacetime=True)
        left, right = sod_states(model)

        def riemann_data(x):
            return np.where((np.real(x[..., 0]) < 0.5)[..., None], left, right)

        model.boundary_conditions = {1: PrescribedState(riemann_data), 4: PrescribedState(left),
                                     2: PrescribedVelocity(0.0), 3: Extrapolation()}
        model.free_stream = riemann_data
        return model

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return sod_mesh(self.q)

    def metrics(self, problem, u, y):
        return sod_feature_distances(problem, u, y)


class SupersonicDiamond(TrackingCase):
    """Mach 2 flow over a diamond airfoil in a channel; shocks reflect off the walls."""
    NAME = 'diamond'
    DEFAULT_P = 2
    DEFAULT_Q = 2
    LENGTH_SCALE = 5.0
    STRAIGHTEN_REINIT = True
    MACH = 2.0
    GAMMA0_RANGE = ValueRange(0, 1.0, 1e3)
    GAMMA_MIN_RANGE = ValueRange(0, 1e-2, 1e3)
    TAU_RANGE = ValueRange(1.0, 1.2, 10.0)
    KAPPA0_RANGE = ValueRange(0, 1e-3, 1e3)
    KAPPA_MIN_RANGE = ValueRange(0, 1e-8, 1.0)
    UPSILON_RANGE = ValueRange(0, 0.5, 1.0)
    XI_RANGE = ValueRange(0, 0.5, 1e3)
    C1_RANGE = ValueRange(0, 0.25, 1.0)
    C3_RANGE = ValueRange(0, 0.25, 1.0)
    C4_RANGE = ValueRange(0, 1e-3, 1.0)
    C4_ILL_RANGE = ValueRange(0, 0.0, 1.0)
    C5_RANGE = ValueRange(0, 1e-2, 1.0)
    C7_RANGE = ValueRange(0, 0.5, 1e3)
    C8_RANGE = ValueRange(0, 1e-4, 1e3)

    def model(self):
        model = EulerModel(space_dim=2)
        free = model.conservative(1.0, np.array([self.MACH, 0.0]), 1.0 / model.gamma)
        model.boundary_conditions = {1: SlipWall(), 3: SlipWall(), 5: SlipWall(),
                                     4: PrescribedState(free), 2: Extrapolation()}
        model.free_stream = free
        return model

    def mesh(self, level=0):
        if level:
            return self.refined_mesh(level)
        return diamond_mesh(self.q)

    def boundaries(self):
        return diamond_boundary_set()


Cases = {case.NAME: case for case in (PlanarAdvection, TrigonometricAdvection, AcceleratingShock, FormingShock,
                                      Nozzle, SodShockTube, SupersonicDiamond)}

PRESET_COLUMNS = ['gamma0', 'gamma_min', 'tau', 'sigma1', 'sigma2', 'kappa0', 'kappa_min', 'upsilon', 'xi',
                  'c1', 'c2', 'c3', 'c4', 'c4_ill', 'c5', 'c6', 'c7', 'c8']

PRESETS = {name: {k: case.PARAMETERS[k].default for k in PRESET_COLUMNS} for name, case in Cases.items()}


def create_case(name, **kwargs):
    try:
        case = Cases[name]
    except KeyError:
        raise KeyError(f"Unknown case {name!r}; choose from {sorted(Cases)}") from None
    return case(**kwargs)
