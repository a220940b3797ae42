from abc import ABC, abstractmethod
import numpy as np

from utilies import ValueRange, RangeCollectorMeta, InvertedElementError, NonphysicalStateError


def smoothed_abs(a, eps):
    """a tanh(a / eps), a smooth stand-in for |a|."""
    return a * np.tanh(a / eps)


def _real_max(a, b):
    return np.where(np.real(a) >= np.real(b), a, b)


def _dtype(*arrays):
    return np.result_type(*[np.asarray(a) for a in arrays], float)


def _normal_length(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def transform_flux(flux, theta):
    """
    Reference-domain flux det(theta) F theta^{-T}.
    :param flux: (..., m, d)
    :param theta: (..., d, d)
    """
    det = np.linalg.det(theta)
    if np.any(np.real(det) <= 0):
        raise InvertedElementError("Deformation gradient is singular or inverted")
    inv_t = np.swapaxes(np.linalg.inv(theta), -1, -2)
    return det[..., None, None] * flux @ inv_t


def transform_normal(normal, G, g):
    """Unit normal of the transformed surface, g G^{-T} N normalized."""
    scaled = g[..., None] * np.einsum('...ji,...j->...i', np.linalg.inv(G), normal)
    length = np.linalg.norm(scaled, axis=-1)
    if np.any(length == 0):
        raise InvertedElementError("Transformed normal vanishes")
    return scaled / length[..., None]


class BoundaryCondition(ABC):
    """Ghost state U- built from the interior trace U+ on one boundary tag."""

    @abstractmethod
    def ghost_state(self, model, Up, x, n):
        pass


class Extrapolation(BoundaryCondition):
    def ghost_state(self, model, Up, x, n):
        return Up


class PrescribedState(BoundaryCondition):
    """Full state given as a constant array or a callable of position."""
    def __init__(self, state):
        self.state = state

    def ghost_state(self, model, Up, x, n):
        value = self.state(x) if callable(self.state) else np.asarray(self.state, dtype=float)
        return np.broadcast_to(value, Up.shape).astype(_dtype(Up, value))


class SlipWall(BoundaryCondition):
    """Mirror the normal velocity across the wall."""
    def ghost_state(self, model, Up, x, n):
        rho, v, p = model.primitives(Up, x)
        n_x = n[..., :model.space_dim]
        n_x = n_x / _normal_length(n_x)[..., None]
        vn = np.sum(v * n_x, axis=-1)
        return model.conservative(rho, v - 2.0 * vn[..., None] * n_x, p, x)


class PrescribedVelocity(BoundaryCondition):
    """Velocity imposed; density and pressure taken from the interior."""
    def __init__(self, velocity):
        self.velocity = np.atleast_1d(np.asarray(velocity, dtype=float))

    def ghost_state(self, model, Up, x, n):
        rho, v, p = model.primitives(Up, x)
        return model.conservative(rho, np.broadcast_to(self.velocity, v.shape), p, x)


class DensityPressureInlet(BoundaryCondition):
    """Density and pressure imposed; velocity extrapolated."""
    def __init__(self, density, pressure):
        self.density = density
        self.pressure = pressure

    def ghost_state(self, model, Up, x, n):
        rho, v, p = model.primitives(Up, x)
        return model.conservative(np.full_like(rho, self.density), v, np.full_like(p, self.pressure), x)


class BackPressureOutlet(BoundaryCondition):
    """Pressure imposed; density and velocity extrapolated."""
    def __init__(self, pressure):
        self.pressure = pressure

    def ghost_state(self, model, Up, x, n):
        rho, v, p = model.primitives(Up, x)
        return model.conservative(rho, v, np.full_like(p, self.pressure), x)


class ClawModel(ABC, metaclass=RangeCollectorMeta):
    """
    An abstract conservation law div F(U, x) = S(U, x) with its numerical fluxes.
    Every kernel is vectorized over leading axes and written with analytic
    operations so it can be differentiated by complex step.
    attributes:
        smoothing: width of the smoothed absolute value in the upwind dissipation
        boundary_conditions: dict tag -> BoundaryCondition
    """
    SMOOTHING_RANGE = ValueRange(1e-8, 1e-2, 1.0)

    def __init__(self, boundary_conditions=None, smoothing=SMOOTHING_RANGE.default):
        self.smoothing = smoothing
        self.boundary_conditions = dict(boundary_conditions or {})

    @property
    def smoothing(self):
        return self.__smoothing

    @smoothing.setter
    def smoothing(self, value):
        if value <= 0:
            raise ValueError("Flux smoothing must be positive")
        self.__smoothing = value

    @property
    @abstractmethod
    def n_states(self):
        pass

    @property
    @abstractmethod
    def dim(self):
        pass

    @abstractmethod
    def flux(self, U, x):
        """(..., m, d) physical flux."""

    @abstractmethod
    def upwind_flux(self, Up, Um, n, x):
        """Numerical flux for a unit normal n pointing from U+ to U-."""

    @property
    def has_source(self):
        return False

    def source(self, U, x):
        return np.zeros_like(U)

    def normal_flux(self, U, a, x):
        return np.einsum('...md,...d->...m', self.flux(U, x), a)

    def numerical_flux(self, Up, Um, a, x):
        """Numerical flux across a face with scaled normal ``a``: H(U+, U-, a/|a|) |a|."""
        length = _normal_length(a)
        return self.upwind_flux(Up, Um, a / length[..., None], x) * length[..., None]

    def central_flux(self, Up, Um, a, x):
        return 0.5 * (self.normal_flux(Up, a, x) + self.normal_flux(Um, a, x))

    def boundary_state(self, tag, Up, x, n):
        try:
            condition = self.boundary_conditions[int(tag)]
        except KeyError:
            raise KeyError(f"No boundary condition for tag {tag}") from None
        return condition.ghost_state(self, Up, x, n)

    def boundary_flux(self, tag, Up, a, x):
        n = a / _normal_length(a)[..., None]
        return self.numerical_flux(Up, self.boundary_state(tag, Up, x, n), a, x)

    def chi(self, U):
        """Scalar used by the shock sensor and jump detection."""
        return U[..., 0]

    def reference_state(self, x):
        """State used when the p = 0 initialization fails."""
        return np.zeros(np.shape(x)[:-1] + (self.n_states,))


class AdvectionModel(ClawModel):
    """
    Steady linear advection div(U beta(x)) = 0.
    attributes:
        velocity: callable x -> beta(x) of shape (..., d), or a constant vector
        inflow: callable x -> U_inf(x) used on every tag not listed as outflow
        outflow_tags: tags where the interior state is extrapolated
    """
    def __init__(self, velocity, inflow, outflow_tags=(), dim=2, smoothing=ClawModel.SMOOTHING_RANGE.default):
        self.velocity = velocity
        self.inflow = inflow
        self.outflow_tags = tuple(outflow_tags)
        self._dim = dim
        super().__init__(None, smoothing)

    @property
    def n_states(self):
        return 1

    @property
    def dim(self):
        return self._dim

    def beta(self, x):
        if callable(self.velocity):
            return self.velocity(x)
        x = np.asarray(x)
        return np.broadcast_to(np.asarray(self.velocity, dtype=float), x.shape)

    def flux(self, U, x):
        return U[..., :, None] * self.beta(x)[..., None, :]

    def upwind_flux(self, Up, Um, n, x):
        bn = np.sum(self.beta(x) * n, axis=-1)[..., None]
        return 0.5 * bn * (Up + Um) + 0.5 * smoothed_abs(bn, self.smoothing) * (Up - Um)

    def boundary_state(self, tag, Up, x, n):
        if int(tag) in self.outflow_tags:
            return Up
        value = np.asarray(self.inflow(x))[..., None]
        return np.broadcast_to(value, Up.shape).astype(_dtype(Up, value))

    def reference_state(self, x):
        return np.asarray(np.real(self.inflow(x)), dtype=float)[..., None]


class BurgersModel(ClawModel):
    """
    Space-time inviscid Burgers equation, x = (z, t) and F(W) = [W^2 / 2, W].
    attributes:
        boundary_data: callable x -> phi(x) used on every tag not listed as outflow
        outflow_tags: tags where the interior state is extrapolated
    """
    def __init__(self, boundary_data, outflow_tags=(3,), smoothing=ClawModel.SMOOTHING_RANGE.default):
        self.boundary_data = boundary_data
        self.outflow_tags = tuple(outflow_tags)
        super().__init__(None, smoothing)

    @property
    def n_states(self):
        return 1

    @property
    def dim(self):
        return 2

    def flux(self, U, x):
        return np.stack([0.5 * U * U, U], axis=-1)

    def upwind_flux(self, Up, Um, n, x):
        speed = (0.5 * (Up + Um)) * n[..., :1] + n[..., 1:]
        return (self.central_flux(Up, Um, n, x)
                + 0.5 * smoothed_abs(speed, self.smoothing) * (Up - Um))

    def boundary_state(self, tag, Up, x, n):
        if int(tag) in self.outflow_tags:
            return Up
        value = np.asarray(self.boundary_data(x))[..., None]
        return np.broadcast_to(value, Up.shape).astype(_dtype(Up, value))

    def reference_state(self, x):
        return np.asarray(np.real(self.boundary_data(x)), dtype=float)[..., None]


class EulerModel(ClawModel):
    """
    Euler equations of a calorically perfect gas, steady or space-time (time is the
    last coordinate and its flux column is the state itself). The numerical flux is
    Roe's flux with smoothed wave speeds and a Harten-Hyman fix on the acoustic waves.
    attributes:
        space_dim: number of spatial dimensions (1 or 2)
        spacetime: append time as a coordinate
        gamma: ratio of specific heats
    """
    GAMMA_RANGE = ValueRange(1.01, 1.4, 3.0)

    def __init__(self, space_dim=1, spacetime=False, gamma=GAMMA_RANGE.default,
                 boundary_conditions=None, smoothing=ClawModel.SMOOTHING_RANGE.default, free_stream=None):
        if space_dim not in (1, 2):
            raise ValueError("Euler model supports one or two spatial dimensions")
        if spacetime and space_dim != 1:
            raise ValueError("Space-time Euler is only available in one spatial dimension")
        self.space_dim = space_dim
        self.spacetime = spacetime
        self.gamma = gamma
        self.free_stream = free_stream
        super().__init__(boundary_conditions, smoothing)

    @property
    def gamma(self):
        return self.__gamma

    @gamma.setter
    def gamma(self, value):
        if value <= 1:
            raise ValueError("Ratio of specific heats must exceed 1")
        self.__gamma = value

    @property
    def n_states(self):
        return self.space_dim + 2

    @property
    def dim(self):
        return self.space_dim + int(self.spacetime)

    def primitives(self, U, x=None):
        """(rho, v, P) of conservative states; raises on non-positive density or pressure."""
        rho = U[..., 0]
        if np.any(np.real(rho) <= 0):
            raise NonphysicalStateError("Non-positive density")
        v = U[..., 1:1 + self.space_dim] / rho[..., None]
        p = (self.gamma - 1.0) * (U[..., -1] - 0.5 * rho * np.sum(v * v, axis=-1))
        if np.any(np.real(p) <= 0):
            raise NonphysicalStateError("Non-positive pressure")
        return rho, v, p

    def conservative(self, rho, v, p, x=None):
        rho = np.asarray(rho)
        v = np.asarray(v)
        energy = np.asarray(p) / (self.gamma - 1.0) + 0.5 * rho * np.sum(v * v, axis=-1)
        return np.concatenate([rho[..., None], rho[..., None] * v, energy[..., None]], axis=-1)

    def sound_speed(self, U, x=None):
        rho, _, p = self.primitives(U, x)
        return np.sqrt(self.gamma * p / rho)

    def flux(self, U, x):
        ds = self.space_dim
        rho, v, p = self.primitives(U, x)
        F = np.zeros(U.shape + (self.dim,), dtype=_dtype(U))
        for j in range(ds):
            F[..., 0, j] = rho * v[..., j]
            for i in range(ds):
                F[..., 1 + i, j] = rho * v[..., i] * v[..., j] + (p if i == j else 0.0)
            F[..., -1, j] = (U[..., -1] + p) * v[..., j]
        if self.spacetime:
            F[..., :, -1] = U
        return F

    def upwind_flux(self, Up, Um, n, x):
        return self.central_flux(Up, Um, n, x) - 0.5 * self._roe_dissipation(Up, Um, n, x)

    def _roe_dissipation(self, UL, UR, n, x):
        ds, gm1, eps = self.space_dim, self.gamma - 1.0, self.smoothing
        if ds == 1:
            direction = np.ones(n.shape[:-1] + (1,))
            scale = n[..., 0]
        else:
            direction = n[..., :ds]
            scale = np.ones(n.shape[:-1])
        shift = n[..., ds] if self.spacetime else 0.0

        rhoL, vL, pL = self.primitives(UL, x)
        rhoR, vR, pR = self.primitives(UR, x)
        HL = (UL[..., -1] + pL) / rhoL
        HR = (UR[..., -1] + pR) / rhoR
        wL, wR = np.sqrt(rhoL), np.sqrt(rhoR)
        rho = wL * wR
        v = (wL[..., None] * vL + wR[..., None] * vR) / (wL + wR)[..., None]
        H = (wL * HL + wR * HR) / (wL + wR)
        c2 = gm1 * (H - 0.5 * np.sum(v * v, axis=-1))
        if np.any(np.real(c2) <= 0):
            raise NonphysicalStateError("Roe-averaged sound speed is not real")
        c = np.sqrt(c2)
        q = np.sum(v * direction, axis=-1)

        drho, dp = rhoR - rhoL, pR - pL
        dv = vR - vL
        dq = np.sum(dv * direction, axis=-1)
        strengths = [(dp - rho * c * dq) / (2.0 * c2), drho - dp / c2, (dp + rho * c * dq) / (2.0 * c2)]
        speeds = [scale * (q - c) + shift, scale * q + shift, scale * (q + c) + shift]

        cL, cR = np.sqrt(self.gamma * pL / rhoL), np.sqrt(self.gamma * pR / rhoR)
        qL, qR = np.sum(vL * direction, axis=-1), np.sum(vR * direction, axis=-1)
        side_speeds = {0: (scale * (qL - cL) + shift, scale * (qR - cR) + shift),
                       2: (scale * (qL + cL) + shift, scale * (qR + cR) + shift)}

        def vector(first, momentum, energy):
            return np.concatenate([np.broadcast_to(first, energy.shape)[..., None], momentum, energy[..., None]],
                                  axis=-1)

        c_dir = c[..., None] * direction
        eigvecs = [vector(1.0, v - c_dir, H - q * c),
                   vector(1.0, v, 0.5 * np.sum(v * v, axis=-1)),
                   vector(1.0, v + c_dir, H + q * c)]

        diss = np.zeros(UL.shape, dtype=_dtype(UL, UR, n))
        for k in range(3):
            mag = smoothed_abs(speeds[k], eps)
            if k in side_speeds:
                left, right = side_speeds[k]
                delta = _real_max(_real_max(np.zeros_like(speeds[k]), speeds[k] - left), right - speeds[k])
                safe = np.where(np.real(delta) > 0, delta, 1.0)
                fixed = (speeds[k] * speeds[k] + safe * safe) / (2.0 * safe)
                mag = np.where(np.real(mag) < np.real(delta), fixed, mag)
            diss = diss + (mag * strengths[k])[..., None] * eigvecs[k]
        if ds > 1:
            mag = smoothed_abs(speeds[1], eps)
            shear = vector(0.0, dv - dq[..., None] * direction, np.sum(v * dv, axis=-1) - q * dq)
            diss = diss + (mag * rho)[..., None] * shear
        return diss

    def reference_state(self, x):
        if self.free_stream is None:
            return super().reference_state(x)
        state = np.asarray(self.free_stream(x) if callable(self.free_stream) else self.free_stream, dtype=float)
        return np.broadcast_to(state, np.shape(x)[:-1] + (self.n_states,)).copy()


class NozzleModel(EulerModel):
    """
    Quasi-1D Euler flow through A(x) = mu1 + (mu2 - mu1)(10 - x) x / 25 with state
    W = (A rho, A rho v, A rho E). The flux of W is the Euler flux with pressure A P,
    the source is (0, P A'(x), 0).
    """
    MU1_RANGE = ValueRange(1.0, 3.0, 10.0)
    MU2_RANGE = ValueRange(0.1, 1.0, 10.0)
    LENGTH = 10.0

    def __init__(self, mu1=MU1_RANGE.default, mu2=MU2_RANGE.default, gamma=EulerModel.GAMMA_RANGE.default,
                 boundary_conditions=None, smoothing=ClawModel.SMOOTHING_RANGE.default, free_stream=None):
        self.mu1 = mu1
        self.mu2 = mu2
        super().__init__(1, False, gamma, boundary_conditions, smoothing, free_stream)

    def area(self, x):
        x = np.asarray(x)[..., 0]
        return self.mu1 + (self.mu2 - self.mu1) * (self.LENGTH - x) * x / 25.0

    def area_derivative(self, x):
        x = np.asarray(x)[..., 0]
        return (self.mu2 - self.mu1) * (self.LENGTH - 2.0 * x) / 25.0

    def primitives(self, U, x=None):
        """Physical (rho, v, P); without x the area factor is taken as 1."""
        rho, v, p = super().primitives(U)
        if x is None:
            return rho, v, p
        area = self.area(x)
        return rho / area, v, p / area

    def conservative(self, rho, v, p, x=None):
        W = super().conservative(rho, v, p)
        return W if x is None else W * self.area(x)[..., None]

    @property
    def has_source(self):
        return True

    def source(self, U, x):
        _, _, p_hat = super().primitives(U)
        S = np.zeros(U.shape, dtype=_dtype(U, x))
        S[..., 1] = p_hat / self.area(x) * self.area_derivative(x)
        return S

    def flux(self, U, x):
        return super().flux(U, None)

    def upwind_flux(self, Up, Um, n, x):
        return self.central_flux(Up, Um, n, x) - 0.5 * self._roe_dissipation(Up, Um, n, None)
