import logging
from collections import namedtuple
import numpy as np
from scipy.optimize import brentq, minimize_scalar

logger = logging.getLogger(__name__)

WaveSpeeds = namedtuple('WaveSpeeds', ['rarefaction_head', 'rarefaction_tail', 'contact', 'shock'])


def area_mach_ratio(mach, gamma=1.4):
    """A / A* of isentropic flow at Mach number ``mach``."""
    k = (2.0 / (gamma + 1.0)) * (1.0 + 0.5 * (gamma - 1.0) * mach ** 2)
    return k ** ((gamma + 1.0) / (2.0 * (gamma - 1.0))) / mach


def mach_from_area(ratio, supersonic=False, gamma=1.4):
    if ratio < 1.0 - 1e-12:
        raise ValueError(f"Area ratio must be >= 1, got {ratio}")
    if ratio <= 1.0:
        return 1.0
    f = lambda m: area_mach_ratio(m, gamma) - ratio
    if supersonic:
        return brentq(f, 1.0, 100.0, xtol=1e-14)
    return brentq(f, 1e-10, 1.0, xtol=1e-14)


def stagnation_factor(mach, gamma=1.4):
    return 1.0 + 0.5 * (gamma - 1.0) * mach ** 2


def normal_shock_total_pressure_ratio(mach, gamma=1.4):
    """p02 / p01 across a normal shock with upstream Mach number ``mach``."""
    a = ((gamma + 1.0) * mach ** 2 / (2.0 + (gamma - 1.0) * mach ** 2)) ** (gamma / (gamma - 1.0))
    b = (2.0 * gamma * mach ** 2 / (gamma + 1.0) - (gamma - 1.0) / (gamma + 1.0)) ** (1.0 / (gamma - 1.0))
    return a / b


class NozzleFlow:
    """
    Steady quasi-1D flow through the nozzle A(x) = mu1 + (mu2 - mu1)(10 - x)x / 25 on
    [0, 10], choked at the throat x = 5, with static inlet state (rho_in, p_in) and
    back pressure p_exit placing a normal shock in the diverging part.
    attributes:
        shock_position: x_s
        inlet_mach: subsonic inlet Mach number
        total_pressure: (upstream, downstream) stagnation pressures
    """
    LENGTH = 10.0
    THROAT = 5.0

    def __init__(self, mu1=3.0, mu2=1.0, gamma=1.4, rho_in=1.0, p_in=1.0, p_exit=0.7):
        if mu2 >= mu1:
            raise ValueError("Throat area mu2 must be smaller than the end area mu1")
        self.mu1, self.mu2, self.gamma = mu1, mu2, gamma
        g = gamma
        self.inlet_mach = mach_from_area(self.area(0.0) / mu2, False, g)
        temperature_in = p_in / rho_in
        factor = stagnation_factor(self.inlet_mach, g)
        self.total_temperature = temperature_in * factor
        p01 = p_in * factor ** (g / (g - 1.0))

        def exit_pressure(xs):
            m1 = mach_from_area(self.area(xs) / mu2, True, g)
            p02 = p01 * normal_shock_total_pressure_ratio(m1, g)
            throat2 = mu2 * p01 / p02
            m_exit = mach_from_area(self.area(self.LENGTH) / throat2, False, g)
            return p02 * stagnation_factor(m_exit, g) ** (-g / (g - 1.0))

        lo, hi = self.THROAT + 1e-9, self.LENGTH - 1e-9
        if not exit_pressure(hi) <= p_exit <= exit_pressure(lo):
            raise ValueError(f"Back pressure {p_exit} does not place a shock inside the nozzle")
        self.shock_position = brentq(lambda xs: exit_pressure(xs) - p_exit, lo, hi, xtol=1e-13)
        m1 = mach_from_area(self.area(self.shock_position) / mu2, True, g)
        self.total_pressure = (p01, p01 * normal_shock_total_pressure_ratio(m1, g))
        logger.debug("nozzle oracle: x_s = %.6f, inlet Mach %.6f", self.shock_position, self.inlet_mach)

    def area(self, x):
        return self.mu1 + (self.mu2 - self.mu1) * (self.LENGTH - x) * x / 25.0

    def mach(self, x):
        p01, p02 = self.total_pressure
        out = []
        for xi in np.atleast_1d(x):
            if xi < self.shock_position:
                out.append(mach_from_area(self.area(xi) / self.mu2, xi > self.THROAT, self.gamma))
            else:
                out.append(mach_from_area(self.area(xi) / (self.mu2 * p01 / p02), False, self.gamma))
        return np.array(out)

    def primitives(self, x):
        """(rho, v, p) at the points ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        g = self.gamma
        mach = self.mach(x)
        p0 = np.where(x < self.shock_position, *self.total_pressure)
        factor = stagnation_factor(mach, g)
        p = p0 * factor ** (-g / (g - 1.0))
        temperature = self.total_temperature / factor
        rho = p / temperature
        return rho, mach * np.sqrt(g * temperature), p

    def density(self, x):
        return self.primitives(x)[0]


class RiemannProblem:
    """Exact solution of the 1D Euler Riemann problem with left/right states (rho, v, p)."""
    def __init__(self, left, right, gamma=1.4, x0=0.5):
        self.left = tuple(float(v) for v in left)
        self.right = tuple(float(v) for v in right)
        self.gamma = gamma
        self.x0 = x0
        if min(self.left[0], self.left[2], self.right[0], self.right[2]) <= 0:
            raise ValueError("Density and pressure must be positive")
        self.p_star, self.v_star = self._star_state()

    def _sound(self, rho, p):
        return np.sqrt(self.gamma * p / rho)

    def _wave_function(self, p, rho_k, p_k):
        g = self.gamma
        if p > p_k:
            a = 2.0 / ((g + 1.0) * rho_k)
            b = (g - 1.0) / (g + 1.0) * p_k
            return (p - p_k) * np.sqrt(a / (p + b))
        c = self._sound(rho_k, p_k)
        return 2.0 * c / (g - 1.0) * ((p / p_k) ** ((g - 1.0) / (2.0 * g)) - 1.0)

    def _star_state(self):
        (rl, vl, pl), (rr, vr, pr) = self.left, self.right
        f = lambda p: self._wave_function(p, rl, pl) + self._wave_function(p, rr, pr) + vr - vl
        hi = max(pl, pr)
        while f(hi) < 0:
            hi *= 2.0
        p_star = brentq(f, 1e-14, hi, xtol=1e-14)
        v_star = 0.5 * (vl + vr) + 0.5 * (self._wave_function(p_star, rr, pr) - self._wave_function(p_star, rl, pl))
        return p_star, v_star

    def _star_density(self, rho_k, p_k):
        g, p = self.gamma, self.p_star
        if p > p_k:
            ratio = p / p_k
            k = (g - 1.0) / (g + 1.0)
            return rho_k * (ratio + k) / (k * ratio + 1.0)
        return rho_k * (p / p_k) ** (1.0 / g)

    def wave_speeds(self):
        """Speeds of the left rarefaction head/tail, the contact and the right shock (Sod-type data)."""
        g = self.gamma
        (rl, vl, pl), (rr, vr, pr) = self.left, self.right
        if self.p_star > pl or self.p_star < pr:
            raise ValueError("wave_speeds expects a left rarefaction and a right shock")
        cl = self._sound(rl, pl)
        c_star = cl * (self.p_star / pl) ** ((g - 1.0) / (2.0 * g))
        cr = self._sound(rr, pr)
        shock = vr + cr * np.sqrt((g + 1.0) / (2.0 * g) * self.p_star / pr + (g - 1.0) / (2.0 * g))
        return WaveSpeeds(vl - cl, self.v_star - c_star, self.v_star, shock)

    def primitives(self, x, t):
        """(rho, v, p) sampled at positions ``x`` and time ``t`` > 0."""
        g = self.gamma
        xi = (np.atleast_1d(np.asarray(x, dtype=float)) - self.x0) / t
        rho, v, p = (np.empty_like(xi) for _ in range(3))
        for i, s in enumerate(xi):
            rho[i], v[i], p[i] = self._sample(s, g)
        return rho, v, p

    def _sample(self, s, g):
        (rl, vl, pl), (rr, vr, pr) = self.left, self.right
        if s <= self.v_star:
            rho_k, v_k, p_k, sign = rl, vl, pl, -1.0
        else:
            rho_k, v_k, p_k, sign = rr, vr, pr, 1.0
        c_k = self._sound(rho_k, p_k)
        if self.p_star > p_k:
            speed = v_k + sign * c_k * np.sqrt((g + 1.0) / (2.0 * g) * self.p_star / p_k + (g - 1.0) / (2.0 * g))
            if sign * (s - speed) > 0:
                return rho_k, v_k, p_k
            return self._star_density(rho_k, p_k), self.v_star, self.p_star
        c_star = c_k * (self.p_star / p_k) ** ((g - 1.0) / (2.0 * g))
        head, tail = v_k + sign * c_k, self.v_star + sign * c_star
        if sign * (s - head) > 0:
            return rho_k, v_k, p_k
        if sign * (s - tail) < 0:
            return self._star_density(rho_k, p_k), self.v_star, self.p_star
        v = 2.0 / (g + 1.0) * (-sign * c_k + 0.5 * (g - 1.0) * v_k + s)
        c = -sign * (v - s)
        rho = rho_k * (c / c_k) ** (2.0 / (g - 1.0))
        return rho, v, p_k * (c / c_k) ** (2.0 * g / (g - 1.0))


class AcceleratingBurgersShock:
    """
    Space-time solution of inviscid Burgers with a constant state mu1 left of a shock
    and a linear state mu2 (z - 1) / (1 + mu2 t) right of it.
    """
    def __init__(self, mu1=4.0, mu2=3.0):
        self.mu1, self.mu2 = mu1, mu2

    def shock_position(self, t):
        t = np.asarray(t, dtype=float)
        return (self.mu1 / self.mu2 + 1.0) * (1.0 - np.sqrt(1.0 + self.mu2 * t)) + self.mu1 * t

    def solution(self, z, t):
        z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
        right = self.mu2 * (z - 1.0) / (1.0 + self.mu2 * t)
        return np.where(z < self.shock_position(t), self.mu1, right)

    def shock_time(self, z):
        """Time at which the shock passes the position ``z``."""
        f = lambda t: float(self.shock_position(t)) - z
        return brentq(f, 0.0, 100.0, xtol=1e-14)


def forming_shock_initial_data(z):
    """Two Gaussian pulses whose characteristics steepen into two merging shocks."""
    z = np.asarray(z)
    return 1.2 * np.exp(-(z + 0.5) ** 2 / 0.025) - np.exp(-(z - 0.5) ** 2 / 0.025)


def trigonometric_shock(y):
    """Shock curve x_s(y) = (cos(pi y) - 1) / pi of the advection field beta = (-sin(pi y), 1)."""
    return (np.cos(np.pi * np.asarray(y, dtype=float)) - 1.0) / np.pi


def oblique_shock_angle(mach, deflection, gamma=1.4):
    """Weak-branch shock angle for a wedge deflection angle (radians)."""
    def deflection_of(beta):
        s2 = (mach * np.sin(beta)) ** 2
        return np.arctan(2.0 / np.tan(beta) * (s2 - 1.0) / (mach ** 2 * (gamma + np.cos(2.0 * beta)) + 2.0))

    mu = np.arcsin(1.0 / mach)
    best = minimize_scalar(lambda b: -deflection_of(b), bounds=(mu, 0.5 * np.pi), method='bounded',
                           options={'xatol': 1e-12})
    if deflection > deflection_of(best.x):
        raise ValueError(f"Deflection {deflection} exceeds the attached-shock limit at Mach {mach}")
    return brentq(lambda b: deflection_of(b) - deflection, mu + 1e-12, best.x, xtol=1e-14)
