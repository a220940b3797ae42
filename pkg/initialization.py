import logging
from dataclasses import dataclass
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dg_assembly import DgAssembler, constant_injection
from simplex_mesh import all_element_measures
from utilies import EVALUATION_ERRORS, ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoTransientParams:
    """
    Pseudo-transient continuation of the p = 0 system: local steps
    dt_e = cfl l_min(e), cfl grown by switched evolution relaxation
    cfl_k = cfl0 (|r_0| / |r_k|) and capped at ``cfl_max``.
    """
    cfl0: float = 1.0
    cfl_max: float = 1e10
    max_growth: float = 10.0
    tol: float = 1e-10
    max_steps: int = 200
    max_failures: int = 12

    def validate(self):
        if self.cfl0 <= 0 or self.cfl_max < self.cfl0:
            raise ConfigError("CFL numbers must satisfy 0 < cfl0 <= cfl_max")
        if self.max_growth <= 1:
            raise ConfigError("CFL growth factor must exceed 1")
        if self.tol <= 0 or self.max_steps < 1:
            raise ConfigError("Tolerance and step limit must be positive")
        return self


def centroids(mesh, x=None):
    nodes = mesh.nodes if x is None else np.asarray(x).reshape(-1, mesh.dim)
    return nodes[mesh.vertices].mean(axis=1)


def reference_means(model, mesh):
    """Element states of the model's free-stream / boundary-data guess, (ne, m)."""
    return np.asarray(model.reference_state(centroids(mesh)), dtype=float).reshape(mesh.n_elems, model.n_states)


def solve_piecewise_constant(model, mesh, params=None):
    """
    Newton iteration with pseudo-transient continuation on the p = 0 DG residual.
    :return: (means (ne, m), converged flag)
    """
    params = (params or PseudoTransientParams()).validate()
    assembler = DgAssembler(model, mesh, 0)
    m = model.n_states
    measures = all_element_measures(mesh)
    volume = np.repeat(measures.v, m)
    length = np.repeat(measures.l_min, m)
    u = reference_means(model, mesh).reshape(-1)
    try:
        r = assembler.residual(u)
    except EVALUATION_ERRORS as exc:
        logger.warning("p = 0 residual cannot be evaluated at the initial guess: %s", exc)
        return u.reshape(-1, m), False
    r0 = max(float(np.linalg.norm(r)), 1e-300)
    cfl, failures = params.cfl0, 0
    for step in range(params.max_steps):
        r_norm = float(np.linalg.norm(r))
        if r_norm <= params.tol:
            logger.info("p = 0 solve converged in %d steps, |r| = %.3e", step, r_norm)
            return u.reshape(-1, m), True
        jac = assembler.linearize(u).du
        lhs = sp.diags(volume / (cfl * length)) + jac
        du = spla.spsolve(sp.csc_matrix(lhs), -r)
        try:
            if not np.all(np.isfinite(du)):
                raise FloatingPointError("non-finite Newton update")
            r_new = assembler.residual(u + du)
            if not np.all(np.isfinite(r_new)):
                raise FloatingPointError("non-finite residual")
        except (FloatingPointError,) + EVALUATION_ERRORS as exc:
            failures += 1
            cfl = max(cfl / 10.0, 1e-8)
            logger.debug("p = 0 step %d rejected (%s), cfl -> %.2e", step, exc, cfl)
            if failures > params.max_failures:
                break
            continue
        u, r = u + du, r_new
        target = params.cfl0 * r0 / max(float(np.linalg.norm(r)), 1e-300)
        cfl = float(np.clip(target, cfl / params.max_growth, cfl * params.max_growth))
        cfl = min(cfl, params.cfl_max)
        logger.debug("p = 0 step %d: |r| = %.3e, cfl = %.2e", step, float(np.linalg.norm(r)), cfl)
    logger.warning("p = 0 solve did not converge (|r| = %.3e)", float(np.linalg.norm(r)))
    return u.reshape(-1, m), False


def init_solution(model, mesh, degree, params=None):
    """
    Degree-``degree`` initial coefficients: the p = 0 DG solution injected as constants,
    or the model's reference state when that solve fails.
    """
    means, converged = solve_piecewise_constant(model, mesh, params)
    if not converged:
        logger.warning("falling back to the reference-state initialization")
        means = reference_means(model, mesh)
    return constant_injection(means, degree, mesh.dim)
