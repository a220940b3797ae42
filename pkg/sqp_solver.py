import logging
from collections import namedtuple
from dataclasses import dataclass, field, replace
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from boundary_param import build_param
from dg_assembly import DgAssembler
from distortion import Distortion, IdealElement
from quadrature import QuadRule
from simplex_mesh import jacobians, determinant
from utilies import ConfigError, EVALUATION_ERRORS, KktSolveError, SOLVE_ERRORS

logger = logging.getLogger(__name__)

Evaluation = namedtuple('Evaluation', ['r', 'R', 'R_msh', 'f_err', 'f_msh',
                                       'drdu', 'drdx', 'dRdu', 'dRdx', 'dmsh_dx'],
                        defaults=(None,) * 5)
LineSearchResult = namedtuple('LineSearchResult', ['alpha', 'merit', 'payload', 'backtracks', 'flagged'])
SqpStep = namedtuple('SqpStep', ['du', 'dy', 'eta', 'hessian', 'constraint_jacobian', 'gradient', 'gamma'])
HESSIAN_SHIFT = 1e-8


@dataclass(frozen=True)
class SqpParams:
    """Tolerances and adaptation constants of the tracking SQP iteration."""
    gamma0: float = 1e-2
    gamma_min: float = 1e-6
    tau: float = 2.0
    sigma1: float = 1e-2
    sigma2: float = 1e-1
    kappa0: float | None = None
    kappa_min: float = 1e-10
    upsilon: float | None = 0.75
    xi: float | None = 1.0
    varpi: float = 1.2
    rho: float = 0.95
    mu_max: float = 1e10
    armijo: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 20
    alpha_min: float = 1e-4
    eps1: float = 1e-8
    eps2: float = 1e-6
    freeze_iteration: int = 200
    max_iterations: int = 300
    length_scale: float = 1.0
    poisson: float = 0.2

    def validate(self):
        if self.varpi <= 1:
            raise ConfigError("varpi must be > 1")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if self.upsilon is not None and not 0 < self.upsilon < 1:
            raise ConfigError("upsilon must lie in (0, 1)")
        if self.tau <= 1:
            raise ConfigError("tau must be > 1")
        if not 0 < self.sigma1 < self.sigma2:
            raise ConfigError("sigma1 and sigma2 must satisfy 0 < sigma1 < sigma2")
        if self.gamma0 < self.gamma_min or self.gamma_min < 0:
            raise ConfigError("gamma0 must be >= gamma_min >= 0")
        if self.kappa_min < 0 or (self.kappa0 is not None and self.kappa0 < 0):
            raise ConfigError("kappa0 and kappa_min must be non-negative")
        if not 0 < self.backtrack_factor < 1 or not 0 < self.armijo < 1:
            raise ConfigError("Line-search constants must lie in (0, 1)")
        if self.eps1 < 0 or self.eps2 < 0 or self.mu_max <= 0:
            raise ConfigError("Tolerances must be non-negative")
        if self.max_iterations < 0 or self.max_backtracks < 0 or self.freeze_iteration < 0:
            raise ConfigError("Iteration limits must be non-negative")
        if self.length_scale <= 0:
            raise ConfigError("length_scale must be positive")
        if not -1 < self.poisson < 0.5:
            raise ConfigError("poisson must lie in (-1, 0.5)")
        return self


@dataclass
class HistoryRecord:
    k: int
    r_norm: float
    R_norm: float
    c_norm: float
    msh_norm: float
    alpha: float
    gamma: float
    kappa: float
    mu: float
    n_elems: int
    merit: float = float('nan')
    backtracks: int = 0

    FIELDS = ('k', 'r_norm', 'R_norm', 'c_norm', 'msh_norm', 'alpha', 'gamma', 'kappa', 'mu', 'n_elems',
              'merit', 'backtracks')


@dataclass
class SolverState:
    """Current iterate z = (u, y) with the adaptive parameters and the run history."""
    u: np.ndarray
    y: np.ndarray
    gamma: float
    kappa: float
    mu: float = 0.0
    k: int = 0
    history: list = field(default_factory=list)
    events: list = field(default_factory=list)


SolveResult = namedtuple('SolveResult', ['problem', 'state', 'status'])


def assemble_elasticity(mesh, poisson=0.2):
    """
    Isotropic linear-elasticity stiffness of the reference mesh with modulus
    E_e = 1 / v_{0,e}, indexed like the stacked coordinates (node * d + i).
    """
    dim, q = mesh.dim, mesh.q
    rule = QuadRule(dim, 2 * max(q - 1, 0))
    dpsi = mesh.basis.grad(rule.points)
    J = jacobians(mesh.element_coords(reference=True), dpsi)
    det = determinant(J)
    v0 = det @ rule.weights
    grad = np.einsum('eqji,qbj->eqbi', np.linalg.inv(J), dpsi)
    modulus = 1.0 / v0
    lam = modulus * poisson / ((1 + poisson) * (1 - 2 * poisson))
    mu = modulus / (2 * (1 + poisson))
    wdet = det * rule.weights
    eye = np.eye(dim)
    K = (np.einsum('e,eq,eqai,eqbj->eaibj', lam, wdet, grad, grad)
         + np.einsum('e,eq,ij,eqak,eqbk->eaibj', mu, wdet, eye, grad, grad)
         + np.einsum('e,eq,eqaj,eqbi->eaibj', mu, wdet, grad, grad))
    ne, ng = mesh.elements.shape
    idx = (mesh.elements[:, :, None] * dim + np.arange(dim)).reshape(ne, ng * dim)
    rows = np.broadcast_to(idx[:, :, None], (ne, ng * dim, ng * dim)).ravel()
    cols = np.broadcast_to(idx[:, None, :], (ne, ng * dim, ng * dim)).ravel()
    n = mesh.n_nodes * dim
    return sp.coo_matrix((K.reshape(ne, ng * dim, ng * dim).ravel(), (rows, cols)), shape=(n, n)).tocsr()


class TrackingProblem:
    """
    The discretized tracking problem on one mesh: DG residuals of ``model`` with trial
    degree ``degree``, the boundary-preserving parametrization and the distortion term.
    """
    def __init__(self, model, mesh, degree, boundaries, ideal=IdealElement.REGULAR, poisson=0.2, param=None):
        self.model = model
        self.mesh = mesh
        self.boundaries = boundaries
        self.ideal = IdealElement(ideal)
        self.poisson = poisson
        self.assembler = DgAssembler(model, mesh, degree)
        self.param = param if param is not None else build_param(mesh, boundaries)
        self.distortion = Distortion(mesh, self.ideal)
        self._elasticity = None

    @property
    def degree(self):
        return self.assembler.degree

    @property
    def n_u(self):
        return self.assembler.space.n_dofs(self.mesh.n_elems)

    @property
    def n_y(self):
        return self.param.n_y

    @property
    def elasticity(self):
        if self._elasticity is None:
            self._elasticity = assemble_elasticity(self.mesh, self.poisson)
        return self._elasticity

    def remeshed(self, mesh):
        """Problem of the same model and degree on a modified mesh."""
        return TrackingProblem(self.model, mesh, self.degree, self.boundaries, self.ideal, self.poisson)

    def coordinates(self, y):
        return self.param.apply(y)

    def initial_y(self, x=None):
        return self.param.invert(self.mesh.nodes.reshape(-1) if x is None else x)

    def evaluate(self, u, y, derivatives=True):
        x = self.coordinates(y)
        if derivatives:
            std = self.assembler.linearize(u, x)
            enr = self.assembler.linearize(u, x, self.degree + 1)
            R_msh, dmsh = self.distortion.linearize(x)
        else:
            std = (self.assembler.residual(u, x),)
            enr = (self.assembler.residual(u, x, self.degree + 1),)
            R_msh, dmsh = self.distortion.values(x), None
        r, R = std[0], enr[0]
        f_err, f_msh = 0.5 * float(R @ R), 0.5 * float(R_msh @ R_msh)
        if derivatives:
            return Evaluation(r, R, R_msh, f_err, f_msh, std.du, std.dx, enr.du, enr.dx, dmsh)
        return Evaluation(r, R, R_msh, f_err, f_msh)


def objective_gradient(ev, A, kappa):
    """(df/du, df/dy) for f = f_err + kappa^2 f_msh."""
    g_u = ev.dRdu.T @ ev.R
    g_y = A.T @ (ev.dRdx.T @ ev.R + kappa ** 2 * (ev.dmsh_dx.T @ ev.R_msh))
    return g_u, g_y


def _factorize(matrix, what):
    try:
        lu = spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise KktSolveError(f"{what} is singular: {exc}") from exc
    return lu


def multiplier_estimate(ev):
    """lambda solving (dr/du)^T lambda = (df/du)^T."""
    lu = _factorize(ev.drdu.T, "dr/du")
    lam = lu.solve(ev.dRdu.T @ ev.R)
    if not np.all(np.isfinite(lam)):
        raise KktSolveError("Multiplier estimate is not finite")
    return lam


def optimality(ev, A, kappa, lam=None):
    """c = (df/dy)^T - A^T (dr/dx)^T lambda."""
    lam = multiplier_estimate(ev) if lam is None else lam
    _, g_y = objective_gradient(ev, A, kappa)
    return g_y - A.T @ (ev.drdx.T @ lam)


def build_hessian(ev, A, gamma, kappa, elasticity, shift=0.0):
    """
    Levenberg-Marquardt Hessian J_F^T J_F + gamma blockdiag(0, A^T D A) of F = [R; kappa R_msh],
    plus ``shift`` times the identity.
    Only semidefinite in general; compute_step falls back to a larger gamma and then to a
    positive shift when the KKT matrix is singular.
    """
    n_u, n_y = ev.dRdu.shape[1], A.shape[1]
    JF = sp.bmat([[ev.dRdu, ev.dRdx @ A],
                  [sp.csr_matrix((ev.dmsh_dx.shape[0], n_u)), kappa * (ev.dmsh_dx @ A)]], format='csr')
    B = (JF.T @ JF).tocsr()
    if gamma > 0:
        B = B + sp.block_diag([sp.csr_matrix((n_u, n_u)), gamma * (A.T @ elasticity @ A)], format='csr')
    if shift > 0:
        B = B + shift * sp.identity(n_u + n_y, format='csr')
    return 0.5 * (B + B.T)


def constraint_jacobian(ev, A):
    return sp.hstack([ev.drdu, ev.drdx @ A], format='csr')


def solve_kkt(B, J, g, r):
    """Solve [[B, J^T], [J, 0]] [dz; eta] = -[g; r]."""
    n, m = B.shape[0], J.shape[0]
    K = sp.bmat([[B, J.T], [J, None]], format='csc')
    lu = _factorize(K, "KKT matrix")
    sol = lu.solve(-np.concatenate([g, r]))
    if not np.all(np.isfinite(sol)):
        raise KktSolveError("KKT solution is not finite")
    return sol[:n], sol[n:n + m]


def merit_penalty(mu_prev, g, dz, B, r, params):
    """Penalty update keeping dz a descent direction of the l1 merit function."""
    r_l1 = float(np.sum(np.abs(r)))
    if r_l1 == 0.0:
        return mu_prev
    mu_bar = (float(g @ dz) + 0.5 * float(dz @ (B @ dz))) / ((1.0 - params.rho) * r_l1)
    return min(max(params.varpi * mu_bar, mu_prev), params.mu_max)


def merit_value(f, r, mu):
    return f + mu * float(np.sum(np.abs(r)))


def _safe_merit(merit, alpha):
    try:
        return merit(alpha)
    except EVALUATION_ERRORS as exc:
        logger.debug("trial alpha = %.3e rejected: %s", alpha, exc)
        return np.inf, None


def line_search(merit, phi0, dphi0, params):
    """
    Backtracking search for phi(alpha) <= phi(0) + c alpha phi'(0).
    :param merit: callable alpha -> (phi, payload); evaluation errors count as +inf
    :return: LineSearchResult; alpha = 0 means no acceptable trial was found
    """
    if not dphi0 < 0:
        logger.warning("search direction is not a descent direction (phi'(0) = %.3e)", dphi0)
        phi, payload = _safe_merit(merit, params.alpha_min)
        if np.isfinite(phi):
            return LineSearchResult(params.alpha_min, phi, payload, 0, True)
        return LineSearchResult(0.0, phi0, None, 0, True)

    alpha = 1.0
    decreasing = []
    for n in range(params.max_backtracks + 1):
        phi, payload = _safe_merit(merit, alpha)
        logger.debug("line search: alpha = %.3e, phi = %.6e", alpha, phi)
        if phi <= phi0 + params.armijo * alpha * dphi0:
            return LineSearchResult(alpha, phi, payload, n, False)
        if phi < phi0:
            decreasing.append(LineSearchResult(alpha, phi, payload, n, True))
        alpha *= params.backtrack_factor
    logger.warning("backtracking limit of %d reached", params.max_backtracks)
    if decreasing:
        return decreasing[-1]
    return LineSearchResult(0.0, phi0, None, params.max_backtracks, True)


def update_gamma(gamma, dx_norm, params):
    if dx_norm < params.sigma1 * params.length_scale:
        gamma = gamma / params.tau
    elif dx_norm > params.sigma2 * params.length_scale:
        gamma = gamma * params.tau
    return max(gamma, params.gamma_min)


def update_kappa(kappa, f_err, f_msh, k, params):
    if params.upsilon is None or params.xi is None or k > params.freeze_iteration:
        return kappa
    if f_err < params.xi * kappa ** 2 * f_msh:
        return max(params.upsilon * kappa, params.kappa_min)
    return kappa


def reset_kappa(kappa, f_err, f_msh, params):
    """kappa after a robustness modification, balancing f_err against kappa^2 f_msh."""
    if params.upsilon is None or f_msh <= 0:
        return kappa
    return max(params.upsilon * np.sqrt(f_err / f_msh), params.kappa_min)


def initial_kappa(ev, params):
    if params.kappa0 is not None:
        return max(params.kappa0, params.kappa_min)
    if ev.f_msh <= 0:
        return params.kappa_min
    return max(float(np.sqrt(ev.f_err / ev.f_msh)), params.kappa_min)


def compute_step(problem, ev, state, params):
    """
    Solve the KKT system. A singular factorization is retried once with gamma * tau,
    then with a diagonal Hessian shift.
    """
    A = problem.param.A
    g = np.concatenate(objective_gradient(ev, A, state.kappa))
    J = constraint_jacobian(ev, A)
    gamma, shift = state.gamma, 0.0
    for attempt in range(3):
        B = build_hessian(ev, A, gamma, state.kappa, problem.elasticity, shift)
        try:
            dz, eta = solve_kkt(B, J, g, ev.r)
            return SqpStep(dz[:problem.n_u], dz[problem.n_u:], eta, B, J, g, gamma)
        except KktSolveError:
            if attempt == 2:
                raise
            if attempt == 0:
                logger.debug("singular KKT factorization, retrying with gamma = %.3e", gamma * params.tau)
                gamma *= params.tau
            else:
                shift = HESSIAN_SHIFT * max(1.0, float(np.abs(B.diagonal()).max()))
                logger.debug("singular KKT factorization, shifting the Hessian by %.3e", shift)


def hoist_solve(problem, state, params, robustness=None):
    """
    Run the tracking SQP iteration from ``state`` until ||r|| <= eps1 and ||c|| <= eps2
    or the iteration limit. ``robustness`` (optional) exposes
    ``apply(problem, state, ev, params, forced)`` returning (problem, state, modified).
    :return: SolveResult with status 'converged', 'max_iterations' or 'failed'
    """
    params.validate()
    try:
        ev = problem.evaluate(state.u, state.y)
    except EVALUATION_ERRORS as exc:
        logger.error("initial iterate cannot be evaluated: %s", exc)
        return SolveResult(problem, state, 'failed')
    if state.kappa is None:
        state.kappa = initial_kappa(ev, params)
    alpha, backtracks, merit = float('nan'), 0, float('nan')
    logger.info("%4s %10s %10s %10s %10s %9s %9s %9s %9s %6s",
                'k', '|r|', '|R|', '|c|', '|kR_msh|', 'alpha', 'gamma', 'kappa', 'mu', 'elems')
    status = 'max_iterations'
    while True:
        try:
            lam = multiplier_estimate(ev)
        except KktSolveError as exc:
            logger.error("iteration %d: %s", state.k, exc)
            status = 'failed'
            break
        c = optimality(ev, problem.param.A, state.kappa, lam)
        record = HistoryRecord(state.k, float(np.linalg.norm(ev.r)), float(np.linalg.norm(ev.R)),
                               float(np.linalg.norm(c)), float(state.kappa * np.linalg.norm(ev.R_msh)),
                               alpha, state.gamma, state.kappa, state.mu, problem.mesh.n_elems, merit, backtracks)
        state.history.append(record)
        logger.info("%4d %10.3e %10.3e %10.3e %10.3e %9.2e %9.2e %9.2e %9.2e %6d",
                    record.k, record.r_norm, record.R_norm, record.c_norm, record.msh_norm, record.alpha,
                    record.gamma, record.kappa, record.mu, record.n_elems)
        if record.r_norm <= params.eps1 and record.c_norm <= params.eps2:
            status = 'converged'
            break
        if state.k >= params.max_iterations:
            break

        try:
            step = compute_step(problem, ev, state, params)
        except KktSolveError as exc:
            logger.error("iteration %d: %s", state.k, exc)
            status = 'failed'
            break
        state.gamma = step.gamma
        dz = np.concatenate([step.du, step.dy])
        state.mu = merit_penalty(state.mu, step.gradient, dz, step.hessian, ev.r, params)
        f0 = ev.f_err + state.kappa ** 2 * ev.f_msh
        phi0 = merit_value(f0, ev.r, state.mu)
        dphi0 = float(step.gradient @ dz) - state.mu * float(np.sum(np.abs(ev.r)))

        def trial_merit(a, u=state.u, y=state.y, kappa=state.kappa, mu=state.mu):
            trial = problem.evaluate(u + a * step.du, y + a * step.dy, derivatives=False)
            return merit_value(trial.f_err + kappa ** 2 * trial.f_msh, trial.r, mu), trial

        search = line_search(trial_merit, phi0, dphi0, params)
        alpha, backtracks, merit = search.alpha, search.backtracks, search.merit
        state.u = state.u + alpha * step.du
        state.y = state.y + alpha * step.dy
        dx_norm = float(np.linalg.norm(problem.param.A @ (alpha * step.dy)))
        state.gamma = update_gamma(state.gamma, dx_norm, params)
        state.k += 1
        modified = False
        try:
            ev = problem.evaluate(state.u, state.y)
            if robustness is not None and state.k <= params.freeze_iteration:
                problem, state, modified = robustness.apply(problem, state, ev, params,
                                                            forced=backtracks > robustness.forced_backtracks)
                if modified:
                    ev = problem.evaluate(state.u, state.y)
        except SOLVE_ERRORS as exc:
            logger.error("iteration %d: %s", state.k, exc)
            status = 'failed'
            break
        if modified:
            state.kappa = reset_kappa(state.kappa, ev.f_err, ev.f_msh, params)
            logger.info("kappa reset to %.3e", state.kappa)
            state.events.append((state.k, 'kappa_reset', f"{state.kappa:.6e}", ''))
        else:
            state.kappa = update_kappa(state.kappa, ev.f_err, ev.f_msh, state.k, params)

    logger.info("tracking solve finished after %d iterations: %s", state.k, status)
    return SolveResult(problem, state, status)


def start_state(problem, u0, params):
    """Solver state at (u0, y0) with y0 the coordinates of the physical mesh."""
    return SolverState(np.asarray(u0, dtype=float), problem.initial_y(), params.gamma0, params.kappa0)


def with_overrides(params, **overrides):
    return replace(params, **{k: v for k, v in overrides.items() if v is not None}).validate()
