import logging
from dataclasses import dataclass, field
import numpy as np
from numpy.polynomial.legendre import leggauss

from exact_solutions import NozzleFlow, RiemannProblem
from quadrature import FACE_VERTICES, MASTER_VERTICES, QuadRule, edge_node_indices, face_points
from utilies import HoistError

logger = logging.getLogger(__name__)

LINE_POINTS = 12


def _inverse_map(mesh, coords, point, xi0=None, tol=1e-13, max_iter=30):
    """Master coordinates of ``point`` in the element with node coordinates ``coords``."""
    dim = mesh.dim
    xi = np.full(dim, 1.0 / (dim + 1)) if xi0 is None else np.array(xi0, dtype=float)
    for _ in range(max_iter):
        mapped = mesh.basis.eval(xi[None, :])[0] @ coords
        jac = np.einsum('bi,bj->ij', coords, mesh.basis.grad(xi[None, :])[0])
        step = np.linalg.solve(jac, mapped - point)
        xi = xi - step
        if np.linalg.norm(step) < tol:
            return xi, True
    return xi, False


def _inside(xi, tol=1e-9):
    return bool(np.all(xi >= -tol) and xi.sum() <= 1.0 + tol)


def locate(mesh, x, point, candidates=None):
    """(element, master point) containing the physical ``point``, or (None, None)."""
    coords = mesh.element_coords(x)
    lo, hi = coords.min(axis=1), coords.max(axis=1)
    span = (hi - lo).max(axis=1, keepdims=True)
    near = np.flatnonzero(np.all((point >= lo - 1e-3 * span) & (point <= hi + 1e-3 * span), axis=1))
    for e in (near if candidates is None else candidates):
        xi, ok = _inverse_map(mesh, coords[e], point)
        if ok and _inside(xi):
            return int(e), xi
    return None, None


def state_at(problem, u, e, xi):
    space = problem.assembler.space
    ue = space.element_view(u, problem.mesh.n_elems)
    return space.basis.eval(np.atleast_2d(xi))[0] @ ue[e]


def _edge_crossings(mesh, x, origin, direction):
    """Line parameters where the line origin + s direction crosses element edges (2D) or vertices (1D)."""
    nodes = np.asarray(x).reshape(-1, mesh.dim)
    if mesh.dim == 1:
        return sorted(float((v - origin[0]) / direction[0]) for v in nodes[np.unique(mesh.vertices), 0])
    normal = np.array([-direction[1], direction[0]])
    q = mesh.q
    s_nodes = np.linspace(0.0, 1.0, q + 1)
    out = []
    for row in mesh.elements:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            pts = nodes[row[edge_node_indices(2, q, a, b)]]
            offset = np.polyfit(s_nodes, (pts - origin) @ normal, q)
            along = np.polyfit(s_nodes, (pts - origin) @ direction, q)
            roots = np.roots(offset) if np.any(offset[:-1]) else []
            for r in roots:
                if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1 + 1e-12:
                    out.append(float(np.polyval(along, r.real)))
    return sorted(out)


def line_integral(problem, u, x, origin, direction, length, error, extra_breaks=()):
    """
    Integral over s in (0, length) of error(U(p), p) along p = origin + s direction, split at
    every element boundary crossing and at ``extra_breaks``.
    """
    mesh = problem.mesh
    origin, direction = np.asarray(origin, dtype=float), np.asarray(direction, dtype=float)
    breaks = [s for s in _edge_crossings(mesh, x, origin, direction) if 0.0 < s < length]
    breaks = np.unique(np.round(np.concatenate([[0.0, length], breaks, list(extra_breaks)]), 14))
    breaks = breaks[(breaks >= 0.0) & (breaks <= length)]
    gauss, weights = leggauss(LINE_POINTS)
    total = 0.0
    for s0, s1 in zip(breaks[:-1], breaks[1:]):
        if s1 - s0 < 1e-14:
            continue
        e, _ = locate(mesh, x, origin + 0.5 * (s0 + s1) * direction)
        if e is None:
            logger.warning("segment (%.6f, %.6f) of the sampling line lies outside the mesh", s0, s1)
            continue
        coords = mesh.element_coords(x)[e]
        for g, w in zip(gauss, weights):
            s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * g
            point = origin + s * direction
            xi, _ = _inverse_map(mesh, coords, point)
            total += 0.5 * (s1 - s0) * w * error(state_at(problem, u, e, xi), point)
    return total


def shock_faces(problem, u, x, threshold):
    """Interior faces (e, f), each listed once, whose mean chi jump exceeds ``threshold``."""
    jumps = problem.assembler.mean_face_jumps(u, x)
    mesh = problem.mesh
    faces = []
    for e, f in np.argwhere(np.abs(np.nan_to_num(jumps)) > threshold):
        if e < mesh.neighbor[e, f]:
            faces.append((int(e), int(f)))
    return faces


def triple_points(problem, u, x, threshold):
    """Vertices incident to at least three shock faces."""
    mesh = problem.mesh
    count = {}
    for e, f in shock_faces(problem, u, x, threshold):
        for v in mesh.elements[e, list(FACE_VERTICES[mesh.dim][f])]:
            count[int(v)] = count.get(int(v), 0) + 1
    return sorted(v for v, c in count.items() if c >= 3)


def _face_samples(problem, x, faces, n=LINE_POINTS):
    """Physical points and length weights of Gauss points on the listed faces."""
    mesh = problem.mesh
    coords = mesh.element_coords(x)
    rule = QuadRule(mesh.dim - 1, 2 * n - 1)
    points, weights = [], []
    for e, f in faces:
        xi = face_points(mesh.dim, f, rule.points)
        X = mesh.basis.eval(xi) @ coords[e]
        dpsi = mesh.basis.grad(xi)
        jac = np.einsum('bi,pbj->pij', coords[e], dpsi)
        a, b = FACE_VERTICES[2][f]
        tangent = np.einsum('pij,j->pi', jac, MASTER_VERTICES[2][b] - MASTER_VERTICES[2][a])
        points.append(X)
        weights.append(rule.weights * np.linalg.norm(tangent, axis=1))
    if not points:
        return np.zeros((0, mesh.dim)), np.zeros(0)
    return np.vstack(points), np.concatenate(weights)


def burgers_errors(problem, u, y, exact, threshold, z_line=0.8):
    """
    E_phi: L1 error of the solution along z = z_line; E_zs: L2 distance of the tracked
    shock faces to the exact shock curve, normalized by the tracked curve length.
    """
    x = problem.coordinates(y)
    t_end = float(np.max(np.asarray(x).reshape(-1, 2)[:, 1]))
    shock_time = exact.shock_time(z_line)
    e_phi = line_integral(problem, u, x, (z_line, 0.0), (0.0, 1.0), t_end,
                          lambda U, p: abs(U[0] - float(exact.solution(p[0], p[1]))),
                          extra_breaks=[shock_time])
    faces = shock_faces(problem, u, x, threshold)
    if not faces:
        logger.warning("no tracked shock found")
        return {'E_phi': e_phi, 'E_zs': float('nan')}
    points, weights = _face_samples(problem, x, faces)
    offset = points[:, 0] - exact.shock_position(points[:, 1])
    return {'E_phi': e_phi, 'E_zs': float(np.sqrt(weights @ offset ** 2 / weights.sum()))}


def nozzle_errors(problem, u, y, threshold=0.0, oracle=None):
    """E_rho: L1 density error over the nozzle; E_xs: error of the tracked shock position."""
    oracle = oracle or NozzleFlow(problem.model.mu1, problem.model.mu2, problem.model.gamma)
    x = problem.coordinates(y)
    model = problem.model
    e_rho = line_integral(problem, u, x, (0.0,), (1.0,), NozzleFlow.LENGTH,
                          lambda U, p: abs(float(model.primitives(U, p)[0]) - float(oracle.density(p[0])[0])),
                          extra_breaks=[oracle.shock_position])
    x_hat = tracked_shock_position(problem, u, x)
    return {'E_rho': e_rho, 'E_xs': abs(x_hat - oracle.shock_position), 'x_s': x_hat}


def tracked_shock_position(problem, u, x):
    """Coordinate of the interior face (1D) with the largest density jump."""
    mesh, model = problem.mesh, problem.model
    nodes = np.asarray(x).reshape(-1, 1)
    best, where = -1.0, float('nan')
    for e in range(mesh.n_elems):
        n = mesh.neighbor[e, 0]
        if n < 0:
            continue
        point = nodes[mesh.elements[e, 1]]
        left = state_at(problem, u, e, [1.0])
        right = state_at(problem, u, n, [0.0])
        jump = abs(float(model.primitives(left, point)[0]) - float(model.primitives(right, point)[0]))
        if jump > best:
            best, where = jump, float(point[0])
    return where


def skeleton_distance(mesh, x, points):
    """Distance from each point to the nearest straight mesh edge."""
    nodes = np.asarray(x).reshape(-1, mesh.dim)
    edges = np.array(mesh.edges())
    a, b = nodes[edges[:, 0]], nodes[edges[:, 1]]
    ab = b - a
    t = np.clip(np.einsum('pki,ki->pk', points[:, None, :] - a[None], ab) / np.sum(ab * ab, axis=1), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1).min(axis=1)


def sod_feature_distances(problem, u, y, n_samples=41):
    """L-infinity distance of the exact rarefaction head/tail, contact and shock lines to the mesh skeleton."""
    x = problem.coordinates(y)
    nodes = np.asarray(x).reshape(-1, 2)
    t_end = float(nodes[:, 1].max())
    speeds = RiemannProblem((1.0, 0.0, 1.0), (0.125, 0.0, 0.1), problem.model.gamma).wave_speeds()
    t = np.linspace(0.0, t_end, n_samples)
    out = {}
    for name, speed in speeds._asdict().items():
        line = np.column_stack([0.5 + speed * t, t])
        out[name] = float(skeleton_distance(problem.mesh, x, line).max())
    return out


def convergence_slopes(errors, h):
    """Segment-wise slopes log(E_i / E_i+1) / log(h_i / h_i+1)."""
    errors, h = np.asarray(errors, dtype=float), np.asarray(h, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.log(errors[:-1] / errors[1:]) / np.log(h[:-1] / h[1:])


@dataclass
class ConvergenceRecord:
    """Per-level mesh size, element count and errors of a refinement study."""
    p: int
    q: int
    levels: list = field(default_factory=list)

    def add(self, h, n_elems, errors, status='converged'):
        """Append a level; a NaN ``h`` marks a level whose solve failed."""
        sizes = [level['h'] for level in self.levels if np.isfinite(level['h'])]
        if np.isfinite(h) and sizes and h >= sizes[-1]:
            raise ValueError("Mesh size must decrease across levels")
        self.levels.append({'h': float(h), 'n_elems': int(n_elems), 'status': status, **errors})

    @property
    def metric_names(self):
        names = []
        for level in self.levels:
            names += [k for k in level if k not in ('h', 'n_elems', 'status') and k not in names]
        return names

    def slopes(self, name):
        """
        Slope of every level after the first against the last earlier level with a finite
        h and error; NaN where the level itself has none.
        """
        h = np.array([level['h'] for level in self.levels], dtype=float)
        errors = np.array([level.get(name, np.nan) for level in self.levels], dtype=float)
        out = np.full(max(len(h) - 1, 0), np.nan)
        last = None
        for i in np.flatnonzero(np.isfinite(h) & np.isfinite(errors)):
            if last is not None:
                out[i - 1] = convergence_slopes(errors[[last, i]], h[[last, i]])[0]
            last = i
        return out


def run_convergence_study(solve, levels, p, q):
    """
    Independent solves on ``levels`` refinements; ``solve(level)`` returns
    (h, n_elems, errors dict, status). A level that raises a library or numerical error
    is recorded as failed with h = NaN and the study continues.
    """
    record = ConvergenceRecord(p, q)
    for level in range(levels):
        try:
            h, n_elems, errors, status = solve(level)
        except (HoistError, np.linalg.LinAlgError, FloatingPointError) as exc:
            logger.error("level %d failed: %s", level, exc)
            record.add(np.nan, 0, {}, 'failed')
            continue
        record.add(h, n_elems, errors, status)
        logger.info("level %d: h = %.4e, %d elements, %s", level, h, n_elems,
                    ", ".join(f"{k} = {v:.4e}" for k, v in errors.items() if isinstance(v, float)))
    for name in record.metric_names:
        logger.info("slopes of %s: %s", name, np.array2string(record.slopes(name), precision=2))
    return record
