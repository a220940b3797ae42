import logging
from collections import namedtuple
from dataclasses import dataclass, field
import numpy as np

from boundary_param import classify_node
from dg_assembly import DgAssembler, _projection_matrix, constant_injection
from quadrature import MASTER_VERTICES, QuadRule, n_basis, nodal_basis
from simplex_mesh import (_vertex_orientation, all_element_measures, collapse_edge, determinant,
                          jacobians, straighten_elements)
from utilies import CollapseRejected, ConfigError

logger = logging.getLogger(__name__)

RemovalPass = namedtuple('RemovalPass', ['element', 'triggers', 'edge', 'kept', 'removed'])
REMOVAL_SETS = ('volume', 'small', 'aspect', 'jacobian')
SENSOR_FLOOR = 1e-10


@dataclass(frozen=True)
class RobustnessParams:
    """
    Thresholds of the step modification applied after every accepted SQP step.
    c5 = None disables re-initialization, c4_ill = None disables straightening.
    """
    c1: float = 0.2
    c2: float = 1e-10
    c3: float = 0.2
    c4: float = 0.0
    c4_ill: float | None = 0.05
    c5: float | None = None
    c6: float = 1e-2
    c7: float = 1.0
    c8: float = 1e-6
    straighten_reinit: bool = False
    forced_backtracks: int = 5
    remove: bool = True

    def validate(self):
        for name in ('c1', 'c2', 'c3', 'c4', 'c4_ill', 'c5', 'c6', 'c7', 'c8'):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.forced_backtracks < 0:
            raise ConfigError("forced_backtracks must be non-negative")
        return self


@dataclass
class RemovalReport:
    passes: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def removed(self):
        return [e for p in self.passes for e in p.removed]


def removal_triggers(measures, params):
    """(ne, 4) boolean table of the four removal criteria."""
    m = measures
    return np.column_stack([m.v <= params.c1 * m.v0,
                            np.minimum(m.v0, m.v) <= params.c2,
                            m.l_min <= params.c3 * m.l_max,
                            m.g_inf <= params.c4 * m.g_sup])


def detect_removal(mesh, x, params):
    """Elements to remove, worst volume ratio first."""
    measures = all_element_measures(mesh, x)
    flagged = np.flatnonzero(np.any(removal_triggers(measures, params), axis=1))
    order = np.argsort(measures.v[flagged] / measures.v0[flagged], kind='stable')
    return flagged[order].tolist()


def _vertex_chi(mesh, u, degree, n_states):
    """chi = first state component at the vertices of every element, (ne, d + 1)."""
    phi = nodal_basis(mesh.dim, degree).eval(MASTER_VERTICES[mesh.dim])
    ue = np.asarray(u).reshape(mesh.n_elems, n_basis(mesh.dim, degree), n_states)
    return np.einsum('vj,ej->ev', phi, ue[:, :, 0])


def node_boundaries(mesh, boundaries):
    """Per node, the frozen set of boundary indices it is constrained to (None for fixed nodes)."""
    return [None if fixed else frozenset(classify_node(point, boundaries))
            for point, fixed in zip(mesh.ref_nodes, mesh.fixed)]


def _dominates(s, t):
    """Boundary set s allows t's node to merge into s's node."""
    if s is None:
        return True
    if t is None:
        return False
    return t <= s


def vertex_ranges(mesh, u, degree, n_states):
    """max - min of chi over the incident-element traces at every vertex node."""
    chi = _vertex_chi(mesh, u, degree, n_states)
    hi = np.full(mesh.n_nodes, -np.inf)
    lo = np.full(mesh.n_nodes, np.inf)
    np.maximum.at(hi, mesh.vertices.ravel(), chi.ravel())
    np.minimum.at(lo, mesh.vertices.ravel(), chi.ravel())
    return np.where(np.isfinite(hi), hi - lo, 0.0)


def choose_endpoint(edge, boundary_sets, ranges):
    """
    Endpoint of ``edge`` that survives the collapse, or None if neither endpoint's
    boundary constraints contain the other's.
    """
    a, b = edge
    sa, sb = boundary_sets[a], boundary_sets[b]
    a_wins, b_wins = _dominates(sa, sb), _dominates(sb, sa)
    if sa is None and sb is None:
        return None
    if a_wins and not b_wins:
        return a
    if b_wins and not a_wins:
        return b
    if not a_wins:
        return None
    if ranges[a] != ranges[b]:
        return a if ranges[a] > ranges[b] else b
    return min(a, b)


def _element_edges(mesh, e, x):
    verts = mesh.vertices[e]
    pairs = [(0, 1)] if mesh.dim == 1 else [(0, 1), (1, 2), (2, 0)]
    nodes = np.asarray(x).reshape(-1, mesh.dim)
    edges = [(int(verts[i]), int(verts[j])) for i, j in pairs]
    return sorted(edges, key=lambda ab: (float(np.linalg.norm(nodes[ab[0]] - nodes[ab[1]])), ab))


def _try_collapse(mesh, edge, keep):
    new_mesh, merge = collapse_edge(mesh, edge[0], edge[1], keep)
    affected = np.flatnonzero(np.any(new_mesh.vertices == merge.node_map[keep], axis=1))
    if new_mesh.q > 1:
        new_mesh = new_mesh.with_reference(straighten_elements(new_mesh, affected, reference=True))
    if np.any(new_mesh.reference_jacobian_samples()[affected] <= 0):
        raise CollapseRejected("Straightened reference element is inverted")
    if np.any(_vertex_orientation(new_mesh, affected) <= 0):
        raise CollapseRejected("Collapse inverts a physical element")
    return new_mesh, merge


def remove_elements(mesh, u, x, flagged, boundaries, degree, n_states, params):
    """
    Collapse the shortest admissible edge of each flagged element, worst first,
    re-detecting after every collapse.
    :return: (mesh, u, x, RemovalReport)
    """
    report = RemovalReport()
    if not flagged:
        return mesh, np.asarray(u), np.asarray(x), report
    mesh = mesh.with_nodes(x)
    u = np.asarray(u, dtype=float)
    skipped = set()
    for _ in range(3 * len(flagged)):
        triggers = removal_triggers(all_element_measures(mesh), params)
        candidates = [e for e in detect_removal(mesh, None, params) if e not in skipped]
        if not candidates:
            break
        e = candidates[0]
        boundary_sets = node_boundaries(mesh, boundaries)
        ranges = vertex_ranges(mesh, u, degree, n_states)
        for edge in _element_edges(mesh, e, mesh.nodes):
            keep = choose_endpoint(edge, boundary_sets, ranges)
            if keep is None:
                logger.debug("edge %s of element %d is not collapsible", edge, e)
                continue
            try:
                new_mesh, merge = _try_collapse(mesh, edge, keep)
            except CollapseRejected as exc:
                logger.debug("collapse of edge %s rejected: %s", edge, exc)
                continue
            survivors = np.flatnonzero(merge.element_map >= 0)
            nb = n_basis(mesh.dim, degree) * n_states
            u = u.reshape(mesh.n_elems, nb)[survivors].reshape(-1)
            names = [REMOVAL_SETS[i] for i in np.flatnonzero(triggers[e])]
            report.passes.append(RemovalPass(e, names, edge, keep, merge.removed_elements.tolist()))
            logger.info("removed elements %s (%s) by collapsing edge %s onto node %d",
                        merge.removed_elements.tolist(), ", ".join(names), edge, keep)
            skipped = {int(merge.element_map[s]) for s in skipped if merge.element_map[s] >= 0}
            mesh = new_mesh
            break
        else:
            logger.warning("element %d has no admissible edge, skipped", e)
            report.skipped.append(e)
            skipped.add(e)
    return mesh, u, mesh.nodes.reshape(-1), report


def detect_ill(mesh, x, params):
    """Curved elements whose Jacobian varies by more than the c4_ill ratio."""
    if mesh.q == 1 or params.c4_ill is None:
        return []
    m = all_element_measures(mesh, x)
    return np.flatnonzero(m.g_inf <= params.c4_ill * m.g_sup).tolist()


def _reference_weights(mesh, rule):
    dpsi = mesh.basis.grad(rule.points)
    return rule.weights * determinant(jacobians(mesh.element_coords(reference=True), dpsi))


def shock_sensor(mesh, u, degree, n_states):
    """
    log10 of the relative size of the degree-p part of chi in each element;
    -inf for p = 0 and for elements where chi has no degree-p content or vanishes.
    """
    if degree == 0:
        return np.full(mesh.n_elems, -np.inf)
    dim = mesh.dim
    chi = np.asarray(u).reshape(mesh.n_elems, n_basis(dim, degree), n_states)[:, :, 0]
    lowered = chi @ (_projection_matrix(dim, degree, degree - 1).T @ _projection_matrix(dim, degree - 1, degree).T)
    rule = QuadRule(dim, 2 * degree + 2 * (mesh.q - 1))
    w = _reference_weights(mesh, rule)
    phi = nodal_basis(dim, degree).eval(rule.points)
    num = np.sum(w * (np.einsum('qj,ej->eq', phi, chi - lowered)) ** 2, axis=1)
    den = np.sum(w * (np.einsum('qj,ej->eq', phi, chi)) ** 2, axis=1)
    ratio = np.sqrt(np.divide(num, den, out=np.zeros_like(num), where=den > 0))
    # round-off of the projection counts as no degree-p content
    resolved = ratio > SENSOR_FLOOR
    return np.where(resolved, np.log10(np.where(resolved, ratio, 1.0)), -np.inf)


def reinit_sets(mesh, sensor, params, forced=False):
    """Elements to re-initialize; thresholds compare against 10**sensor."""
    ratio = np.power(10.0, sensor)
    if forced:
        top = ratio.max(initial=0.0)
        if top <= 0:
            return []
        return np.flatnonzero(ratio >= params.c6 * top).tolist()
    if params.c5 is None:
        return []
    osc = np.flatnonzero(ratio >= params.c5)
    if not len(osc):
        return []
    nbrs = mesh.neighbor[osc].ravel()
    return sorted(set(osc.tolist()) | set(nbrs[nbrs >= 0].tolist()))


def element_means(mesh, u, degree, n_states):
    """(mean states (ne, m), reference volumes (ne,)) of the DG solution."""
    rule = QuadRule(mesh.dim, degree + 2 * (mesh.q - 1))
    w = _reference_weights(mesh, rule)
    U = np.einsum('qj,ejc->eqc', nodal_basis(mesh.dim, degree).eval(rule.points),
                  np.asarray(u).reshape(mesh.n_elems, -1, n_states))
    vol = w.sum(axis=1)
    return np.einsum('eq,eqc->ec', w, U) / vol[:, None], vol


def reinit_values(mesh, u, elements, jumps, degree, n_states, c7):
    """
    Constant state of each listed element: the volume-weighted mean over the element
    and those face neighbors whose mean chi jump is at most c7.
    :param jumps: (ne, nfaces) mean face jumps, NaN on boundary faces
    """
    means, vol = element_means(mesh, u, degree, n_states)
    values = []
    for e in elements:
        patch = [e] + [int(n) for f, n in enumerate(mesh.neighbor[e]) if n >= 0 and abs(jumps[e, f]) <= c7]
        values.append(vol[patch] @ means[patch] / vol[patch].sum())
    return np.array(values).reshape(len(elements), n_states)


def apply_reinit(u, elements, values, degree, dim, n_states):
    ue = np.array(u, dtype=float).reshape(-1, n_basis(dim, degree), n_states)
    ue[elements] = constant_injection(values, degree, dim).reshape(len(elements), -1, n_states)
    return ue.reshape(-1)


def apply_upsilon(problem, state, ev, sqp_params, params, forced=False):
    """
    Modify the accepted iterate: element removal, straightening of ill-conditioned
    elements and re-initialization of oscillatory elements.
    :return: (problem, state, modified)
    """
    if state.k > sqp_params.freeze_iteration:
        return problem, state, False
    model, degree = problem.model, problem.degree
    m = model.n_states
    x = problem.coordinates(state.y)
    mesh = problem.mesh.with_nodes(x)
    u = state.u
    modified = False

    flagged = detect_removal(mesh, x, params) if params.remove else []
    if flagged:
        mesh, u, x, report = remove_elements(mesh, u, x, flagged, problem.boundaries, degree, m, params)
        if report.passes:
            modified = True
            problem = problem.remeshed(mesh)
            for p in report.passes:
                state.events.append((state.k, 'collapse', f"{p.edge[0]}-{p.edge[1]}:{p.kept}",
                                     " ".join(str(e) for e in p.removed)))
        for e in report.skipped:
            state.events.append((state.k, 'collapse_skipped', '', str(e)))

    ill = detect_ill(mesh, x, params)
    if ill:
        x = straighten_elements(mesh, ill, x).reshape(-1)
        mesh = mesh.with_nodes(x)
        modified = True
        logger.info("straightened %d ill-conditioned elements", len(ill))
        state.events.append((state.k, 'straighten', '', " ".join(map(str, ill))))

    if params.c5 is not None and float(np.linalg.norm(ev.r)) > params.c8:
        sensor = shock_sensor(problem.mesh, u, degree, m)
        elements = reinit_sets(mesh, sensor, params, forced)
        if elements:
            jumps = DgAssembler(model, mesh, degree).mean_face_jumps(u, x)
            values = reinit_values(problem.mesh, u, elements, jumps, degree, m, params.c7)
            u = apply_reinit(u, elements, values, degree, mesh.dim, m)
            modified = True
            logger.info("re-initialized %d elements%s", len(elements), " (forced)" if forced else "")
            state.events.append((state.k, 'reinit_forced' if forced else 'reinit', '',
                                 " ".join(map(str, elements))))
            if params.straighten_reinit and mesh.q > 1:
                x = straighten_elements(mesh, elements, x).reshape(-1)

    if modified:
        state.u = u
        state.y = problem.param.invert(x)
    return problem, state, modified


class Robustness:
    """Step modification hook passed to the tracking solve."""
    def __init__(self, params=None):
        self.params = (params or RobustnessParams()).validate()

    @property
    def forced_backtracks(self):
        return self.params.forced_backtracks

    def apply(self, problem, state, ev, sqp_params, forced=False):
        return apply_upsilon(problem, state, ev, sqp_params, self.params, forced)
