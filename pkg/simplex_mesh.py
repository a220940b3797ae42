import logging
from collections import namedtuple, defaultdict
from pathlib import Path
import numpy as np

from quadrature import (FACE_VERTICES, QuadRule, TRIANGLE_EDGES, edge_node_indices,
                        n_basis, nodal_basis)
from utilies import CollapseRejected, MeshTopologyError

logger = logging.getLogger(__name__)

Adjacency = namedtuple('Adjacency', ['neighbor', 'neighbor_face', 'face_tag', 'n_interior_faces'])
ElementMeasures = namedtuple('ElementMeasures', ['v0', 'v', 'l_min', 'l_max', 'g_inf', 'g_sup'])
NodeMerge = namedtuple('NodeMerge', ['node_map', 'element_map', 'removed_elements', 'kept', 'dropped'])


def _face_key(vertex_ids):
    return tuple(sorted(int(v) for v in vertex_ids))


def face_vertex_ids(elements, dim, e, f):
    return elements[e, list(FACE_VERTICES[dim][f])]


def build_adjacency(elements, dim, boundary_faces, n_nodes=None):
    """
    Match element faces by their sorted vertex tuples.
    :param elements: (ne, nloc) connectivity, vertices first
    :param dim: mesh dimension
    :param boundary_faces: (nbf, 3) rows of (element, local face, tag)
    :param n_nodes: number of nodes, used for the index range check
    :return: Adjacency with (ne, dim+1) neighbor / neighbor_face / face_tag arrays
    """
    elements = np.asarray(elements, dtype=int)
    boundary_faces = np.asarray(boundary_faces, dtype=int).reshape(-1, 3)
    n_elems, n_faces = len(elements), dim + 1
    if np.any(elements < 0) or (n_nodes is not None and np.any(elements >= n_nodes)):
        raise MeshTopologyError("Element connectivity references a node out of range")

    incident = defaultdict(list)
    for e in range(n_elems):
        for f in range(n_faces):
            incident[_face_key(face_vertex_ids(elements, dim, e, f))].append((e, f))

    neighbor = -np.ones((n_elems, n_faces), dtype=int)
    neighbor_face = -np.ones((n_elems, n_faces), dtype=int)
    face_tag = -np.ones((n_elems, n_faces), dtype=int)
    n_interior = 0
    for key, owners in incident.items():
        if len(owners) > 2:
            raise MeshTopologyError(f"Face {key} is shared by {len(owners)} elements")
        if len(owners) == 2:
            (e0, f0), (e1, f1) = owners
            neighbor[e0, f0], neighbor_face[e0, f0] = e1, f1
            neighbor[e1, f1], neighbor_face[e1, f1] = e0, f0
            n_interior += 1

    for e, f, tag in boundary_faces:
        if not (0 <= e < n_elems and 0 <= f < n_faces):
            raise MeshTopologyError(f"Boundary face ({e}, {f}) does not exist")
        if neighbor[e, f] >= 0:
            raise MeshTopologyError(f"Boundary face ({e}, {f}) is an interior face")
        if face_tag[e, f] >= 0:
            raise MeshTopologyError(f"Boundary face ({e}, {f}) carries more than one tag")
        if tag < 0:
            raise MeshTopologyError("Boundary tags must be non-negative")
        face_tag[e, f] = tag

    untagged = np.argwhere((neighbor < 0) & (face_tag < 0))
    if len(untagged):
        e, f = untagged[0]
        raise MeshTopologyError(f"Boundary face ({e}, {f}) has no tag")
    return Adjacency(neighbor, neighbor_face, face_tag, n_interior)


def cofactor(jac):
    """det(J) J^{-T}, written without division so it stays polynomial in J."""
    dim = jac.shape[-1]
    if dim == 1:
        return np.ones_like(jac)
    if dim == 2:
        cof = np.empty_like(jac)
        cof[..., 0, 0] = jac[..., 1, 1]
        cof[..., 0, 1] = -jac[..., 1, 0]
        cof[..., 1, 0] = -jac[..., 0, 1]
        cof[..., 1, 1] = jac[..., 0, 0]
        return cof
    return np.linalg.det(jac)[..., None, None] * np.swapaxes(np.linalg.inv(jac), -1, -2)


def determinant(jac):
    dim = jac.shape[-1]
    if dim == 1:
        return jac[..., 0, 0]
    if dim == 2:
        return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return np.linalg.det(jac)


def cofactor_derivative(dim):
    """Constant tensor dC[j, k, l, m] = d cof(J)_{jk} / d J_{lm} (cofactor is linear for d <= 2)."""
    dc = np.zeros((dim, dim, dim, dim))
    if dim == 2:
        dc[0, 0, 1, 1] = 1.0
        dc[0, 1, 1, 0] = -1.0
        dc[1, 0, 0, 1] = -1.0
        dc[1, 1, 0, 0] = 1.0
    return dc


def jacobians(coords, dpsi):
    """J[e, p, i, j] = d x_i / d xi_j from element node coordinates (ne, ng, d) and basis gradients (np, ng, d)."""
    return np.einsum('ebi,pbj->epij', coords, dpsi)


class SimplexMesh:
    """
    A degree-q simplicial mesh with reference and physical node coordinates.
    attributes:
        dim: spatial dimension (1 or 2)
        q: geometry degree
        ref_nodes: (N_v, d) reference coordinates
        nodes: (N_v, d) physical coordinates
        elements: (n_elems, nloc) node IDs, vertex nodes first
        boundary_faces: (nbf, 3) rows of (element, local face, tag)
        fixed: (N_v,) fixed-node flags
    """
    def __init__(self, dim, q, ref_nodes, nodes, elements, boundary_faces, fixed=None,
                 check_reference=True, adjacency=None):
        if dim not in (1, 2):
            raise ValueError("Mesh dimension must be 1 or 2")
        if q < 1:
            raise ValueError("Geometry degree must be positive")
        self.dim = dim
        self.q = q
        self.ref_nodes = np.array(ref_nodes, dtype=float).reshape(-1, dim)
        self.nodes = np.array(nodes, dtype=float).reshape(-1, dim)
        self.elements = np.array(elements, dtype=int).reshape(-1, n_basis(dim, q))
        self.boundary_faces = np.array(boundary_faces, dtype=int).reshape(-1, 3)
        if self.ref_nodes.shape != self.nodes.shape:
            raise ValueError("Reference and physical node arrays must have the same shape")
        self.fixed = np.zeros(len(self.nodes), dtype=bool) if fixed is None else np.array(fixed, dtype=bool)
        if self.fixed.shape != (len(self.nodes),):
            raise ValueError("Fixed flags must have one entry per node")
        self.basis = nodal_basis(dim, q)
        self.adjacency = adjacency if adjacency is not None else build_adjacency(
            self.elements, dim, self.boundary_faces, len(self.nodes))
        if check_reference:
            g0 = self.reference_jacobian_samples()
            if np.any(g0 <= 0):
                bad = int(np.argwhere(g0 <= 0)[0][0])
                raise MeshTopologyError(f"Reference element {bad} is inverted or degenerate")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elems(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return self.dim + 1

    @property
    def vertices(self):
        return self.elements[:, :self.dim + 1]

    @property
    def neighbor(self):
        return self.adjacency.neighbor

    @property
    def neighbor_face(self):
        return self.adjacency.neighbor_face

    @property
    def face_tag(self):
        return self.adjacency.face_tag

    def with_nodes(self, nodes):
        """Same topology and reference mesh, new physical coordinates."""
        return SimplexMesh(self.dim, self.q, self.ref_nodes, np.asarray(nodes).reshape(-1, self.dim),
                           self.elements, self.boundary_faces, self.fixed,
                           check_reference=False, adjacency=self.adjacency)

    def with_reference(self, ref_nodes):
        return SimplexMesh(self.dim, self.q, np.asarray(ref_nodes).reshape(-1, self.dim), self.nodes,
                           self.elements, self.boundary_faces, self.fixed,
                           check_reference=False, adjacency=self.adjacency)

    def element_coords(self, x=None, reference=False):
        nodes = self.ref_nodes if reference else (self.nodes if x is None else np.asarray(x).reshape(-1, self.dim))
        return nodes[self.elements]

    def face_local_nodes(self, f):
        """Local indices of the geometry nodes on local face f."""
        verts = FACE_VERTICES[self.dim][f]
        if self.dim == 1:
            return [verts[0]]
        return edge_node_indices(2, self.q, verts[0], verts[1])

    def boundary_node_ids(self):
        ids = set()
        for e, f, _ in self.boundary_faces:
            ids.update(int(i) for i in self.elements[e, self.face_local_nodes(f)])
        return ids

    def elements_of_node(self):
        owners = defaultdict(set)
        for e, row in enumerate(self.elements):
            for node in row:
                owners[int(node)].add(e)
        return owners

    def reference_jacobian_samples(self):
        sample = _sample_points(self.dim, self.q)
        jac = jacobians(self.element_coords(reference=True), self.basis.grad(sample))
        return determinant(jac)

    def edges(self):
        """Unique vertex edges as sorted (a, b) pairs."""
        pairs = set()
        local = [(0, 1)] if self.dim == 1 else TRIANGLE_EDGES
        for row in self.vertices:
            for i, j in local:
                pairs.add(tuple(sorted((int(row[i]), int(row[j])))))
        return sorted(pairs)


def _sample_points(dim, q):
    rule = QuadRule(dim, 2 * q)
    return np.vstack([rule.points, nodal_basis(dim, q).nodes])


def mapping_jacobian(mesh, e, xi, x=None):
    """
    Deformation gradient G of the reference-to-physical map at master point xi of element e.
    :return: (G, g) with g = det(G)
    """
    dpsi = mesh.basis.grad(np.atleast_2d(xi))
    jac_x = jacobians(mesh.element_coords(x)[[e]], dpsi)[0, 0]
    jac_ref = jacobians(mesh.element_coords(reference=True)[[e]], dpsi)[0, 0]
    G = jac_x @ np.linalg.inv(jac_ref)
    return G, float(np.linalg.det(G))


def all_element_measures(mesh, x=None):
    """ElementMeasures of every element as arrays."""
    dim, q = mesh.dim, mesh.q
    rule = QuadRule(dim, 2 * q)
    dpsi = mesh.basis.grad(rule.points)
    det_ref = determinant(jacobians(mesh.element_coords(reference=True), dpsi))
    det_phys = determinant(jacobians(mesh.element_coords(x), dpsi))
    v0 = det_ref @ rule.weights
    v = det_phys @ rule.weights

    sample = _sample_points(dim, q)
    dpsi_s = mesh.basis.grad(sample)
    g = (determinant(jacobians(mesh.element_coords(x), dpsi_s))
         / determinant(jacobians(mesh.element_coords(reference=True), dpsi_s)))

    coords = mesh.element_coords(x)
    local = [(0, 1)] if dim == 1 else TRIANGLE_EDGES
    lengths = np.stack([np.linalg.norm(coords[:, j] - coords[:, i], axis=1) for i, j in local], axis=1)
    return ElementMeasures(v0, v, lengths.min(axis=1), lengths.max(axis=1), g.min(axis=1), g.max(axis=1))


def element_measures(mesh, e, x=None):
    """(v0, v, l_min, l_max, g_inf, g_sup) of element e."""
    measures = all_element_measures(mesh, x)
    return ElementMeasures(*(float(m[e]) for m in measures))


def _barycentric(points):
    points = np.atleast_2d(points)
    return np.column_stack([1.0 - points.sum(axis=1), points])


def straighten_elements(mesh, elements, x=None, reference=False):
    """
    Reset the high-order nodes of the listed elements to the affine interpolation of
    their vertices. Nodes shared with other elements move if any listed element owns them.
    :return: new (N_v, d) coordinate array
    """
    nodes = np.array(mesh.ref_nodes if reference else (mesh.nodes if x is None else x), dtype=float)
    nodes = nodes.reshape(-1, mesh.dim)
    if mesh.q == 1:
        return nodes
    lam = _barycentric(mesh.basis.nodes)
    for e in np.atleast_1d(elements):
        ids = mesh.elements[e]
        verts = nodes[ids[:mesh.dim + 1]]
        nodes[ids[mesh.dim + 1:]] = lam[mesh.dim + 1:] @ verts
    return nodes


def straighten_element(mesh, e, x=None):
    """Physical coordinates with element e made straight-sided."""
    return straighten_elements(mesh, [e], x)


def collapse_edge(mesh, a, b, keep):
    """
    Remove every element containing the vertex edge (a, b) by merging its endpoints
    into ``keep``. High-order nodes of the merged faces are unified.
    :return: (new SimplexMesh, NodeMerge)
    """
    if keep not in (a, b):
        raise ValueError("The kept node must be an endpoint of the edge")
    drop = b if keep == a else a
    dim, q = mesh.dim, mesh.q
    verts = mesh.vertices
    has_a = np.any(verts == a, axis=1)
    has_b = np.any(verts == b, axis=1)
    incident = np.flatnonzero(has_a & has_b)
    if len(incident) == 0:
        raise CollapseRejected(f"({a}, {b}) is not an edge of the mesh")
    survivors = np.flatnonzero(~(has_a & has_b))
    if len(survivors) == 0:
        raise CollapseRejected("Collapse would remove every element")
    if mesh.fixed[drop]:
        raise CollapseRejected(f"Node {drop} is fixed")

    boundary = mesh.boundary_node_ids()
    if len(incident) > 1 and a in boundary and b in boundary:
        raise CollapseRejected(f"Interior edge ({a}, {b}) joins two boundary nodes")
    if dim == 2:
        opposite = {int(v) for e in incident for v in verts[e] if v not in (a, b)}
        ring_a = set(verts[has_a].ravel().tolist()) - {a}
        ring_b = set(verts[has_b].ravel().tolist()) - {b}
        if (ring_a & ring_b) - {a, b} != opposite:
            raise CollapseRejected(f"Edge ({a}, {b}) fails the link condition")

    node_map = np.arange(mesh.n_nodes)
    node_map[drop] = keep
    if dim == 2 and q >= 2:
        for e in incident:
            row = list(verts[e])
            l_drop, l_keep = row.index(drop), row.index(keep)
            l_c = 3 - l_drop - l_keep
            old = mesh.elements[e, edge_node_indices(2, q, l_drop, l_c)]
            new = mesh.elements[e, edge_node_indices(2, q, l_keep, l_c)]
            node_map[old[1:-1]] = new[1:-1]

    merged = node_map[mesh.elements[survivors]]
    keys = [_face_key(row[:dim + 1]) for row in merged]
    if any(len(set(k)) < dim + 1 for k in keys):
        raise CollapseRejected("Collapse creates an element with repeated vertices")
    if len(set(keys)) < len(keys):
        raise CollapseRejected("Collapse creates a duplicate element")

    old_tags = {}
    for e, f, tag in mesh.boundary_faces:
        key = _face_key(node_map[face_vertex_ids(mesh.elements, dim, e, f)])
        if len(set(key)) == len(key):
            old_tags.setdefault(key, tag)

    used = np.unique(merged)
    compact = -np.ones(mesh.n_nodes, dtype=int)
    compact[used] = np.arange(len(used))
    elements = compact[merged]

    incident_faces = defaultdict(list)
    for e in range(len(elements)):
        for f in range(dim + 1):
            incident_faces[_face_key(face_vertex_ids(merged, dim, e, f))].append((e, f))
    boundary_faces = []
    for key, owners in incident_faces.items():
        if len(owners) > 2:
            raise CollapseRejected("Collapse creates a non-manifold face")
        if len(owners) == 1:
            if key not in old_tags:
                raise CollapseRejected("Collapse exposes an untagged boundary face")
            boundary_faces.append((owners[0][0], owners[0][1], old_tags[key]))
    boundary_faces.sort()

    new_mesh = SimplexMesh(dim, q, mesh.ref_nodes[used], mesh.nodes[used], elements,
                           boundary_faces, mesh.fixed[used], check_reference=False)
    affected = np.flatnonzero(np.any(new_mesh.vertices == compact[keep], axis=1))
    if np.any(_vertex_orientation(new_mesh, affected, reference=True) <= 0):
        raise CollapseRejected("Collapse inverts a reference element")

    element_map = -np.ones(mesh.n_elems, dtype=int)
    element_map[survivors] = np.arange(len(survivors))
    final_map = np.where(node_map >= 0, compact[node_map], -1)
    logger.debug("collapsed edge (%d, %d) onto %d, removed elements %s", a, b, keep, incident.tolist())
    return new_mesh, NodeMerge(final_map, element_map, incident, keep, drop)


def _vertex_orientation(mesh, elements, reference=False):
    """Signed volume of the straight simplex spanned by the vertices of each listed element."""
    nodes = mesh.ref_nodes if reference else mesh.nodes
    verts = nodes[mesh.vertices[elements]]
    edges = np.swapaxes(verts[:, 1:] - verts[:, :1], 1, 2)
    return determinant(edges)


def write_mesh(mesh, path):
    """Plain-text mesh file with 17 significant digits."""
    path = Path(path)
    lines = [f"{mesh.dim} {mesh.q} {mesh.n_nodes} {mesh.n_elems} {len(mesh.boundary_faces)}"]
    fmt = lambda values: " ".join(f"{v:.17g}" for v in values)
    for ref, phys in zip(mesh.ref_nodes, mesh.nodes):
        lines.append(fmt(np.concatenate([ref, phys])))
    lines += [" ".join(str(i) for i in row) for row in mesh.elements]
    lines += [f"{e} {f} {t}" for e, f, t in mesh.boundary_faces]
    lines += [str(i) for i in np.flatnonzero(mesh.fixed)]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"Could not write mesh file {path}: {exc}") from exc
    return path


def read_mesh(path):
    path = Path(path)
    try:
        rows = [line.split() for line in path.read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise OSError(f"Could not read mesh file {path}: {exc}") from exc
    try:
        dim, q, n_nodes, n_elems, n_bfaces = (int(v) for v in rows[0])
        node_rows = np.array(rows[1:1 + n_nodes], dtype=float)
        start = 1 + n_nodes
        elements = np.array(rows[start:start + n_elems], dtype=int)
        start += n_elems
        bfaces = np.array(rows[start:start + n_bfaces], dtype=int).reshape(-1, 3)
        fixed_ids = np.array([int(r[0]) for r in rows[start + n_bfaces:]], dtype=int)
    except (ValueError, IndexError) as exc:
        raise MeshTopologyError(f"Malformed mesh file {path}: {exc}") from exc
    fixed = np.zeros(n_nodes, dtype=bool)
    fixed[fixed_ids] = True
    return SimplexMesh(dim, q, node_rows[:, :dim], node_rows[:, dim:], elements, bfaces, fixed)
