import logging
from collections import defaultdict
import numpy as np
from scipy.spatial import Delaunay

from boundary_param import PlanarBoundary, PlanarBoundarySet
from quadrature import FACE_VERTICES, TRIANGLE_EDGES, n_basis, simplex_nodes
from simplex_mesh import SimplexMesh
from utilies import MeshTopologyError

logger = logging.getLogger(__name__)

DIAMOND_VERTICES = np.array([[1.5, 0.75], [2.25, 1.0], [3.0, 0.75], [2.25, 0.5]])
CHANNEL = ((0.0, 0.0), (5.0, 1.5))


def _boundary_faces(cells, dim, tag_of):
    """Faces with one owner as (element, local face, tag) rows; ``tag_of(vertex_ids)`` names the tag."""
    owners = defaultdict(list)
    for e, row in enumerate(cells):
        for f in range(dim + 1):
            key = tuple(sorted(int(row[v]) for v in FACE_VERTICES[dim][f]))
            owners[key].append((e, f))
    faces = []
    for key, incident in owners.items():
        if len(incident) == 1:
            e, f = incident[0]
            faces.append((e, f, tag_of(key)))
    return sorted(faces)


def elevate(dim, q, points, cells):
    """
    Straight-sided degree-q nodes on a vertex mesh; edge nodes are shared between
    neighbors, interior nodes are element-local.
    :return: (nodes, elements)
    """
    points = np.asarray(points, dtype=float).reshape(-1, dim)
    cells = np.asarray(cells, dtype=int)
    if q == 1:
        return points.copy(), cells.copy()
    local = simplex_nodes(dim, q)
    bary = np.column_stack([1.0 - local.sum(axis=1), local])
    nodes = list(points)
    index = {}
    elements = np.zeros((len(cells), n_basis(dim, q)), dtype=int)
    for e, row in enumerate(cells):
        coords = bary @ points[row]
        elements[e, :dim + 1] = row
        edges = [(0, 1)] if dim == 1 else TRIANGLE_EDGES
        slot = dim + 1
        for a, b in edges:
            va, vb = int(row[a]), int(row[b])
            for i in range(1, q):
                key = (va, vb, i) if va < vb else (vb, va, q - i)
                if key not in index:
                    index[key] = len(nodes)
                    nodes.append(coords[slot])
                elements[e, slot] = index[key]
                slot += 1
        for k in range(slot, len(local)):
            elements[e, k] = len(nodes)
            nodes.append(coords[k])
    return np.array(nodes), elements


def build_mesh(dim, q, points, cells, tag_of, fixed_points=()):
    """SimplexMesh whose reference and physical coordinates both equal the generated nodes."""
    points = np.asarray(points, dtype=float).reshape(-1, dim)
    cells = np.asarray(cells, dtype=int)
    bfaces = _boundary_faces(cells, dim, lambda key: tag_of(points[list(key)].mean(axis=0)))
    nodes, elements = elevate(dim, q, points, cells)
    fixed = np.zeros(len(nodes), dtype=bool)
    for point in fixed_points:
        hit = np.flatnonzero(np.linalg.norm(points - np.asarray(point, dtype=float), axis=1) < 1e-12)
        if not len(hit):
            raise MeshTopologyError(f"Fixed point {point} is not a mesh vertex")
        fixed[hit] = True
    return SimplexMesh(dim, q, nodes, nodes, elements, bfaces, fixed)


def box_tagger(lower, upper, tol=1e-10):
    """Tag 1 bottom, 2 right, 3 top, 4 left (1 left, 2 right in 1D)."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)

    def tag_of(mid):
        if len(lower) == 1:
            return 1 if abs(mid[0] - lower[0]) < tol else 2
        for tag, hit in ((1, abs(mid[1] - lower[1]) < tol), (2, abs(mid[0] - upper[0]) < tol),
                         (3, abs(mid[1] - upper[1]) < tol), (4, abs(mid[0] - lower[0]) < tol)):
            if hit:
                return tag
        raise MeshTopologyError(f"Boundary face at {mid.tolist()} is not on the box")
    return tag_of


def segment_mesh(lower, upper, n, q=1, fixed_points=()):
    if n < 1:
        raise ValueError("Number of elements must be positive")
    points = np.linspace(lower, upper, n + 1)[:, None]
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return build_mesh(1, q, points, cells, box_tagger([lower], [upper]), fixed_points)


def rectangle_mesh(lower, upper, nx, ny, q=1, pattern='right', fixed_points=()):
    """
    Structured nx x ny grid of squares, each cut into two triangles along the diagonal
    through its lower-left corner ('right'), its lower-right corner ('left') or
    alternating between the two ('alternate').
    """
    if nx < 1 or ny < 1:
        raise ValueError("Grid sizes must be positive")
    if pattern not in ('right', 'left', 'alternate'):
        raise ValueError(f"Unknown diagonal pattern {pattern!r}")
    xs = np.linspace(lower[0], upper[0], nx + 1)
    ys = np.linspace(lower[1], upper[1], ny + 1)
    points = np.array([(x, y) for y in ys for x in xs])
    vid = lambda i, j: j * (nx + 1) + i
    cells = []
    for j in range(ny):
        for i in range(nx):
            p00, p10, p01, p11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cut = pattern if pattern != 'alternate' else ('right' if (i + j) % 2 == 0 else 'left')
            if cut == 'right':
                cells += [(p00, p10, p11), (p00, p11, p01)]
            else:
                cells += [(p00, p10, p01), (p10, p11, p01)]
    return build_mesh(2, q, points, cells, box_tagger(lower, upper), fixed_points)


def sod_mesh(q=1, nx=10, ny=5):
    """Space-time slab (0, 1) x (0, 0.2) with the membrane node (0.5, 0) fixed."""
    if nx % 2:
        raise ValueError("nx must be even so that z = 0.5 is a vertex")
    return rectangle_mesh((0.0, 0.0), (1.0, 0.2), nx, ny, q, 'right', fixed_points=[(0.5, 0.0)])


def _diamond_distance(points):
    d = np.full(len(points), np.inf)
    for k in range(4):
        a, b = DIAMOND_VERTICES[k], DIAMOND_VERTICES[(k + 1) % 4]
        t = np.clip((points - a) @ (b - a) / ((b - a) @ (b - a)), 0.0, 1.0)
        d = np.minimum(d, np.linalg.norm(points - (a + t[:, None] * (b - a)), axis=1))
    return d


def _diamond_interior(points, tol=0.0):
    """Points strictly inside the diamond."""
    inside = np.ones(len(points), dtype=bool)
    for piece in diamond_boundaries():
        inside &= points @ piece.normal > piece.offset + tol
    return inside


def diamond_boundaries():
    """The four diamond faces, normals pointing into the diamond (out of the flow domain)."""
    center = DIAMOND_VERTICES.mean(axis=0)
    pieces = []
    for k in range(4):
        a, b = DIAMOND_VERTICES[k], DIAMOND_VERTICES[(k + 1) % 4]
        t = b - a
        normal = np.array([t[1], -t[0]])
        if normal @ (center - a) < 0:
            normal = -normal
        extent = (np.minimum(a, b), np.maximum(a, b))
        pieces.append(PlanarBoundary.through(a, normal, tag=5, extent=extent))
    return pieces


def diamond_mesh(q=1, h=0.25, edge_points=3):
    """
    Channel (0, 5) x (0, 1.5) around the diamond: grid points of spacing h away from the
    diamond plus ``edge_points`` segments per diamond side, Delaunay-triangulated.
    Tags: 1 bottom wall, 2 outflow, 3 top wall, 4 inflow, 5 diamond.
    """
    (x0, y0), (x1, y1) = CHANNEL
    nx, ny = int(round((x1 - x0) / h)), int(round((y1 - y0) / h))
    grid = np.array([(x, y) for y in np.linspace(y0, y1, ny + 1) for x in np.linspace(x0, x1, nx + 1)])
    spacing = np.linalg.norm(DIAMOND_VERTICES[1] - DIAMOND_VERTICES[0]) / edge_points
    keep = (_diamond_distance(grid) > 0.6 * spacing) & ~_diamond_interior(grid)
    rim = [DIAMOND_VERTICES[k] + (i / edge_points) * (DIAMOND_VERTICES[(k + 1) % 4] - DIAMOND_VERTICES[k])
           for k in range(4) for i in range(edge_points)]
    points = np.vstack([grid[keep], rim])
    tri = Delaunay(points).simplices
    centroids = points[tri].mean(axis=1)
    tri = tri[~_diamond_interior(centroids, 1e-12)]
    edges = points[tri[:, 1:]] - points[tri[:, :1]]
    area = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
    tri = np.where((area < 0)[:, None], tri[:, [0, 2, 1]], tri)
    tri = tri[np.abs(area) > 1e-12]
    box = box_tagger((x0, y0), (x1, y1))

    def tag_of(mid):
        if _diamond_distance(mid[None, :])[0] < 1e-10:
            return 5
        return box(mid)

    mesh = build_mesh(2, q, points, tri, tag_of)
    logger.debug("diamond mesh: %d elements, %d nodes", mesh.n_elems, mesh.n_nodes)
    return mesh


def diamond_boundary_set():
    channel = PlanarBoundarySet.box(*CHANNEL)
    return PlanarBoundarySet(list(channel.boundaries) + diamond_boundaries(), length_scale=5.0)


def refine(mesh):
    """
    Uniform refinement of a straight-sided mesh: every triangle into four, every
    segment into two. Boundary tags and fixed vertices are inherited.
    """
    dim = mesh.dim
    vert_ids = np.unique(mesh.vertices)
    compact = -np.ones(mesh.n_nodes, dtype=int)
    compact[vert_ids] = np.arange(len(vert_ids))
    points = list(mesh.ref_nodes[vert_ids])
    cells = compact[mesh.vertices]
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = len(points)
            points.append(0.5 * (points[a] + points[b]))
        return midpoint[key]

    children = []
    for row in cells:
        if dim == 1:
            m = mid(row[0], row[1])
            children += [(row[0], m), (m, row[1])]
        else:
            v0, v1, v2 = (int(v) for v in row)
            m01, m12, m20 = mid(v0, v1), mid(v1, v2), mid(v2, v0)
            children += [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]

    face_tags = {}
    for e, f, tag in mesh.boundary_faces:
        ids = tuple(int(cells[e, v]) for v in FACE_VERTICES[dim][f])
        if dim == 1:
            face_tags[ids] = tag
        else:
            m = midpoint[(min(ids), max(ids))]
            face_tags[tuple(sorted((ids[0], m)))] = tag
            face_tags[tuple(sorted((m, ids[1])))] = tag

    points = np.array(points)
    fixed_points = mesh.ref_nodes[vert_ids][mesh.fixed[vert_ids]]
    children = np.array(children, dtype=int)
    bfaces = _boundary_faces(children, dim, lambda key: face_tags[key])
    nodes, elements = elevate(dim, mesh.q, points, children)
    fixed = np.zeros(len(nodes), dtype=bool)
    for point in fixed_points:
        fixed[np.flatnonzero(np.linalg.norm(nodes - point, axis=1) < 1e-12)] = True
    return SimplexMesh(dim, mesh.q, nodes, nodes, elements, bfaces, fixed)
