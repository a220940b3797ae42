import math
from functools import lru_cache
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

# master simplex vertices; local face f is the face opposite vertex f
MASTER_VERTICES = {
    1: np.array([[0.0], [1.0]]),
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
}
FACE_VERTICES = {
    1: ((1,), (0,)),
    2: ((1, 2), (2, 0), (0, 1)),
}
# outward normal of each master face scaled by the face measure per unit face parameter
FACE_NORMALS = {
    1: np.array([[1.0], [-1.0]]),
    2: np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
}
# local edges of a triangle in the order their high-order nodes are numbered
TRIANGLE_EDGES = ((0, 1), (1, 2), (2, 0))


def simplex_volume(dim):
    return 1.0 / math.factorial(dim)


def n_basis(dim, degree):
    return math.comb(degree + dim, dim)


class QuadRule:
    """
    Quadrature rule on the master simplex.
    attributes:
        dim: dimension of the simplex (0 gives the single-point rule used on 1D faces)
        degree: polynomial degree integrated exactly
        points: (nq, dim) quadrature points
        weights: (nq,) positive weights summing to the simplex volume
    """
    def __init__(self, dim, degree):
        if dim not in (0, 1, 2):
            raise ValueError("Quadrature dimension must be 0, 1 or 2")
        if degree < 0:
            raise ValueError("Quadrature degree must be non-negative")
        self.dim = dim
        self.degree = degree
        self.points, self.weights = _collapsed_rule(dim, degree)

    @property
    def n_points(self):
        return len(self.weights)

    def integrate(self, values):
        """Integrate values tabulated at the points (first axis)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_segment(n):
    t, w = leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _collapsed_rule(dim, degree):
    n = max(1, math.ceil((degree + 1) / 2))
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    if dim == 1:
        x, w = _gauss_segment(n)
        return x[:, None], w
    # Duffy collapse of the unit square onto the triangle, Gauss-Jacobi in the
    # collapsed direction absorbs the (1 - a) Jacobian
    t, wj = roots_jacobi(n, 1.0, 0.0)
    a = 0.5 * (t + 1.0)
    wa = 0.25 * wj
    b, wb = _gauss_segment(n)
    aa, bb = np.meshgrid(a, b, indexing='ij')
    points = np.column_stack([aa.ravel(), (bb * (1.0 - aa)).ravel()])
    weights = np.outer(wa, wb).ravel()
    return points, weights


def face_points(dim, face, s):
    """
    Map face parameters ``s`` (nq, dim-1) onto master coordinates of local face ``face``.
    """
    verts = MASTER_VERTICES[dim][list(FACE_VERTICES[dim][face])]
    if dim == 1:
        return np.repeat(verts, len(s), axis=0)
    s = np.asarray(s).reshape(-1)
    return verts[0] + s[:, None] * (verts[1] - verts[0])


def monomial_exponents(dim, degree):
    if dim == 1:
        return [(i,) for i in range(degree + 1)]
    return [(i, t - i) for t in range(degree + 1) for i in range(t, -1, -1)]


@lru_cache(maxsize=None)
def simplex_nodes(dim, degree):
    """
    Equispaced nodes on the master simplex: vertices, then edge nodes (edges in
    ``TRIANGLE_EDGES`` order, oriented first to second vertex), then interior nodes.
    """
    verts = MASTER_VERTICES[dim]
    if degree == 0:
        return verts.mean(axis=0, keepdims=True)
    nodes = [v for v in verts]
    if dim == 1:
        nodes += [np.array([i / degree]) for i in range(1, degree)]
        return np.array(nodes)
    for a, b in TRIANGLE_EDGES:
        nodes += [verts[a] + (i / degree) * (verts[b] - verts[a]) for i in range(1, degree)]
    for j in range(1, degree - 1):
        for i in range(1, degree - j):
            nodes.append(np.array([i / degree, j / degree]))
    return np.array(nodes)


def edge_node_indices(dim, degree, a, b):
    """
    Local indices of the nodes on the element edge between local vertices a and b,
    endpoints included, ordered from a to b.
    """
    if dim == 1:
        return [a] + (list(range(2, degree + 1)) if (a, b) == (0, 1) else list(range(degree, 1, -1))) + [b]
    for k, (i, j) in enumerate(TRIANGLE_EDGES):
        inner = [3 + k * (degree - 1) + t for t in range(degree - 1)]
        if (i, j) == (a, b):
            return [a] + inner + [b]
        if (j, i) == (a, b):
            return [a] + inner[::-1] + [b]
    raise ValueError(f"({a}, {b}) is not an edge of the triangle")


class NodalBasis:
    """
    Lagrange basis of total degree ``degree`` on the master simplex, built from the
    monomial Vandermonde matrix at the equispaced nodes.
    attributes:
        dim, degree
        nodes: (nb, dim) node locations
    """
    def __init__(self, dim, degree):
        if degree < 0:
            raise ValueError("Basis degree must be non-negative")
        self.dim = dim
        self.degree = degree
        self.nodes = simplex_nodes(dim, degree)
        self.exponents = np.array(monomial_exponents(dim, degree))
        vandermonde = self._monomials(self.nodes)
        self.coefficients = np.linalg.inv(vandermonde)

    @property
    def size(self):
        return len(self.nodes)

    def _monomials(self, points):
        points = np.atleast_2d(points)
        return np.prod(points[:, None, :] ** self.exponents[None, :, :], axis=2)

    def _monomial_gradients(self, points):
        points = np.atleast_2d(points)
        grads = np.zeros((len(points), len(self.exponents), self.dim))
        for k in range(self.dim):
            powers = self.exponents.copy()
            factor = powers[:, k].astype(float)
            powers[:, k] = np.maximum(powers[:, k] - 1, 0)
            grads[:, :, k] = factor * np.prod(points[:, None, :] ** powers[None, :, :], axis=2)
        return grads

    def eval(self, points):
        """(npts, nb) basis values."""
        return self._monomials(points) @ self.coefficients

    def grad(self, points):
        """(npts, nb, dim) basis gradients with respect to master coordinates."""
        return np.einsum('pmk,mb->pbk', self._monomial_gradients(points), self.coefficients)


@lru_cache(maxsize=None)
def nodal_basis(dim, degree):
    return NodalBasis(dim, degree)
