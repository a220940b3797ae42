import logging
from collections import namedtuple
from itertools import combinations
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from utilies import RedundantBoundaryError

logger = logging.getLogger(__name__)

NodeConstraint = namedtuple('NodeConstraint', ['B', 'unconstrained', 'constrained', 'A', 'b', 'boundaries'])


class PlanarBoundary:
    """
    A planar boundary piece {x : normal . x = offset}.
    attributes:
        normal: unit outward normal
        offset: plane offset
        tag: boundary tag the piece belongs to (informational)
        extent: optional ((lower corner), (upper corner)) box the piece is confined to
    """
    def __init__(self, normal, offset, tag=None, extent=None):
        self.normal = normal
        self.offset = float(offset)
        self.tag = tag
        self.extent = None if extent is None else np.asarray(extent, dtype=float)

    @property
    def normal(self):
        return self.__normal

    @normal.setter
    def normal(self, value):
        value = np.asarray(value, dtype=float).reshape(-1)
        length = np.linalg.norm(value)
        if length == 0:
            raise ValueError("Boundary normal must be non-zero")
        self.__normal = value / length

    @classmethod
    def through(cls, point, normal, tag=None, extent=None):
        normal = np.asarray(normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        return cls(normal, normal @ np.asarray(point, dtype=float), tag, extent)

    def distance(self, point):
        return abs(self.normal @ np.asarray(point, dtype=float) - self.offset)

    def contains(self, point, tol):
        if self.distance(point) > tol:
            return False
        if self.extent is not None:
            lower, upper = self.extent
            return bool(np.all(point >= lower - tol) and np.all(point <= upper + tol))
        return True


class PlanarBoundarySet:
    """The planar boundary pieces of a domain with a membership tolerance tol = rel_tol * L."""
    def __init__(self, boundaries, length_scale=1.0, rel_tol=1e-8):
        self.boundaries = list(boundaries)
        if length_scale <= 0:
            raise ValueError("Length scale must be positive")
        self.tol = rel_tol * length_scale

    def __len__(self):
        return len(self.boundaries)

    def __getitem__(self, i):
        return self.boundaries[i]

    @classmethod
    def box(cls, lower, upper, rel_tol=1e-8):
        """Sides of an axis-aligned box; 2D tags follow bottom=1, right=2, top=3, left=4."""
        lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        if len(lower) == 1:
            pieces = [PlanarBoundary([-1.0], -lower[0], tag=1), PlanarBoundary([1.0], upper[0], tag=2)]
        else:
            pieces = [PlanarBoundary([0.0, -1.0], -lower[1], tag=1),
                      PlanarBoundary([1.0, 0.0], upper[0], tag=2),
                      PlanarBoundary([0.0, 1.0], upper[1], tag=3),
                      PlanarBoundary([-1.0, 0.0], -lower[0], tag=4)]
        return cls(pieces, float(np.max(upper - lower)), rel_tol)


def classify_node(point, boundaries):
    """
    Indices of the boundaries that pass through ``point``.
    :raise RedundantBoundaryError: if the incident normals are linearly dependent
    """
    point = np.asarray(point, dtype=float)
    incident = [i for i, piece in enumerate(boundaries.boundaries) if piece.contains(point, boundaries.tol)]
    if incident:
        B = np.array([boundaries[i].normal for i in incident])
        if np.linalg.matrix_rank(B) < len(incident):
            raise RedundantBoundaryError(
                f"Boundaries {incident} through node {point.tolist()} have dependent normals")
    return incident


def select_unconstrained(B, dim):
    """
    Split coordinate directions into unconstrained and constrained ones, choosing greedily
    the axes closest to the null space of B (ties to the lowest index).
    :return: (I_u, I_c) index lists
    """
    B = np.asarray(B, dtype=float).reshape(-1, dim)
    n_c = len(B)
    if n_c == 0:
        return list(range(dim)), []
    if n_c >= dim:
        return [], list(range(dim))
    V = scipy.linalg.null_space(B)
    eye = np.eye(dim)
    distance = np.linalg.norm(eye - V @ (V.T @ eye), axis=0)
    order = sorted(range(dim), key=lambda j: (round(float(distance[j]), 12), j))
    for chosen in combinations(order, dim - n_c):
        unconstrained = sorted(chosen)
        constrained = [j for j in range(dim) if j not in unconstrained]
        if abs(np.linalg.det(B[:, constrained])) > 1e-12:
            return unconstrained, constrained
    raise RedundantBoundaryError(f"No admissible coordinate split for constraint rows {B.tolist()}")


def node_constraint(point, boundaries, fixed=False):
    """Affine map x_I = A_I x_I^u + b_I keeping node ``point`` on its incident boundaries."""
    point = np.asarray(point, dtype=float)
    dim = len(point)
    incident = classify_node(point, boundaries)
    B = np.array([boundaries[i].normal for i in incident]).reshape(-1, dim)
    if fixed:
        return NodeConstraint(np.eye(dim), [], list(range(dim)), np.zeros((dim, 0)), point.copy(), incident)
    unconstrained, constrained = select_unconstrained(B, dim)
    eye = np.eye(dim)
    Y, Z = eye[:, constrained], eye[:, unconstrained]
    if not constrained:
        return NodeConstraint(B, unconstrained, constrained, Z, np.zeros(dim), incident)
    BY_inv = np.linalg.inv(B @ Y)
    A = Z - Y @ BY_inv @ (B @ Z)
    b = Y @ BY_inv @ (B @ point)
    return NodeConstraint(B, unconstrained, constrained, A, b, incident)


class ParamMap:
    """
    Block-diagonal affine map x = A y + b from unconstrained coordinates y to the
    stacked physical node coordinates x (node-major, d entries per node).
    """
    def __init__(self, constraints, dim):
        self.constraints = list(constraints)
        self.dim = dim
        rows, cols, vals = [], [], []
        b = np.zeros(len(self.constraints) * dim)
        y_rows = []
        column = 0
        for node, nc in enumerate(self.constraints):
            block = node * dim
            b[block:block + dim] = nc.b
            for k in range(nc.A.shape[1]):
                for i in range(dim):
                    if nc.A[i, k] != 0.0:
                        rows.append(block + i)
                        cols.append(column)
                        vals.append(nc.A[i, k])
                y_rows.append(block + nc.unconstrained[k])
                column += 1
        self.n_x = len(b)
        self.n_y = column
        self.A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_x, self.n_y))
        self.b = b
        self.y_rows = np.array(y_rows, dtype=int)

    @property
    def n_constrained(self):
        return sum(len(nc.constrained) for nc in self.constraints)

    def apply(self, y):
        return self.A @ np.asarray(y, dtype=float) + self.b

    def invert(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.n_x,):
            raise ValueError(f"Expected {self.n_x} coordinates, got {x.size}")
        y = x[self.y_rows]
        residual = float(np.max(np.abs(self.apply(y) - x), initial=0.0))
        if residual > tol:
            logger.warning("coordinates violate boundary constraints by %.3e, projecting", residual)
        return y

    def node_partition(self):
        """Number of unconstrained coordinates per node."""
        return np.array([len(nc.unconstrained) for nc in self.constraints])


def build_param(mesh, boundaries, fixed=None):
    """ParamMap of ``mesh`` built on its reference node coordinates."""
    fixed = mesh.fixed if fixed is None else np.asarray(fixed, dtype=bool)
    constraints = [node_constraint(point, boundaries, bool(flag)) for point, flag in zip(mesh.ref_nodes, fixed)]
    param = ParamMap(constraints, mesh.dim)
    logger.debug("parametrization: N_x = %d, N_y = %d", param.n_x, param.n_y)
    return param


def apply_param(param, y):
    return param.apply(y)


def invert_param(param, x):
    return param.invert(x)
