from enum import Enum
import numpy as np
import scipy.sparse as sp

from quadrature import QuadRule
from simplex_mesh import determinant, jacobians
from utilies import complex_step_jacobian

DISTORTION_CAP = 1e10
POSITIVE_PART_WIDTH = 1e-12


class IdealElement(Enum):
    REFERENCE = 'reference'
    REGULAR = 'regular'


def regular_simplex_jacobian(dim):
    """Jacobian of the affine map from the master simplex onto the unit-volume regular simplex."""
    if dim == 1:
        return np.ones((1, 1))
    side = np.sqrt(4.0 / np.sqrt(3.0))
    return np.array([[side, 0.5 * side], [0.0, 0.5 * np.sqrt(3.0) * side]])


def smooth_positive_part(t, width=POSITIVE_PART_WIDTH):
    return 0.5 * (t + np.sqrt(t * t + width * width))


def distortion_integrand(M):
    """(||M||_F^2 / (d det(M)_+^{2/d}))^2 for (..., d, d) deformation gradients."""
    dim = M.shape[-1]
    frob = np.sum(M * M, axis=(-2, -1))
    ratio = frob / (dim * smooth_positive_part(determinant(M)) ** (2.0 / dim))
    return ratio * ratio


class Distortion:
    """
    Element-wise distortion of the physical mesh with respect to an ideal element,
    the average over the ideal element of the integrand of grad(F) = J_x J_star^{-1}.
    """
    def __init__(self, mesh, ideal=IdealElement.REGULAR):
        self.mesh = mesh
        self.ideal = IdealElement(ideal)
        rule = QuadRule(mesh.dim, 4 * mesh.q)
        self.dpsi = mesh.basis.grad(rule.points)
        if self.ideal is IdealElement.REFERENCE:
            J_star = jacobians(mesh.element_coords(reference=True), self.dpsi)
        else:
            J_star = np.broadcast_to(regular_simplex_jacobian(mesh.dim),
                                     (mesh.n_elems, rule.n_points, mesh.dim, mesh.dim))
        self.inv_star = np.linalg.inv(J_star)
        vol = determinant(J_star) * rule.weights
        self.weights = vol / vol.sum(axis=1, keepdims=True)

    def _values(self, coords, inv_star, weights):
        M = np.einsum('eqij,eqjk->eqik', jacobians(coords, self.dpsi), inv_star)
        value = np.sum(weights * distortion_integrand(M), axis=1)
        return np.where(np.real(value) > DISTORTION_CAP, DISTORTION_CAP, value)

    def values(self, x=None):
        return np.real(self._values(self.mesh.element_coords(x), self.inv_star, self.weights))

    def linearize(self, x=None):
        """(R_msh, dR_msh/dx) with the Jacobian as a CSR matrix of shape (ne, N_x)."""
        mesh = self.mesh
        coords = mesh.element_coords(x)
        ne, ng, dim = coords.shape

        def flat_values(flat):
            return self._values(flat.reshape(ne, ng, dim), self.inv_star, self.weights)

        local = complex_step_jacobian(flat_values, (coords.reshape(ne, ng * dim),), 0)
        cols = (mesh.elements[:, :, None] * dim + np.arange(dim)).reshape(ne, ng * dim)
        rows = np.repeat(np.arange(ne), ng * dim)
        jac = sp.coo_matrix((local.ravel(), (rows, cols.ravel())), shape=(ne, mesh.n_nodes * dim)).tocsr()
        return self.values(x), jac


def element_distortion(mesh, e, x=None, ideal=IdealElement.REGULAR):
    return float(Distortion(mesh, ideal).values(x)[e])


def assemble_distortion(mesh, x=None, ideal=IdealElement.REGULAR):
    """(R_msh vector, dR_msh/dx sparse)."""
    return Distortion(mesh, ideal).linearize(x)
