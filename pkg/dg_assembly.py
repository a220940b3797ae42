import logging
from collections import namedtuple
from functools import lru_cache
import numpy as np
import scipy.sparse as sp

from quadrature import FACE_NORMALS, FACE_VERTICES, QuadRule, face_points, n_basis, nodal_basis
from simplex_mesh import cofactor, cofactor_derivative, determinant
from utilies import InvertedElementError, complex_step_jacobian

logger = logging.getLogger(__name__)

ResidualJacobians = namedtuple('ResidualJacobians', ['value', 'du', 'dx'])
VolumeTables = namedtuple('VolumeTables', ['weights', 'phi', 'theta', 'dtheta', 'psi', 'dpsi', 'dcof'])
FaceTables = namedtuple('FaceTables', ['weights', 'points', 'phi', 'theta', 'psi', 'dpsi', 'da', 'neighbor_phi'])


class DgSpace:
    """
    Piecewise polynomials of total degree ``degree`` with ``n_states`` components.
    Global index of (element e, local basis i, component c) is (e nb + i) m + c.
    """
    def __init__(self, dim, degree, n_states):
        if degree < 0:
            raise ValueError("Polynomial degree must be non-negative")
        self.dim = dim
        self.degree = degree
        self.n_states = n_states
        self.basis = nodal_basis(dim, degree)

    @property
    def n_basis(self):
        return n_basis(self.dim, self.degree)

    def n_dofs(self, n_elems):
        return n_elems * self.n_basis * self.n_states

    def dof_index(self, e, i, c):
        return (e * self.n_basis + i) * self.n_states + c

    def element_view(self, u, n_elems):
        u = np.asarray(u)
        if u.size != self.n_dofs(n_elems):
            raise ValueError(f"Expected {self.n_dofs(n_elems)} coefficients, got {u.size}")
        return u.reshape(n_elems, self.n_basis, self.n_states)

    def enriched(self):
        return DgSpace(self.dim, self.degree + 1, self.n_states)


def quadrature_degree(test_degree, q):
    return 2 * (test_degree + q)


@lru_cache(maxsize=None)
def volume_tables(dim, p, p_test, q):
    rule = QuadRule(dim, quadrature_degree(p_test, q))
    pts = rule.points
    trial, test, geom = nodal_basis(dim, p), nodal_basis(dim, p_test), nodal_basis(dim, q)
    dtheta, dpsi = test.grad(pts), geom.grad(pts)
    # derivative of cof(J) grad(theta) with respect to the element node coordinates
    dcof = np.einsum('klmj,qbj,qil->qikbm', cofactor_derivative(dim), dpsi, dtheta)
    return VolumeTables(rule.weights, trial.eval(pts), test.eval(pts), dtheta, geom.eval(pts), dpsi, dcof)


@lru_cache(maxsize=None)
def face_tables(dim, p, p_test, q):
    rule = QuadRule(dim - 1, quadrature_degree(p_test, q))
    s = rule.points
    trial, test, geom = nodal_basis(dim, p), nodal_basis(dim, p_test), nodal_basis(dim, q)
    tables = []
    for f in range(dim + 1):
        xi = face_points(dim, f, s)
        dpsi = geom.grad(xi)
        da = np.einsum('klmj,sbj,l->skbm', cofactor_derivative(dim), dpsi, FACE_NORMALS[dim][f])
        neighbor_phi = (trial.eval(face_points(dim, f, s)), trial.eval(face_points(dim, f, 1.0 - s)))
        tables.append(FaceTables(rule.weights, xi, trial.eval(xi), test.eval(xi), geom.eval(xi), dpsi, da,
                                 neighbor_phi))
    return tables


def _check_orientation(det, where):
    bad = np.real(det) <= 0
    if np.any(bad):
        e = int(np.argwhere(bad)[0][0])
        raise InvertedElementError(f"Mapping Jacobian is non-positive at a {where} point of element {e}")


class DgAssembler:
    """
    Residual and sparse Jacobians of the DG discretization of ``model`` on ``mesh``
    with trial degree ``degree``. Integrals are pulled back to the master element
    through the master-to-physical Jacobian J: volume terms use F cof(J) grad(theta)
    and faces use the scaled normal a = cof(J) n.
    """
    def __init__(self, model, mesh, degree):
        if model.dim != mesh.dim:
            raise ValueError(f"Model dimension {model.dim} does not match mesh dimension {mesh.dim}")
        self.model = model
        self.mesh = mesh
        self.space = DgSpace(mesh.dim, degree, model.n_states)
        self.flip = self._face_orientation()

    @property
    def degree(self):
        return self.space.degree

    def _face_orientation(self):
        mesh = self.mesh
        flip = np.zeros((mesh.n_elems, mesh.n_faces), dtype=int)
        if mesh.dim == 1:
            return flip
        for e, f in np.argwhere(mesh.neighbor >= 0):
            e2, f2 = mesh.neighbor[e, f], mesh.neighbor_face[e, f]
            first = mesh.elements[e, FACE_VERTICES[2][f][0]]
            first2 = mesh.elements[e2, FACE_VERTICES[2][f2][0]]
            flip[e, f] = int(first != first2)
        return flip

    def residual(self, u, x=None, test_degree=None, flux=None):
        return self._assemble(u, x, test_degree, flux, jacobians=False)

    def linearize(self, u, x=None, test_degree=None, flux=None):
        return self._assemble(u, x, test_degree, flux, jacobians=True)

    def _coords(self, x):
        mesh = self.mesh
        nodes = mesh.nodes if x is None else np.asarray(x, dtype=float).reshape(-1, mesh.dim)
        return nodes[mesh.elements]

    def _assemble(self, u, x, test_degree, flux, jacobians):
        mesh, model = self.mesh, self.model
        dim, m, q, p = mesh.dim, model.n_states, mesh.q, self.degree
        p_test = p if test_degree is None else test_degree
        if flux is None:
            flux = 'standard' if p_test == p else 'central'
        if flux not in ('standard', 'central'):
            raise ValueError(f"Unknown interior flux {flux!r}")
        interior_flux = model.numerical_flux if flux == 'standard' else model.central_flux

        ne = mesh.n_elems
        X = self._coords(x)
        ue = self.space.element_view(u, ne)
        nbs = n_basis(dim, p_test)
        nbt, ng = self.space.n_basis, X.shape[1]

        value = np.zeros((ne, nbs, m))
        if jacobians:
            diag = np.zeros((ne, nbs, m, nbt, m))
            dx = np.zeros((ne, nbs, m, ng, dim))
            coupling = []

        vt = volume_tables(dim, p, p_test, q)
        w = vt.weights
        U = np.einsum('qj,ejc->eqc', vt.phi, ue)
        xq = np.einsum('qb,ebi->eqi', vt.psi, X)
        J = np.einsum('ebi,qbk->eqik', X, vt.dpsi)
        det = determinant(J)
        _check_orientation(det, "quadrature")
        cof = cofactor(J)
        grad_test = np.einsum('eqkl,qil->eqik', cof, vt.dtheta)
        F = model.flux(U, xq)
        value -= np.einsum('q,eqck,eqik->eic', w, F, grad_test)
        if model.has_source:
            S = model.source(U, xq)
            value -= np.einsum('q,qi,eqc,eq->eic', w, vt.theta, S, det)

        if jacobians:
            dF_dU = complex_step_jacobian(model.flux, (U, xq), 0)
            dF_dx = complex_step_jacobian(model.flux, (U, xq), 1)
            diag -= np.einsum('q,eqckd,eqik,qj->eicjd', w, dF_dU, grad_test, vt.phi)
            dx -= np.einsum('q,eqckn,qb,eqik->eicbn', w, dF_dx, vt.psi, grad_test)
            dx -= np.einsum('q,eqck,qikbn->eicbn', w, F, vt.dcof)
            if model.has_source:
                dS_dU = complex_step_jacobian(model.source, (U, xq), 0)
                dS_dx = complex_step_jacobian(model.source, (U, xq), 1)
                ddet = np.einsum('eqnj,qbj->eqbn', cof, vt.dpsi)
                diag -= np.einsum('q,qi,eqcd,eq,qj->eicjd', w, vt.theta, dS_dU, det, vt.phi)
                dx -= np.einsum('q,qi,eqcn,eq,qb->eicbn', w, vt.theta, dS_dx, det, vt.psi)
                dx -= np.einsum('q,qi,eqc,eqbn->eicbn', w, vt.theta, S, ddet)

        tables = face_tables(dim, p, p_test, q)
        for f, ft in enumerate(tables):
            w = ft.weights
            Up = np.einsum('sj,ejc->esc', ft.phi, ue)
            xs = np.einsum('sb,ebi->esi', ft.psi, X)
            Jf = np.einsum('ebi,sbk->esik', X, ft.dpsi)
            _check_orientation(determinant(Jf), "face quadrature")
            a = np.einsum('eskl,l->esk', cofactor(Jf), FACE_NORMALS[dim][f])

            ei = np.flatnonzero(mesh.neighbor[:, f] >= 0)
            if len(ei):
                e2 = mesh.neighbor[ei, f]
                phi_m = np.stack([tables[g].neighbor_phi[k] for g, k in zip(mesh.neighbor_face[ei, f],
                                                                              self.flip[ei, f])])
                Um = np.einsum('esj,ejc->esc', phi_m, ue[e2])
                args = (Up[ei], Um, a[ei], xs[ei])
                H = interior_flux(*args)
                value[ei] += np.einsum('s,si,esc->eic', w, ft.theta, H)
                if jacobians:
                    dH_dUp = complex_step_jacobian(interior_flux, args, 0)
                    dH_dUm = complex_step_jacobian(interior_flux, args, 1)
                    dH_da = complex_step_jacobian(interior_flux, args, 2)
                    dH_dx = complex_step_jacobian(interior_flux, args, 3)
                    diag[ei] += np.einsum('s,si,escd,sj->eicjd', w, ft.theta, dH_dUp, ft.phi)
                    coupling.append((ei, e2, np.einsum('s,si,escd,esj->eicjd', w, ft.theta, dH_dUm, phi_m)))
                    dx[ei] += (np.einsum('s,si,esck,skbn->eicbn', w, ft.theta, dH_da, ft.da)
                               + np.einsum('s,si,escn,sb->eicbn', w, ft.theta, dH_dx, ft.psi))

            boundary = mesh.neighbor[:, f] < 0
            for tag in np.unique(mesh.face_tag[boundary, f]):
                eb = np.flatnonzero(boundary & (mesh.face_tag[:, f] == tag))

                def boundary_flux(Up_, a_, x_, tag=int(tag)):
                    return model.boundary_flux(tag, Up_, a_, x_)

                args = (Up[eb], a[eb], xs[eb])
                H = boundary_flux(*args)
                value[eb] += np.einsum('s,si,esc->eic', w, ft.theta, H)
                if jacobians:
                    dH_dUp = complex_step_jacobian(boundary_flux, args, 0)
                    dH_da = complex_step_jacobian(boundary_flux, args, 1)
                    dH_dx = complex_step_jacobian(boundary_flux, args, 2)
                    diag[eb] += np.einsum('s,si,escd,sj->eicjd', w, ft.theta, dH_dUp, ft.phi)
                    dx[eb] += (np.einsum('s,si,esck,skbn->eicbn', w, ft.theta, dH_da, ft.da)
                               + np.einsum('s,si,escn,sb->eicbn', w, ft.theta, dH_dx, ft.psi))

        residual = value.reshape(-1)
        if not jacobians:
            return residual
        return ResidualJacobians(residual, self._state_matrix(diag, coupling, nbs),
                                 self._coordinate_matrix(dx, nbs))

    def _row_indices(self, elements, nbs):
        m = self.model.n_states
        return ((np.asarray(elements)[:, None] * nbs + np.arange(nbs))[:, :, None] * m
                + np.arange(m)).reshape(len(elements), nbs * m)

    def _state_matrix(self, diag, coupling, nbs):
        ne, m, nbt = self.mesh.n_elems, self.model.n_states, self.space.n_basis
        all_elems = np.arange(ne)
        rows, cols, vals = [], [], []
        blocks = [(all_elems, all_elems, diag)] + coupling
        for e_row, e_col, block in blocks:
            r = self._row_indices(e_row, nbs)
            c = self._row_indices(e_col, nbt)
            n = len(e_row)
            rows.append(np.broadcast_to(r[:, :, None], (n, nbs * m, nbt * m)).ravel())
            cols.append(np.broadcast_to(c[:, None, :], (n, nbs * m, nbt * m)).ravel())
            vals.append(block.reshape(n, nbs * m, nbt * m).ravel())
        shape = (ne * nbs * m, self.space.n_dofs(ne))
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=shape).tocsr()

    def _coordinate_matrix(self, dx, nbs):
        mesh, m = self.mesh, self.model.n_states
        ne, dim, ng = mesh.n_elems, mesh.dim, mesh.elements.shape[1]
        r = self._row_indices(np.arange(ne), nbs)
        c = (mesh.elements[:, :, None] * dim + np.arange(dim)).reshape(ne, ng * dim)
        rows = np.broadcast_to(r[:, :, None], (ne, nbs * m, ng * dim)).ravel()
        cols = np.broadcast_to(c[:, None, :], (ne, nbs * m, ng * dim)).ravel()
        shape = (ne * nbs * m, mesh.n_nodes * dim)
        return sp.coo_matrix((dx.reshape(ne, nbs * m, ng * dim).ravel(), (rows, cols)), shape=shape).tocsr()

    def element_states(self, u, points):
        """(ne, npts, m) solution values at master points."""
        ue = self.space.element_view(u, self.mesh.n_elems)
        return np.einsum('qj,ejc->eqc', self.space.basis.eval(points), ue)

    def mean_face_jumps(self, u, x=None):
        """
        Mean jump of chi(U) across each face, (chi+ - chi-) averaged over the physical
        face, shape (ne, nfaces); NaN on boundary faces.
        """
        mesh, model = self.mesh, self.model
        dim, p, q = mesh.dim, self.degree, mesh.q
        X = self._coords(x)
        ue = self.space.element_view(u, mesh.n_elems)
        tables = face_tables(dim, p, p, q)
        jumps = np.full((mesh.n_elems, mesh.n_faces), np.nan)
        for f, ft in enumerate(tables):
            ei = np.flatnonzero(mesh.neighbor[:, f] >= 0)
            if not len(ei):
                continue
            e2 = mesh.neighbor[ei, f]
            phi_m = np.stack([tables[g].neighbor_phi[k] for g, k in zip(mesh.neighbor_face[ei, f],
                                                                          self.flip[ei, f])])
            chi_p = model.chi(np.einsum('sj,ejc->esc', ft.phi, ue[ei]))
            chi_m = model.chi(np.einsum('esj,ejc->esc', phi_m, ue[e2]))
            Jf = np.einsum('ebi,sbk->esik', X[ei], ft.dpsi)
            length = np.linalg.norm(np.einsum('eskl,l->esk', cofactor(Jf), FACE_NORMALS[dim][f]), axis=-1)
            ds = ft.weights * length
            jumps[ei, f] = np.sum(ds * (chi_p - chi_m), axis=1) / np.sum(ds, axis=1)
        return jumps


def assemble_residual(model, mesh, space, u, x, test_degree, flux=None):
    """r (test_degree = p) or the enriched residual R (test_degree = p + 1)."""
    return DgAssembler(model, mesh, space.degree).residual(u, x, test_degree, flux)


def assemble_jacobians(model, mesh, space, u, x):
    """(dr/du, dr/dx, dR/du, dR/dx) as CSR matrices."""
    assembler = DgAssembler(model, mesh, space.degree)
    standard = assembler.linearize(u, x)
    enriched = assembler.linearize(u, x, space.degree + 1)
    return standard.du, standard.dx, enriched.du, enriched.dx


@lru_cache(maxsize=None)
def _projection_matrix(dim, from_degree, to_degree):
    rule = QuadRule(dim, 2 * max(from_degree, to_degree))
    source, target = nodal_basis(dim, from_degree), nodal_basis(dim, to_degree)
    theta, phi = target.eval(rule.points), source.eval(rule.points)
    mass = np.einsum('q,qi,qj->ij', rule.weights, theta, theta)
    mixed = np.einsum('q,qi,qj->ij', rule.weights, theta, phi)
    return np.linalg.solve(mass, mixed)


def project_solution(u, from_degree, to_degree, dim, n_states):
    """Element-local L2 projection (on the master element) between nodal degrees."""
    nb = n_basis(dim, from_degree)
    ue = np.asarray(u).reshape(-1, nb, n_states)
    projected = np.einsum('ij,ejc->eic', _projection_matrix(dim, from_degree, to_degree), ue)
    return projected.reshape(-1)


def constant_injection(means, degree, dim):
    """Degree-p coefficients of element-wise constant states (ne, m)."""
    means = np.asarray(means, dtype=float)
    nb = n_basis(dim, degree)
    return np.repeat(means[:, None, :], nb, axis=1).reshape(-1)
