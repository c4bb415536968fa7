"""Sparse operators for the semi-discrete momentum and divergence forms.

All operators act on the flux degree-of-freedom vector.  The convection
form is linearized around a frozen transport field w: cell transport
term minus central face coupling plus the upwind jump penalty, with the
face sums running over interior faces only.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fespace import cell_rule_points, velocity_at_cell_points
from .mesh import _face_rule

FACE_QUAD_PTS = 3  # traces are affine, their products integrate exactly


@dataclass
class SaddleSystem:
    """Blocks of one time step's linear saddle-point problem."""
    a_uu: sp.csr_matrix      # velocity x velocity
    b: sp.csr_matrix         # pressure x velocity divergence coupling
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mean_row: np.ndarray     # cell areas; enforces the pressure gauge


def _rt0_kernel(mesh):
    """Q[K, i, j] = int_K (x - P_i).(x - P_j) dx, P_i the vertex opposite
    local face i.  Shared by the mass matrix and the convection cell term."""
    if "rt0_kernel" not in mesh.cache:
        pts, wts = cell_rule_points(mesh, 4)
        rel = pts[:, None, :, :] - mesh.opposite_vertex[:, :, None, :]  # (C,3,m,2)
        q = np.einsum("kg,kigc,kjgc->kij", wts, rel, rel)
        # force bitwise symmetry so the assembled mass matrix satisfies
        # M == M.T exactly, not just to roundoff
        q = 0.5 * (q + q.transpose(0, 2, 1))
        mesh.cache["rt0_kernel"] = q
    return mesh.cache["rt0_kernel"]


def assemble_mass(mesh):
    """RT0 mass matrix; U^T M U = int |u_h|^2 exactly."""
    q = _rt0_kernel(mesh)
    s = mesh.cell_face_sign
    scale = 1.0 / (4.0 * mesh.cell_area ** 2)
    vals = s[:, :, None] * s[:, None, :] * q * scale[:, None, None]
    return _scatter_cell_blocks(mesh, vals)


def assemble_diffusion(mesh):
    """Broken-gradient stiffness; U^T A U = sum_K int_K |grad u_h|^2.

    For this element grad u|_K = b_K I, so the local block is the rank-one
    matrix s s^T / (2|K|)."""
    s = mesh.cell_face_sign.astype(float)
    vals = s[:, :, None] * s[:, None, :] / (2.0 * mesh.cell_area)[:, None, None]
    return _scatter_cell_blocks(mesh, vals)


def assemble_divergence(mesh):
    """(B U)_K = int_K div u_h, the signed flux sum over the cell."""
    rows = np.repeat(np.arange(mesh.n_cells), 3)
    cols = mesh.cell_faces.ravel()
    vals = mesh.cell_face_sign.ravel().astype(float)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(mesh.n_cells, mesh.n_faces)).tocsr()


class ConvectionKernel:
    """Geometry tensors for the transport form, reusable across steps.

    assemble(w) returns (cell, central, upwind) so callers can combine
    them or inspect the upwind quadratic form on its own.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.int_faces = mesh.interior_faces
        oc = mesh.face_owner[self.int_faces]
        nc = mesh.face_neighbor[self.int_faces]
        pts_o, wts, pts_n = _face_rule(mesh, FACE_QUAD_PTS)
        pts_o = pts_o[self.int_faces]
        pts_n = pts_n[self.int_faces]
        wts = wts[self.int_faces]

        psi_o = self._cell_basis(oc, pts_o)
        psi_n = self._cell_basis(nc, pts_n)
        jump = np.concatenate([psi_o, -psi_n], axis=1)        # (F, 6, m, 2)
        avg = 0.5 * np.concatenate([psi_o, psi_n], axis=1)
        self.central_geom = np.einsum("fg,fbgc,fagc->fab", wts, jump, avg)
        self.upwind_geom = np.einsum("fg,fbgc,fagc->fab", wts, jump, jump)
        dofs6 = np.concatenate([mesh.cell_faces[oc], mesh.cell_faces[nc]], axis=1)
        self.face_rows = np.broadcast_to(dofs6[:, :, None], (len(oc), 6, 6)).ravel()
        self.face_cols = np.broadcast_to(dofs6[:, None, :], (len(oc), 6, 6)).ravel()

        self.cell_rows = np.broadcast_to(
            mesh.cell_faces[:, :, None], (mesh.n_cells, 3, 3)).ravel()
        self.cell_cols = np.broadcast_to(
            mesh.cell_faces[:, None, :], (mesh.n_cells, 3, 3)).ravel()

    def _cell_basis(self, cells, pts):
        """Global basis functions of a cell's three dofs at given points."""
        mesh = self.mesh
        rel = pts[:, None, :, :] - mesh.opposite_vertex[cells][:, :, None, :]
        scale = (mesh.cell_face_sign[cells]
                 / (2.0 * mesh.cell_area[cells])[:, None])
        return scale[:, :, None, None] * rel

    def assemble(self, w):
        """Parts (cell, central, upwind) for transport field w."""
        mesh = self.mesh
        shape = (mesh.n_faces, mesh.n_faces)
        w_n = w.dofs[self.int_faces] / mesh.face_length[self.int_faces]

        central = sp.coo_matrix(
            ((w_n[:, None, None] * self.central_geom).ravel(),
             (self.face_rows, self.face_cols)), shape=shape).tocsr()
        upwind = sp.coo_matrix(
            ((np.abs(w_n)[:, None, None] * self.upwind_geom).ravel(),
             (self.face_rows, self.face_cols)), shape=shape).tocsr()

        q = _rt0_kernel(mesh)
        s = mesh.cell_face_sign
        wloc = w.dofs[mesh.cell_faces] * s
        cvec = np.einsum("kij,kj->ki", q, wloc)
        vals = (s[:, :, None] * s[:, None, :] * cvec[:, :, None]
                / (8.0 * mesh.cell_area ** 3)[:, None, None])
        cell = sp.coo_matrix((vals.ravel(), (self.cell_rows, self.cell_cols)),
                             shape=shape).tocsr()
        return cell, central, upwind


def convection_parts(mesh, w):
    key = "convection_kernel"
    if key not in mesh.cache:
        mesh.cache[key] = ConvectionKernel(mesh)
    return mesh.cache[key].assemble(w)


def assemble_convection(mesh, w):
    """C(w) such that U^T C(w) U equals the upwind face sum whenever w is
    discretely divergence-free."""
    if w.mesh is not mesh:
        raise ValueError("transport field lives on a different mesh")
    cell, central, upwind = convection_parts(mesh, w)
    return (cell - central + upwind).tocsr()


def assemble_load(mesh, f, t):
    """Load vector F_i = int f(t, x) . phi_i dx by cell quadrature."""
    pts, wts = cell_rule_points(mesh, 4)
    fv = np.asarray(f(t, pts.reshape(-1, 2))).reshape(pts.shape)
    rel = pts[:, None, :, :] - mesh.opposite_vertex[:, :, None, :]
    loc = np.einsum("kg,kgc,kigc->ki", wts, fv, rel)
    loc *= mesh.cell_face_sign / (2.0 * mesh.cell_area)[:, None]
    out = np.zeros(mesh.n_faces)
    np.add.at(out, mesh.cell_faces.ravel(), loc.ravel())
    return out


def weak_div_pairing(field, psi, grad_psi=None, quad_degree=8):
    """int_Omega u_h . grad(psi) dx.

    If grad_psi is omitted the gradient is taken by complex-step
    differentiation, so psi must evaluate cleanly on complex inputs
    (avoid abs/comparisons on the perturbed coordinate).
    """
    mesh = field.mesh
    pts, wts = cell_rule_points(mesh, quad_degree)
    flat = pts.reshape(-1, 2)
    if grad_psi is None:
        grad = _complex_step_gradient(psi, flat)
    else:
        grad = np.asarray(grad_psi(flat))
    grad = grad.reshape(pts.shape)
    u = velocity_at_cell_points(field, pts)
    return float(np.einsum("kg,kgc,kgc->", wts, u, grad))


def write_operator_mm(op, path):
    """MatrixMarket coordinate dump for debugging."""
    scipy.io.mmwrite(path, sp.coo_matrix(op))


def _scatter_cell_blocks(mesh, vals):
    rows = np.broadcast_to(mesh.cell_faces[:, :, None],
                           (mesh.n_cells, 3, 3)).ravel()
    cols = np.broadcast_to(mesh.cell_faces[:, None, :],
                           (mesh.n_cells, 3, 3)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)),
                         shape=(mesh.n_faces, mesh.n_faces)).tocsr()


def _complex_step_gradient(psi, pts):
    step = 1e-100
    grad = np.empty_like(pts)
    for d in range(2):
        z = pts.astype(complex)
        z[:, d] += 1j * step
        grad[:, d] = np.imag(np.asarray(psi(z))) / step
    return grad
