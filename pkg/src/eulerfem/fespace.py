"""Lowest-order Raviart-Thomas / piecewise-constant fields on a mesh.

Velocity degrees of freedom are integrated normal fluxes, one per face:
u_sigma = int_sigma u . n_sigma ds.  Inside a cell the field is affine,
u|_K = a_K + b_K x with scalar b_K, so the broken gradient is b_K times
the identity and the cell divergence is exactly 2 b_K.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryKind, Mesh
from .quadrature import map_to_cells, segment_gauss, triangle_rule

INTERP_FACE_PTS = 16  # enough to integrate the benchmark traces to roundoff


@dataclass
class VelocityField:
    mesh: Mesh
    dofs: np.ndarray  # (F,) integrated normal flux per face

    def copy(self):
        return VelocityField(self.mesh, self.dofs.copy())


@dataclass
class PressureField:
    mesh: Mesh
    dofs: np.ndarray  # (C,) one value per cell

    def copy(self):
        return PressureField(self.mesh, self.dofs.copy())


@dataclass
class CellQuadrature:
    """Reference-triangle rule; weights sum to the reference area 1/2."""
    points: np.ndarray
    weights: np.ndarray
    degree: int


def cell_quadrature(degree=4):
    pts, wts = triangle_rule(degree)
    return CellQuadrature(pts, wts, degree)


def cell_rule_points(mesh, degree):
    """Cached physical quadrature points (C, m, 2) and weights (C, m)."""
    key = ("cell_rule", degree)
    if key not in mesh.cache:
        q = cell_quadrature(degree)
        mesh.cache[key] = map_to_cells(mesh.cell_coords, q.points, q.weights)
    return mesh.cache[key]


def interpolate(mesh, v):
    """Flux interpolant: matches int_sigma v . n on every face.

    The face integrals use a Gauss rule dense enough that the smooth
    benchmark data is integrated to machine precision, which keeps the
    interpolant of a solenoidal field divergence-free to roundoff.
    """
    gx, gw = segment_gauss(INTERP_FACE_PTS)
    lam = 0.5 * (gx + 1.0)
    a = mesh.face_pts_owner[:, 0][:, None, :]
    b = mesh.face_pts_owner[:, 1][:, None, :]
    pts = a + lam[None, :, None] * (b - a)          # (F, m, 2)
    wts = 0.5 * gw[None, :] * mesh.face_length[:, None]
    vals = np.asarray(v(pts.reshape(-1, 2))).reshape(pts.shape)
    un = (vals * mesh.face_normal[:, None, :]).sum(axis=2)
    return VelocityField(mesh, (wts * un).sum(axis=1))


def cell_affine_coeffs(field):
    """Per-cell representation u|_K(x) = a_K + b_K x.

    Returns (a, b) with a of shape (C, 2) and b of shape (C,).
    """
    mesh = field.mesh
    coeff = (field.mesh.cell_face_sign * field.dofs[mesh.cell_faces]
             / (2.0 * mesh.cell_area)[:, None])          # (C, 3)
    b = coeff.sum(axis=1)
    a = -(coeff[:, :, None] * mesh.opposite_vertex).sum(axis=1)
    return a, b


def eval_velocity(field, cell, point):
    """Value of the field at a point inside the given cell."""
    point = np.asarray(point, dtype=float)
    assert _min_barycentric(field.mesh, cell, point) >= -1e-12, \
        f"point {point} outside cell {cell}"
    a, b = cell_affine_coeffs(field)
    return a[cell] + b[cell] * point


def eval_broken_grad(field, cell):
    """Constant per-cell gradient, b_K times the 2x2 identity."""
    _, b = cell_affine_coeffs(field)
    return b[cell] * np.eye(2)


def velocity_at_cell_points(field, pts):
    """Evaluate at points given per cell, shape (C, m, 2) -> (C, m, 2)."""
    a, b = cell_affine_coeffs(field)
    return a[:, None, :] + b[:, None, None] * pts


def divergence(field):
    """Cellwise divergence, the signed flux sum over the cell boundary
    divided by the cell area; exact for this element."""
    mesh = field.mesh
    flux_sum = (mesh.cell_face_sign * field.dofs[mesh.cell_faces]).sum(axis=1)
    return PressureField(mesh, flux_sum / mesh.cell_area)


def p0_mean_zero(p):
    """Subtract the area-weighted mean."""
    mesh = p.mesh
    mean = (p.dofs * mesh.cell_area).sum() / mesh.cell_area.sum()
    return PressureField(mesh, p.dofs - mean)


def zero_boundary_fluxes(field):
    """Enforce the no-flux essential condition on boundary faces."""
    if field.mesh.boundary_kind is BoundaryKind.NO_FLUX:
        field.dofs[field.mesh.boundary_faces] = 0.0
    return field


def _min_barycentric(mesh, cell, point):
    p0, p1, p2 = mesh.cell_coords[cell]
    t = np.column_stack([p1 - p0, p2 - p0])
    lam12 = np.linalg.solve(t, point - p0)
    return min(1.0 - lam12.sum(), lam12[0], lam12[1])
