import numpy as np
import pytest

from eulerfem import (BoundaryKind, PressureField, VelocityField,
                      build_structured_mesh, divergence, eval_broken_grad,
                      eval_velocity, interpolate, p0_mean_zero, taylor_green)
from eulerfem.fespace import (cell_affine_coeffs, cell_quadrature,
                              velocity_at_cell_points, zero_boundary_fluxes)
from eulerfem.mesh import _face_rule

TWO_PI = 2.0 * np.pi


def duffy_rule(degree):
    """Tensor Gauss rule collapsed onto the reference triangle; the test
    suite's own quadrature, independent of the library's."""
    m = (degree + 3) // 2
    gx, gw = np.polynomial.legendre.leggauss(m)
    xi = 0.5 * (gx + 1.0)
    wi = 0.5 * gw
    pts, wts = [], []
    for i in range(m):
        for j in range(m):
            pts.append((xi[i], xi[j] * (1.0 - xi[i])))
            wts.append(wi[i] * wi[j] * (1.0 - xi[i]))
    return np.array(pts), np.array(wts)


def l2_error_oracle(mesh, field, exact, degree=10):
    ref_pts, ref_wts = duffy_rule(degree)
    p0 = mesh.cell_coords[:, 0]
    e1 = mesh.cell_coords[:, 1] - p0
    e2 = mesh.cell_coords[:, 2] - p0
    pts = (p0[:, None, :] + ref_pts[None, :, 0, None] * e1[:, None, :]
           + ref_pts[None, :, 1, None] * e2[:, None, :])
    wts = (2.0 * mesh.cell_area)[:, None] * ref_wts[None, :]
    diff = velocity_at_cell_points(field, pts) - exact(pts.reshape(-1, 2)).reshape(pts.shape)
    return np.sqrt(np.einsum("kg,kgc,kgc->", wts, diff, diff))


def test_interpolate_constant_field():
    mesh = build_structured_mesh(5, (0, 0, 1, 1))
    v = interpolate(mesh, lambda p: np.stack([np.ones_like(p[..., 0]),
                                              np.zeros_like(p[..., 0])], axis=-1))
    assert np.allclose(v.dofs, mesh.face_normal[:, 0] * mesh.face_length, atol=1e-14)
    pts = mesh.cell_centroids[:, None, :]
    vals = velocity_at_cell_points(v, pts)[:, 0, :]
    assert np.abs(vals - [1.0, 0.0]).max() < 1e-14


def test_interpolate_zero():
    mesh = build_structured_mesh(3, (0, 0, 1, 1))
    v = interpolate(mesh, lambda p: np.zeros_like(p))
    assert np.all(v.dofs == 0.0)


def test_interpolation_eoc_taylor_green():
    tg = taylor_green()
    errs, hs = [], []
    for n in (12, 24, 48):
        mesh = build_structured_mesh(n, tg.domain)
        field = interpolate(mesh, tg.initial_velocity)
        errs.append(l2_error_oracle(mesh, field, tg.initial_velocity))
        hs.append(mesh.h)
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(np.abs(orders - 1.0) < 0.1), orders


def test_eval_linear_position_field():
    mesh = build_structured_mesh(3, (0, 0, 1, 1))
    field = interpolate(mesh, lambda p: p)
    for cell in (0, 7, 11):
        point = mesh.cell_coords[cell].mean(axis=0)
        assert np.allclose(eval_velocity(field, cell, point), point, atol=1e-13)
        assert np.allclose(eval_broken_grad(field, cell), np.eye(2), atol=1e-12)


def test_eval_constant_has_zero_gradient():
    mesh = build_structured_mesh(2, (0, 0, 1, 1))
    field = interpolate(mesh, lambda p: np.stack([np.ones_like(p[..., 0]),
                                                  np.zeros_like(p[..., 0])], axis=-1))
    assert np.allclose(eval_broken_grad(field, 1), 0.0, atol=1e-14)


def test_unit_flux_normal_trace():
    # one unit of integrated flux through a face makes the normal trace 1/|sigma|
    mesh = build_structured_mesh(1, (0, 0, 1, 1))
    for cell in (0, 1):
        for slot in range(3):
            face = mesh.cell_faces[cell, slot]
            dofs = np.zeros(mesh.n_faces)
            dofs[face] = 1.0
            field = VelocityField(mesh, dofs)
            mid = mesh.face_pts_owner[face].mean(axis=0)
            owner = mesh.face_owner[face]
            val = eval_velocity(field, owner, mid)
            assert val @ mesh.face_normal[face] == pytest.approx(
                1.0 / mesh.face_length[face], rel=1e-12)
            # oracle: solve the 3x3 local flux system directly
            oracle = local_rt0_solve(mesh, owner, dofs)
            assert np.allclose(oracle(mid), val, atol=1e-12)


def local_rt0_solve(mesh, cell, dofs):
    """Brute-force local representation: solve for (a, b) from the three
    flux constraints int_sigma (a + b x).n ds = u_sigma."""
    rows, rhs = [], []
    for slot in range(3):
        face = mesh.cell_faces[cell, slot]
        sign = mesh.cell_face_sign[cell, slot]
        n = mesh.face_normal[face] * sign          # outward from this cell
        mid = mesh.face_pts_owner[face].mean(axis=0)
        length = mesh.face_length[face]
        rows.append([n[0] * length, n[1] * length, (mid @ n) * length])
        rhs.append(sign * dofs[face])
    coeff = np.linalg.solve(np.array(rows), np.array(rhs))
    return lambda x: coeff[:2] + coeff[2] * x


def test_eval_rejects_outside_point():
    mesh = build_structured_mesh(2, (0, 0, 1, 1))
    field = interpolate(mesh, lambda p: p)
    with pytest.raises(AssertionError):
        eval_velocity(field, 0, np.array([10.0, 10.0]))


def test_divergence_constant_field_zero():
    mesh = build_structured_mesh(6, (0, 0, 1, 1))
    v = interpolate(mesh, lambda p: np.stack([np.ones_like(p[..., 0]),
                                              np.zeros_like(p[..., 0])], axis=-1))
    assert np.abs(divergence(v).dofs).max() < 1e-13


def test_divergence_of_position_field_is_two():
    mesh = build_structured_mesh(5, (0, 0, 1, 1))
    v = interpolate(mesh, lambda p: p)
    assert np.abs(divergence(v).dofs - 2.0).max() < 1e-12


def test_divergence_free_interpolant():
    tg = taylor_green()
    mesh = build_structured_mesh(12, tg.domain)
    v = interpolate(mesh, tg.initial_velocity)
    # oracle: direct signed flux summation per cell
    flux_sum = (mesh.cell_face_sign * v.dofs[mesh.cell_faces]).sum(axis=1)
    assert np.allclose(divergence(v).dofs, flux_sum / mesh.cell_area, atol=1e-15)
    assert np.abs(divergence(v).dofs).max() < 1e-12


def test_p0_mean_zero():
    mesh = build_structured_mesh(4, (0, 0, 1, 1))
    const = PressureField(mesh, np.full(mesh.n_cells, 5.0))
    assert np.abs(p0_mean_zero(const).dofs).max() == 0.0

    centroid_x = PressureField(mesh, mesh.cell_centroids[:, 0].copy())
    # oracle: area-weighted centroid average over the symmetric unit square
    mean = (mesh.cell_centroids[:, 0] * mesh.cell_area).sum() / mesh.cell_area.sum()
    assert mean == pytest.approx(0.5, rel=1e-13)
    shifted = p0_mean_zero(centroid_x)
    assert np.allclose(shifted.dofs, centroid_x.dofs - 0.5, atol=1e-14)
    # idempotence
    again = p0_mean_zero(shifted)
    assert np.abs(again.dofs - shifted.dofs).max() < 1e-15
    assert abs((shifted.dofs * mesh.cell_area).sum()) < 1e-13


def test_projection_idempotent_on_rt0_fields():
    rng = np.random.default_rng(7)
    for kind in (BoundaryKind.NO_FLUX, BoundaryKind.PERIODIC):
        mesh = build_structured_mesh(4, (0, 0, 1, 1), kind)
        field = VelocityField(mesh, rng.standard_normal(mesh.n_faces))
        # the field's own normal trace is single-valued; integrating it
        # over each face must return the dofs exactly
        pts_o, wts, _ = _face_rule(mesh, 3)
        a, b = cell_affine_coeffs(field)
        owner = mesh.face_owner
        vals = a[owner][:, None, :] + b[owner][:, None, None] * pts_o
        redo = (wts * (vals * mesh.face_normal[:, None, :]).sum(axis=2)).sum(axis=1)
        assert np.abs(redo - field.dofs).max() < 1e-14


def test_normal_trace_constant_along_faces():
    rng = np.random.default_rng(3)
    mesh = build_structured_mesh(3, (0, 0, 1, 1), BoundaryKind.PERIODIC)
    field = VelocityField(mesh, rng.standard_normal(mesh.n_faces))
    a, b = cell_affine_coeffs(field)
    pts_o, _, pts_n = _face_rule(mesh, 4)
    for f in range(mesh.n_faces):
        oc, nc = mesh.face_owner[f], mesh.face_neighbor[f]
        n = mesh.face_normal[f]
        tr_own = (a[oc] + b[oc] * pts_o[f]) @ n
        tr_nei = (a[nc] + b[nc] * pts_n[f]) @ n
        assert np.ptp(tr_own) < 1e-12          # constant along the face
        assert np.abs(tr_own - tr_nei).max() < 1e-12   # single valued


def test_cell_quadrature_invariants():
    q = cell_quadrature(4)
    assert q.degree >= 4
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(0.5, rel=1e-13)


def test_zero_boundary_fluxes_only_touches_noflux():
    mesh = build_structured_mesh(3, (0, 0, 1, 1))
    field = VelocityField(mesh, np.ones(mesh.n_faces))
    zero_boundary_fluxes(field)
    assert np.all(field.dofs[mesh.boundary_faces] == 0.0)
    assert np.all(field.dofs[mesh.interior_faces] == 1.0)
    per = build_structured_mesh(3, (0, 0, 1, 1), BoundaryKind.PERIODIC)
    pfield = VelocityField(per, np.ones(per.n_faces))
    zero_boundary_fluxes(pfield)
    assert np.all(pfield.dofs == 1.0)
