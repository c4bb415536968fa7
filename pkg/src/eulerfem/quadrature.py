"""Gauss quadrature rules on segments and on the reference triangle."""

import numpy as np

# Symmetric 6-point rule on the reference triangle (0,0)-(1,0)-(0,1),
# exact for polynomials of total degree <= 4.  Orbit values from the
# standard tables; per-point weights below are normalized so the full
# rule sums to 1 and get rescaled to the reference area 1/2.
_DEG4_ORBITS = (
    (0.44594849091596489, 0.22338158967801147),
    (0.09157621350977074, 0.10995174365532187),
)


def segment_gauss(npts):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    if npts < 1:
        raise ValueError(f"need at least one quadrature point, got {npts}")
    return np.polynomial.legendre.leggauss(npts)


def triangle_rule(degree):
    """Points (m, 2) and weights (m,) on the reference triangle.

    Weights sum to the reference area 1/2.  Degrees up to 4 use the
    symmetric 6-point rule; higher degrees fall back to a collapsed
    tensor Gauss rule that is exact by construction.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be nonnegative, got {degree}")
    if degree <= 4:
        return _six_point_rule()
    return _collapsed_rule(degree)


def _six_point_rule():
    pts = []
    wts = []
    for a, w in _DEG4_ORBITS:
        b = 1.0 - 2.0 * a
        # barycentric orbit (b, a, a) mapped to (xi, eta) = (lam1, lam2)
        pts.extend([(a, a), (b, a), (a, b)])
        wts.extend([w, w, w])
    return np.array(pts), 0.5 * np.array(wts)


def _collapsed_rule(degree):
    # Duffy map x = xi, y = eta*(1-xi) with Jacobian (1-xi): the xi
    # integrand picks up one extra degree, so m points need 2m-1 >= d+1.
    m = (degree + 3) // 2
    gx, gwx = segment_gauss(m)
    xi = 0.5 * (gx + 1.0)
    w1 = 0.5 * gwx
    pts = []
    wts = []
    for i in range(m):
        for j in range(m):
            pts.append((xi[i], xi[j] * (1.0 - xi[i])))
            wts.append(w1[i] * w1[j] * (1.0 - xi[i]))
    return np.array(pts), np.array(wts)


def map_to_cells(cell_coords, ref_pts, ref_wts):
    """Map a reference-triangle rule to every cell of a mesh.

    cell_coords has shape (C, 3, 2).  Returns points (C, m, 2) and
    weights (C, m) such that sum_g w[g] f(x[g]) integrates f over each
    cell (the 2|K| Jacobian is folded into the weights).
    """
    p0 = cell_coords[:, 0, :]
    e1 = cell_coords[:, 1, :] - p0
    e2 = cell_coords[:, 2, :] - p0
    pts = (p0[:, None, :]
           + ref_pts[None, :, 0, None] * e1[:, None, :]
           + ref_pts[None, :, 1, None] * e2[:, None, :])
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    wts = jac[:, None] * ref_wts[None, :]
    return pts, wts
