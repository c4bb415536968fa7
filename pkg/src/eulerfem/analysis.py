"""Error norms, energy/consistency diagnostics and convergence orders."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import weak_div_pairing
from .fespace import cell_affine_coeffs, cell_rule_points, velocity_at_cell_points
from .mesh import _face_rule

ERROR_QUAD_DEGREE = 8


@dataclass
class ConvergenceRecord:
    n: int
    h: float
    err_u_l2: float
    err_p_l2: float
    jump_seminorm: float
    sup_relative_energy: float
    eoc_u: Optional[float] = None
    eoc_p: Optional[float] = None


def l2_error_velocity(state, exact, t=None):
    """L2 distance between the discrete velocity and exact(t, x)."""
    if t is None:
        t = state.t
    mesh = state.u.mesh
    pts, wts = cell_rule_points(mesh, ERROR_QUAD_DEGREE)
    diff = velocity_at_cell_points(state.u, pts) \
        - np.asarray(exact(t, pts.reshape(-1, 2))).reshape(pts.shape)
    return float(np.sqrt(np.einsum("kg,kgc,kgc->", wts, diff, diff)))


def l2_error_pressure(state, exact_p, t=None):
    """L2 pressure error after removing the area-weighted mean from both
    fields; the pressure is only determined up to a constant."""
    if t is None:
        t = state.t
    mesh = state.p.mesh
    pts, wts = cell_rule_points(mesh, ERROR_QUAD_DEGREE)
    pe = np.asarray(exact_p(t, pts.reshape(-1, 2))).reshape(wts.shape)
    pe = pe - (wts * pe).sum() / mesh.cell_area.sum()
    ph = state.p.dofs - (state.p.dofs * mesh.cell_area).sum() / mesh.cell_area.sum()
    diff = ph[:, None] - pe
    return float(np.sqrt((wts * diff ** 2).sum()))


def relative_energy(state, exact, t=None):
    """Half the squared L2 velocity error."""
    return 0.5 * l2_error_velocity(state, exact, t) ** 2


def face_jump_rate(state):
    """sum over interior faces of int |u.n| |[u]|^2 ds at one instant."""
    mesh = state.u.mesh
    int_faces = mesh.interior_faces
    pts_o, wts, pts_n = _face_rule(mesh, 3)
    a, b = cell_affine_coeffs(state.u)
    oc = mesh.face_owner[int_faces]
    nc = mesh.face_neighbor[int_faces]
    jump = (a[oc][:, None, :] + b[oc][:, None, None] * pts_o[int_faces]
            - a[nc][:, None, :] - b[nc][:, None, None] * pts_n[int_faces])
    w_n = np.abs(state.u.dofs[int_faces] / mesh.face_length[int_faces])
    return float((w_n * ((jump ** 2).sum(axis=2) * wts[int_faces]).sum(axis=1)).sum())


def jump_seminorm(trajectory):
    """Square root of the time integral of the upwind jump form.

    Jumps of a continuous comparison field vanish face by face, so the
    error version coincides with this plain one.
    """
    times = np.array([s.t for s in trajectory])
    rates = np.array([face_jump_rate(s) for s in trajectory])
    return float(np.sqrt(np.trapezoid(rates, times)))


class MomentumResidualProbe:
    """Streaming evaluation of the weak momentum residual against a
    smooth divergence-free test field.

    Feed states in time order through observe(); value() returns the
    bracket term minus the trapezoidal time integral of
    <u, d_t phi> + <u (x) u, grad phi> + <f, phi>, the last term removing
    the forcing work so the residual isolates the discretization.
    """

    def __init__(self, mesh, phi, phi_t, phi_grad, forcing=None,
                 quad_degree=ERROR_QUAD_DEGREE, div_tol=1e-8):
        self.phi = phi
        self.phi_t = phi_t
        self.phi_grad = phi_grad
        self.forcing = forcing
        self.pts, self.wts = cell_rule_points(mesh, quad_degree)
        self.flat = self.pts.reshape(-1, 2)
        g = np.asarray(phi_grad(0.0, self.flat))
        max_div = np.abs(g[..., 0, 0] + g[..., 1, 1]).max()
        if max_div > div_tol:
            raise ValueError(f"test field is not divergence-free: max |div| = {max_div:.3e}")
        self._integral = 0.0
        self._prev = None
        self._first_pairing = None
        self._last_pairing = None

    def _pairing(self, state):
        u = velocity_at_cell_points(state.u, self.pts)
        pv = np.asarray(self.phi(state.t, self.flat)).reshape(self.pts.shape)
        return float(np.einsum("kg,kgc,kgc->", self.wts, u, pv))

    def _integrand(self, state):
        u = velocity_at_cell_points(state.u, self.pts)
        pt = np.asarray(self.phi_t(state.t, self.flat)).reshape(self.pts.shape)
        grad = np.asarray(self.phi_grad(state.t, self.flat)).reshape(self.pts.shape + (2,))
        val = np.einsum("kg,kgc,kgc->", self.wts, u, pt)
        val += np.einsum("kg,kgi,kgj,kgij->", self.wts, u, u, grad)
        if self.forcing is not None:
            fv = np.asarray(self.forcing(state.t, self.flat)).reshape(self.pts.shape)
            pv = np.asarray(self.phi(state.t, self.flat)).reshape(self.pts.shape)
            val += np.einsum("kg,kgc,kgc->", self.wts, fv, pv)
        return float(val)

    def observe(self, state):
        g = self._integrand(state)
        if self._prev is None:
            self._first_pairing = self._pairing(state)
        else:
            t_prev, g_prev = self._prev
            self._integral += 0.5 * (state.t - t_prev) * (g_prev + g)
        self._prev = (state.t, g)
        self._last_pairing = self._pairing(state)

    def value(self):
        if self._first_pairing is None:
            raise RuntimeError("no states observed")
        return self._last_pairing - self._first_pairing - self._integral


def consistency_residual_momentum(trajectory, phi, phi_t, phi_grad,
                                  tau=None, forcing=None,
                                  quad_degree=ERROR_QUAD_DEGREE,
                                  div_tol=1e-8):
    """Residual of the weak momentum identity over [0, tau].

    Snapshots must be dense enough in time for trapezoidal quadrature;
    a snapshot at tau itself is required.
    """
    if tau is None:
        tau = trajectory[-1].t
    states = [s for s in trajectory if s.t <= tau + 1e-12]
    if abs(states[-1].t - tau) > 1e-9:
        raise ValueError(f"no snapshot at tau = {tau}")
    probe = MomentumResidualProbe(trajectory[0].u.mesh, phi, phi_t, phi_grad,
                                  forcing=forcing, quad_degree=quad_degree,
                                  div_tol=div_tol)
    for s in states:
        probe.observe(s)
    return probe.value()


def consistency_residual_div(state, psi, grad_psi=None):
    """Residual of the weak divergence identity, int u_h . grad(psi)."""
    return weak_div_pairing(state.u, psi, grad_psi=grad_psi)


def compute_eoc(errors, hs):
    """Orders log(e_{i-1}/e_i) / log(h_{i-1}/h_i) between mesh levels."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error/h lists with at least two levels")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must decrease strictly")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive to take logarithms")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


def vorticity(state):
    """Cellwise curl recovered from an affine fit through the face
    midpoints, using the single-valued average of the two side traces.

    The raw element representation a + b x has zero curl on every cell,
    so the reconstruction is what carries the rotational content.
    """
    from .fespace import PressureField

    mesh = state.u.mesh
    a, b = cell_affine_coeffs(state.u)
    mid_o = mesh.face_pts_owner.mean(axis=1)
    mid_n = mesh.face_pts_neighbor.mean(axis=1)
    owner_val = a[mesh.face_owner] + b[mesh.face_owner][:, None] * mid_o
    face_val = owner_val.copy()
    interior = mesh.interior_faces
    nc = mesh.face_neighbor[interior]
    face_val[interior] = 0.5 * (owner_val[interior]
                                + a[nc] + b[nc][:, None] * mid_n[interior])

    mid_local = 0.5 * (mesh.cell_coords + mesh.cell_coords[:, [1, 2, 0], :])
    samples = face_val[mesh.cell_faces]                       # (C, 3, 2)
    lhs = np.concatenate([mid_local, np.ones((mesh.n_cells, 3, 1))], axis=2)
    coef = np.linalg.solve(lhs, samples)                      # (C, 3, 2)
    curl = coef[:, 0, 1] - coef[:, 1, 0]
    return PressureField(mesh, curl)


def records_with_orders(records):
    """Fill the order columns of a refinement sequence in place."""
    for prev, cur in zip(records, records[1:]):
        cur.eoc_u = compute_eoc([prev.err_u_l2, cur.err_u_l2], [prev.h, cur.h])[0]
        cur.eoc_p = compute_eoc([prev.err_p_l2, cur.err_p_l2], [prev.h, cur.h])[0]
    return records


def write_convergence_csv(path, records_by_mode):
    """One row per mesh level: k,mu_mode,n,h,err_u,order_u,err_p,order_p,
    jump_seminorm,sup_RE."""
    with open(path, "w") as f:
        f.write("k,mu_mode,n,h,err_u,order_u,err_p,order_p,jump_seminorm,sup_RE\n")
        for mode, records in records_by_mode.items():
            for r in records:
                ou = "" if r.eoc_u is None else repr(float(r.eoc_u))
                op = "" if r.eoc_p is None else repr(float(r.eoc_p))
                f.write(f"0,{mode},{r.n},{float(r.h)!r},{float(r.err_u_l2)!r},{ou},"
                        f"{float(r.err_p_l2)!r},{op},{float(r.jump_seminorm)!r},"
                        f"{float(r.sup_relative_energy)!r}\n")


def write_convergence_md(path, records_by_mode):
    """Human-readable table, one block of columns per diffusion mode."""
    modes = list(records_by_mode)
    lengths = {len(v) for v in records_by_mode.values()}
    if len(lengths) != 1:
        raise ValueError("all diffusion modes must cover the same mesh levels")
    with open(path, "w") as f:
        header = "| h |"
        rule = "|---|"
        for mode in modes:
            header += f" err_u ({mode}) | order | err_p ({mode}) | order |"
            rule += "---|---|---|---|"
        f.write(header + "\n" + rule + "\n")
        n_rows = lengths.pop()
        for i in range(n_rows):
            first = records_by_mode[modes[0]][i]
            line = f"| {first.h:.4f} |"
            for mode in modes:
                r = records_by_mode[mode][i]
                ou = "" if r.eoc_u is None else f"{r.eoc_u:.3f}"
                op = "" if r.eoc_p is None else f"{r.eoc_p:.3f}"
                line += f" {r.err_u_l2:.3e} | {ou} | {r.err_p_l2:.3e} | {op} |"
            f.write(line + "\n")
