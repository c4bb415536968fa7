"""Semi-implicit time stepping for the stabilized RT0/P0 scheme.

Each step freezes the transport field at the previous velocity and solves
one linear saddle-point system, so the discrete energy inequality holds
step by step and the new velocity is divergence-free to solver accuracy.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (SaddleSystem, assemble_diffusion, assemble_divergence,
                       assemble_load, assemble_mass, convection_parts)
from .fespace import (PressureField, VelocityField, divergence, interpolate,
                      p0_mean_zero, zero_boundary_fluxes)
from .mesh import BoundaryKind


@dataclass
class State:
    t: float
    u: VelocityField
    p: PressureField


@dataclass
class StepperConfig:
    dt: float
    mu_h: float = 0.0
    alpha: float = None
    tol: float = 1e-10
    max_iter: int = 500
    solver: str = "direct"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.mu_h < 0:
            raise ValueError(f"diffusion parameter must be nonnegative, got {self.mu_h}")
        if self.tol <= 0:
            raise ValueError(f"solver tolerance must be positive, got {self.tol}")
        if self.alpha is not None and not 0.0 < self.alpha < 2.0:
            raise ValueError(f"diffusion exponent must lie in (0, 2), got {self.alpha}")
        if self.solver not in ("direct", "gmres"):
            raise ValueError(f"unknown solver {self.solver!r}")


def resolve_mu(mode, h):
    """Map a diffusion mode string to a numeric value for mesh size h."""
    if mode == "zero":
        return 0.0, None
    if mode == "h":
        return h, 1.0
    if mode.startswith("alpha:"):
        alpha = float(mode.split(":", 1)[1])
        if not 0.0 < alpha < 2.0:
            raise ValueError(f"diffusion exponent must lie in (0, 2), got {alpha}")
        return h ** alpha, alpha
    raise ValueError(f"unknown diffusion mode {mode!r}")


@dataclass
class EnergyLedgerRow:
    step: int
    t: float
    kinetic: float
    diff_dissip: float
    jump_dissip: float
    work: float
    balance_residual: float


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)

    @property
    def initial_kinetic(self):
        return self.rows[0].kinetic

    def kinetic_series(self):
        return np.array([r.kinetic for r in self.rows])

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("step,t,kinetic,diff_dissip,jump_dissip,work,balance_residual\n")
            for r in self.rows:
                f.write(f"{r.step},{float(r.t)!r},{float(r.kinetic)!r},{float(r.diff_dissip)!r},"
                        f"{float(r.jump_dissip)!r},{float(r.work)!r},{float(r.balance_residual)!r}\n")


def initial_state(mesh, u0):
    """Interpolate the initial velocity; the commuting property makes the
    interpolant of solenoidal data divergence-free."""
    u = zero_boundary_fluxes(interpolate(mesh, u0))
    max_div = np.abs(divergence(u).dofs).max()
    if max_div > 1e-10:
        raise ValueError(
            f"initial velocity is not discretely divergence-free: max |div| = {max_div:.3e}")
    return State(0.0, u, PressureField(mesh, np.zeros(mesh.n_cells)))


class _StepWorkspace:
    """Prebuilt operators and the per-step saddle solve for one mesh/config."""

    def __init__(self, mesh, cfg):
        self.mesh = mesh
        self.cfg = cfg
        self.mass = assemble_mass(mesh)
        self.diffusion = assemble_diffusion(mesh)
        self.div_op = assemble_divergence(mesh)
        if mesh.boundary_kind is BoundaryKind.NO_FLUX:
            self.free = mesh.interior_faces
        else:
            self.free = np.arange(mesh.n_faces)
        self.static_uu = (self.mass / cfg.dt + cfg.mu_h * self.diffusion).tocsr()
        self.b_free = self.div_op[:, self.free].tocsr()
        areas = mesh.cell_area
        nc = mesh.n_cells
        self.m_col = sp.csr_matrix((areas, (np.arange(nc), np.zeros(nc, dtype=int))),
                                   shape=(nc, 1))
        self.m_row = self.m_col.T.tocsr()
        # gauge-pinned divergence block used by the bordered solver below
        self.b_pinned = sp.vstack([sp.csr_matrix((1, self.b_free.shape[1])),
                                   self.b_free[1:]]).tocsr()
        self.pin_diag = sp.coo_matrix(([1.0], ([0], [0])), shape=(nc, nc)).tocsr()
        self.last_x = None

    def advance(self, state, forcing, dt_override=None):
        mesh, cfg = self.mesh, self.cfg
        dt = cfg.dt if dt_override is None else dt_override
        cell, central, upwind = convection_parts(mesh, state.u)
        conv = cell - central + upwind
        if dt_override is None:
            k_full = self.static_uu + conv
        else:
            k_full = self.mass / dt + cfg.mu_h * self.diffusion + conv
        k_free = k_full[self.free][:, self.free]

        t_new = state.t + dt
        rhs_u_full = self.mass @ state.u.dofs / dt
        if forcing is not None:
            rhs_u_full = rhs_u_full + assemble_load(mesh, forcing, t_new)

        nf = len(self.free)
        nc = mesh.n_cells
        system = SaddleSystem(a_uu=k_free, b=self.b_free,
                              rhs_u=rhs_u_full[self.free], rhs_p=np.zeros(nc),
                              mean_row=mesh.cell_area)
        a_big = sp.bmat([[system.a_uu, -system.b.T, None],
                         [system.b, None, self.m_col],
                         [None, self.m_row, None]], format="csc")
        rhs = np.concatenate([system.rhs_u, system.rhs_p, [0.0]])

        x = self._solve(a_big, k_free, rhs)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite solution at t = {t_new}; aborting run")

        u_new = VelocityField(mesh, np.zeros(mesh.n_faces))
        u_new.dofs[self.free] = x[:nf]
        p_new = p0_mean_zero(PressureField(mesh, x[nf:nf + nc]))
        new_state = State(t_new, u_new, p_new)

        row = self._ledger_row(state, new_state, upwind, rhs_u_full, forcing, dt)
        return new_state, row

    def _solve(self, a_big, k_free, rhs):
        cfg = self.cfg
        if cfg.solver == "direct":
            x = self._solve_bordered_direct(a_big, k_free, rhs)
        else:
            ilu = spla.spilu(a_big, drop_tol=1e-6, fill_factor=30)
            precond = spla.LinearOperator(a_big.shape, ilu.solve)
            x0 = self.last_x if self.last_x is not None and len(self.last_x) == len(rhs) else None
            x, info = spla.gmres(a_big, rhs, x0=x0, M=precond, rtol=cfg.tol,
                                 atol=0.0, restart=200, maxiter=cfg.max_iter)
            if info > 0:
                rel = self._relative_residual(a_big, x, rhs)
                raise RuntimeError(
                    f"linear solver did not converge: relative residual {rel:.3e}")
        rel = self._relative_residual(a_big, x, rhs)
        if rel > cfg.tol:
            raise RuntimeError(
                f"linear solve missed tolerance {cfg.tol:.1e}: relative residual {rel:.3e}")
        self.last_x = x
        return x

    def _solve_bordered_direct(self, a_big, k_free, rhs):
        """Exact solve of the bordered system at sparse cost.

        The dense mean-constraint row and column explode the fill of a
        direct factorization, so factor the gauge-pinned saddle matrix
        instead and recover the bordered solution through a rank-3
        Woodbury correction, polishing with iterative refinement until
        the bordered residual meets the tolerance.
        """
        nf = k_free.shape[0]
        nc = self.mesh.n_cells
        n_sp = nf + nc
        a_pin = sp.bmat([[k_free, -self.b_free.T],
                         [self.b_pinned, self.pin_diag]], format="csc")
        lu = spla.splu(a_pin)

        areas = self.mesh.cell_area
        # a_big differs from diag(a_pin, 1) by three rank-one terms: the
        # restored divergence row of the pinned cell, the multiplier
        # column, and the mean-constraint row.
        v1 = np.zeros(n_sp + 1)
        v1[:nf] = self.b_free.getrow(0).toarray().ravel()
        v1[nf] = -1.0
        v1[n_sp] = areas[0]
        u2 = np.zeros(n_sp + 1)
        u2[nf + 1:n_sp] = areas[1:]
        v3 = np.zeros(n_sp + 1)
        v3[nf:n_sp] = areas
        v3[n_sp] = -1.0

        e_rho = np.zeros(n_sp)
        e_rho[nf] = 1.0
        z1 = np.concatenate([lu.solve(e_rho), [0.0]])
        z2 = np.concatenate([lu.solve(u2[:n_sp]), [0.0]])
        z3 = np.zeros(n_sp + 1)
        z3[n_sp] = 1.0
        e_last = np.zeros(n_sp + 1)
        e_last[n_sp] = 1.0
        z_cols = np.column_stack([z1, z2, z3])
        vt = np.vstack([v1, e_last, v3])
        small = np.eye(3) + vt @ z_cols

        def apply_inverse(b):
            w = np.concatenate([lu.solve(b[:n_sp]), [b[n_sp]]])
            return w - z_cols @ np.linalg.solve(small, vt @ w)

        x = apply_inverse(rhs)
        for _ in range(3):
            if self._relative_residual(a_big, x, rhs) <= self.cfg.tol:
                return x
            x = x + apply_inverse(rhs - a_big @ x)
        if self._relative_residual(a_big, x, rhs) <= self.cfg.tol:
            return x
        # safety net: the expensive factorization of the bordered matrix
        return spla.splu(a_big).solve(rhs)

    @staticmethod
    def _relative_residual(a_big, x, rhs):
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            scale = 1.0
        return np.linalg.norm(a_big @ x - rhs) / scale

    def _ledger_row(self, old, new, upwind, rhs_u_full, forcing, dt):
        u0 = old.u.dofs
        u1 = new.u.dofs
        du = u1 - u0
        kinetic = 0.5 * u1 @ (self.mass @ u1)
        kinetic_old = 0.5 * u0 @ (self.mass @ u0)
        diff_rate = self.cfg.mu_h * (u1 @ (self.diffusion @ u1))
        jump_rate = u1 @ (upwind @ u1)
        work_rate = (rhs_u_full - self.mass @ u0 / dt) @ u1 if forcing is not None else 0.0
        residual = (kinetic - kinetic_old + 0.5 * du @ (self.mass @ du)
                    + dt * (diff_rate + jump_rate) - dt * work_rate)
        step_index = int(round(new.t / self.cfg.dt))
        return EnergyLedgerRow(step_index, new.t, kinetic, diff_rate,
                               jump_rate, work_rate, residual)


def _workspace(mesh, cfg):
    key = ("step_ws", cfg.dt, cfg.mu_h, cfg.tol, cfg.solver, cfg.max_iter)
    if key not in mesh.cache:
        mesh.cache[key] = _StepWorkspace(mesh, cfg)
    return mesh.cache[key]


def step(state, cfg, forcing=None):
    """Advance one time step of length cfg.dt."""
    ws = _workspace(state.u.mesh, cfg)
    new_state, _ = ws.advance(state, forcing)
    return new_state


def run(mesh, cfg, scenario, T, snapshot_times=None, on_step=None):
    """March from 0 to T and collect snapshots plus the energy ledger.

    snapshot_times=None keeps every step; otherwise each requested time is
    rounded to the nearest step and the initial and final states are always
    included.  on_step(previous, new, ledger_row) fires after every step.
    """
    if T < 0:
        raise ValueError(f"final time must be nonnegative, got {T}")
    ws = _workspace(mesh, cfg)
    state = initial_state(mesh, scenario.initial_velocity)
    e0 = 0.5 * state.u.dofs @ (ws.mass @ state.u.dofs)
    ledger = EnergyLedger([EnergyLedgerRow(0, 0.0, e0, 0.0, 0.0, 0.0, 0.0)])

    n_steps = max(int(np.ceil(T / cfg.dt - 1e-9)), 0)
    if snapshot_times is None:
        wanted = set(range(n_steps + 1))
    else:
        bad = [s for s in snapshot_times if s < -1e-12 or s > T + 1e-12]
        if bad:
            raise ValueError(f"snapshot times outside [0, T]: {bad}")
        wanted = {min(int(round(s / cfg.dt)), n_steps) for s in snapshot_times}
        wanted |= {0, n_steps}

    trajectory = [state] if 0 in wanted else []
    for k in range(1, n_steps + 1):
        t_target = min(k * cfg.dt, T)
        dt_k = t_target - state.t
        use_override = abs(dt_k - cfg.dt) > 1e-12 * cfg.dt
        try:
            new_state, row = ws.advance(state, scenario.forcing,
                                        dt_override=dt_k if use_override else None)
        except RuntimeError as err:
            raise RuntimeError(f"step {k} failed: {err}") from err
        ledger.rows.append(row)
        if on_step is not None:
            on_step(state, new_state, row)
        state = new_state
        if k in wanted:
            trajectory.append(state)
    if not trajectory or trajectory[-1] is not state:
        trajectory.append(state)
    return trajectory, ledger
