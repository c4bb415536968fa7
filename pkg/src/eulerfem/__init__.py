"""Finite element solver for the 2D incompressible Euler equations using
the lowest-order Raviart-Thomas / piecewise-constant pair with upwind
face stabilization and artificial diffusion."""

import os as _os

# Cap BLAS worker threads before numpy first loads its backend; only
# effective when eulerfem is imported before numpy, as the CLI does.
if _os.environ.get("EULERFEM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["EULERFEM_THREADS"])

from .analysis import (ConvergenceRecord, compute_eoc,
                       consistency_residual_div,
                       consistency_residual_momentum, jump_seminorm,
                       l2_error_pressure, l2_error_velocity, relative_energy,
                       vorticity)
from .assembly import (SaddleSystem, assemble_convection, assemble_diffusion,
                       assemble_divergence, assemble_load, assemble_mass,
                       weak_div_pairing)
from .fespace import (CellQuadrature, PressureField, VelocityField,
                      divergence, eval_broken_grad, eval_velocity,
                      interpolate, p0_mean_zero)
from .mesh import (BOUNDARY, BoundaryKind, Mesh, build_structured_mesh,
                   face_quadrature_points, write_mesh_csv)
from .scenarios import Scenario, shear_layer, taylor_green
from .stepper import (EnergyLedger, EnergyLedgerRow, State, StepperConfig,
                      initial_state, resolve_mu, run, step)
from .vtkio import write_field_csv, write_vtk

__all__ = [
    "BOUNDARY", "BoundaryKind", "CellQuadrature", "ConvergenceRecord",
    "EnergyLedger", "EnergyLedgerRow", "Mesh", "PressureField",
    "SaddleSystem", "Scenario", "State", "StepperConfig", "VelocityField",
    "assemble_convection", "assemble_diffusion", "assemble_divergence",
    "assemble_load", "assemble_mass", "build_structured_mesh", "compute_eoc",
    "consistency_residual_div", "consistency_residual_momentum", "divergence",
    "eval_broken_grad", "eval_velocity", "face_quadrature_points",
    "initial_state", "interpolate", "jump_seminorm", "l2_error_pressure",
    "l2_error_velocity", "p0_mean_zero", "relative_energy", "resolve_mu",
    "run", "shear_layer", "step", "taylor_green", "vorticity",
    "weak_div_pairing", "write_field_csv", "write_mesh_csv", "write_vtk",
]
