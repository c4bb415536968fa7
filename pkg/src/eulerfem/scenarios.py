"""Closed-form benchmark data: the decaying Taylor-Green vortex with its
manufactured forcing, and the doubly periodic shear layer."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import BoundaryKind

TWO_PI = 2.0 * np.pi


@dataclass
class Scenario:
    name: str
    domain: tuple
    boundary_kind: BoundaryKind
    initial_velocity: Callable
    exact_velocity: Optional[Callable] = None
    exact_pressure: Optional[Callable] = None
    forcing: Optional[Callable] = None
    velocity_time_derivative: Optional[Callable] = None
    velocity_gradient: Optional[Callable] = None

    @property
    def has_exact(self):
        return self.exact_velocity is not None


def taylor_green(lam=100.0):
    """Taylor-Green vortex on [0, 2pi]^2 driven so the vortex decays like
    exp(-2t/lam); the normal velocity vanishes on the whole boundary."""
    if lam <= 0:
        raise ValueError(f"decay constant must be positive, got {lam}")

    def velocity(t, pts):
        x, y = pts[..., 0], pts[..., 1]
        g = np.exp(-2.0 * t / lam)
        return np.stack([np.sin(x) * np.cos(y) * g,
                         -np.cos(x) * np.sin(y) * g], axis=-1)

    def pressure(t, pts):
        x, y = pts[..., 0], pts[..., 1]
        return 0.25 * (np.cos(2.0 * x) + np.cos(2.0 * y)) * np.exp(-4.0 * t / lam)

    def forcing(t, pts):
        return (-2.0 / lam) * np.exp(-2.0 * t / lam) * velocity(0.0, pts)

    def velocity_dt(t, pts):
        return (-2.0 / lam) * velocity(t, pts)

    def velocity_grad(t, pts):
        # grad[..., i, j] = d u_i / d x_j
        x, y = pts[..., 0], pts[..., 1]
        g = np.exp(-2.0 * t / lam)
        gxx = np.cos(x) * np.cos(y) * g
        gxy = -np.sin(x) * np.sin(y) * g
        gyx = np.sin(x) * np.sin(y) * g
        gyy = -np.cos(x) * np.cos(y) * g
        return np.stack([np.stack([gxx, gxy], axis=-1),
                         np.stack([gyx, gyy], axis=-1)], axis=-2)

    return Scenario(
        name="taylor_green",
        domain=(0.0, 0.0, TWO_PI, TWO_PI),
        boundary_kind=BoundaryKind.NO_FLUX,
        initial_velocity=lambda pts: velocity(0.0, pts),
        exact_velocity=velocity,
        exact_pressure=pressure,
        forcing=forcing,
        velocity_time_derivative=velocity_dt,
        velocity_gradient=velocity_grad,
    )


def shear_layer(delta=0.05, rho=np.pi / 15.0):
    """Double shear layer on the periodic square, horizontal tanh profiles
    at x2 = pi/2 and 3pi/2 with a small vertical perturbation."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"perturbation amplitude out of range: {delta}")
    if rho <= 0:
        raise ValueError(f"layer width must be positive, got {rho}")

    def velocity(pts):
        x, y = pts[..., 0], pts[..., 1]
        # branch on the real part so complex-step probes stay valid
        lower = np.tanh((y - 0.5 * np.pi) / rho)
        upper = np.tanh((1.5 * np.pi - y) / rho)
        u1 = np.where(np.real(y) <= np.pi, lower, upper)
        return np.stack([u1, delta * np.sin(x)], axis=-1)

    return Scenario(
        name="shear_layer",
        domain=(0.0, 0.0, TWO_PI, TWO_PI),
        boundary_kind=BoundaryKind.PERIODIC,
        initial_velocity=velocity,
    )


_BUILDERS = {"taylor_green": taylor_green, "shear_layer": shear_layer}


def by_name(name, **kwargs):
    if name not in _BUILDERS:
        raise ValueError(f"unknown scenario {name!r}; pick one of {sorted(_BUILDERS)}")
    return _BUILDERS[name](**kwargs)
