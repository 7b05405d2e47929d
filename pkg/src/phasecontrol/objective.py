"""Interface-tracking cost functional.

The running cost is

    F = 1/2 ∫ (g(phi) - chi)²  +  kappa/2 ∫ (theta - theta_q)²

integrated over space-time with the package-wide rectangle rule.  The
weight g is the C¹ bump

    g(r) = lam / ( ((r² - eps²)⁺)² + lam ),

equal to one exactly on the diffuse-interface band |r| <= eps and decaying
to zero outside, so the first term rewards overlap between the band and the
target set chi.  A sharp 0/1 indicator variant is kept for reporting only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError
from .grids import DIRICHLET, NEUMANN, TimeField, Trajectory

SMOOTHED = "smoothed"
SHARP = "sharp"


@dataclass
class ObjectiveSpec:
    kappa: float
    eps_g: float
    lambda_g: float
    chi: TimeField
    theta_q: TimeField
    g_mode: str = SMOOTHED

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigurationError("kappa must be nonnegative")
        if self.eps_g <= 0:
            raise ConfigurationError("interface half-width eps_g must be positive")
        if self.lambda_g <= 0:
            raise ConfigurationError("smoothing parameter lambda_g must be positive")
        if self.g_mode not in (SMOOTHED, SHARP):
            raise ConfigurationError(f"unknown g_mode {self.g_mode!r}")
        if self.chi.kind != NEUMANN:
            raise ShapeError("chi must live on the neumann layout (it couples to phi)")
        if self.theta_q.kind != DIRICHLET:
            raise ShapeError("theta_q must live on the dirichlet layout")


def g_value(spec: ObjectiveSpec, r):
    """Smoothed indicator of the band |r| <= eps_g, with values in (0, 1]."""
    r = np.asarray(r, dtype=float)
    a = np.maximum(r * r - spec.eps_g**2, 0.0)
    out = spec.lambda_g / (a * a + spec.lambda_g)
    return out if out.ndim else float(out)


def g_prime(spec: ObjectiveSpec, r):
    """Derivative of g; identically zero on the band, C¹ across its edge."""
    r = np.asarray(r, dtype=float)
    a = np.maximum(r * r - spec.eps_g**2, 0.0)
    out = -4.0 * spec.lambda_g * r * a / (a * a + spec.lambda_g) ** 2
    return out if out.ndim else float(out)


def sharp_indicator(spec: ObjectiveSpec, r):
    r = np.asarray(r, dtype=float)
    out = np.where(np.abs(r) <= spec.eps_g, 1.0, 0.0)
    return out if out.ndim else float(out)


def eval_g(spec: ObjectiveSpec, r):
    """Evaluate the configured g (smoothed by default, sharp for reporting)."""
    if spec.g_mode == SHARP:
        return sharp_indicator(spec, r)
    return g_value(spec, r)


@dataclass
class CostBreakdown:
    total: float
    interface: float
    temperature: float
    sharp_interface: float


def eval_cost(spec: ObjectiveSpec, traj: Trajectory) -> CostBreakdown:
    """Rectangle-rule space-time quadrature of both cost terms (levels 1..N)."""
    grid = traj.grid
    if spec.chi.values.shape != traj.phi.values.shape:
        raise ShapeError("chi does not match the trajectory's time levels")
    if spec.theta_q.values.shape != traj.theta.values.shape:
        raise ShapeError("theta_q does not match the trajectory's time levels")
    w_n = grid.weights(NEUMANN)
    w_d = grid.weights(DIRICHLET)
    dt = grid.dt

    dphi = g_value(spec, traj.phi.values[1:]) - spec.chi.values[1:]
    interface = 0.5 * dt * float(np.sum(dphi * dphi * w_n))

    temperature = 0.0
    if spec.kappa > 0.0:
        dth = traj.theta.values[1:] - spec.theta_q.values[1:]
        temperature = 0.5 * spec.kappa * dt * float(np.sum(dth * dth * w_d))

    dsharp = sharp_indicator(spec, traj.phi.values[1:]) - spec.chi.values[1:]
    sharp = 0.5 * dt * float(np.sum(dsharp * dsharp * w_n))

    return CostBreakdown(interface + temperature, interface, temperature, sharp)
