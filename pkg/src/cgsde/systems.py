"""Concrete systems used across the test suite and the experiment drivers.

The central family is the two-dimensional "tracking" OU pair, in which the
slow variable relaxes toward the fast one:

    dX = -(X - Y) dt + slow_noise dU
    dY = -(1/eps) Y dt + sqrt(2/eps) dW

With ``slow_noise = 0`` this is the canonical case where averaging and the
projection method disagree (averaged drift -x, projected drift 0) and where
the conditional law of y given x does not converge to the frozen-process law
as eps -> 0.  With ``slow_noise = sqrt(2)`` the same pair becomes the
well-behaved case where both limits hold.

Also provided: quadratic-potential gradient systems and their rotated
(non-reversible) variants for the frozen-law vs conditional-law diagnostics.
"""

from __future__ import annotations

import numpy as np

from .coarse_grain import ReducedModel
from .linear_gaussian import (
    GaussianMeasure,
    LinearSDE,
    gaussian_condition,
    gyongy_drift_linear,
    solve_lyapunov,
)
from .model import CoefficientField, SlowFastSystem, slow_fast_system

__all__ = [
    "tracking_system",
    "tracking_linear",
    "tracking_ecd",
    "frozen_tracking_law",
    "averaged_tracking_model",
    "projected_tracking_model",
    "gyongy_tracking_model",
    "quadratic_potential",
    "potential_system",
    "ROTATIONS",
]

SQRT2 = float(np.sqrt(2.0))


def tracking_system(eps: float | None = None, slow_noise: float = 0.0) -> SlowFastSystem:
    """The 2-D tracking OU pair (see module docstring)."""
    alpha = None
    if slow_noise != 0.0:
        alpha = CoefficientField.const_diag(float(slow_noise), 1)
    return slow_fast_system(
        d=1, m=1,
        f=lambda x, y: y - x,
        g=lambda x, y: -y,
        alpha=alpha,
        beta=CoefficientField.const_diag(SQRT2, 1),
        eps=eps,
    )


def tracking_linear(eps: float = 1.0, slow_noise: float = 0.0) -> LinearSDE:
    """The same system as a linear SDE with the eps scaling folded in."""
    A = np.array([[-1.0, 1.0], [0.0, -1.0 / eps]])
    C = np.array([[float(slow_noise), 0.0], [0.0, np.sqrt(2.0 / eps)]])
    return LinearSDE(A=A, C=C)


def tracking_ecd(eps: float = 1.0, slow_noise: float = 0.0) -> tuple[float, float]:
    """(slope, variance) of the Gaussian ECD rho(y | x) = N(slope * x, variance).

    Derived from the stationary covariance (Lyapunov equation) by
    conditioning, not from hand formulas.
    """
    lin = tracking_linear(eps, slow_noise)
    g = GaussianMeasure(mean=np.zeros(2), cov=solve_lyapunov(lin.A, lin.C))
    at0 = gaussian_condition(g, 1, [0.0])
    at1 = gaussian_condition(g, 1, [1.0])
    return float(at1.mean[0] - at0.mean[0]), float(at0.cov[0, 0])


def frozen_tracking_law() -> tuple[float, float]:
    """Stationary law N(0, 1) of the frozen fast process dY = -Y dt + sqrt(2) dW."""
    return 0.0, 1.0


def averaged_tracking_model(slow_noise: float = 0.0) -> ReducedModel:
    """Averaging reduction of the tracking pair: dX = -X dt + slow_noise dU."""
    sq = None
    if slow_noise != 0.0:
        sq = lambda t, x: np.broadcast_to(float(slow_noise) ** 2, (x.shape[0], 1, 1))
    return ReducedModel(kind="averaged", d=1, drift=lambda t, x: -x,
                        diffusion_sq=sq, provenance="analytic")


def projected_tracking_model(eps: float = 1.0, slow_noise: float = 0.0) -> ReducedModel:
    """Projection reduction: drift (slope - 1) x with the ECD mean slope."""
    slope, _ = tracking_ecd(eps, slow_noise)
    rate = slope - 1.0
    sq = None
    if slow_noise != 0.0:
        sq = lambda t, x: np.broadcast_to(float(slow_noise) ** 2, (x.shape[0], 1, 1))
    return ReducedModel(kind="projected", d=1, drift=lambda t, x: rate * x,
                        diffusion_sq=sq, provenance="analytic")


def gyongy_tracking_model(m0, sigma0) -> ReducedModel:
    """Mimicking-marginal reduction of the noiseless-slow tracking pair.

    Deterministic (zero diffusion), with the closed-form time-dependent drift;
    ``m0`` and diagonal ``sigma0`` describe the initial Gaussian ensemble.
    """
    m0 = np.asarray(m0, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)

    def drift(t, x):
        return np.asarray(gyongy_drift_linear(t, x, m0, sigma0), dtype=float)

    return ReducedModel(kind="gyongy", d=1, drift=drift, diffusion_sq=None,
                        provenance="analytic", t_domain=(0.0, np.inf))


def quadratic_potential(cxx: float = 1.0, cyy: float = 1.0, cxy: float = 0.5):
    """V(x, y) = cxx x^2/2 + cyy y^2/2 + cxy x y and its partial derivatives.

    All three callables are elementwise (broadcast over any shapes).
    """
    V = lambda x, y: 0.5 * cxx * x ** 2 + 0.5 * cyy * y ** 2 + cxy * x * y
    vx = lambda x, y: cxx * x + cxy * y
    vy = lambda x, y: cyy * y + cxy * x
    return V, vx, vy


ROTATIONS = ("gradient", "j-block", "symplectic")


def potential_system(vx, vy, rotation: str = "gradient") -> SlowFastSystem:
    """dZ = (J - I) grad V dt + sqrt(2) dW with d = m = 1 and antisymmetric J.

    rotation "gradient" is J = 0; "j-block" forces J = diag(J1, J2) with 1x1
    antisymmetric blocks, which vanish, so it coincides with the gradient
    system; "symplectic" is J = [[0, 1], [-1, 0]].  All three leave
    exp(-V) invariant for the joint dynamics.
    """
    if rotation not in ROTATIONS:
        raise ValueError(f"rotation must be one of {ROTATIONS}")
    if rotation == "symplectic":
        f = lambda x, y: vy(x, y) - vx(x, y)
        g = lambda x, y: -vx(x, y) - vy(x, y)
    else:
        f = lambda x, y: -vx(x, y)
        g = lambda x, y: -vy(x, y)
    return slow_fast_system(
        d=1, m=1, f=f, g=g,
        alpha=CoefficientField.const_diag(SQRT2, 1),
        beta=CoefficientField.const_diag(SQRT2, 1),
    )
