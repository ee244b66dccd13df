"""Grid-based Fokker-Planck adjoint residuals and condition audits.

The adjoint of the generator of a 2-D slow-fast pair splits into a slow part,
a noise cross part, and a fast part,

    L'_x v = -d_x(f v) + d_xx(A11 v)
    L'_xy v = d_xy(A12 v) + d_yx(A21 v)
    L'_y v = -d_y(g v) + d_yy(A22 v)

with A the half squared diffusion, A = (1/2) sigma sigma^T of the joint
system (A11 = (alpha alpha^T + alpha12 alpha12^T)/2, A12 = alpha12 beta^T / 2,
A22 = beta beta^T / 2).  A stationary density lies in the kernel of the full
adjoint; whether it lies in the kernels of the slow+cross and fast parts
separately is exactly the criterion for the frozen-process law to coincide
with the equilibrium conditional law.

All stencils are centered second order in divergence form; a one-cell margin
is excluded from every norm, and densities are expected to decay below
1e-10 of their maximum at the window boundary (a warning is attached
otherwise).  "Bounded away from zero" is operationalized as: the residual at
h/2 is at least half the residual at h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coarse_grain import ReducedModel
from .model import GridDensity1D, GridDensity2D, SlowFastSystem, marginal_x

__all__ = [
    "AdjointParts",
    "fp_adjoint_parts",
    "Prop41Report",
    "check_prop41",
    "SolvabilityReport",
    "check_solvability",
    "SweepReport",
    "ecd_epsilon_sweep",
    "MeanForceReport",
    "check_mean_force",
    "ObtuseAngleReport",
    "check_obtuse_angle_1d",
    "LyapunovConditionReport",
    "check_lyapunov_condition",
    "EllipticityReport",
    "check_uniform_ellipticity",
    "CoefficientLimitReport",
    "check_coefficient_limits",
]

_MIN_GRID = 9
_BOUNDARY_DECAY = 1e-10
_NO_DECAY_FACTOR = 0.5


def _dx(v: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2.0 * h)
    return out


def _dy(v: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * h)
    return out


def _dxx(v: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1, :] = (v[2:, :] - 2.0 * v[1:-1, :] + v[:-2, :]) / (h * h)
    return out


def _dyy(v: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / (h * h)
    return out


def _dxy(v: np.ndarray, hx: float, hy: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (
        v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]
    ) / (4.0 * hx * hy)
    return out


def _interior_norms(v: np.ndarray, hx: float, hy: float) -> tuple[float, float]:
    core = v[1:-1, 1:-1]
    return float(np.abs(core).max()), float(np.sqrt((core ** 2).sum() * hx * hy))


def _scalar_grid(val, shape) -> np.ndarray:
    v = np.asarray(val, dtype=float)
    if v.size == 1:
        return np.full(shape, float(v.reshape(())))
    n = int(np.prod(shape))
    if v.size != n:
        raise ValueError(f"coefficient returned {v.size} values for a {n}-point grid")
    return v.reshape(shape)


def _coeff_grids(system: SlowFastSystem, X: np.ndarray, Y: np.ndarray):
    """Evaluate drifts and half squared diffusions of a d = m = 1 system."""
    if system.d != 1 or system.m != 1:
        raise ValueError("grid diagnostics require d = m = 1")
    shape = X.shape
    pts_x = X.reshape(-1, 1)
    pts_y = Y.reshape(-1, 1)

    def ev(field):
        if field is None:
            return np.zeros(shape)
        return _scalar_grid(np.asarray(field.fn(None, pts_x, pts_y), dtype=float), shape)

    F = ev(system.drift_slow)
    G = ev(system.drift_fast)
    alpha = ev(system.diff_slow)
    beta = ev(system.diff_fast)
    a12 = ev(system.cross_diff)
    A11 = 0.5 * (alpha ** 2 + a12 ** 2)
    A12 = 0.5 * (a12 * beta)
    A22 = 0.5 * beta ** 2
    return F, G, A11, A12, A22


@dataclass(frozen=True)
class AdjointParts:
    """Slow, cross, and fast adjoint contributions on the grid (margin zeroed)."""

    lx: np.ndarray
    lxy: np.ndarray
    ly: np.ndarray
    hx: float
    hy: float
    boundary_warning: bool

    @property
    def full(self) -> np.ndarray:
        return self.lx + self.lxy + self.ly

    def norms(self) -> dict:
        out = {}
        for name, v in [("slow", self.lx), ("cross", self.lxy), ("fast", self.ly),
                        ("slow_plus_cross", self.lx + self.lxy), ("full", self.full)]:
            sup, l2 = _interior_norms(v, self.hx, self.hy)
            out[name] = {"sup": sup, "l2": l2}
        return out


def fp_adjoint_parts(rho: GridDensity2D, system: SlowFastSystem) -> AdjointParts:
    """The three adjoint contributions applied to a gridded density."""
    if rho.x.size < _MIN_GRID or rho.y.size < _MIN_GRID:
        raise ValueError(f"grid too coarse: need at least {_MIN_GRID} points per axis")
    X, Y = np.meshgrid(rho.x, rho.y, indexing="ij")
    F, G, A11, A12, A22 = _coeff_grids(system, X, Y)
    v = rho.values
    hx, hy = rho.hx, rho.hy
    lx = -_dx(F * v, hx) + _dxx(A11 * v, hx)
    lxy = 2.0 * _dxy(A12 * v, hx, hy)
    ly = -_dy(G * v, hy) + _dyy(A22 * v, hy)
    vmax = v.max()
    edge = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
    warn = bool(vmax > 0 and edge > _BOUNDARY_DECAY * vmax)
    return AdjointParts(lx=lx, lxy=lxy, ly=ly, hx=hx, hy=hy, boundary_warning=warn)


def _coarsen(rho: GridDensity2D) -> GridDensity2D:
    if rho.x.size % 2 == 0 or rho.y.size % 2 == 0:
        raise ValueError("two-resolution checks need odd grid sizes")
    return GridDensity2D(x=rho.x[::2], y=rho.y[::2], values=rho.values[::2, ::2])


@dataclass(frozen=True)
class Prop41Report:
    """Residual norms of the split adjoint at two resolutions plus verdict."""

    h: float
    norms_fine: dict
    norms_coarse: dict
    tol: float
    verdict: str                  # "coincide" | "do not coincide"
    boundary_warning: bool
    window: tuple

    def decay_ratio(self, part: str, norm: str = "sup") -> float:
        fine = self.norms_fine[part][norm]
        coarse = self.norms_coarse[part][norm]
        return float("inf") if fine == 0 else coarse / fine

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "tol": self.tol,
            "verdict": self.verdict,
            "boundary_warning": self.boundary_warning,
            "window": list(map(float, self.window)),
            "norms_fine": self.norms_fine,
            "norms_coarse": self.norms_coarse,
        }


def check_prop41(rho: GridDensity2D, system: SlowFastSystem, tol: float) -> Prop41Report:
    """Do the frozen-process law and the conditional law coincide?

    Verdict "coincide" when both the slow+cross and the fast residual sup
    norms on the given grid fall below ``tol``; the same norms on the
    2h-coarsened grid are always included as convergence evidence.  Requires
    a strictly positive x-marginal on the window.
    """
    marg = marginal_x(rho)
    if marg.values.min() <= 1e-12:
        raise ValueError("vanishing marginal on the window: proposition precondition fails")
    fine = fp_adjoint_parts(rho, system)
    coarse = fp_adjoint_parts(_coarsen(rho), system)
    nf, nc = fine.norms(), coarse.norms()
    ok = nf["slow_plus_cross"]["sup"] <= tol and nf["fast"]["sup"] <= tol
    return Prop41Report(
        h=rho.hx, norms_fine=nf, norms_coarse=nc, tol=tol,
        verdict="coincide" if ok else "do not coincide",
        boundary_warning=fine.boundary_warning,
        window=(rho.x[0], rho.x[-1], rho.y[0], rho.y[-1]),
    )


@dataclass(frozen=True)
class SolvabilityReport:
    """Residual of the averaged adjoint applied to a candidate 1-D density."""

    h: float
    sup: float
    l2: float
    sup_coarse: float
    l2_coarse: float

    @property
    def second_order(self) -> bool:
        return self.sup > 0 and self.sup_coarse / self.sup >= 1.0 / _NO_DECAY_FACTOR

    @property
    def bounded_away(self) -> bool:
        return self.sup_coarse > 0 and self.sup >= _NO_DECAY_FACTOR * self.sup_coarse

    def as_dict(self) -> dict:
        return {"h": self.h, "sup": self.sup, "l2": self.l2,
                "sup_coarse": self.sup_coarse, "l2_coarse": self.l2_coarse,
                "second_order": self.second_order, "bounded_away": self.bounded_away}


def _solvability_residual(rho_bar: GridDensity1D, model: ReducedModel):
    x = rho_bar.x
    v = rho_bar.values
    h = rho_bar.hx
    pts = x[:, None]
    fA = np.asarray(model.drift(0.0, pts), dtype=float).reshape(-1)
    if model.diffusion_sq is None:
        sA = np.zeros_like(fA)
    else:
        sA = np.asarray(model.diffusion_sq(0.0, pts), dtype=float).reshape(-1)
    r = np.zeros_like(v)
    fv = fA * v
    av = 0.5 * sA * v
    r[1:-1] = -(fv[2:] - fv[:-2]) / (2 * h) + (av[2:] - 2 * av[1:-1] + av[:-2]) / (h * h)
    core = r[1:-1]
    return float(np.abs(core).max()), float(np.sqrt((core ** 2).sum() * h))


def check_solvability(rho_bar: GridDensity1D, model: ReducedModel) -> SolvabilityReport:
    """Is the candidate density stationary for the reduced model?

    Applies the 1-D divergence-form adjoint -(f v)' + ((1/2) s v)'' at the
    given resolution and at 2h (grid subsampling), boundary excluded.
    """
    if rho_bar.x.size < _MIN_GRID:
        raise ValueError(f"grid too coarse: need at least {_MIN_GRID} points")
    if rho_bar.x.size % 2 == 0:
        raise ValueError("two-resolution checks need odd grid sizes")
    sup, l2 = _solvability_residual(rho_bar, model)
    coarse = GridDensity1D(x=rho_bar.x[::2], values=rho_bar.values[::2])
    sup_c, l2_c = _solvability_residual(coarse, model)
    return SolvabilityReport(h=rho_bar.hx, sup=sup, l2=l2, sup_coarse=sup_c, l2_coarse=l2_c)


@dataclass(frozen=True)
class SweepReport:
    """Moment distances between the conditional and frozen laws per epsilon."""

    eps: np.ndarray
    mean_dist: np.ndarray
    var_dist: np.ndarray
    distance: np.ndarray          # mean_dist + var_dist
    slope: float | None           # fitted log-log slope, None for a single eps

    def as_rows(self):
        return [
            [float(e), float(md), float(vd), float(d)]
            for e, md, vd, d in zip(self.eps, self.mean_dist, self.var_dist, self.distance)
        ]


def ecd_epsilon_sweep(family: Callable, x: float, eps_list: Sequence[float]) -> SweepReport:
    """Distance d(rho^eps(.|x), rho^(x)) = |dmean| + |dvar| along an eps list.

    ``family(eps, x)`` returns the Gaussian moment pairs
    ``(ecd_mean, ecd_var, frozen_mean, frozen_var)``; the fitted log-log slope
    is reported when at least two distinct eps values are given (None
    otherwise).
    """
    eps = np.asarray(list(eps_list), dtype=float)
    rows = np.array([family(float(e), x) for e in eps], dtype=float)
    mean_dist = np.abs(rows[:, 0] - rows[:, 2])
    var_dist = np.abs(rows[:, 1] - rows[:, 3])
    dist = mean_dist + var_dist
    slope = None
    if eps.size >= 2 and np.unique(eps).size >= 2 and np.all(dist > 0):
        slope = float(np.polyfit(np.log(eps), np.log(dist), 1)[0])
    return SweepReport(eps=eps, mean_dist=mean_dist, var_dist=var_dist,
                       distance=dist, slope=slope)


@dataclass(frozen=True)
class MeanForceReport:
    x: np.ndarray
    projected_drift: np.ndarray      # quadrature conditional average of -dV/dx
    grad_log_marginal: np.ndarray    # centered difference of log of the x-marginal
    sup_discrepancy: float


def check_mean_force(V: Callable, x_grid, y_lo: float = -30.0, y_hi: float = 30.0,
                     n_y: int = 2001, h_x: float = 1e-4) -> MeanForceReport:
    """Mean-force identity for gradient systems with invariant density e^{-V}:

    the projected drift (conditional average of -dV/dx under e^{-V(x, .)})
    must equal d/dx log of the x-marginal.  The left side uses trapezoid
    quadrature in y, the right side a centered difference of the log marginal.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    y = np.linspace(y_lo, y_hi, n_y)
    fP = np.empty_like(x_grid)
    dlog = np.empty_like(x_grid)
    for i, x in enumerate(x_grid):
        v0 = np.asarray(V(x, y), dtype=float)
        shift = float(v0.min())
        if not np.isfinite(shift):
            raise ValueError(f"quadrature underflow at x={x:.6g}")
        w = np.exp(-(v0 - shift))
        z0 = np.trapezoid(w, y)
        if not z0 > 0:
            raise ValueError(f"quadrature underflow at x={x:.6g}")
        hv = 1e-6 * max(1.0, abs(x))
        dvdx = (V(x + hv, y) - V(x - hv, y)) / (2.0 * hv)
        fP[i] = -np.trapezoid(dvdx * w, y) / z0
        zp = np.trapezoid(np.exp(-(V(x + h_x, y) - shift)), y)
        zm = np.trapezoid(np.exp(-(V(x - h_x, y) - shift)), y)
        if not (zp > 0 and zm > 0):
            raise ValueError(f"quadrature underflow at x={x:.6g}")
        dlog[i] = (np.log(zp) - np.log(zm)) / (2.0 * h_x)
    return MeanForceReport(
        x=x_grid, projected_drift=fP, grad_log_marginal=dlog,
        sup_discrepancy=float(np.abs(fP - dlog).max()),
    )


@dataclass(frozen=True)
class ObtuseAngleReport:
    sup_dx_drift: float
    lam0: float
    holds: bool


def check_obtuse_angle_1d(b: Callable, t_grid, x_grid, lam0: float) -> ObtuseAngleReport:
    """1-D constant-diffusion obtuse-angle condition: d b / d x <= -lam0.

    ``b(t, x)`` is the (scalar) drift; the derivative is a centered difference
    over the (t, x) grid and the condition holds iff its supremum is <= -lam0
    (with 1e-9 slack so boundary-exact rates are not tipped by roundoff).
    """
    sup = -np.inf
    for t in np.asarray(t_grid, dtype=float):
        for x in np.asarray(x_grid, dtype=float):
            h = 1e-6 * max(1.0, abs(x))
            sup = max(sup, (float(b(t, x + h)) - float(b(t, x - h))) / (2.0 * h))
    return ObtuseAngleReport(sup_dx_drift=float(sup), lam0=float(lam0),
                             holds=bool(sup <= -lam0 + 1e-9))


@dataclass(frozen=True)
class LyapunovConditionReport:
    c2: float
    c1: float                     # smallest c1 valid on the full grid
    c1_inner: float               # same on the inner half-window
    uniformly_verifiable: bool    # c1 not driven by the window boundary
    holds: bool

    def as_dict(self) -> dict:
        return {"c2": self.c2, "c1": self.c1, "c1_inner": self.c1_inner,
                "uniformly_verifiable": self.uniformly_verifiable, "holds": self.holds}


def check_lyapunov_condition(drift: Callable, diffusion_sq: Callable | None,
                             points, c2: float) -> LyapunovConditionReport:
    """Drift condition L phi <= c1 - c2 phi for phi(x) = 1 + |x|^2.

    Uses the analytic derivatives of phi: L phi = 2 <x, b(x)> + tr(sigma sigma^T).
    Reports the smallest c1 valid on the grid; if that c1 is attained on the
    expanding boundary (grows with the window), the verdict is "not uniformly
    verifiable" (holds = False).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    b = np.asarray(drift(pts), dtype=float)
    if diffusion_sq is None:
        tr = np.zeros(pts.shape[0])
    else:
        s = np.asarray(diffusion_sq(pts), dtype=float)
        tr = np.einsum("nii->n", s) if s.ndim == 3 else s.reshape(pts.shape[0])
    phi = 1.0 + (pts ** 2).sum(axis=1)
    g = 2.0 * (pts * b).sum(axis=1) + tr + c2 * phi
    c1 = float(g.max())
    radius = np.abs(pts).max()
    inner = np.abs(pts).max(axis=1) <= 0.5 * radius
    if not inner.any():
        raise ValueError("grid has no interior points")
    c1_inner = float(g[inner].max())
    uniform = c1 <= c1_inner + 1e-9 * max(1.0, abs(c1_inner))
    return LyapunovConditionReport(c2=float(c2), c1=c1, c1_inner=c1_inner,
                                   uniformly_verifiable=bool(uniform),
                                   holds=bool(uniform))


@dataclass(frozen=True)
class EllipticityReport:
    min_eigenvalue: float
    holds: bool


def check_uniform_ellipticity(diffusion_sq: Callable | None, points) -> EllipticityReport:
    """Grid infimum of the smallest eigenvalue of the squared diffusion."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if diffusion_sq is None:
        return EllipticityReport(min_eigenvalue=0.0, holds=False)
    s = np.asarray(diffusion_sq(pts), dtype=float)
    if s.ndim != 3:
        s = s.reshape(pts.shape[0], 1, 1)
    lam = np.linalg.eigvalsh(0.5 * (s + np.swapaxes(s, -1, -2))).min()
    return EllipticityReport(min_eigenvalue=float(lam), holds=bool(lam > 1e-12))


@dataclass(frozen=True)
class CoefficientLimitReport:
    sup_half: float
    sup_end: float
    tol: float
    holds: bool


def check_coefficient_limits(drift_t: Callable, drift_limit: Callable, x_grid,
                             t_end: float, tol: float) -> CoefficientLimitReport:
    """Do the time-dependent coefficients settle onto their claimed limits?

    Compares drift_t at t_end/2 and t_end against drift_limit in sup norm over
    the grid; holds iff the final gap is within tol and not growing.
    """
    x = np.asarray(x_grid, dtype=float)[:, None]
    lim = np.asarray(drift_limit(None, x), dtype=float)

    def gap(t):
        return float(np.abs(np.asarray(drift_t(t, x), dtype=float) - lim).max())

    sup_half, sup_end = gap(t_end / 2.0), gap(float(t_end))
    return CoefficientLimitReport(
        sup_half=sup_half, sup_end=sup_end, tol=float(tol),
        holds=bool(sup_end <= tol and sup_end <= sup_half + 1e-12),
    )
