"""Shared domain types: coefficient fields, slow-fast systems, Gaussian
measures, ensembles, conditional estimates, and gridded densities.

All types are immutable value objects; arrays are copied on construction and
marked read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "CoefficientField",
    "SlowFastSystem",
    "GaussianMeasure",
    "EnsembleTrajectory",
    "ConditionalEstimate",
    "BinnedField",
    "GridDensity1D",
    "GridDensity2D",
    "slow_fast_system",
    "normalize_density",
    "marginal_x",
    "conditional_y_given_x",
    "density_from_function",
]


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CoefficientField:
    """A pure evaluator ``(t, x, y) -> values`` with declared output shape.

    ``x`` has shape ``(N, d_x)`` and ``y`` shape ``(N, d_y)`` (``y`` may be
    ``None`` for fields of ``x`` alone); the result broadcasts to
    ``(N, *out_shape)``.  Purity (same inputs, same outputs) is part of the
    contract and is what makes ensembles and reports reproducible.

    ``constant_diag`` declares a state-independent diagonal value (used for
    diffusions); integrators may fold it into the noise scaling instead of
    evaluating per step.
    """

    fn: Callable[..., np.ndarray]
    out_shape: tuple[int, ...]
    time_dependent: bool = False
    y_dependent: bool = True
    constant_diag: tuple[float, ...] | None = None

    def __call__(self, t, x, y=None):
        return self.fn(t, x, y)

    @staticmethod
    def const_diag(values, k: int):
        """A constant diagonal (scalar) coefficient of logical shape (k, k)."""
        vals = tuple(float(v) for v in np.broadcast_to(np.asarray(values, dtype=float), (k,)))
        arr = np.asarray(vals)
        return CoefficientField(
            fn=lambda t, x, y, _a=arr: np.broadcast_to(_a, (np.shape(x)[0], k)),
            out_shape=(k, k),
            y_dependent=False,
            constant_diag=vals,
        )

    def check(self, t, x, y=None) -> np.ndarray:
        """Evaluate and verify the declared output shape (used by tests)."""
        val = np.asarray(self.fn(t, x, y), dtype=float)
        n = np.shape(x)[0]
        want = (n,) + tuple(self.out_shape)
        try:
            val = np.broadcast_to(val, want)
        except ValueError:
            raise ValueError(
                f"coefficient field returned shape {val.shape}, "
                f"not broadcastable to {want}"
            ) from None
        return val

    @staticmethod
    def from_xy(fn: Callable, out_shape: tuple[int, ...], y_dependent: bool = True):
        """Wrap an autonomous ``fn(x, y)`` evaluator."""
        return CoefficientField(
            fn=lambda t, x, y, _f=fn: _f(x, y),
            out_shape=tuple(out_shape),
            time_dependent=False,
            y_dependent=y_dependent,
        )


@dataclass(frozen=True)
class SlowFastSystem:
    """A slow-fast pair dX = f dt + alpha dU (+ alpha12 dW), dY = g dt + beta dW.

    ``d`` and ``m`` are the slow/fast dimensions.  When ``eps`` is set the
    fast channel is integrated with drift ``g/eps`` and diffusion
    ``beta/sqrt(eps)``; the stored coefficients are always the unscaled ones.

    Coefficient evaluators receive ``x`` of shape ``(N, d)`` and ``y`` of
    shape ``(N, m)``.  Drifts return ``(N, d)`` / ``(N, m)``.  Diffusions may
    return either a diagonal ``(N, k)`` or a full ``(N, k, k)`` matrix;
    ``cross_diff`` returns ``(N, d, m)`` and shares the fast channel's noise.
    ``None`` diffusion means identically zero (that channel draws no noise).
    """

    d: int
    m: int
    drift_slow: CoefficientField
    drift_fast: CoefficientField
    diff_slow: CoefficientField | None = None
    diff_fast: CoefficientField | None = None
    cross_diff: CoefficientField | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("slow and fast dimensions must be >= 1")
        if self.eps is not None and not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if self.cross_diff is not None and self.eps is not None:
            raise ValueError("cross-diffusion is only supported without eps scaling")

    @property
    def dim(self) -> int:
        return self.d + self.m


def slow_fast_system(d, m, f, g, alpha=None, beta=None, alpha12=None, eps=None):
    """Build a :class:`SlowFastSystem` from plain ``(x, y)`` callables."""

    def wrap(fn, shape):
        if fn is None:
            return None
        if isinstance(fn, CoefficientField):
            return fn
        return CoefficientField.from_xy(fn, shape)

    return SlowFastSystem(
        d=d,
        m=m,
        drift_slow=wrap(f, (d,)),
        drift_fast=wrap(g, (m,)),
        diff_slow=wrap(alpha, (d, d)),
        diff_fast=wrap(beta, (m, m)),
        cross_diff=wrap(alpha12, (d, m)),
        eps=eps,
    )


@dataclass(frozen=True)
class GaussianMeasure:
    """Mean vector plus symmetric PSD covariance.

    The covariance is symmetrized ((S + S^T)/2) on construction; asymmetry
    beyond 1e-12 * ||cov|| or an eigenvalue below -1e-12 * ||cov|| raises.
    """

    mean: np.ndarray
    cov: np.ndarray

    _SYM_RTOL = 1e-12
    _PSD_RTOL = 1e-12

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        k = mean.shape[0]
        if cov.shape != (k, k):
            raise ValueError(f"covariance shape {cov.shape} does not match mean dim {k}")
        scale = np.linalg.norm(cov)
        if scale > 0 and np.linalg.norm(cov - cov.T) > self._SYM_RTOL * scale:
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if scale > 0:
            evals = np.linalg.eigvalsh(cov)
            if evals.min() < -self._PSD_RTOL * scale:
                raise ValueError(
                    f"covariance is not PSD (min eigenvalue {evals.min():.3e})"
                )
        object.__setattr__(self, "mean", _frozen_array(mean))
        object.__setattr__(self, "cov", _frozen_array(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class EnsembleTrajectory:
    """States of N particles on a time grid, with RNG provenance.

    ``states`` has shape ``(n_times, N, dim)``.
    """

    times: np.ndarray
    states: np.ndarray
    seed: int
    stride: int = 1

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if states.ndim != 3 or states.shape[0] != times.shape[0]:
            raise ValueError("states must have shape (n_times, N, dim)")
        if not np.isfinite(states).all():
            raise ValueError("non-finite state in trajectory")
        object.__setattr__(self, "times", _frozen_array(times))
        object.__setattr__(self, "states", _frozen_array(states))

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def at_time(self, t: float) -> np.ndarray:
        """States (N, dim) at the stored time nearest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return np.asarray(self.states[i])


@dataclass(frozen=True)
class BinnedField:
    """Per-bin conditional mean and standard error of a user field."""

    mean: np.ndarray  # (B, *shape)
    se: np.ndarray    # (B, *shape)


@dataclass(frozen=True)
class ConditionalEstimate:
    """Per-x-bin statistics of y (and of user fields) from samples.

    ``se_mean_y`` is the naive per-bin standard error, sample stdev / sqrt(count);
    callers are responsible for sampling at or above the decorrelation time so
    that this is honest.  ``se_var_y`` uses the Gaussian approximation
    ``var * sqrt(2 / (count - 1))``.
    """

    edges: np.ndarray          # (B+1,)
    counts: np.ndarray         # (B,)
    mean_y: np.ndarray         # (B, m)
    var_y: np.ndarray          # (B, m), ddof=1
    se_mean_y: np.ndarray      # (B, m)
    se_var_y: np.ndarray       # (B, m)
    min_count: int
    n_samples: int             # samples that landed in a bin
    fields: Mapping[str, BinnedField] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.counts.sum()) != int(self.n_samples):
            raise ValueError("bin counts must sum to the binned sample count")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def usable(self) -> np.ndarray:
        return self.counts >= self.min_count

    def bin_of(self, x: float) -> int:
        """Index of the bin containing ``x`` (clipped to the edge bins)."""
        i = int(np.searchsorted(self.edges, x, side="right") - 1)
        return min(max(i, 0), len(self.counts) - 1)


def _check_uniform(grid: np.ndarray, name: str) -> float:
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError(f"{name}-grid must be 1-D with at least 2 points")
    steps = np.diff(grid)
    h = steps[0]
    if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise ValueError(f"{name}-grid must be uniform and increasing")
    return float(h)


@dataclass(frozen=True)
class GridDensity1D:
    """Nonnegative density values on a uniform 1-D grid."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        _check_uniform(x, "x")
        if v.shape != x.shape:
            raise ValueError("values must match the grid shape")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "x", _frozen_array(x))
        object.__setattr__(self, "values", _frozen_array(v))

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.x))


@dataclass(frozen=True)
class GridDensity2D:
    """Nonnegative density values on a uniform rectangular (x, y) grid.

    ``values[i, j]`` is the density at ``(x[i], y[j])``.
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        v = np.asarray(self.values, dtype=float)
        _check_uniform(x, "x")
        _check_uniform(y, "y")
        if v.shape != (x.size, y.size):
            raise ValueError("values must have shape (nx, ny)")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "x", _frozen_array(x))
        object.__setattr__(self, "y", _frozen_array(y))
        object.__setattr__(self, "values", _frozen_array(v))

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    def mass(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.y, axis=1), self.x))


def density_from_function(fn, x, y) -> GridDensity2D:
    """Evaluate ``fn(x, y)`` on the tensor grid and normalize to unit mass."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = np.asarray(fn(x[:, None], y[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (x.size, y.size))
    return normalize_density(GridDensity2D(x=x, y=y, values=vals))


def normalize_density(g: GridDensity2D) -> GridDensity2D:
    """Rescale to unit trapezoid-rule mass.

    Raises on zero total mass ("degenerate density").
    """
    total = g.mass()
    if not total > 0:
        raise ValueError("degenerate density: total mass is zero")
    return GridDensity2D(x=g.x, y=g.y, values=g.values / total)


def marginal_x(g: GridDensity2D) -> GridDensity1D:
    """Integrate out y column-by-column with the trapezoid rule."""
    vals = np.trapezoid(g.values, g.y, axis=1)
    return GridDensity1D(x=g.x, values=np.maximum(vals, 0.0))


_VANISHING_MARGINAL = 1e-12


def conditional_y_given_x(g: GridDensity2D, x: float) -> GridDensity1D:
    """Conditional density rho(y | x) at the grid column nearest to ``x``.

    Raises when the marginal at that column is below 1e-12 ("vanishing
    marginal"), the failure mode of densities whose x-marginal degenerates.
    """
    ix = int(np.argmin(np.abs(g.x - x)))
    column = g.values[ix, :]
    mass = float(np.trapezoid(column, g.y))
    if mass < _VANISHING_MARGINAL:
        raise ValueError(
            f"vanishing marginal at x={g.x[ix]:.6g} (mass {mass:.3e})"
        )
    return GridDensity1D(x=g.y, values=column / mass)
