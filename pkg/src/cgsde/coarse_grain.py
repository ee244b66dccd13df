"""The three reduction methods and their estimators.

* averaging: coefficients averaged against the frozen process's ergodic law,
* projection: coefficients averaged against the equilibrium conditional
  density (ECD) of the full system,
* mimicking marginals (Gyongy): coefficients averaged against the time-t
  conditional law, giving a time-dependent reduced equation.

Conditional laws are estimated by fixed-width histogram binning; within a bin
the bin center stands in for x when evaluating coefficient fields (bias of
order bin width, dominated by the per-bin standard errors at the sample sizes
used here).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .integrate import IntegratorConfig, rk_solve, simulate_frozen, simulate_full, simulate_sde
from .model import BinnedField, ConditionalEstimate, EnsembleTrajectory, SlowFastSystem

__all__ = [
    "ReducedModel",
    "GaussianConditional",
    "ProjectedCoefficients",
    "AveragedCoefficients",
    "GyongySnapshot",
    "bin_conditional",
    "default_edges",
    "average_coefficients",
    "estimate_ecd",
    "project_coefficients",
    "gyongy_coefficients",
    "gyongy_model_from_snapshots",
    "matrix_sqrt_psd",
    "simulate_reduced",
    "reduced_table",
    "slow_diffusion_sq",
    "LineFit",
    "weighted_line_fit",
    "pooled_variance",
]

_KINDS = ("averaged", "projected", "gyongy")


@dataclass(frozen=True)
class ReducedModel:
    """A reduced equation dX = drift dt + diffusion_sq^{1/2} dU.

    ``drift(t, x)`` maps (N, d) to (N, d); ``diffusion_sq(t, x)`` returns the
    PSD squared coefficient (N, d, d), with ``None`` meaning identically zero
    (a deterministic reduced equation).  Only the ``gyongy`` kind is
    genuinely time dependent and carries its time domain.
    """

    kind: str
    d: int
    drift: Callable
    diffusion_sq: Callable | None
    provenance: str = "analytic"
    t_domain: tuple[float, float] | None = None
    snapshots: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.kind == "gyongy" and self.t_domain is None:
            raise ValueError("gyongy models must carry their time domain")
        if self.provenance not in ("analytic", "monte-carlo"):
            raise ValueError("provenance must be 'analytic' or 'monte-carlo'")


def matrix_sqrt_psd(M) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    The input is symmetrized first; an eigenvalue below -1e-12 * ||M|| raises.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    M = 0.5 * (M + M.T)
    scale = np.linalg.norm(M)
    evals, vecs = np.linalg.eigh(M)
    if scale > 0 and evals.min() < -1e-12 * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {evals.min():.3e})")
    root = (vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def slow_diffusion_sq(system: SlowFastSystem) -> Callable:
    """The slow channel's squared diffusion alpha alpha^T (+ alpha12 alpha12^T).

    Returns a callable ``(x, y) -> (N, d, d)``; identically zero when the slow
    equation carries no noise.
    """
    d = system.d
    alpha = system.diff_slow.fn if system.diff_slow is not None else None
    a12 = system.cross_diff.fn if system.cross_diff is not None else None

    def sq(x, y):
        n = np.shape(x)[0]
        out = np.zeros((n, d, d))
        if alpha is not None:
            a = np.asarray(alpha(None, x, y), dtype=float)
            if a.ndim == 3:
                out += np.einsum("nij,nkj->nik", a, a)
            else:
                a = np.broadcast_to(a, (n, d))
                idx = np.arange(d)
                out[:, idx, idx] += a * a
        if a12 is not None:
            c = np.asarray(a12(None, x, y), dtype=float)
            out += np.einsum("nij,nkj->nik", c, c)
        return out

    return sq


def default_edges(samples: np.ndarray, n_bins: int = 40, coverage: float = 0.99) -> np.ndarray:
    """Equal-width bin edges over the central ``coverage`` mass of the samples."""
    lo, hi = np.percentile(samples, [50 * (1 - coverage), 100 - 50 * (1 - coverage)])
    if not hi > lo:
        raise ValueError("degenerate sample range for binning")
    return np.linspace(lo, hi, n_bins + 1)


def bin_conditional(x_samples, y_samples, edges, min_count: int = 100,
                    fields: Mapping[str, Callable] | None = None) -> ConditionalEstimate:
    """Per-bin conditional statistics of y given x, plus user fields.

    ``fields`` maps a name to ``fn(x_center, ys) -> (count, *shape)`` values
    evaluated on the samples of one bin; the per-bin mean and naive standard
    error of each field are recorded.
    """
    x = np.asarray(x_samples, dtype=float).ravel()
    y = np.asarray(y_samples, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    edges = np.asarray(edges, dtype=float)
    nb = edges.size - 1
    m = y.shape[1]
    idx = np.searchsorted(edges, x, side="right") - 1
    keep = (idx >= 0) & (idx < nb) & (x >= edges[0]) & (x <= edges[-1])
    idx = idx[keep]
    y_in = y[keep]
    centers = 0.5 * (edges[:-1] + edges[1:])

    counts = np.bincount(idx, minlength=nb)
    mean_y = np.zeros((nb, m))
    var_y = np.zeros((nb, m))
    se_mean = np.full((nb, m), np.nan)
    se_var = np.full((nb, m), np.nan)
    field_stats = {name: ([], []) for name in (fields or {})}
    for b in range(nb):
        sel = idx == b
        c = int(counts[b])
        ys = y_in[sel]
        if c > 0:
            mean_y[b] = ys.mean(axis=0)
        if c > 1:
            var_y[b] = ys.var(axis=0, ddof=1)
            se_mean[b] = np.sqrt(var_y[b] / c)
            se_var[b] = var_y[b] * np.sqrt(2.0 / (c - 1))
        for name, fn in (fields or {}).items():
            means, ses = field_stats[name]
            if c > 1:
                vals = np.asarray(fn(centers[b], ys), dtype=float)
                means.append(vals.mean(axis=0))
                ses.append(vals.std(axis=0, ddof=1) / np.sqrt(c))
            else:
                probe = np.asarray(fn(centers[b], np.zeros((1, m))), dtype=float)
                means.append(np.full(probe.shape[1:], np.nan))
                ses.append(np.full(probe.shape[1:], np.nan))
    binned_fields = {
        name: BinnedField(mean=np.array(means), se=np.array(ses))
        for name, (means, ses) in field_stats.items()
    }
    return ConditionalEstimate(
        edges=edges, counts=counts, mean_y=mean_y, var_y=var_y,
        se_mean_y=se_mean, se_var_y=se_var, min_count=min_count,
        n_samples=int(counts.sum()), fields=binned_fields,
    )


def _system_bin_fields(system: SlowFastSystem) -> dict[str, Callable]:
    f = system.drift_slow.fn
    sq = slow_diffusion_sq(system)

    def drift_field(xc, ys):
        xs = np.full((ys.shape[0], system.d), xc)
        return np.asarray(f(None, xs, ys), dtype=float)

    def diff_field(xc, ys):
        xs = np.full((ys.shape[0], system.d), xc)
        return sq(xs, ys)

    return {"drift": drift_field, "diffusion": diff_field}


def estimate_ecd(system: SlowFastSystem, cfg: IntegratorConfig, n_bins: int = 40,
                 min_count: int = 100, sample_spacing: float = 0.5,
                 init=None, extra_fields: Mapping[str, Callable] | None = None,
                 ) -> ConditionalEstimate:
    """Equilibrium conditional density from one long trajectory of (X, Y).

    Post-burn-in states are retained every ``sample_spacing`` time units
    (keep this at or above the system's decorrelation time so the naive
    per-bin standard errors are honest) and binned by x.  Conditional
    averages of the slow drift and squared diffusion are recorded under the
    field names "drift" and "diffusion".
    """
    if system.d != 1:
        raise ValueError("ECD binning is implemented for 1-D slow variables")
    stride = max(1, int(round(sample_spacing / cfg.dt)))
    path_cfg = IntegratorConfig(
        dt=cfg.dt, t_final=cfg.t_final, n_particles=1, seed=cfg.seed,
        burn_in=cfg.burn_in, rk_tol=cfg.rk_tol, store_stride=stride,
    )
    start = np.zeros(system.dim) if init is None else init
    traj = simulate_full(system, start, path_cfg)
    kept = traj.times >= cfg.burn_in
    xs = traj.states[kept, 0, 0]
    ys = traj.states[kept, 0, 1:]
    if xs.size < 10:
        raise ValueError("insufficient coverage: too few post-burn-in samples")
    edges = default_edges(xs, n_bins)
    fields = dict(_system_bin_fields(system))
    fields.update(extra_fields or {})
    est = bin_conditional(xs, ys, edges, min_count=min_count, fields=fields)
    if int(est.usable.sum()) < 3:
        raise ValueError(
            f"insufficient coverage: only {int(est.usable.sum())} usable bins "
            f"(count >= {min_count})"
        )
    return est


@dataclass(frozen=True)
class AveragedCoefficients:
    """Frozen-process ergodic averages of the slow coefficients at points xs."""

    xs: np.ndarray             # (K, d)
    drift: np.ndarray          # (K, d)
    drift_se: np.ndarray       # (K, d)
    diffusion_sq: np.ndarray   # (K, d, d), symmetrized
    diffusion_se: np.ndarray   # (K, d, d)


def average_coefficients(system: SlowFastSystem, xs, cfg: IntegratorConfig,
                         y0=None, n_batches: int = 32, n_threads: int = 1,
                         ) -> AveragedCoefficients:
    """Time averages of f(x, Y^(x)) and (alpha alpha^T)(x, Y^(x)).

    One frozen trajectory per requested x (run as one ensemble); standard
    errors come from batch means over the post-burn-in stretch, which stays
    honest under autocorrelation.
    """
    d, m = system.d, system.m
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.ndim == 1:
        xs = xs[:, None] if d == 1 else xs[None, :]
    k = xs.shape[0]
    cfg_k = IntegratorConfig(
        dt=cfg.dt, t_final=cfg.t_final, n_particles=k, seed=cfg.seed,
        burn_in=cfg.burn_in, rk_tol=cfg.rk_tol, store_stride=cfg.store_stride,
    )
    traj = simulate_frozen(system, xs, np.zeros(m) if y0 is None else y0, cfg_k,
                           n_threads=n_threads)
    kept = traj.times >= cfg.burn_in
    ys = traj.states[kept]                      # (n, K, m)
    n = ys.shape[0]
    if n < n_batches:
        raise ValueError("too few post-burn-in samples for batch means")
    f = system.drift_slow.fn
    sq = slow_diffusion_sq(system)
    x_flat = np.broadcast_to(xs, (n, k, d)).reshape(-1, d)
    y_flat = ys.reshape(-1, m)
    fv = np.asarray(f(None, x_flat, y_flat), dtype=float).reshape(n, k, d)
    av = sq(x_flat, y_flat).reshape(n, k, d, d)
    if not (np.isfinite(fv).all() and np.isfinite(av).all()):
        raise ValueError("non-finite coefficient values in ergodic average")

    def batch_stats(vals):
        nb = n_batches
        usable = (n // nb) * nb
        batches = vals[:usable].reshape(nb, usable // nb, *vals.shape[1:]).mean(axis=1)
        mean = batches.mean(axis=0)
        se = batches.std(axis=0, ddof=1) / np.sqrt(nb)
        return mean, se

    f_mean, f_se = batch_stats(fv)
    a_mean, a_se = batch_stats(av)
    a_mean = 0.5 * (a_mean + np.swapaxes(a_mean, -1, -2))
    return AveragedCoefficients(xs=xs, drift=f_mean, drift_se=f_se,
                                diffusion_sq=a_mean, diffusion_se=a_se)


@dataclass(frozen=True)
class GaussianConditional:
    """An analytic Gaussian conditional law y | x with Gauss-Hermite averaging."""

    mean: Callable[[float], np.ndarray]
    cov: Callable[[float], np.ndarray]
    n_nodes: int = 64

    def expect(self, fn, x: float):
        """E[fn(Y) | x] for fn mapping (k, m) samples to (k, *shape) values."""
        mu = np.atleast_1d(np.asarray(self.mean(x), dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov(x), dtype=float))
        m = mu.shape[0]
        if m > 3:
            raise ValueError("tensor Gauss-Hermite limited to m <= 3")
        nodes, weights = np.polynomial.hermite.hermgauss(self.n_nodes)
        root = matrix_sqrt_psd(cov)
        grids = np.meshgrid(*([nodes] * m), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)      # (n^m, m)
        ws = np.ones(pts.shape[0])
        for g in np.meshgrid(*([weights] * m), indexing="ij"):
            ws = ws * g.ravel()
        ys = mu + (np.sqrt(2.0) * pts) @ root.T
        vals = np.asarray(fn(ys), dtype=float)
        w = ws / np.pi ** (m / 2.0)
        return np.tensordot(w, vals, axes=(0, 0))


@dataclass(frozen=True)
class ProjectedCoefficients:
    drift: np.ndarray          # (d,)
    drift_se: np.ndarray
    diffusion_sq: np.ndarray   # (d, d)
    diffusion_se: np.ndarray


def project_coefficients(cond, x: float, drift=None, diffusion_sq=None,
                         ) -> ProjectedCoefficients:
    """Conditional averages of the slow coefficients under rho(. | x).

    ``cond`` is either a :class:`ConditionalEstimate` carrying "drift" and
    "diffusion" fields (Monte Carlo route) or a :class:`GaussianConditional`
    together with explicit ``drift(x_arr, y_arr)`` / ``diffusion_sq`` callables
    (analytic route).
    """
    if isinstance(cond, ConditionalEstimate):
        b = cond.bin_of(x)
        if not cond.usable[b]:
            usable_centers = cond.centers[cond.usable]
            if usable_centers.size == 0:
                raise ValueError("no usable bins in conditional estimate")
            nearest = usable_centers[np.argmin(np.abs(usable_centers - x))]
            raise ValueError(
                f"unusable bin at x={x:.6g} (count {int(cond.counts[b])} < "
                f"{cond.min_count}); nearest usable bin center is x={nearest:.6g}"
            )
        fd = cond.fields["drift"]
        fa = cond.fields["diffusion"]
        a = 0.5 * (fa.mean[b] + fa.mean[b].T)
        return ProjectedCoefficients(
            drift=fd.mean[b], drift_se=fd.se[b],
            diffusion_sq=a, diffusion_se=fa.se[b],
        )
    if drift is None or diffusion_sq is None:
        raise ValueError("analytic conditioning needs drift and diffusion_sq callables")

    def f_of_y(ys):
        xs = np.full((ys.shape[0], 1), x)
        return np.asarray(drift(xs, ys), dtype=float)

    def a_of_y(ys):
        xs = np.full((ys.shape[0], 1), x)
        return np.asarray(diffusion_sq(xs, ys), dtype=float)

    fP = cond.expect(f_of_y, x)
    aP = cond.expect(a_of_y, x)
    aP = 0.5 * (aP + aP.T)
    return ProjectedCoefficients(
        drift=np.atleast_1d(fP), drift_se=np.zeros_like(np.atleast_1d(fP)),
        diffusion_sq=np.atleast_2d(aP), diffusion_se=np.zeros_like(np.atleast_2d(aP)),
    )


@dataclass(frozen=True)
class GyongySnapshot:
    """Binned conditional coefficient estimates at one time."""

    t: float
    estimate: ConditionalEstimate


def gyongy_coefficients(system: SlowFastSystem, t: float, ensemble,
                        n_bins: int = 40, min_count: int = 100,
                        edges=None) -> GyongySnapshot:
    """Binned f_G(t, .) and alpha_G(t, .) from an ensemble at time t.

    ``ensemble`` is an :class:`EnsembleTrajectory` (the snapshot nearest to t
    is used) or an (N, d+m) state array.  Bins that fall short of
    ``min_count`` are flagged unusable, not errors; downstream interpolation
    skips them.
    """
    if system.d != 1:
        raise ValueError("binned coefficients are implemented for 1-D slow variables")
    if isinstance(ensemble, EnsembleTrajectory):
        states = ensemble.at_time(t)
    else:
        states = np.asarray(ensemble, dtype=float)
    xs = states[:, 0]
    ys = states[:, 1:]
    if edges is None:
        edges = default_edges(xs, n_bins)
    est = bin_conditional(xs, ys, edges, min_count=min_count,
                          fields=_system_bin_fields(system))
    return GyongySnapshot(t=float(t), estimate=est)


def _interp_drift(snapshots: Sequence[GyongySnapshot], d: int):
    ts = np.array([s.t for s in snapshots])
    tables = []
    for s in snapshots:
        est = s.estimate
        use = est.usable
        if int(use.sum()) < 2:
            raise ValueError(f"snapshot at t={s.t} has fewer than 2 usable bins")
        tables.append((est.centers[use], est.fields["drift"].mean[use, 0],
                       est.fields["diffusion"].mean[use, 0, 0]))

    def pick(t):
        k = int(np.searchsorted(ts, t, side="right") - 1)
        return tables[max(k, 0)]

    def drift(t, x):
        cx, fv, _ = pick(t)
        return np.interp(x[:, 0], cx, fv)[:, None]

    def diff_sq(t, x):
        cx, _, av = pick(t)
        return np.interp(x[:, 0], cx, av)[:, None, None]

    return drift, diff_sq


def gyongy_model_from_snapshots(snapshots: Sequence[GyongySnapshot],
                                t_end: float | None = None,
                                zero_diffusion: bool = False) -> ReducedModel:
    """Assemble a Monte Carlo mimicking-marginal model from binned snapshots.

    The drift is piecewise linear in x over usable bins (constant beyond the
    outermost usable centers) and piecewise constant in t between snapshots.
    """
    snaps = tuple(sorted(snapshots, key=lambda s: s.t))
    if not snaps:
        raise ValueError("need at least one snapshot")
    hi = float(snaps[-1].t if t_end is None else t_end)
    drift_raw, diff_raw = _interp_drift(snaps, 1)
    domain = (0.0, hi)

    def guard(t):
        if t < domain[0] - 1e-12 or t > domain[1] + 1e-12:
            raise ValueError(
                f"time {t:.6g} outside the model's domain [{domain[0]}, {domain[1]}]"
            )

    def drift(t, x):
        guard(t)
        return drift_raw(t, x)

    diffusion_sq = None
    if not zero_diffusion:
        def diffusion_sq(t, x):
            guard(t)
            return diff_raw(t, x)

    return ReducedModel(kind="gyongy", d=1, drift=drift, diffusion_sq=diffusion_sq,
                        provenance="monte-carlo", t_domain=domain, snapshots=snaps)


def _diffusion_root(model: ReducedModel):
    d = model.d
    sq = model.diffusion_sq

    def root(t, x):
        s = np.asarray(sq(t, x), dtype=float)
        if d == 1:
            vals = s[:, 0, 0]
            if np.any(vals < -1e-12 * max(1.0, np.abs(vals).max(initial=0.0))):
                raise ValueError("negative squared diffusion in reduced model")
            return np.sqrt(np.clip(vals, 0.0, None))[:, None]
        out = np.empty_like(s)
        for i in range(s.shape[0]):
            out[i] = matrix_sqrt_psd(s[i])
        return out

    return root


def simulate_reduced(model: ReducedModel, init, cfg: IntegratorConfig,
                     n_threads: int = 1) -> EnsembleTrajectory:
    """Simulate a reduced model: Euler-Maruyama, or the adaptive RK path when
    the diffusion is identically zero (deterministic reduced equations)."""
    if model.t_domain is not None and cfg.t_final > model.t_domain[1] + 1e-12:
        raise ValueError(
            f"horizon {cfg.t_final} outside the model's time domain {model.t_domain}"
        )
    if model.diffusion_sq is not None:
        return simulate_sde(model.drift, _diffusion_root(model), init, model.d,
                            cfg, n_threads=n_threads)
    from .integrate import _resolve_init, _store_plan  # deterministic path

    n, d = cfg.n_particles, model.d
    x0 = _resolve_init(init, n, d, cfg.seed)
    steps, _ = _store_plan(cfg.n_steps, cfg.store_stride)
    times = steps * cfg.dt

    def field(t, v):
        return model.drift(t, v.reshape(n, d)).ravel()

    path = rk_solve(field, x0.ravel(), 0.0, float(times[-1]), tol=cfg.rk_tol,
                    t_eval=times, dense=False)
    states = path.y_eval.reshape(len(times), n, d)
    return EnsembleTrajectory(times=times, states=states, seed=cfg.seed,
                              stride=cfg.store_stride)


def reduced_table(model: ReducedModel):
    """Tabular form of a Monte Carlo reduced model.

    Returns (header, rows) with one row per (snapshot time, bin):
    t, x bin center, count, drift, diffusion_sq, and their standard errors.
    """
    if model.provenance != "monte-carlo" or not model.snapshots:
        raise ValueError("only Monte Carlo models with snapshots are tabular")
    header = ["t", "x_center", "count", "drift", "drift_se",
              "diffusion_sq", "diffusion_sq_se", "usable"]
    rows = []
    for snap in model.snapshots:
        est = snap.estimate
        fd, fa = est.fields["drift"], est.fields["diffusion"]
        for b in range(len(est.counts)):
            rows.append([
                snap.t, float(est.centers[b]), int(est.counts[b]),
                float(fd.mean[b, 0]), float(fd.se[b, 0]),
                float(fa.mean[b, 0, 0]), float(fa.se[b, 0, 0]),
                bool(est.usable[b]),
            ])
    return header, rows


@dataclass(frozen=True)
class LineFit:
    """Weighted least-squares line with the full coefficient covariance."""

    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    cov_intercept_slope: float

    def predict(self, x: float) -> tuple[float, float]:
        """Fitted value and its standard error at ``x``."""
        val = self.intercept + self.slope * x
        var = (self.se_intercept ** 2 + (x ** 2) * self.se_slope ** 2
               + 2.0 * x * self.cov_intercept_slope)
        return float(val), float(np.sqrt(max(var, 0.0)))


def weighted_line_fit(x, y, se) -> LineFit:
    """Weighted least squares line fit with 1/se^2 weights."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    se = np.asarray(se, dtype=float)
    good = np.isfinite(y) & np.isfinite(se) & (se > 0)
    if good.sum() < 3:
        raise ValueError("need at least 3 points with finite errors")
    w = 1.0 / se[good] ** 2
    xg, yg = x[good], y[good]
    sw, swx, swy = w.sum(), (w * xg).sum(), (w * yg).sum()
    swxx, swxy = (w * xg * xg).sum(), (w * xg * yg).sum()
    delta = sw * swxx - swx ** 2
    return LineFit(
        intercept=float((swxx * swy - swx * swxy) / delta),
        slope=float((sw * swxy - swx * swy) / delta),
        se_intercept=float(np.sqrt(swxx / delta)),
        se_slope=float(np.sqrt(sw / delta)),
        cov_intercept_slope=float(-swx / delta),
    )


def pooled_variance(counts, variances):
    """Pooled within-bin variance and its Gaussian-approximation SE."""
    counts = np.asarray(counts, dtype=float)
    variances = np.asarray(variances, dtype=float)
    good = (counts > 1) & np.isfinite(variances)
    dof = (counts[good] - 1.0).sum()
    if dof <= 1:
        raise ValueError("not enough degrees of freedom to pool variances")
    var = float(((counts[good] - 1.0) * variances[good]).sum() / dof)
    return var, var * np.sqrt(2.0 / dof)
