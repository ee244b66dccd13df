"""Experiment drivers: reproduce every worked example as CSV + verdict files.

Each experiment writes ``*.csv`` data files, a ``verdict.json`` whose checks
carry the raw numbers, targets, and error bands (never bare booleans), and a
``manifest.json`` (resolved parameters, config hash, library versions).
Re-running with the manifest's parameters reproduces byte-identical CSVs.

Experiment ids
--------------
ou-methods             averaging vs projection vs truth on the 2-D tracking OU
gyongy-moments         mimicking-marginal ensemble mean/variance vs closed form
gyongy-longtime        terminal histogram vs the stationary x-marginal
gyongy-fan             trajectory fans of the mimicking vs projected reductions
frozen-vs-conditional  adjoint-splitting residuals for potential systems
eps-sweep              conditional-law vs frozen-law distance as eps -> 0
condition-audit        ellipticity / Lyapunov / obtuse-angle / limit audits
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__, systems
from .coarse_grain import (
    average_coefficients,
    estimate_ecd,
    pooled_variance,
    simulate_reduced,
    weighted_line_fit,
)
from .diagnostics import (
    check_coefficient_limits,
    check_lyapunov_condition,
    check_obtuse_angle_1d,
    check_prop41,
    check_uniform_ellipticity,
    ecd_epsilon_sweep,
)
from .integrate import IntegratorConfig, rk_solve, simulate_full
from .linear_gaussian import ou_moments, solve_lyapunov
from .model import density_from_function

SQRT2 = float(np.sqrt(2.0))


class ConfigError(ValueError):
    """Bad experiment id, unknown key, or invalid parameter value."""


def fmt17(x) -> str:
    """Serialize a float with 17 significant digits (round-trip exact)."""
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([
                fmt17(v) if isinstance(v, float) or isinstance(v, np.floating)
                else int(v) if isinstance(v, (bool, np.bool_))
                else v
                for v in row
            ])


@dataclass(frozen=True)
class Check:
    """One verdict entry: a named number against a target with a band.

    kind "within":   pass iff |value - target| <= band
    kind "at_least": pass iff value >= target   (band unused, kept for context)
    kind "at_most":  pass iff value <= target
    """

    name: str
    kind: str
    value: float
    target: float
    band: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        if self.kind == "within":
            return bool(abs(self.value - self.target) <= self.band)
        if self.kind == "at_least":
            return bool(self.value >= self.target)
        if self.kind == "at_most":
            return bool(self.value <= self.target)
        raise ValueError(f"unknown check kind {self.kind}")

    def as_dict(self) -> dict:
        return {
            "name": self.name, "kind": self.kind, "pass": self.passed,
            "value": self.value, "target": self.target, "band": self.band,
            "detail": self.detail,
        }


def within(name, value, target, band, detail="") -> Check:
    return Check(name, "within", float(value), float(target), float(band), detail)


@dataclass(frozen=True)
class Experiment:
    name: str
    schema: dict[str, tuple]     # key -> (type, default)
    runner: Callable             # (params, out_dir) -> list[Check]
    description: str = ""


def _auto_threads(params) -> int:
    t = int(params["threads"])
    return t if t > 0 else max(1, min(4, os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# ou-methods: the central counterexample family
# ---------------------------------------------------------------------------

def _run_ou_methods(p: dict, out: Path) -> list[Check]:
    eps = float(p["eps"])
    n = int(p["n_particles"])
    seed = int(p["seed"])
    threads = _auto_threads(p)
    system = systems.tracking_system(eps, 0.0)
    lin = systems.tracking_linear(eps, 0.0)
    sigma = solve_lyapunov(lin.A, lin.C)
    ecd_slope, ecd_var = systems.tracking_ecd(eps, 0.0)
    frozen_mean, frozen_var = systems.frozen_tracking_law()

    write_csv(out / "analytic.csv",
              ["sigma_xx", "sigma_xy", "sigma_yy", "ecd_slope", "ecd_var",
               "frozen_mean", "frozen_var"],
              [[sigma[0, 0], sigma[0, 1], sigma[1, 1], ecd_slope, ecd_var,
                frozen_mean, frozen_var]])
    xg = np.linspace(-2.0, 2.0, 41)
    write_csv(out / "analytic_drifts.csv", ["x", "avg_drift", "proj_drift"],
              [[x, -x, (ecd_slope - 1.0) * x] for x in xg])

    # (i) joint covariance at t_final from the ensemble
    cfg = IntegratorConfig(dt=float(p["dt"]), t_final=float(p["t_final"]),
                           n_particles=n, seed=seed,
                           store_stride=10 ** 9)
    traj = simulate_full(system, np.zeros(2), cfg, n_threads=threads)
    cov = np.cov(traj.states[-1].T, ddof=1)
    se = np.sqrt((np.outer(np.diag(sigma), np.diag(sigma)) + sigma ** 2) / n)
    write_csv(out / "covariance.csv",
              ["cov_xx", "cov_xy", "cov_yy", "se_xx", "se_xy", "se_yy",
               "target_xx", "target_xy", "target_yy"],
              [[cov[0, 0], cov[0, 1], cov[1, 1], se[0, 0], se[0, 1], se[1, 1],
                sigma[0, 0], sigma[0, 1], sigma[1, 1]]])
    checks = [
        within("cov_xx", cov[0, 0], sigma[0, 0], 3 * se[0, 0]),
        within("cov_xy", cov[0, 1], sigma[0, 1], 3 * se[0, 1]),
        within("cov_yy", cov[1, 1], sigma[1, 1], 3 * se[1, 1]),
    ]

    # (ii) equilibrium conditional density from one long trajectory
    ecd_cfg = IntegratorConfig(dt=float(p["dt"]), t_final=float(p["ecd_t_final"]),
                               seed=seed + 1, burn_in=float(p["burn_in"]))
    est = estimate_ecd(system, ecd_cfg, n_bins=int(p["n_bins"]),
                       min_count=int(p["min_count"]),
                       sample_spacing=float(p["sample_spacing"]))
    u = est.usable
    fd = est.fields["drift"]
    write_csv(out / "ecd_bins.csv",
              ["bin_center", "count", "usable", "mean_y", "se_mean_y",
               "var_y", "se_var_y", "proj_drift_mc", "proj_drift_se"],
              [[est.centers[b], int(est.counts[b]), bool(u[b]),
                est.mean_y[b, 0], est.se_mean_y[b, 0], est.var_y[b, 0],
                est.se_var_y[b, 0], fd.mean[b, 0], fd.se[b, 0]]
               for b in range(len(est.counts))])
    fit = weighted_line_fit(est.centers[u], est.mean_y[u, 0], est.se_mean_y[u, 0])
    pool_var, pool_se = pooled_variance(est.counts[u], est.var_y[u, 0])
    bin_dev = float(np.max(np.abs(fd.mean[u, 0]) / fd.se[u, 0]))
    checks += [
        within("ecd_mean_slope", fit.slope, ecd_slope, 3 * fit.se_slope),
        within("ecd_variance", pool_var, ecd_var, 3 * pool_se),
        Check("proj_drift_bins_max_dev", "at_most", bin_dev, 3.0,
              detail="max |per-bin projected drift| in SE units vs target 0"),
    ]

    # (iii) averaged drift from frozen-process ergodic averages
    probe = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0]])
    avg_cfg = IntegratorConfig(dt=float(p["dt"]), t_final=float(p["avg_t_final"]),
                               n_particles=probe.shape[0], seed=seed + 2,
                               burn_in=float(p["burn_in"]))
    av = average_coefficients(system, probe, avg_cfg, n_threads=1)
    write_csv(out / "avg_drift.csv", ["x", "drift_mc", "drift_se", "target"],
              [[probe[i, 0], av.drift[i, 0], av.drift_se[i, 0], -probe[i, 0]]
               for i in range(probe.shape[0])])
    for i in range(probe.shape[0]):
        checks.append(within(f"avg_drift_x{probe[i, 0]:+g}", av.drift[i, 0],
                             -probe[i, 0], 3 * av.drift_se[i, 0]))

    # (iv) the two reductions disagree at x = 1
    ey1, ey1_se = fit.predict(1.0)
    fp1, fp1_se = ey1 - 1.0, ey1_se          # slow drift is y - x
    fa1, fa1_se = av.drift[3, 0], av.drift_se[3, 0]
    gap_se = float(np.hypot(fa1_se, fp1_se))
    checks.append(Check("averaging_vs_projection_x1", "at_least",
                        abs(fa1 - fp1) / gap_se, 5.0,
                        detail=f"f_A(1)={fa1:.4f}+-{fa1_se:.4f}, "
                               f"f_P(1)={fp1:.4f}+-{fp1_se:.4f}"))
    write_csv(out / "separation.csv",
              ["x", "avg_drift", "avg_se", "proj_drift", "proj_se", "gap_in_se"],
              [[1.0, fa1, fa1_se, fp1, fp1_se, abs(fa1 - fp1) / gap_se]])
    return checks


# ---------------------------------------------------------------------------
# mimicking-marginal reproductions (moments, long-time histogram, fans)
# ---------------------------------------------------------------------------

def _gyongy_params(p: dict):
    s0xx = float(p["s0xx"])
    if s0xx <= 0:
        raise ConfigError(
            "s0xx must be positive: with deterministic initial x-data the "
            "mimicking-marginal drift blows up as t tends to zero"
        )
    m0 = np.array([float(p["m0x"]), float(p["m0y"])])
    s0 = np.diag([s0xx, float(p["s0yy"])])
    return m0, s0


def _gyongy_ensemble(m0, s0, n, seed, tgrid, rk_tol):
    """Integrate the reduced deterministic ensemble through the RK solver."""
    model = systems.gyongy_tracking_model(m0, s0)
    cfg = IntegratorConfig(dt=float(tgrid[1] - tgrid[0]), t_final=float(tgrid[-1]),
                           n_particles=n, seed=seed, rk_tol=rk_tol)

    def init(rng, k):
        return (m0[0] + np.sqrt(s0[0, 0]) * rng.standard_normal(k))[:, None]

    traj = simulate_reduced(model, init, cfg)
    return traj.times, traj.states[:, :, 0]


def _run_gyongy_moments(p: dict, out: Path) -> list[Check]:
    m0, s0 = _gyongy_params(p)
    n = int(p["n_particles"])
    tgrid = np.linspace(0.0, float(p["t_max"]), int(p["n_out"]))
    times, xs = _gyongy_ensemble(m0, s0, n, int(p["seed"]), tgrid, float(p["rk_tol"]))
    lin = systems.tracking_linear(1.0, 0.0)
    rows, checks = [], []
    worst_m = worst_v = 0.0
    for i, t in enumerate(times):
        g = ou_moments(lin, m0, s0, float(t))
        mx, vx = float(g.mean[0]), float(g.cov[0, 0])
        se_m = np.sqrt(vx / n)
        se_v = vx * np.sqrt(2.0 / (n - 1))
        mean_mc = float(xs[i].mean())
        var_mc = float(xs[i].var(ddof=1))
        rows.append([float(t), mean_mc, var_mc, se_m, se_v, mx, vx])
        worst_m = max(worst_m, abs(mean_mc - mx) / se_m)
        worst_v = max(worst_v, abs(var_mc - vx) / se_v)
    write_csv(out / "moments.csv",
              ["t", "mean_mc", "var_mc", "se_mean", "se_var",
               "mean_exact", "var_exact"], rows)
    checks.append(Check("ensemble_mean_all_times", "at_most", worst_m, 3.0,
                        detail="worst |mean_mc - mean_exact| in SE units"))
    checks.append(Check("ensemble_var_all_times", "at_most", worst_v, 3.0,
                        detail="worst |var_mc - var_exact| in SE units"))
    return checks


def _run_gyongy_longtime(p: dict, out: Path) -> list[Check]:
    m0, s0 = _gyongy_params(p)
    n = int(p["n_particles"])
    t_eval = float(p["eval_t"])
    tgrid = np.linspace(0.0, t_eval, 41)
    _, xs = _gyongy_ensemble(m0, s0, n, int(p["seed"]), tgrid, float(p["rk_tol"]))
    end = xs[-1]
    lin = systems.tracking_linear(1.0, 0.0)
    g = ou_moments(lin, m0, s0, t_eval)
    mx, vx = float(g.mean[0]), float(g.cov[0, 0])
    stat_var = float(solve_lyapunov(lin.A, lin.C)[0, 0])

    nb = int(p["n_hist_bins"])
    counts, edges = np.histogram(end, bins=nb)
    widths = np.diff(edges)
    dens = counts / (n * widths)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ref = np.exp(-centers ** 2 / (2 * stat_var)) / np.sqrt(2 * np.pi * stat_var)
    write_csv(out / "histogram.csv",
              ["bin_left", "bin_right", "bin_center", "density", "ref_density"],
              [[edges[b], edges[b + 1], centers[b], dens[b], ref[b]]
               for b in range(nb)])
    se_m = np.sqrt(vx / n)
    se_v = vx * np.sqrt(2.0 / (n - 1))
    mean_mc, var_mc = float(end.mean()), float(end.var(ddof=1))
    write_csv(out / "moments.csv",
              ["t", "mean_mc", "var_mc", "se_mean", "se_var",
               "mean_exact", "var_exact", "stationary_mean", "stationary_var"],
              [[t_eval, mean_mc, var_mc, se_m, se_v, mx, vx, 0.0, stat_var]])
    return [
        within("terminal_mean", mean_mc, mx, 3 * se_m),
        within("terminal_var", var_mc, vx, 3 * se_v),
    ]


def _run_gyongy_fan(p: dict, out: Path) -> list[Check]:
    n = int(p["n_paths"])
    m0 = np.array([float(p["m0x"]), float(p["m0y"])])
    tgrid = np.linspace(0.0, float(p["t_max"]), int(p["n_out"]))
    lin = systems.tracking_linear(1.0, 0.0)
    stat_var = float(solve_lyapunov(lin.A, lin.C)[0, 0])
    checks = []
    for label, s0xx in (("small", float(p["s0xx_small"])), ("large", float(p["s0xx_large"]))):
        if s0xx <= 0:
            raise ConfigError("initial x-variance must be positive")
        s0 = np.diag([s0xx, float(p["s0yy"])])
        times, xg = _gyongy_ensemble(m0, s0, n, int(p["seed"]), tgrid, float(p["rk_tol"]))
        xp = np.tile(xg[0], (len(times), 1))      # projected reduction: constant paths
        header = (["t"] + [f"g{i}" for i in range(n)] + [f"p{i}" for i in range(n)])
        write_csv(out / f"fan_{label}.csv", header,
                  [[float(times[i])] + list(xg[i]) + list(xp[i])
                   for i in range(len(times))])
        v0 = float(xg[0].var(ddof=1))
        v1 = float(xg[-1].var(ddof=1))
        checks.append(Check(f"projected_paths_constant_{label}", "at_most",
                            float(np.abs(xp - xp[0]).max()), 0.0,
                            detail="projected reduction has zero drift and diffusion"))
        kind = "at_least" if s0xx < stat_var else "at_most"
        checks.append(Check(f"endpoint_spread_{label}", kind, v1, v0,
                            detail=f"endpoint spread moves from {v0:.3g} toward "
                                   f"the stationary variance {stat_var:.3g}"))
    return checks


# ---------------------------------------------------------------------------
# frozen-law vs conditional-law discrimination
# ---------------------------------------------------------------------------

_PROP41_EXPECTED = {"gradient": "coincide", "j-block": "coincide",
                    "symplectic": "do not coincide"}


def _run_prop41(p: dict, out: Path) -> list[Check]:
    example = str(p["example"])
    if example not in _PROP41_EXPECTED:
        raise ConfigError(f"example must be one of {sorted(_PROP41_EXPECTED)}")
    V, vx, vy = systems.quadratic_potential(float(p["cxx"]), float(p["cyy"]),
                                            float(p["cxy"]))
    system = systems.potential_system(vx, vy, example)
    half = float(p["half_width"])
    nx, ny = int(p["nx"]), int(p["ny"])
    rho = density_from_function(lambda X, Y: np.exp(-V(X, Y)),
                                np.linspace(-half, half, nx),
                                np.linspace(-half, half, ny))
    rep = check_prop41(rho, system, tol=float(p["tol"]))
    rows = []
    for part in ("slow", "cross", "fast", "slow_plus_cross", "full"):
        for norm in ("sup", "l2"):
            rows.append([part, norm, rep.norms_fine[part][norm],
                         rep.norms_coarse[part][norm]])
    write_csv(out / "residuals.csv", ["part", "norm", "fine", "coarse_2h"], rows)
    with open(out / "report.json", "w") as fh:
        json.dump(rep.as_dict(), fh, indent=1)

    expected = _PROP41_EXPECTED[example]
    checks = [Check("verdict_matches", "at_most",
                    0.0 if rep.verdict == expected else 1.0, 0.0,
                    detail=f"verdict '{rep.verdict}', expected '{expected}'")]
    if expected == "coincide":
        for part in ("slow_plus_cross", "fast"):
            checks.append(within(f"{part}_decay_ratio", rep.decay_ratio(part),
                                 4.0, 0.6,
                                 detail="coarse/fine sup ratio, second order = 4"))
    else:
        checks.append(Check("fast_residual_plateau", "at_least",
                            rep.norms_fine["fast"]["sup"],
                            0.5 * rep.norms_coarse["fast"]["sup"],
                            detail="fast residual does not decay under refinement"))
    return checks


# ---------------------------------------------------------------------------
# eps sweep: conditional law vs frozen law, plus pathwise coupling
# ---------------------------------------------------------------------------

_FAMILY_NOISE = {"deterministic-slow": 0.0, "noisy-slow": SQRT2}


def _run_eps_sweep(p: dict, out: Path) -> list[Check]:
    family = str(p["family"])
    if family not in _FAMILY_NOISE:
        raise ConfigError(f"family must be one of {sorted(_FAMILY_NOISE)}")
    noise = _FAMILY_NOISE[family]
    x = float(p["x"])
    eps_list = [float(v) for v in str(p["eps_list"]).split(",") if v.strip()]
    if not eps_list or any(e <= 0 or e > 1 for e in eps_list):
        raise ConfigError("eps_list must contain values in (0, 1]")

    def law_pair(eps, x_at):
        slope, var = systems.tracking_ecd(eps, noise)
        fm, fv = systems.frozen_tracking_law()
        return slope * x_at, var, fm, fv

    rep = ecd_epsilon_sweep(law_pair, x, eps_list)
    write_csv(out / "sweep.csv", ["eps", "mean_dist", "var_dist", "distance"],
              rep.as_rows())
    checks = []
    slope_note = "not applicable" if rep.slope is None else f"{rep.slope:.4f}"
    if family == "noisy-slow":
        if rep.slope is not None:
            checks.append(within("distance_slope", rep.slope, 1.0, 0.2,
                                 detail="log-log distance vs eps"))
        # pathwise coupling: projected-at-eps vs averaged under common noise
        gaps = []
        for eps in eps_list:
            cfg = IntegratorConfig(dt=float(p["pathwise_dt"]),
                                   t_final=float(p["pathwise_t"]),
                                   n_particles=int(p["pathwise_particles"]),
                                   seed=int(p["seed"]), store_stride=10)
            xp = simulate_reduced(systems.projected_tracking_model(eps, noise), x, cfg)
            xa = simulate_reduced(systems.averaged_tracking_model(noise), x, cfg)
            gaps.append(float(np.abs(xp.states - xa.states).max(axis=(0, 2)).mean()))
        write_csv(out / "pathwise.csv", ["eps", "sup_gap"],
                  list(map(list, zip(eps_list, gaps))))
        if len(eps_list) >= 2:
            halvings = np.log2(eps_list[0] / eps_list[-1])
            rate = (gaps[0] / gaps[-1]) ** (1.0 / halvings)
            factors = ",".join(f"{gaps[i] / gaps[i + 1]:.3f}"
                               for i in range(len(gaps) - 1))
            checks.append(Check("pathwise_rate_per_halving", "at_least", rate, 1.7,
                                detail=f"geometric mean over the sweep; "
                                       f"consecutive factors {factors}"))
            checks.append(Check("pathwise_monotone", "at_most",
                                float(np.max(np.diff(gaps))), 0.0,
                                detail="sup gaps decrease along the sweep"))
    else:
        i_min = int(np.argmin(rep.eps))
        checks.append(Check("distance_at_min_eps", "at_least",
                            float(rep.distance[i_min]), 0.9,
                            detail=f"no convergence: limit distance >= |x| = {abs(x)}; "
                                   f"slope {slope_note}"))
    with open(out / "slope.json", "w") as fh:
        json.dump({"slope": rep.slope, "family": family, "x": x}, fh, indent=1)
    return checks


# ---------------------------------------------------------------------------
# condition audit: [C1]-[C4] for a configured reduced model
# ---------------------------------------------------------------------------

def _audit_models(p: dict):
    eps = float(p["eps"])
    name = str(p["model"])
    if name == "ou":
        model = systems.averaged_tracking_model(SQRT2)
        lam0 = 0.5
        t_grid = [0.0]
        limit_drift = model.drift
        expected = {"C1": True, "C2": True, "C3": True, "C4": True}
    elif name == "projected-noisy-slow":
        model = systems.projected_tracking_model(eps, SQRT2)
        slope, _ = systems.tracking_ecd(eps, SQRT2)
        lam0 = 1.0 - slope
        t_grid = [0.0]
        limit_drift = model.drift
        expected = {"C1": True, "C2": True, "C3": True, "C4": True}
    elif name == "gyongy-deterministic-slow":
        m0 = np.array([float(p["m0x"]), float(p["m0y"])])
        s0 = np.diag([float(p["s0xx"]), float(p["s0yy"])])
        model = systems.gyongy_tracking_model(m0, s0)
        lam0 = float(p["lam0"])
        t_grid = list(np.linspace(5.0, 20.0, 16))
        limit_drift = systems.projected_tracking_model(1.0, 0.0).drift
        expected = {"C1": False, "C2": False, "C3": False, "C4": True}
    else:
        raise ConfigError("model must be one of ou, projected-noisy-slow, "
                          "gyongy-deterministic-slow")
    return model, lam0, t_grid, limit_drift, expected


def _run_condition_audit(p: dict, out: Path) -> list[Check]:
    model, lam0, t_grid, limit_drift, expected = _audit_models(p)
    half = float(p["half_width"])
    xs = np.linspace(-half, half, int(p["nx"]))[:, None]
    c2 = float(p["c2"])

    c1rep = check_uniform_ellipticity(
        None if model.diffusion_sq is None else (lambda pts: model.diffusion_sq(0.0, pts)),
        xs)
    # [C2] across the audited times: worst case over the drift's time grid
    worst = None
    for t in t_grid:
        rep = check_lyapunov_condition(lambda pts, _t=t: model.drift(_t, pts),
                                       None if model.diffusion_sq is None
                                       else (lambda pts, _t=t: model.diffusion_sq(_t, pts)),
                                       xs, c2)
        if (worst is None or (worst.holds and not rep.holds)
                or (worst.holds == rep.holds and rep.c1 > worst.c1)):
            worst = rep
    c3rep = check_obtuse_angle_1d(
        lambda t, x: float(model.drift(max(t, 1e-9), np.array([[x]]))[0, 0]),
        t_grid if t_grid != [0.0] else [0.0],
        np.linspace(-half, half, 21), lam0)
    c4rep = check_coefficient_limits(
        lambda t, x: model.drift(max(t, 1e-9), x), limit_drift,
        np.linspace(-half, half, 21), t_end=float(p["t_end"]), tol=float(p["c4_tol"]))

    results = {
        "C1": {"holds": c1rep.holds, "min_eigenvalue": c1rep.min_eigenvalue},
        "C2": worst.as_dict() | {"holds": worst.holds},
        "C3": {"holds": c3rep.holds, "sup_dx_drift": c3rep.sup_dx_drift,
               "lam0": c3rep.lam0},
        "C4": {"holds": c4rep.holds, "sup_half": c4rep.sup_half,
               "sup_end": c4rep.sup_end, "tol": c4rep.tol},
    }
    with open(out / "audit.json", "w") as fh:
        json.dump({"model": p["model"], "expected": expected, "results": results},
                  fh, indent=1)
    write_csv(out / "audit.csv", ["condition", "holds", "expected", "witness"],
              [[k, bool(results[k]["holds"]), bool(expected[k]),
                json.dumps({kk: vv for kk, vv in results[k].items() if kk != "holds"})]
               for k in ("C1", "C2", "C3", "C4")])
    checks = []
    for k in ("C1", "C2", "C3", "C4"):
        checks.append(Check(f"{k}_matches_expected", "at_most",
                            0.0 if bool(results[k]["holds"]) == expected[k] else 1.0,
                            0.0, detail=f"holds={results[k]['holds']}, "
                                        f"expected holds={expected[k]}"))
    return checks


# ---------------------------------------------------------------------------
# registry, manifest, CLI-facing entry point
# ---------------------------------------------------------------------------

EXPERIMENTS: dict[str, Experiment] = {
    "ou-methods": Experiment(
        "ou-methods",
        {"eps": (float, 1.0), "n_particles": (int, 100_000), "dt": (float, 1e-3),
         "t_final": (float, 50.0), "ecd_t_final": (float, 2000.0),
         "avg_t_final": (float, 400.0), "burn_in": (float, 10.0),
         "n_bins": (int, 40), "min_count": (int, 100),
         "sample_spacing": (float, 0.5), "seed": (int, 20260809),
         "threads": (int, 0)},
        _run_ou_methods,
        "averaging vs projection vs Monte Carlo truth on the tracking OU pair"),
    "gyongy-moments": Experiment(
        "gyongy-moments",
        {"n_particles": (int, 100_000), "t_max": (float, 20.0), "n_out": (int, 81),
         "m0x": (float, -1.0), "m0y": (float, 5.0), "s0xx": (float, 0.1),
         "s0yy": (float, 1.0), "rk_tol": (float, 1e-9), "seed": (int, 7),
         "threads": (int, 0)},
        _run_gyongy_moments,
        "ensemble mean/variance of the mimicking reduction vs closed form"),
    "gyongy-longtime": Experiment(
        "gyongy-longtime",
        {"n_particles": (int, 100_000), "eval_t": (float, 20.0),
         "n_hist_bins": (int, 50), "m0x": (float, -1.0), "m0y": (float, 5.0),
         "s0xx": (float, 0.1), "s0yy": (float, 1.0), "rk_tol": (float, 1e-9),
         "seed": (int, 7), "threads": (int, 0)},
        _run_gyongy_longtime,
        "terminal histogram vs the stationary x-marginal"),
    "gyongy-fan": Experiment(
        "gyongy-fan",
        {"n_paths": (int, 10), "t_max": (float, 20.0), "n_out": (int, 201),
         "m0x": (float, -1.0), "m0y": (float, 5.0), "s0xx_small": (float, 0.1),
         "s0xx_large": (float, 10.0), "s0yy": (float, 1.0),
         "rk_tol": (float, 1e-9), "seed": (int, 11), "threads": (int, 0)},
        _run_gyongy_fan,
        "trajectory fans: mimicking reduction vs constant projected paths"),
    "frozen-vs-conditional": Experiment(
        "frozen-vs-conditional",
        {"example": (str, "gradient"), "cxx": (float, 1.0), "cyy": (float, 1.0),
         "cxy": (float, 0.5), "half_width": (float, 5.0), "nx": (int, 201),
         "ny": (int, 201), "tol": (float, 0.02), "threads": (int, 0)},
        _run_prop41,
        "adjoint-splitting residuals decide frozen law == conditional law"),
    "eps-sweep": Experiment(
        "eps-sweep",
        {"family": (str, "noisy-slow"), "x": (float, 1.0),
         "eps_list": (str, "0.4,0.2,0.1,0.05"), "pathwise_dt": (float, 1e-3),
         "pathwise_t": (float, 10.0), "pathwise_particles": (int, 64),
         "seed": (int, 3), "threads": (int, 0)},
        _run_eps_sweep,
        "conditional-law vs frozen-law distance as eps -> 0"),
    "condition-audit": Experiment(
        "condition-audit",
        {"model": (str, "ou"), "eps": (float, 0.5), "lam0": (float, 0.01),
         "c2": (float, 0.5), "half_width": (float, 10.0), "nx": (int, 201),
         "m0x": (float, -1.0), "m0y": (float, 5.0), "s0xx": (float, 0.1),
         "s0yy": (float, 1.0), "t_end": (float, 20.0), "c4_tol": (float, 1e-3),
         "threads": (int, 0)},
        _run_condition_audit,
        "ellipticity / Lyapunov / obtuse-angle / coefficient-limit audits"),
}


def coerce_params(exp: Experiment, overrides: dict) -> dict:
    params = {k: d for k, (t, d) in exp.schema.items()}
    for key, raw in overrides.items():
        if key not in exp.schema:
            raise ConfigError(f"unknown parameter '{key}' for {exp.name} "
                              f"(valid: {', '.join(sorted(exp.schema))})")
        typ = exp.schema[key][0]
        try:
            params[key] = typ(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for '{key}': {raw!r} ({e})") from None
    return params


def config_hash(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def run_experiment(exp_id: str, overrides: dict, out_dir) -> int:
    """Run one experiment; returns the CLI exit code (0 pass / 1 fail)."""
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{exp_id}' "
                          f"(valid: {', '.join(sorted(EXPERIMENTS))})")
    exp = EXPERIMENTS[exp_id]
    params = coerce_params(exp, overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": exp_id,
        "params": params,
        "config_hash": config_hash(params),
        "seed": params.get("seed"),
        "versions": {"cgsde": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    checks = exp.runner(params, out)
    all_pass = all(c.passed for c in checks)
    with open(out / "verdict.json", "w") as fh:
        json.dump({"experiment": exp_id, "all_pass": all_pass,
                   "checks": [c.as_dict() for c in checks]}, fh, indent=1)
    return 0 if all_pass else 1
