"""Time integration: Euler-Maruyama ensembles, adaptive Runge-Kutta for
deterministic reduced equations, frozen-process simulation, and the
Ito -> Stratonovich drift conversion.

RNG contract
------------
Particles are partitioned into fixed blocks of ``BLOCK`` = 32768; block ``i``
draws its Brownian increments from a counter-based Philox stream keyed by
``(seed, i)``, and initial conditions are sampled from the stream keyed
``(seed, 2**64 - 1)``.  Blocks are integrated independently (optionally on a
thread pool), so results are bit-identical for any worker count, and two
systems driven with the same seed and the same active noise dimensions
receive identical increments (used for common-noise couplings).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.integrate

from .model import EnsembleTrajectory, SlowFastSystem

__all__ = [
    "IntegratorConfig",
    "simulate_full",
    "simulate_frozen",
    "simulate_sde",
    "OdePath",
    "rk_solve",
    "ito_to_stratonovich_drift",
]

BLOCK = 16384              # particles per RNG stream
_CHUNK_TARGET = 1 << 18    # increment doubles drawn per RNG call
_INIT_KEY = 2**64 - 1


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, horizon, ensemble size, seed, and solver knobs."""

    dt: float
    t_final: float
    n_particles: int = 1
    seed: int = 0
    burn_in: float = 0.0
    rk_tol: float = 1e-9
    store_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.store_stride < 1:
            raise ValueError("store_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))


def _stream(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _resolve_init(init, n: int, dim: int, seed: int) -> np.ndarray:
    if callable(init):
        rng = _stream(seed, _INIT_KEY)
        out = np.asarray(init(rng, n), dtype=float)
        if out.shape != (n, dim):
            raise ValueError(f"init sampler returned shape {out.shape}, want {(n, dim)}")
        return np.ascontiguousarray(out)
    arr = np.asarray(init, dtype=float)
    if arr.ndim <= 1:
        arr = np.broadcast_to(np.atleast_1d(arr), (n, dim))
    if arr.shape != (n, dim):
        raise ValueError(f"init shape {arr.shape} incompatible with {(n, dim)}")
    return np.array(arr, dtype=float)


def _store_plan(n_steps: int, stride: int):
    steps = list(range(0, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    frame_of = np.full(n_steps + 1, -1, dtype=np.int64)
    frame_of[steps] = np.arange(len(steps))
    return np.asarray(steps, dtype=np.int64), frame_of


def _locate_bad(update, z0, dw, k0: int, dt: float, p0: int):
    """Replay a chunk step by step to find the first non-finite state."""
    z = z0.copy()
    for j in range(dw.shape[0]):
        update((k0 + j) * dt, z, dw[j], p0)
        if not np.isfinite(z).all():
            part = int(np.argmax(~np.isfinite(z).all(axis=1)))
            step = k0 + j + 1
            raise RuntimeError(
                f"non-finite state for particle {p0 + part} at step {step} "
                f"(t = {step * dt:.6g})"
            )
    raise RuntimeError("non-finite state vanished on replay")  # pragma: no cover


def _run_block(update, z, dw_scale, noise_dim, cfg, block_index, p0, states, frame_of):
    n_steps = cfg.n_steps
    dt = cfg.dt
    bn = z.shape[0]
    if frame_of[0] >= 0:
        states[frame_of[0], p0:p0 + bn] = z
    if noise_dim > 0:
        rng = _stream(cfg.seed, block_index)
        chunk = max(1, min(n_steps, _CHUNK_TARGET // max(1, bn * noise_dim)))
        buf = np.empty((chunk, bn, noise_dim))
    else:
        rng, chunk, buf = None, n_steps, None
    k = 0
    while k < n_steps:
        csteps = min(chunk, n_steps - k)
        if noise_dim > 0:
            dw = buf[:csteps]
            rng.standard_normal(out=dw)
            dw *= dw_scale
        else:
            dw = np.zeros((csteps, bn, 0))
        snapshot = z.copy()
        for j in range(csteps):
            update((k + j) * dt, z, dw[j], p0)
            f = frame_of[k + j + 1]
            if f >= 0:
                states[f, p0:p0 + bn] = z
        if not np.isfinite(z).all():
            _locate_bad(update, snapshot, dw, k, dt, p0)
        k += csteps


def _em_ensemble(update, init_states, noise_dim, noise_scale, cfg, n_threads) -> EnsembleTrajectory:
    """Generic block-parallel Euler-Maruyama driver.

    ``update(t, z, dw)`` advances the block state ``z`` (bn, dim) in place by
    one step; ``dw`` (bn, noise_dim) already includes sqrt(dt) and any
    per-channel scale.
    """
    n = init_states.shape[0]
    dim = init_states.shape[1]
    steps, frame_of = _store_plan(cfg.n_steps, cfg.store_stride)
    states = np.empty((len(steps), n, dim))
    scale = np.sqrt(cfg.dt) * np.asarray(noise_scale, dtype=float)
    blocks = [(i, s, min(s + BLOCK, n)) for i, s in enumerate(range(0, n, BLOCK))]

    def work(blk):
        i, s, e = blk
        _run_block(update, init_states[s:e].copy(), scale, noise_dim, cfg, i, s,
                   states, frame_of)

    if n_threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            for _ in ex.map(work, blocks):
                pass
    else:
        for blk in blocks:
            work(blk)
    return EnsembleTrajectory(
        times=steps * cfg.dt, states=states, seed=cfg.seed, stride=cfg.store_stride
    )


def _add_diffusion(target, coeff, dw):
    """target += coeff @ dw with coeff diagonal (bn, k) or full (bn, k, k)."""
    c = np.asarray(coeff)
    if c.ndim == 3:
        target += np.einsum("nij,nj->ni", c, dw)
    else:
        target += c * dw


def simulate_full(system: SlowFastSystem, init, cfg: IntegratorConfig,
                  n_threads: int = 1) -> EnsembleTrajectory:
    """Euler-Maruyama ensemble of the joint (X, Y) dynamics.

    The state is the concatenation (x, y); with ``eps`` set, the fast channel
    integrates drift ``g/eps`` and diffusion ``beta/sqrt(eps)``.  Initial data
    may be a fixed point, an (N, d+m) array, or a sampler ``init(rng, n)``.
    """
    d, m = system.d, system.m
    slow_noise = system.diff_slow is not None
    fast_noise = system.diff_fast is not None or system.cross_diff is not None
    noise_dim = d * slow_noise + m * fast_noise
    inv_eps = 1.0 / system.eps if system.eps is not None else 1.0
    slow_scale = np.ones(d) if slow_noise else np.zeros(0)
    fast_scale = np.full(m, np.sqrt(inv_eps)) if fast_noise else np.zeros(0)
    f = system.drift_slow.fn
    g = system.drift_fast.fn
    alpha = system.diff_slow.fn if system.diff_slow is not None else None
    beta = system.diff_fast.fn if system.diff_fast is not None else None
    a12 = system.cross_diff.fn if system.cross_diff is not None else None
    has_beta = beta is not None
    # constant diagonal diffusions fold into the per-chunk noise scaling
    # (never when the fast increments are shared with a cross-diffusion term)
    if slow_noise and system.diff_slow.constant_diag is not None:
        slow_scale = slow_scale * np.asarray(system.diff_slow.constant_diag)
        alpha = None
    if has_beta and a12 is None and system.diff_fast.constant_diag is not None:
        fast_scale = fast_scale * np.asarray(system.diff_fast.constant_diag)
        beta = None
    noise_scale = np.concatenate([slow_scale, fast_scale])
    dt = cfg.dt
    dt_fast = dt * inv_eps
    nd_slow = d * slow_noise

    def update(t, z, dw, p0):
        x = z[:, :d]
        y = z[:, d:]
        fx = f(t, x, y)
        gy = g(t, x, y)
        av = alpha(t, x, y) if alpha is not None else None
        bv = beta(t, x, y) if beta is not None else None
        cv = a12(t, x, y) if a12 is not None else None
        if slow_noise:
            if av is None:
                x += dw[:, :nd_slow]
            else:
                _add_diffusion(x, av, dw[:, :nd_slow])
        if cv is not None:
            x += np.einsum("nij,nj->ni", np.asarray(cv), dw[:, nd_slow:])
        if has_beta:
            if bv is None:
                y += dw[:, nd_slow:]
            else:
                _add_diffusion(y, bv, dw[:, nd_slow:])
        x += dt * np.asarray(fx)
        y += dt_fast * np.asarray(gy)

    init_states = _resolve_init(init, cfg.n_particles, d + m, cfg.seed)
    return _em_ensemble(update, init_states, noise_dim, noise_scale, cfg, n_threads)


def simulate_frozen(system: SlowFastSystem, x, y0, cfg: IntegratorConfig,
                    n_threads: int = 1) -> EnsembleTrajectory:
    """Fast variable with the slow one pinned: dY = g(x, Y) dt + beta(x, Y) dW.

    The frozen process is eps-free by construction, so no eps scaling is
    applied.  ``x`` may be a single point (d,) or per-particle values (N, d).
    """
    d, m = system.d, system.m
    n = cfg.n_particles
    x_fixed = np.array(np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (n, d)))
    g = system.drift_fast.fn
    beta = system.diff_fast.fn if system.diff_fast is not None else None
    noise_dim = m if beta is not None else 0
    noise_scale = np.ones(noise_dim)
    if beta is not None and system.diff_fast.constant_diag is not None:
        noise_scale = noise_scale * np.asarray(system.diff_fast.constant_diag)
        beta = None
    has_noise = noise_dim > 0
    dt = cfg.dt

    def update(t, z, dw, p0):
        xb = x_fixed[p0:p0 + z.shape[0]]
        gy = g(t, xb, z)
        if has_noise:
            if beta is None:
                z += dw
            else:
                _add_diffusion(z, beta(t, xb, z), dw)
        z += dt * np.asarray(gy)

    init_states = _resolve_init(y0, n, m, cfg.seed)
    return _em_ensemble(update, init_states, noise_dim, noise_scale, cfg, n_threads)


def simulate_sde(drift, diffusion, init, dim: int, cfg: IntegratorConfig,
                 n_threads: int = 1) -> EnsembleTrajectory:
    """Euler-Maruyama for a generic dX = drift(t, X) dt + diffusion(t, X) dW.

    ``diffusion(t, x)`` returns the noise multiplier, diagonal (N, dim) or
    full (N, dim, dim); ``None`` means a deterministic ODE stepped with EM.
    """
    dt = cfg.dt
    noise_dim = dim if diffusion is not None else 0

    def update(t, z, dw, p0):
        fv = drift(t, z)
        if diffusion is not None:
            _add_diffusion(z, diffusion(t, z), dw)
        z += dt * np.asarray(fv)

    init_states = _resolve_init(init, cfg.n_particles, dim, cfg.seed)
    return _em_ensemble(update, init_states, noise_dim, np.ones(noise_dim), cfg, n_threads)


@dataclass(frozen=True)
class OdePath:
    """Adaptive RK solution with dense evaluation on [t0, t1]."""

    t0: float
    t1: float
    y_end: np.ndarray
    _dense: Callable | None = None
    t_eval: np.ndarray | None = None
    y_eval: np.ndarray | None = None

    def __call__(self, t):
        if self._dense is None:
            raise ValueError("path was computed without dense output")
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12) or np.any(t > self.t1 + 1e-12):
            raise ValueError(f"evaluation outside [{self.t0}, {self.t1}]")
        return self._dense(t)


def rk_solve(field, x0, t0: float, t1: float, tol: float = 1e-9,
             t_eval=None, dense: bool = True) -> OdePath:
    """Adaptive 8th-order explicit Runge-Kutta (DOP853) with dense output.

    Local error per step is controlled to ``atol = rtol = tol``.  Step-size
    underflow (stiffness or blow-up) raises with the failure location.
    ``dense=False`` with an explicit ``t_eval`` avoids storing interpolants
    for very large state vectors.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sol = scipy.integrate.solve_ivp(
        field, (t0, t1), y0, method="DOP853", rtol=tol, atol=tol,
        dense_output=dense, t_eval=t_eval,
    )
    if not sol.success:
        t_fail = sol.t[-1] if sol.t.size else t0
        raise RuntimeError(f"ODE solve failed near t = {t_fail:.6g}: {sol.message}")
    return OdePath(
        t0=t0, t1=t1, y_end=sol.y[:, -1].copy(),
        _dense=sol.sol if dense else None,
        t_eval=None if t_eval is None else np.asarray(sol.t),
        y_eval=None if t_eval is None else sol.y.T.copy(),
    )


def ito_to_stratonovich_drift(b, sigma, h_fd: float = 1e-5):
    """Stratonovich-corrected drift for dX = b dt + sigma dW:

        B_i(t, x) = b_i(t, x) - 1/2 sum_{j,k} sigma_jk d sigma_ik / d x_j

    with the Jacobian by centered differences of step ``h_fd * max(1, |x_j|)``.
    ``sigma(t, x)`` may return diagonal (N, d) or full (N, d, d) values.
    """

    def corrected(t, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        s0 = np.asarray(sigma(t, x))
        corr = np.zeros((n, d))
        for j in range(d):
            h = h_fd * np.maximum(1.0, np.abs(x[:, j]))
            xp = x.copy()
            xp[:, j] += h
            xm = x.copy()
            xm[:, j] -= h
            sp = np.asarray(sigma(t, xp), dtype=float)
            sm = np.asarray(sigma(t, xm), dtype=float)
            if s0.ndim == 3:
                dsig = (sp - sm) / (2.0 * h)[:, None, None]
                corr += np.einsum("nk,nik->ni", s0[:, j, :], dsig)
            else:
                # diagonal sigma: only the j = k = i terms survive
                dsig = (sp - sm) / (2.0 * h)[:, None]
                corr[:, j] += s0[:, j] * dsig[:, j]
        return np.asarray(b(t, x), dtype=float) - 0.5 * corr

    return corrected
