"""Exact machinery for linear SDEs dZ = A Z dt + C dW.

Matrix exponentials, stationary covariances via the Lyapunov equation,
Kalman controllability rank, Gaussian moment propagation and conditioning,
and the closed-form time-dependent drift of the mimicking-marginal (Gyongy)
reduction of the two-dimensional triangular OU system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import GaussianMeasure

__all__ = [
    "LinearSDE",
    "matrix_exp",
    "is_hurwitz",
    "solve_lyapunov",
    "stationary_measure",
    "kalman_rank",
    "ou_moments",
    "gaussian_condition",
    "gaussian_marginal",
    "gyongy_phi",
    "gyongy_drift_linear",
]

_HURWITZ_TOL = 1e-12
_LYAP_RESID_RTOL = 1e-10
_RANK_RTOL = 1e-10
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class LinearSDE:
    """Drift matrix A (1/time) and noise matrix C for dZ = A Z dt + C dW."""

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if C.shape[0] != n:
            raise ValueError("C must have as many rows as A")
        if not (np.isfinite(A).all() and np.isfinite(C).all()):
            raise ValueError("A and C must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def matrix_exp(A, t: float = 1.0) -> np.ndarray:
    """exp(A t) by scaling-and-squaring (scipy.linalg.expm)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return scipy.linalg.expm(A * t)


def is_hurwitz(A, tol: float = _HURWITZ_TOL) -> bool:
    """True when every eigenvalue has real part < -tol."""
    return bool(np.max(np.linalg.eigvals(np.atleast_2d(A)).real) < -tol)


def solve_lyapunov(A, C) -> np.ndarray:
    """Stationary covariance: the solution of A S + S A^T = -C C^T.

    Requires Hurwitz A; the returned matrix is symmetrized and its residual
    satisfies ||A S + S A^T + C C^T||_F <= 1e-10 ||C C^T||_F.
    """
    lin = LinearSDE(A, C)
    if not is_hurwitz(lin.A):
        raise ValueError("no stationary covariance: drift matrix is not Hurwitz")
    Q = lin.C @ lin.C.T
    S = scipy.linalg.solve_continuous_lyapunov(lin.A, -Q)
    S = 0.5 * (S + S.T)
    resid = np.linalg.norm(lin.A @ S + S @ lin.A.T + Q)
    scale = np.linalg.norm(Q)
    if scale > 0 and resid > _LYAP_RESID_RTOL * scale:
        raise RuntimeError(f"Lyapunov residual too large: {resid:.3e}")
    return S


def stationary_measure(lin: LinearSDE) -> GaussianMeasure:
    """The unique stationary Gaussian law N(0, S) of a Hurwitz linear SDE."""
    return GaussianMeasure(mean=np.zeros(lin.dim), cov=solve_lyapunov(lin.A, lin.C))


def kalman_rank(A, C) -> int:
    """Numerical rank of the controllability matrix [C | AC | ... | A^{n-1}C]."""
    lin = LinearSDE(A, C)
    blocks = [lin.C]
    for _ in range(lin.dim - 1):
        blocks.append(lin.A @ blocks[-1])
    K = np.hstack(blocks)
    svals = np.linalg.svd(K, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    return int(np.sum(svals > _RANK_RTOL * svals[0]))


def ou_moments(lin: LinearSDE, m0, sigma0, t: float) -> GaussianMeasure:
    """Mean and covariance of the linear SDE at time t from N(m0, sigma0).

    mean(t) = exp(At) m0 and
    cov(t) = int_0^t exp(As) C C^T exp(A^T s) ds + exp(At) sigma0 exp(A^T t),
    with the integral evaluated in closed form through the augmented block
    exponential of [[A, CC^T], [0, -A^T]] (no quadrature, machine precision).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = lin.dim
    m0 = np.broadcast_to(np.asarray(m0, dtype=float), (n,))
    sigma0 = np.broadcast_to(np.atleast_2d(np.asarray(sigma0, dtype=float)), (n, n))
    if t == 0.0:
        return GaussianMeasure(mean=m0, cov=sigma0)
    # the -A^T block of the augmented matrix grows like exp(+|Re lambda| t),
    # so keep ||A dt|| small and compose with the exact flow recursion
    # cov <- F cov F^T + P, which is how the moments propagate step-to-step
    n_sub = max(1, int(np.ceil(np.linalg.norm(lin.A, 1) * t / 2.0)))
    dt = t / n_sub
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = lin.A
    M[:n, n:] = lin.C @ lin.C.T
    M[n:, n:] = -lin.A.T
    E = scipy.linalg.expm(M * dt)
    F = E[:n, :n]                      # exp(A dt)
    P = E[:n, n:] @ F.T                # int_0^dt exp(As) CC^T exp(A^T s) ds
    mean = m0
    cov = sigma0
    for _ in range(n_sub):
        mean = F @ mean
        cov = F @ cov @ F.T + P
    return GaussianMeasure(mean=mean, cov=0.5 * (cov + cov.T))


def gaussian_condition(g: GaussianMeasure, d: int, x) -> GaussianMeasure:
    """Law of the trailing coordinates given the leading d coordinates = x.

    Schur complement: mean_y + S_yx S_xx^{-1} (x - mean_x) and
    S_yy - S_yx S_xx^{-1} S_xy.  A leading block with condition number above
    1e12 raises ("degenerate conditioning") instead of regularizing.
    """
    k = g.dim
    if not (1 <= d < k):
        raise ValueError("split must leave at least one conditioned coordinate")
    x = np.broadcast_to(np.asarray(x, dtype=float), (d,))
    Sxx = g.cov[:d, :d]
    Sxy = g.cov[:d, d:]
    Syy = g.cov[d:, d:]
    cond = np.linalg.cond(Sxx)
    scale = np.linalg.norm(g.cov)
    lam_min = float(np.linalg.eigvalsh(Sxx).min())
    if not np.isfinite(cond) or cond > _COND_LIMIT or lam_min <= scale / _COND_LIMIT:
        raise ValueError(
            f"degenerate conditioning: leading block condition number {cond:.3e}, "
            f"smallest eigenvalue {lam_min:.3e} vs covariance scale {scale:.3e}"
        )
    gain = np.linalg.solve(Sxx, Sxy).T     # S_yx S_xx^{-1}
    mean = g.mean[d:] + gain @ (x - g.mean[:d])
    cov = Syy - gain @ Sxy
    return GaussianMeasure(mean=mean, cov=0.5 * (cov + cov.T))


def gaussian_marginal(g: GaussianMeasure, keep) -> GaussianMeasure:
    """Marginal on the kept coordinate indices."""
    idx = np.atleast_1d(np.asarray(keep, dtype=int))
    return GaussianMeasure(mean=g.mean[idx], cov=g.cov[np.ix_(idx, idx)])


def _diag_entries(sigma0) -> tuple[float, float]:
    S0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    if S0.shape == (1, 2) or S0.shape == (2,):
        S0 = np.diag(np.ravel(S0))
    if S0.shape != (2, 2):
        raise ValueError("sigma0 must be a 2x2 matrix or a pair of variances")
    if abs(S0[0, 1]) > 1e-12 * (1.0 + abs(S0[0, 0]) + abs(S0[1, 1])):
        raise ValueError(
            "closed form assumes independent initial components (diagonal sigma0)"
        )
    return float(S0[0, 0]), float(S0[1, 1])


def gyongy_phi(t: float, sigma0) -> float:
    """The time-dependent gain of the mimicking-marginal drift for the
    triangular OU system, phi(t) = cov_xy(t) / cov_xx(t):

        phi(t) = [1 - e^{-2t}(2t+1) + 2t e^{-2t} s_yy]
               / [1 - e^{-2t}(2t^2+2t+1 - 2 s_xx - 2t^2 s_yy)]

    for a diagonal initial covariance diag(s_xx, s_yy).  phi(0) is the limit
    value 0 when s_xx > 0; Dirac initial x-data (s_xx = 0, t = 0) raises.
    """
    sxx, syy = _diag_entries(sigma0)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        if sxx > 0:
            return 0.0
        raise ValueError("singular at origin: deterministic initial x-component")
    e = np.exp(-2.0 * t)
    num = 1.0 - e * (2.0 * t + 1.0) + 2.0 * t * e * syy
    den = 1.0 - e * (2.0 * t * t + 2.0 * t + 1.0 - 2.0 * sxx - 2.0 * t * t * syy)
    return float(num / den)


def gyongy_drift_linear(t: float, x, m0, sigma0):
    """Right-hand side of the mimicking-marginal ODE for the triangular OU
    system:

        dX/dt = (phi(t) - 1) X + e^{-t} m0_y - phi(t) (e^{-t} m0_x + t e^{-t} m0_y)

    which equals -x + E[Y_t | X_t = x].  ``x`` may be an array.
    """
    m0 = np.broadcast_to(np.asarray(m0, dtype=float), (2,))
    phi = gyongy_phi(t, sigma0)
    et = np.exp(-t)
    mean_x = et * m0[0] + t * et * m0[1]
    return (phi - 1.0) * np.asarray(x, dtype=float) + et * m0[1] - phi * mean_x
