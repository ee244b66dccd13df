"""Independent oracles shared by the test modules.

These deliberately avoid the library's own code paths: the matrix exponential
is a truncated Taylor series, the reduced-ODE oracle is a fixed-step RK4
recurrence with its own drift formulas, and expectations come from raw
Gauss-Hermite nodes.
"""

import numpy as np


def taylor_expm(A, t, terms=200):
    """exp(At) by plain Taylor summation (oracle, small matrices only)."""
    A = np.asarray(A, dtype=float) * t
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ A / k
        out = out + term
    return out


def _phi_closed(t, sxx, syy):
    e = np.exp(-2.0 * t)
    num = 1.0 - e * (2.0 * t + 1.0) + 2.0 * t * e * syy
    den = 1.0 - e * (2.0 * t ** 2 + 2.0 * t + 1.0 - 2.0 * sxx - 2.0 * t ** 2 * syy)
    return num / den


def _mean_x_closed(t, m0x, m0y):
    return np.exp(-t) * (m0x + t * m0y)


def rk4_reduced_ode(x0, t_end, h, m0, sigma0):
    """Fixed-step classical RK4 for dx/dt = a(t) x + u(t) with the closed-form
    time-dependent reduction coefficients a = phi - 1 and
    u = e^{-t} m0_y - phi * mean_x(t).

    The linear structure lets the whole recurrence x_{k+1} = R_k x_k + S_k be
    vectorized (cumulative products), so dt = 1e-5 over [0, 20] is cheap.
    """
    sxx, syy = float(sigma0[0, 0]), float(sigma0[1, 1])
    m0x, m0y = float(m0[0]), float(m0[1])
    n = int(round(t_end / h))
    ts = np.arange(n) * h

    def a_of(t):
        t = np.maximum(t, 1e-300)
        return _phi_closed(t, sxx, syy) - 1.0

    def u_of(t):
        t = np.maximum(t, 1e-300)
        phi = _phi_closed(t, sxx, syy)
        return np.exp(-t) * m0y - phi * _mean_x_closed(t, m0x, m0y)

    a0, ah, a1 = a_of(ts), a_of(ts + h / 2), a_of(ts + h)
    u0, uh, u1 = u_of(ts), u_of(ts + h / 2), u_of(ts + h)
    r1, s1 = a0, u0
    r2 = ah * (1 + h / 2 * r1)
    s2 = ah * (h / 2 * s1) + uh
    r3 = ah * (1 + h / 2 * r2)
    s3 = ah * (h / 2 * s2) + uh
    r4 = a1 * (1 + h * r3)
    s4 = a1 * (h * s3) + u1
    R = 1 + h / 6 * (r1 + 2 * r2 + 2 * r3 + r4)
    S = h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
    # x_n = P_n x0 + sum_k S_k P_n / P_{k+1} with P_j = prod_{i<j} R_i
    P = np.cumprod(R)
    tail = P[-1] / P
    return float(P[-1] * x0 + np.sum(S * tail))


def gauss_hermite_expectation(fn, mean, var, n=80):
    """E[fn(Y)] for Y ~ N(mean, var) via raw Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    ys = mean + np.sqrt(2.0 * var) * nodes
    return float(np.sum(weights * fn(ys)) / np.sqrt(np.pi))


def gaussian_pdf(x, mean, var):
    return np.exp(-((x - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
