"""Independent reference implementations used by the tests.

Nothing here imports the package's numerics: the trace oracle integrates
the forward model with adaptive quadrature (or a plain midpoint rule), the
convolution oracle is a double loop, and the TV oracle hands the problem
to a conic solver.
"""
import numpy as np
from scipy.integrate import quad


def gamma_a(nu_b, nu, dnu):
    return np.pi * dnu + 1j * np.pi * (nu_b - nu) * (nu_b + nu) / nu


def gamma_a_exact(nu_b, nu, dnu):
    """Detuning parameter in 50-digit arithmetic."""
    import mpmath
    mpmath.mp.dps = 50
    nb, n, d = (mpmath.mpf(float(x)) for x in (nu_b, nu, dnu))
    return complex(mpmath.pi * d + 1j * mpmath.pi * (nb ** 2 - n ** 2) / n)


def _env(g, T, tau):
    if tau < 0 or tau >= T:
        return 0.0
    return 1 - np.exp(-np.conj(g) * tau)


def trace_quad(segments, nu, T, times, dnu=27e6, v=2e8, kappa=1.0):
    """``Re int env(t - 2z/v) kappa / (2 conj(gamma(z))) dz`` by adaptive quadrature.

    ``segments``: ``[(a, b, bfs), ...]``.  Breakpoints at the gate edges keep
    every sub-integral smooth.
    """
    out = np.zeros(len(times))
    for k, t in enumerate(times):
        acc = 0.0
        for a, b, bfs in segments:
            g = gamma_a(bfs, nu, dnu)
            h = kappa / (2 * np.conj(g))
            lo, hi = max(a, v * (t - T) / 2), min(b, v * t / 2)
            if hi <= lo:
                continue

            def f(z):
                return np.real(h * _env(g, T, t - 2 * z / v))
            acc += quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        out[k] = acc
    return out


def trace_midpoint(segments, nu, T, times, dz, dnu=27e6, v=2e8, kappa=1.0):
    """Same integral with the midpoint rule on a ``dz`` grid."""
    length = max(b for _, b, _ in segments)
    z = (np.arange(int(round(length / dz))) + 0.5) * dz
    bfs = np.empty_like(z)
    for a, b, f in segments:
        bfs[(z >= a) & (z < b)] = f
    g = gamma_a(bfs, nu, dnu)
    h = kappa / (2 * np.conj(g))
    out = np.zeros(len(times))
    for k, t in enumerate(times):
        tau = t - 2 * z / v
        gate = (tau >= 0) & (tau < T)
        out[k] = np.real(np.sum(h[gate] * (1 - np.exp(-np.conj(g[gate]) * tau[gate])))) * dz
    return out


def plateau_quad(T, dnu=27e6, v=2e8, kappa=1.0):
    """Steady-state level of a uniform fibre probed at its BFS."""
    g = np.pi * dnu
    val = quad(lambda s: 1 - np.exp(-g * s), 0, T, epsabs=0.0, epsrel=1e-13)[0]
    return kappa / (2 * g) * v / 2 * val


def convolve_direct(w, f, origin=0):
    """``out[k] = sum_j w[k - j + origin] f[j]`` by explicit loops."""
    n = len(f)
    out = np.zeros(n)
    for k in range(n):
        s = 0.0
        for j in range(n):
            m = k - j + origin
            if 0 <= m < len(w):
                s += w[m] * f[j]
        out[k] = s
    return out


def tv_cvxpy(H, g, mu):
    """``argmin ||H f - g||^2 + mu * sum |f[i+1] - f[i]|`` via cvxpy."""
    import cvxpy as cp
    f = cp.Variable(H.shape[1])
    prob = cp.Problem(cp.Minimize(cp.sum_squares(H @ f - g) + mu * cp.norm1(cp.diff(f))))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(f.value), float(prob.value)
