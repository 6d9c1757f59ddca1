"""Total-variation regularised deconvolution, ``min ||H f - g||^2 + mu * TV(f)``.

Solved by ADMM on the split ``z = D f`` (D = forward difference): the
``f``-step is a linear solve with ``2 H^T H + rho D^T D``, the ``z``-step a
soft threshold, and ``rho`` follows residual balancing.  Many channels are
solved at once as columns of one array; every column carries its own
``rho`` and stopping state so a batch solve matches column-by-column solves.

ADMM finds the jump pattern of ``f`` long before the values settle, so once
the sign pattern of ``z`` stops changing the solver tries a polish: the
least-squares problem restricted to that jump set is solved exactly, a few
primal-dual active-set corrections are applied, and the result is accepted
only if it satisfies the full optimality conditions.  The accepted point and
its multipliers are loaded back into the ADMM state, so the following
iteration (a fixed point) is what certifies convergence.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .core_model import DomainError, SamplingGrid
from .dpp import DeconvKernel
from .simulator import BgsMap, ContractError, GainTrace


@dataclass(frozen=True)
class DeconvConfig:
    mu: float
    max_iters: int = 500
    rel_tolerance: float = 1e-6
    penalty_rho: float = 2.0
    boundary: str = "zero-pad"
    nonneg: bool = False
    balance_every: int = 10
    polish: bool = True
    polish_every: int = 10
    polish_rounds: int = 10
    debug: bool = False

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError("mu must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be > 0")
        if not self.penalty_rho > 0:
            raise ValueError("penalty_rho must be > 0")
        if self.boundary != "zero-pad":
            raise ValueError("only zero-pad boundaries are supported")


@dataclass
class SolveInfo:
    mu: float
    iterations: np.ndarray
    objective: np.ndarray
    rel_change: np.ndarray
    converged: np.ndarray
    history: list = field(default_factory=list)
    state: tuple | None = None

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def column(self, j: int) -> dict:
        return {"iterations": int(self.iterations[j]), "objective": float(self.objective[j]),
                "rel_change": float(self.rel_change[j]), "converged": bool(self.converged[j]),
                "mu": self.mu}


@dataclass
class RecoveredProfile:
    samples: np.ndarray
    grid: SamplingGrid
    diagnostics: dict
    delay_s: float = 0.0

    def positions(self) -> np.ndarray:
        return self.grid.positions(self.delay_s)


def tv_norm(f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape[0] < 2:
        raise DomainError("tv_norm needs at least 2 samples")
    return np.abs(np.diff(f, axis=0)).sum(axis=0)


def apply_operator(kernel: DeconvKernel, f) -> np.ndarray:
    """Zero-padded linear convolution, output aligned with ``f``.

    ``out[k] = sum_m w[m] * f[k - m + origin_index]``; an impulse at ``j``
    reproduces the kernel starting at ``j``.
    """
    f = np.asarray(f, dtype=float)
    k = np.asarray(kernel.samples)
    o = kernel.origin_index
    n = f.shape[0]
    if f.ndim == 1:
        return np.convolve(f, k)[o:o + n]
    return np.stack([np.convolve(col, k)[o:o + n] for col in f.T], axis=1)


def operator_matrix(kernel: DeconvKernel, n: int) -> np.ndarray:
    """Dense ``n x n`` matrix of :func:`apply_operator`."""
    H = np.zeros((n, n))
    for m, w in enumerate(kernel.samples):
        if w == 0:
            continue
        lag = m - kernel.origin_index
        rows = np.arange(max(lag, 0), min(n, n + lag))
        H[rows, rows - lag] += w
    return H


def objective(H, g, f, mu: float):
    r = H @ f - g
    return np.sum(r * r, axis=0) + mu * tv_norm(f)


def _diff_t(v):
    """``D^T v`` for the forward difference ``D: R^n -> R^(n-1)``."""
    out = np.zeros((v.shape[0] + 1,) + v.shape[1:])
    out[:-1] -= v
    out[1:] += v
    return out


def _soft(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


class _Normal:
    """Cached inverses of ``2 H^T H + rho D^T D`` keyed by rho."""

    def __init__(self, H):
        n = H.shape[0]
        self.H = H
        self.HtH2 = 2 * H.T @ H
        DtD = np.zeros((n, n))
        i = np.arange(n)
        DtD[i, i] = 2.0
        DtD[0, 0] = DtD[-1, -1] = 1.0
        DtD[i[:-1], i[:-1] + 1] = -1.0
        DtD[i[:-1] + 1, i[:-1]] = -1.0
        self.DtD = DtD
        self._inv = {}
        self._gram = None

    def gram(self):
        """``(A, A^T A, column norms)`` for ``A = H C``, C the step basis ``C[i, j] = [i >= j]``."""
        if self._gram is None:
            HC = np.cumsum(self.H[:, ::-1], axis=1)[:, ::-1]
            M = HC.T @ HC
            self._gram = (HC, M, np.sqrt(np.diag(M)))
        return self._gram

    def inverse(self, rho: float) -> np.ndarray:
        inv = self._inv.get(rho)
        if inv is None:
            c = scipy.linalg.cho_factor(self.HtH2 + rho * self.DtD)
            inv = scipy.linalg.cho_solve(c, np.eye(self.H.shape[0]))
            inv = (inv + inv.T) / 2
            self._inv[rho] = inv
        return inv


def _polish(system: _Normal, b, z, mu: float, rounds: int):
    """Exact minimiser on the jump set suggested by ``z``, or None.

    Works in the step basis ``f = C d`` (``d[0]`` the level, ``d[j]`` the jump
    ``f[j] - f[j-1]``), where the problem is a lasso with unpenalised
    ``d[0]``.  ``b = (H C)^T g``.  Returns ``(f, lam)`` with ``lam`` the
    multiplier of ``D f`` when the optimality conditions hold.
    """
    _, M, norms = system.gram()
    n = M.shape[0]
    sgn = np.zeros(n)
    sgn[1:] = np.sign(z)
    live = norms > 1e-9 * norms[0]
    for _ in range(rounds):
        S = np.flatnonzero((sgn != 0) & live)
        S = S[S > 0]
        idx = np.concatenate(([0], S))
        s = sgn[S]
        rhs = b[idx] - 0.5 * mu * np.concatenate(([0.0], s))
        try:
            d = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M[np.ix_(idx, idx)]), rhs)
        except (np.linalg.LinAlgError, ValueError):
            return None
        q = 2 * (M[:, idx] @ d - b)  # gradient of the fidelity in the step basis
        wrong = d[1:] * s <= 0
        viol = np.abs(q) > mu * (1 + 1e-9)
        viol[idx] = False
        if not wrong.any() and not viol.any():
            jumps = np.zeros(n)
            jumps[idx] = d
            return np.cumsum(jumps), -q[1:]
        sgn[S[wrong]] = 0.0
        sgn[viol] = -np.sign(q[viol])
    return None


_SYSTEM_CACHE: dict = {}


def _system(kernel: DeconvKernel, n: int) -> _Normal:
    key = (kernel.samples.tobytes(), kernel.origin_index, n)
    sys_ = _SYSTEM_CACHE.get(key)
    if sys_ is None:
        if len(_SYSTEM_CACHE) > 8:
            _SYSTEM_CACHE.clear()
        sys_ = _SYSTEM_CACHE[key] = _Normal(operator_matrix(kernel, n))
    return sys_


def solve_tv(g, kernel: DeconvKernel, cfg: DeconvConfig, init: tuple | None = None,
             record_history: bool = False):
    """Solve every column of ``g`` (shape ``(n,)`` or ``(n, m)``).

    Returns ``(f, info)``.  The reported iterate of each column is the one
    with the lowest objective seen so far, so the objective along reported
    iterates never increases.  ``info.state`` can be passed back as ``init``
    to warm-start a nearby ``mu``.
    """
    g = np.asarray(g, dtype=float)
    squeeze = g.ndim == 1
    G = g[:, None] if squeeze else g
    n, m = G.shape
    if len(kernel.samples) - kernel.origin_index >= n:
        raise ContractError("kernel support must be shorter than the trace")
    system = _system(kernel, n)
    H = system.H
    HtG2 = 2 * H.T @ G
    GtG = np.sum(G * G, axis=0)
    mu = float(cfg.mu)

    if mu == 0:
        # no TV term: plain least squares, minimum-norm where H is rank deficient
        F = scipy.linalg.lstsq(H, G, lapack_driver="gelsd")[0]
        obj = objective(H, G, F, 0.0)
        info = SolveInfo(0.0, np.ones(m, int), obj, np.zeros(m), np.ones(m, bool))
        return (F[:, 0] if squeeze else F), info

    if init is not None:
        F, Z, U, rho = (np.array(a, dtype=float, copy=True) for a in init)
    else:
        F = np.zeros((n, m))
        Z = np.zeros((n - 1, m))
        U = np.zeros((n - 1, m))
        rho = np.full(m, float(cfg.penalty_rho))
    best_F = F.copy()
    best_obj = np.full(m, np.inf)
    iters = np.zeros(m, int)
    rel = np.full(m, np.inf)
    done = np.zeros(m, bool)
    rho_lo, rho_hi = cfg.penalty_rho * 2.0 ** -30, cfg.penalty_rho * 2.0 ** 30
    history = []
    polish = cfg.polish and not cfg.nonneg
    if polish:
        B = system.gram()[0].T @ G
        last_sign = np.sign(Z).astype(np.int8)
        next_polish = np.zeros(m, int)
        fails = np.zeros(m, int)

    for it in range(1, cfg.max_iters + 1):
        cols = np.flatnonzero(~done)
        if cols.size == 0:
            break
        for r in np.unique(rho[cols]):
            c = cols[rho[cols] == r]
            Fo, Zo, Uo = F[:, c], Z[:, c], U[:, c]
            rhs = HtG2[:, c] + r * _diff_t(Zo - Uo)
            Fn = system.inverse(r) @ rhs
            if cfg.nonneg:
                np.maximum(Fn, 0.0, out=Fn)
                fid = np.sum((H @ Fn - G[:, c]) ** 2, axis=0)
            else:
                # 2 H^T H f = rhs - rho D^T D f on the exact solve
                HtHf2 = rhs - r * (system.DtD @ Fn)
                fid = np.sum(Fn * HtHf2, axis=0) / 2 - np.sum(Fn * HtG2[:, c], axis=0) + GtG[c]
                fid = np.maximum(fid, 0.0)
            DF = np.diff(Fn, axis=0)
            Zn = _soft(DF + Uo, mu / r)
            Un = Uo + DF - Zn
            obj = fid + mu * np.abs(DF).sum(axis=0)

            better = obj < best_obj[c]
            if np.any(better):
                bc = c[better]
                best_F[:, bc] = Fn[:, better]
                best_obj[bc] = obj[better]

            fn_norm = np.sqrt(np.sum(Fn * Fn, axis=0))
            step = np.sqrt(np.sum((Fn - Fo) ** 2, axis=0)) / np.maximum(fn_norm, 1e-300)
            r_prim = np.sqrt(np.sum((DF - Zn) ** 2, axis=0))
            scale = np.maximum(np.sqrt(np.sum(DF * DF, axis=0)), np.sqrt(np.sum(Zn * Zn, axis=0)))
            prim_rel = r_prim / np.maximum(scale, 1e-300)
            prim_rel = np.where(scale > 1e-12 * np.maximum(fn_norm, 1e-300), prim_rel, 0.0)

            F[:, c], Z[:, c], U[:, c] = Fn, Zn, Un
            iters[c] = it
            rel[c] = np.maximum(step, prim_rel)
            done[c] = rel[c] < cfg.rel_tolerance

            if cfg.balance_every and it % cfg.balance_every == 0:
                r_dual = r * np.sqrt(np.sum(_diff_t(Zn - Zo) ** 2, axis=0))
                up = (r_prim > 10 * r_dual) & (r * 2 <= rho_hi) & ~done[c]
                down = (r_dual > 10 * r_prim) & (r / 2 >= rho_lo) & ~done[c]
                rho[c[up]] *= 2
                U[:, c[up]] /= 2
                rho[c[down]] /= 2
                U[:, c[down]] *= 2

        if polish and it % cfg.polish_every == 0:
            cols = np.flatnonzero(~done)
            sign_now = np.sign(Z[:, cols]).astype(np.int8)
            stable = np.all(sign_now == last_sign[:, cols], axis=0)
            last_sign[:, cols] = sign_now
            for j in cols[stable & (it >= next_polish[cols])]:
                got = _polish(system, B[:, j], Z[:, j], mu, cfg.polish_rounds)
                if got is None:
                    # back off: failed attempts get exponentially rarer
                    fails[j] += 1
                    next_polish[j] = it + cfg.polish_every * 2 ** min(fails[j], 8)
                    continue
                f, lam = got
                F[:, j] = f
                Z[:, j] = np.diff(f)
                U[:, j] = lam / rho[j]
        if record_history:
            history.append(best_obj.copy())
            if cfg.debug and len(history) > 1:
                prev = history[-2]
                ok = np.isinf(prev) | (history[-1] <= prev * (1 + 1e-9) + 1e-300)
                assert np.all(ok), "objective increased between outer iterates"

    info = SolveInfo(mu, iters, best_obj, rel, done, history, (F, Z, U, rho))
    out = best_F
    return (out[:, 0] if squeeze else out), info


def tv_deconvolve(g, kernel: DeconvKernel, cfg: DeconvConfig, init=None):
    """Deconvolve a :class:`GainTrace` (-> :class:`RecoveredProfile`) or a
    :class:`BgsMap` (-> recovered :class:`BgsMap`, one shared kernel).

    Non-convergence is reported in the diagnostics, never raised.
    """
    if isinstance(g, GainTrace):
        _check_kernel(kernel, g.grid, g.pulse)
        f, info = solve_tv(g.samples, kernel, cfg, init)
        return RecoveredProfile(f, g.grid, info.column(0), delay_s=g.grid.dt_s / 2)
    if isinstance(g, BgsMap):
        _check_kernel(kernel, g.grid, g.pulse)
        f, info = solve_tv(g.data.T, kernel, cfg, init)
        out = replace(g, data=np.ascontiguousarray(f.T), recovered=True, delay_s=g.grid.dt_s / 2,
                      meta=dict(g.meta))
        out.meta["deconv"] = {
            "mu": cfg.mu, "iterations_max": int(info.iterations.max()),
            "converged": info.all_converged,
            "nonconverged_channels": [int(i) for i in np.flatnonzero(~info.converged)],
            "max_rel_change": float(np.max(info.rel_change)),
        }
        return out
    f, info = solve_tv(np.asarray(g, dtype=float), kernel, cfg, init)
    return f, info


def _check_kernel(kernel: DeconvKernel, grid: SamplingGrid, pulse):
    if not np.isclose(kernel.dt_s, grid.dt_s, rtol=1e-9, atol=0.0):
        raise ContractError(f"kernel dt {kernel.dt_s} s does not match trace dt {grid.dt_s} s")
    if kernel.pulse is not None and pulse is not None and kernel.pulse != pulse:
        raise ContractError(
            f"kernel built for {kernel.pulse.label()} but the data were taken with {pulse.label()}")
