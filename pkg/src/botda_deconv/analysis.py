"""BFS extraction by Lorentzian fitting and the accuracy / SNR metrics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core_model import DomainError, FiberProfile
from .simulator import SNR_CONVENTIONS, BgsMap, GainTrace

MAX_FIT_ITERS = 200


@dataclass
class LorentzFit:
    """Fit results; arrays have one entry per fitted spectrum."""

    bfs_hz: np.ndarray
    fwhm_hz: np.ndarray
    peak_gain: np.ndarray
    residual_rms: np.ndarray
    ok: np.ndarray
    iterations: np.ndarray

    def __getitem__(self, i):
        return {"bfs_hz": float(self.bfs_hz[i]), "fwhm_hz": float(self.fwhm_hz[i]),
                "peak_gain": float(self.peak_gain[i]), "residual": float(self.residual_rms[i]),
                "ok": bool(self.ok[i])}


def lorentzian(freqs, peak, center, fwhm):
    x = (np.asarray(freqs) - center) / (fwhm / 2)
    return peak / (1 + x * x)


def _initial_guess(x, y):
    """Peak from the max sample, width from the half-height crossings (per column)."""
    m = y.shape[1]
    imax = np.argmax(y, axis=0)
    cols = np.arange(m)
    peak = y[imax, cols]
    half = peak / 2
    left = np.full(m, np.nan)
    right = np.full(m, np.nan)
    for j in range(m):
        i0, yj, h = imax[j], y[:, j], half[j]
        if not h > 0:
            continue
        below = np.flatnonzero(yj[:i0] < h)
        if below.size:
            a = below[-1]
            left[j] = x[a] + (h - yj[a]) * (x[a + 1] - x[a]) / (yj[a + 1] - yj[a])
        below = np.flatnonzero(yj[i0:] < h)
        if below.size:
            b = i0 + below[0]
            right[j] = x[b - 1] + (h - yj[b - 1]) * (x[b] - x[b - 1]) / (yj[b] - yj[b - 1])
    center = x[imax]
    fwhm = right - left
    fwhm = np.where(np.isnan(left) & ~np.isnan(right), 2 * (right - center), fwhm)
    fwhm = np.where(np.isnan(right) & ~np.isnan(left), 2 * (center - left), fwhm)
    found = ~np.isnan(fwhm) & (fwhm > 0) & (peak > 0)
    return peak, center, np.where(found, fwhm, 1.0), found


def fit_lorentzian(freqs_hz, gains) -> LorentzFit:
    """Least-squares Lorentzian ``g_p / (1 + ((nu - nu_B) / (fwhm / 2))^2)``.

    ``gains`` is ``(n_freqs,)`` or ``(n_freqs, n_spectra)``.  Damped
    Gauss-Newton (Levenberg-Marquardt) with the analytic Jacobian, all
    spectra advanced together.  Spectra that are too narrow, never cross
    half height, or diverge come back with ``ok = False`` and NaN parameters.
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    y = np.asarray(gains, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[:, None]
    nf, m = y.shape
    # work in MHz around the sweep centre for conditioning
    f0 = freqs.mean()
    x = (freqs - f0) / 1e6
    span = x[-1] - x[0]

    peak, center, width, ok = _initial_guess(x, y)
    ok &= nf >= 7
    ok &= np.all(np.isfinite(y), axis=0)
    ok &= width <= 4 * span
    p = np.stack([peak, center, width], axis=1)
    p[~ok] = [1.0, 0.0, 1.0]

    def model_jac(p):
        a, c, w = p[:, 0], p[:, 1], p[:, 2]
        xx = (x[:, None] - c) / (w / 2)
        L = 1 / (1 + xx * xx)
        g = a * L
        J = np.stack([L, 4 * a * xx * L * L / w, 2 * a * xx * xx * L * L / w], axis=2)
        return g, J  # (nf, m), (nf, m, 3)

    g, J = model_jac(p)
    r = y - g
    cost = np.sum(r * r, axis=0)
    lam = np.full(m, 1e-3)
    active = ok.copy()
    iters = np.zeros(m, int)
    for it in range(MAX_FIT_ITERS):
        if not active.any():
            break
        a = np.flatnonzero(active)
        Ja, ra = J[:, a], r[:, a]
        JtJ = np.einsum("fmi,fmj->mij", Ja, Ja)
        Jtr = np.einsum("fmi,fm->mi", Ja, ra)
        diag = np.einsum("mii->mi", JtJ)
        A = JtJ + lam[a, None, None] * np.einsum("mi,ij->mij", np.maximum(diag, 1e-12), np.eye(3))
        try:
            step = np.linalg.solve(A, Jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(Ai, bi, rcond=None)[0] for Ai, bi in zip(A, Jtr)])
        trial = p[a] + step
        trial[:, 2] = np.abs(trial[:, 2])
        gt, Jt = model_jac(trial)
        rt = y[:, a] - gt
        ct = np.sum(rt * rt, axis=0)
        accept = ct <= cost[a]
        ac = a[accept]
        rel_step = np.max(np.abs(step) / np.maximum(np.abs(p[a]), 1e-3), axis=1)
        p[ac] = trial[accept]
        g[:, ac], J[:, ac], r[:, ac] = gt[:, accept], Jt[:, accept], rt[:, accept]
        small_gain = (cost[a] - ct) <= 1e-14 * np.maximum(cost[a], 1e-300)
        cost[ac] = ct[accept]
        lam[ac] = np.maximum(lam[ac] / 3, 1e-12)
        lam[a[~accept]] *= 4
        iters[a] = it + 1
        finished = (accept & ((rel_step < 1e-10) | small_gain)) | (lam[a] > 1e12)
        active[a[finished]] = False

    bfs = f0 + p[:, 1] * 1e6
    fwhm = p[:, 2] * 1e6
    res = np.sqrt(cost / nf)
    good = ok & np.all(np.isfinite(p), axis=1) & (p[:, 0] > 0) & (p[:, 2] > 0)
    good &= (p[:, 1] >= x[0]) & (p[:, 1] <= x[-1]) & (p[:, 2] < 4 * span)
    nan = np.where(good, 1.0, np.nan)
    out = LorentzFit(bfs * nan, fwhm * nan, p[:, 0] * nan, res, good, iters)
    if single:
        return LorentzFit(*(np.atleast_1d(v) for v in
                            (out.bfs_hz, out.fwhm_hz, out.peak_gain, out.residual_rms, out.ok,
                             out.iterations)))
    return out


@dataclass
class BfsProfile:
    position_m: np.ndarray
    bfs_hz: np.ndarray
    peak_gain: np.ndarray
    fwhm_hz: np.ndarray
    fit_residual_rms: np.ndarray
    ok: np.ndarray

    def __len__(self):
        return len(self.position_m)

    def failures(self) -> np.ndarray:
        return self.position_m[~self.ok]

    def select(self, lo_m: float, hi_m: float) -> "BfsProfile":
        k = (self.position_m >= lo_m) & (self.position_m < hi_m)
        return BfsProfile(*(getattr(self, f)[k] for f in
                            ("position_m", "bfs_hz", "peak_gain", "fwhm_hz", "fit_residual_rms", "ok")))

    @classmethod
    def mean(cls, profiles: list["BfsProfile"]) -> "BfsProfile":
        """Average over realizations, in list order (failed fits are ignored)."""
        pos = profiles[0].position_m
        stack = np.stack([p.bfs_hz for p in profiles])
        ok = np.stack([p.ok for p in profiles])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns stay NaN
            avg = lambda a: np.nanmean(np.where(ok, a, np.nan), axis=0)  # noqa: E731
            return cls(pos.copy(), avg(stack), avg(np.stack([p.peak_gain for p in profiles])),
                       avg(np.stack([p.fwhm_hz for p in profiles])),
                       avg(np.stack([p.fit_residual_rms for p in profiles])), ok.any(axis=0))


def bfs_profile(bgs: BgsMap, region: tuple[float, float] | None = None,
                indices=None) -> BfsProfile:
    """Fit every position sample of ``bgs`` (or those in ``region`` / ``indices``)."""
    pos = bgs.positions()
    if indices is None:
        if region is None:
            indices = np.arange(len(pos))
        else:
            indices = np.flatnonzero((pos >= region[0]) & (pos < region[1]))
    indices = np.asarray(indices, dtype=int)
    fit = fit_lorentzian(bgs.freqs, bgs.data[:, indices])
    return BfsProfile(pos[indices], fit.bfs_hz, fit.peak_gain, fit.fwhm_hz, fit.residual_rms, fit.ok)


def _db(ratio, convention):
    with np.errstate(divide="ignore"):
        return SNR_CONVENTIONS[convention] * np.log10(ratio)


def moving_average(x, length: int) -> np.ndarray:
    """Centred moving average with edge samples averaged over the available window."""
    x = np.asarray(x, dtype=float)
    k = np.ones(length)
    num = np.convolve(x, k, mode="same")
    den = np.convolve(np.ones_like(x), k, mode="same")
    return num / den


def snr_time_trace(trace, section: tuple[int, int], reference=None, kernel_length: int = 20,
                   amplitude: float | None = None, convention: str = "amplitude") -> float:
    """SNR of a time-domain trace over the sample range ``section = (i0, i1)``.

    With a noiseless ``reference`` (oracle mode) the noise is
    ``trace - reference`` and the amplitude the mean reference level.
    Without one (blind mode) the noise is the residual after a moving average
    over ``kernel_length`` samples, rescaled by ``1/sqrt(1 - 1/L)`` to undo
    the high-pass attenuation of white noise, and the amplitude is the mean
    trace level.  Returns ``inf`` for a noiseless trace in oracle mode.
    """
    x = trace.samples if isinstance(trace, GainTrace) else np.asarray(trace, dtype=float)
    i0, i1 = section
    if i1 - i0 < 3 * kernel_length:
        raise DomainError(f"reference section of {i1 - i0} samples is shorter than 3 kernel lengths")
    if reference is not None:
        ref = reference.samples if isinstance(reference, GainTrace) else np.asarray(reference)
        noise = x[..., i0:i1] - ref[..., i0:i1]
        amp = float(np.mean(ref[..., i0:i1])) if amplitude is None else amplitude
        sigma = float(np.std(noise))
    else:
        seg = x[i0:i1]
        res = seg - moving_average(seg, kernel_length)
        trim = kernel_length // 2
        res = res[trim:len(res) - trim]
        sigma = float(np.std(res) / np.sqrt(1 - 1 / kernel_length))
        amp = float(np.mean(seg)) if amplitude is None else amplitude
    if sigma == 0:
        return float("inf")
    return float(_db(amp / sigma, convention))


def hotspot_samples(positions, truth: FiberProfile, hotspot_id: int) -> np.ndarray:
    h = truth.hotspots[hotspot_id]
    return np.flatnonzero((positions >= h.start_m) & (positions < h.end_m))


def central_third(positions, truth: FiberProfile, hotspot_id: int) -> np.ndarray:
    """Indices of samples in the central third of a hotspot (nearest one if none)."""
    h = truth.hotspots[hotspot_id]
    inside = hotspot_samples(positions, truth, hotspot_id)
    if inside.size < 3:
        raise DomainError(f"hotspot {hotspot_id} ({h.length_m} m) spans fewer than 3 samples")
    lo, hi = h.start_m + h.length_m / 3, h.start_m + 2 * h.length_m / 3
    idx = np.flatnonzero((positions >= lo) & (positions <= hi))
    if idx.size == 0:
        idx = np.array([inside[np.argmin(np.abs(positions[inside] - (h.start_m + h.end_m) / 2))]])
    return idx


def bfs_degradation(recovered: BfsProfile, truth: FiberProfile, hotspot_id: int) -> float:
    """Truth BFS minus the mean recovered BFS over the hotspot's central third (Hz).

    Positive means under-recovery.  ``recovered`` should be the average over
    noise realizations.
    """
    idx = central_third(recovered.position_m, truth, hotspot_id)
    return float(truth.hotspots[hotspot_id].bfs_hz - np.nanmean(recovered.bfs_hz[idx]))


def max_systematic_error(recovered: BfsProfile, truth: FiberProfile, region) -> float:
    """``max |recovered - truth|`` over ``region``: one ``(lo, hi)`` pair or a list of them."""
    regions = [region] if np.isscalar(region[0]) else list(region)
    pos = recovered.position_m
    mask = np.zeros(len(pos), bool)
    for lo, hi in regions:
        mask |= (pos >= lo) & (pos < hi)
    if not mask.any():
        raise DomainError("region contains no profile samples")
    err = np.abs(recovered.bfs_hz[mask] - truth.bfs_at(pos[mask]))
    if np.any(~np.isfinite(err)):
        return float("inf")
    return float(err.max())


def pre_hotspot_regions(truth: FiberProfile, length_m: float = 5.0) -> list[tuple[float, float]]:
    return [(max(0.0, h.start_m - length_m), h.start_m) for h in truth.hotspots]


@dataclass
class MetricsReport:
    snr_db: dict = field(default_factory=dict)  # {"oracle": .., "blind": ..}
    snr_convention: str = "amplitude"
    max_systematic_error_hz: float | None = None
    hotspot_degradations: list = field(default_factory=list)
    fit_failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "snr_convention": f"{self.snr_convention} ({SNR_CONVENTIONS[self.snr_convention]:g} log10)",
            "max_systematic_error_hz": self.max_systematic_error_hz,
            "hotspot_degradations": self.hotspot_degradations,
            "fit_failures": self.fit_failures,
        }
