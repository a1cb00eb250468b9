"""
Spectral analysis of scattering traces: spectrograms, beat ridges, whole-waist
peaks, mode-pair identification and inversion of beat frequency to radius.

Frequencies are spatial (cycles per metre) internally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq, minimize_scalar

from . import modes as M
from .errors import (
    AmbiguousPairError,
    BelowCutoffError,
    BracketError,
    DomainError,
    InversionError,
    NoBeatDetectedError,
)
from .modes import FiberSpec, ModeId
from .propagation import beta_table

BOXCAR_FWHM = 0.885892941378904  # power FWHM x length of a rectangular window
MIN_WINDOW_SAMPLES = 16
DEFAULT_SNR = 5.0
RESIDUAL_FLOOR = 1e-4  # relative to the ridge level
DC_FLOOR = 1e-9  # beat amplitude below this fraction of the mean is silence

CANDIDATE_PAIRS = (
    (M.HE21e, M.TM01),
    (M.HE21o, M.TE01),
    (M.TE01, M.TM01),
    (M.HE11e, M.TM01),
    (M.HE11e, M.TE01),
    (M.HE11e, M.HE21e),
)


def pair_name(pair) -> str:
    return f"{pair[0]}:{pair[1]}"


def parse_pair(text: str):
    parts = [p for p in text.replace(",", ":").split(":") if p]
    if len(parts) != 2:
        raise DomainError(f"pair must look like HE21e:TM01, got {text!r}")
    return ModeId.parse(parts[0]), ModeId.parse(parts[1])


# ---------------------------------------------------------------------------
# beat frequencies


def pair_beat_frequency(fiber: FiberSpec, pair, a: float) -> float:
    """Inverse beat length ``|n_eff,1 - n_eff,2| / lambda`` from direct solves."""
    n1 = M.solve_neff(fiber, a, pair[0])
    n2 = M.solve_neff(fiber, a, pair[1])
    return abs(n1 - n2) / fiber.wavelength


def _beat_tab(fiber, pair, a):
    """Tabulated beat frequency; NaN where either mode is cut off."""
    t1 = beta_table(fiber, pair[0])
    t2 = beta_table(fiber, pair[1])
    return np.abs(t1.n_eff(a) - t2.n_eff(a)) / fiber.wavelength


def pair_cutoff(fiber, pair) -> float:
    """Largest cutoff radius of the two modes (0 for HE11 only)."""
    return max(beta_table(fiber, m).a_cut for m in pair)


def _pair_floor(fiber, pair) -> float:
    return max(beta_table(fiber, m).a_lo for m in pair)


@dataclass
class BeatCurve:
    z: np.ndarray
    a: np.ndarray
    freq: np.ndarray  # NaN where truncated
    cutoff_z: list  # z coordinates where a mode of the pair is lost

    @property
    def truncated(self) -> bool:
        return bool(np.any(np.isnan(self.freq)))


def beat_curve(fiber: FiberSpec, pair, profile, n: int = 2001, z_range=None) -> BeatCurve:
    z0, z1 = (0.0, profile.length) if z_range is None else z_range
    z = np.linspace(z0, z1, n)
    a = profile.radius_at(z)
    freq = _beat_tab(fiber, pair, a)
    a_c = pair_cutoff(fiber, pair)
    cut = []
    if a_c > 0 and profile.a_min <= a_c:
        lost = np.nonzero(a <= a_c)[0]
        if lost.size:
            # the mode stays lost past the first crossing
            first = lost[0]
            freq[first:] = np.nan
            for side in ("input", "output"):
                try:
                    cut.append(profile.find_z_for_radius(a_c, side))
                except DomainError:
                    pass
    return BeatCurve(z, a, freq, cut)


# ---------------------------------------------------------------------------
# spectrogram and ridge


@dataclass
class Spectrogram:
    window_length: float
    hop: float
    z_centers: np.ndarray
    freqs: np.ndarray
    magnitude: np.ndarray  # (len(freqs), len(z_centers))
    window_samples: int
    nfft: int

    @property
    def resolution(self) -> float:
        return 1.0 / self.window_length

    def column_energy(self) -> np.ndarray:
        """Energy of each column by Parseval (full two-sided spectrum / nfft)."""
        m2 = self.magnitude**2
        e = 2.0 * np.sum(m2, axis=0) - m2[0]
        if self.nfft % 2 == 0:
            e = e - m2[-1]
        return e / self.nfft


def _windowed_segments(x, nwin, step):
    seg = sliding_window_view(x, nwin)[::step]
    seg = seg - seg.mean(axis=1, keepdims=True)
    return seg * np.hanning(nwin)[None, :]


def spectrogram(trace, window_length: float = 0.5e-3, hop: float | None = None, channel: str = "transverse",
                pad: int = 4) -> Spectrogram:
    """Short-window spectra: mean-subtract, Hann taper, zero-pad, |DFT|."""
    x = np.asarray(trace.channel(channel), dtype=float)
    dz = trace.dz
    nwin = int(round(window_length / dz))
    if nwin < MIN_WINDOW_SAMPLES:
        raise DomainError(f"window must span at least {MIN_WINDOW_SAMPLES} samples")
    if nwin > x.size:
        raise DomainError("window longer than trace")
    hop = window_length / 4 if hop is None else hop
    step = max(1, int(round(hop / dz)))
    seg = _windowed_segments(x, nwin, step)
    nfft = pad * nwin
    mag = np.abs(np.fft.rfft(seg, n=nfft, axis=1)).T
    freqs = np.fft.rfftfreq(nfft, dz)
    starts = np.arange(seg.shape[0]) * step
    zc = trace.z[0] + (starts + 0.5 * (nwin - 1)) * dz
    return Spectrogram(nwin * dz, step * dz, zc, freqs, mag, nwin, nfft)


def _parabolic(y, i):
    """Vertex offset (in bins) and height of the parabola through y[i-1:i+2]."""
    if i <= 0 or i >= len(y) - 1:
        return 0.0, y[i]
    a, b, c = y[i - 1], y[i], y[i + 1]
    den = a - 2 * b + c
    if den == 0:
        return 0.0, b
    d = 0.5 * (a - c) / den
    return d, b - 0.25 * (a - c) * d


def extract_ridge(spec: Spectrogram, snr_min: float = DEFAULT_SNR, f_min: float | None = None, smooth: int = 5):
    """Dominant frequency per column (NaN where SNR < snr_min), median-smoothed."""
    f_min = 2.0 / spec.window_length if f_min is None else f_min
    sel = spec.freqs >= f_min
    mag = spec.magnitude[sel]
    freqs = spec.freqs[sel]
    df = spec.freqs[1] - spec.freqs[0]
    out = np.full(mag.shape[1], np.nan)
    med = np.median(spec.magnitude, axis=0)
    for j in range(mag.shape[1]):
        col = mag[:, j]
        i = int(np.argmax(col))
        if med[j] > 0:
            snr = col[i] / med[j]
        else:
            snr = np.inf if col[i] > 0 else 0.0
        if snr >= snr_min:
            d, _ = _parabolic(col, i)
            out[j] = freqs[i] + d * df
    if smooth > 1:
        out = _nan_median_filter(out, smooth)
    return out


def _nan_median_filter(x, size):
    half = size // 2
    pad = np.concatenate([np.full(half, np.nan), x, np.full(half, np.nan)])
    win = sliding_window_view(pad, size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(win, axis=1)
    return np.where(np.isnan(x), np.nan, med)


# ---------------------------------------------------------------------------
# whole-waist peaks


@dataclass
class BeatPeak:
    center: float
    fwhm: float
    snr: float
    center_uncertainty: float = 0.0
    transform_limit: float = 0.0
    span: float = 0.0

    def to_dict(self) -> dict:
        return {
            "center_per_mm": self.center * 1e-3,
            "fwhm_per_mm": self.fwhm * 1e-3,
            "snr": self.snr,
            "center_uncertainty_per_mm": self.center_uncertainty * 1e-3,
            "transform_limit_per_mm": self.transform_limit * 1e-3,
        }


def waist_spectrum(trace, waist_span, channel: str = "transverse", pad: int = 16, window: str = "hann"):
    """Single long-window magnitude spectrum over the waist."""
    sec = trace.section(*waist_span)
    x = np.asarray(sec.channel(channel), dtype=float)
    x = x - x.mean()
    w = np.hanning(x.size) if window == "hann" else np.ones(x.size)
    nfft = pad * x.size
    return np.fft.rfftfreq(nfft, sec.dz), np.abs(np.fft.rfft(x * w, n=nfft)), sec


def waist_peaks(trace, waist_span, channel: str = "transverse", snr_min: float = DEFAULT_SNR,
                rel_min: float = 0.05, f_min: float | None = None) -> list[BeatPeak]:
    """All beat peaks of the waist section, strongest first.

    Detection uses a Hann-windowed periodogram (SNR = peak / median
    magnitude).  Centre and FWHM are measured on the unwindowed power
    spectrum, whose transform limit is ``0.886 / length``.
    """
    if waist_span[1] - waist_span[0] < 1e-3 - 1e-12:
        raise DomainError("waist span must be at least 1 mm")
    freqs, mag, sec = waist_spectrum(trace, waist_span, channel)
    length = sec.z[-1] - sec.z[0] + sec.dz
    f_min = 2.0 / length if f_min is None else f_min
    med = float(np.median(mag))
    df = freqs[1] - freqs[0]
    top = float(np.max(mag[freqs >= f_min])) if np.any(freqs >= f_min) else 0.0
    if top <= 0:
        raise NoBeatDetectedError("waist trace has no modulation")
    # local maxima above both thresholds
    cand = np.nonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
    cand = cand[freqs[cand] >= f_min]
    snr_all = mag[cand] / med if med > 0 else np.full(cand.size, np.inf)
    # sinusoid amplitude from a Hann periodogram is 2 |X| / sum(w)
    dc = abs(float(np.mean(sec.channel(channel))))
    amp = 2.0 * mag[cand] / np.sum(np.hanning(sec.z.size))
    keep = (snr_all >= snr_min) & (mag[cand] >= rel_min * top) & (amp > DC_FLOOR * dc)
    cand = cand[keep]
    cand = cand[np.argsort(-mag[cand])]
    # separation: ignore maxima within 4 transform widths of a stronger one
    sep = 4.0 * BOXCAR_FWHM / length
    chosen = []
    for i in cand:
        if all(abs(freqs[i] - freqs[j]) > sep for j in chosen):
            chosen.append(i)
    if not chosen:
        raise NoBeatDetectedError(f"no peak above SNR {snr_min:g}")
    x = np.asarray(sec.channel(channel), dtype=float)
    x = x - x.mean()
    tl = BOXCAR_FWHM / length
    peaks = []
    for i in chosen:
        d, _ = _parabolic(mag, i)
        f_guess = freqs[i] + d * df
        center, fwhm = _measure_peak(x, sec.dz, f_guess, tl)
        snr = float(mag[i] / med) if med > 0 else float("inf")
        unc = fwhm / (2.0 * snr) if np.isfinite(snr) else 0.0
        peaks.append(BeatPeak(center, fwhm, snr, unc, tl, length))
    return peaks


def _dtft(x, dz, f):
    n = np.arange(x.size)
    return np.exp(-2j * np.pi * np.outer(np.atleast_1d(f), n) * dz) @ x


def _kernel(n, dz, f):
    """DTFT of n unit samples (Dirichlet kernel, unnormalized)."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    t = np.pi * f * dz
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = np.sin(n * t) / np.sin(t)
    mag = np.where(np.abs(np.sin(t)) < 1e-15, float(n), mag)
    return mag * np.exp(-1j * t * (n - 1))


def _measure_peak(x, dz, f_guess, tl):
    """Centre and FWHM of the unwindowed power spectrum near ``f_guess``.

    The mirror image of the component at ``-f`` is removed first; left in,
    it shifts the half-power points of a waist-long peak by ~1/(2 pi f L).
    """
    n = x.size

    def positive(f0):
        # complex amplitude c of c e^{+i2pi f0 z} + conj(c) e^{-i2pi f0 z}
        X0 = _dtft(x, dz, f0)[0]
        K2 = _kernel(n, dz, 2 * f0)[0]
        c = (X0 * n - np.conj(X0) * K2) / (n * n - abs(K2) ** 2)
        return lambda f: np.abs(_dtft(x, dz, f) - np.conj(c) * _kernel(n, dz, np.asarray(f) + f0)) ** 2

    spec = positive(f_guess)
    p = lambda f: float(spec(f)[0])
    # refine centre on a fine local grid, then parabolic vertex
    grid = f_guess + np.linspace(-1.5, 1.5, 121) * tl
    grid = grid[grid > 0]
    vals = spec(grid)
    i = int(np.argmax(vals))
    d, _ = _parabolic(vals, i)
    center = grid[i] + d * (grid[1] - grid[0])
    res = minimize_scalar(lambda f: -p(f), bracket=(grid[max(i - 1, 0)], center, grid[min(i + 1, grid.size - 1)]),
                          tol=1e-10) if 0 < i < grid.size - 1 else None
    if res is not None and res.success and abs(res.x - center) < tl:
        center = float(res.x)
    spec = positive(center)
    pk = p(center)
    half = 0.5 * pk
    g = lambda f: p(f) - half

    def crossing(direction):
        # outermost half-maximum crossing: dips below half that recover within
        # two transform widths (Fresnel ripple of a chirped waist) are spanned
        step = 0.05 * tl
        gap = int(round(2.0 / 0.05))
        last_above, below = center, 0
        for k in range(1, 8000):
            f1 = center + direction * k * step
            if f1 <= 0:
                return 0.0
            if g(f1) >= 0:
                last_above, below = f1, 0
            else:
                below += 1
                if below > gap:
                    f_out = last_above + direction * step
                    return brentq(g, min(last_above, f_out), max(last_above, f_out), xtol=1e-9 * tl)
        raise NoBeatDetectedError("peak has no half-maximum crossing")

    lo, hi = crossing(-1), crossing(+1)
    return float(center), float(hi - lo)


def waist_peak(trace, waist_span, channel: str = "transverse", snr_min: float = DEFAULT_SNR) -> BeatPeak:
    return waist_peaks(trace, waist_span, channel, snr_min)[0]


# ---------------------------------------------------------------------------
# inversion


@dataclass
class RadiusEstimate:
    a_w: float
    sigma_index: float
    sigma_stat: float
    uniformity_bound: float
    uniformity_raw: float
    mode_pair: tuple
    slope: float = 0.0  # d(1/z_b)/da, 1/m^2

    def to_dict(self) -> dict:
        return {
            "aw_nm": self.a_w * 1e9,
            "sigma_index_nm": self.sigma_index * 1e9,
            "sigma_stat_nm": self.sigma_stat * 1e9,
            "uniformity_nm": self.uniformity_bound * 1e9,
            "uniformity_raw_nm": self.uniformity_raw * 1e9,
            "pair": [str(m) for m in self.mode_pair],
        }


def default_search_range(fiber, pair, a_max: float = 1e-6):
    """From just above the pair cutoff to the first zero of the beat curve
    (the n_eff crossing) or ``a_max``."""
    lo = _pair_floor(fiber, pair) * (1 + 1e-6)
    if M.cutoff_v(fiber, pair[0]) == 0 and M.cutoff_v(fiber, pair[1]) == 0:
        lo = max(lo, 100e-9)
    a = np.geomspace(lo, a_max, 4000)
    f = np.asarray(_signed_beat(fiber, pair, a))
    s = np.sign(f)
    flip = np.nonzero(s[:-1] * s[1:] < 0)[0]
    hi = a_max
    if flip.size:
        i = flip[0]
        hi = brentq(lambda x: float(_signed_beat(fiber, pair, x)), a[i], a[i + 1], xtol=1e-15)
    return lo, hi


def _signed_beat(fiber, pair, a):
    t1 = beta_table(fiber, pair[0])
    t2 = beta_table(fiber, pair[1])
    return (t1.n_eff(a) - t2.n_eff(a)) / fiber.wavelength


def _solutions(fiber, pair, target, lo, hi, n=4000):
    """All radii in [lo, hi] where the tabulated beat equals ``target``,
    each with the monotonic segment that contains it."""
    a = np.linspace(lo, hi, n)
    f = _beat_tab(fiber, pair, a)
    g = f - target
    out = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]:
        if g[i] == 0 and i > 0 and g[i - 1] * g[i + 1] > 0:
            continue
        out.append(_bisect(lambda x: float(_beat_tab(fiber, pair, x)) - target, a[i], a[i + 1]))
    return sorted(set(out))


def _bisect(fn, lo, hi, tol=0.01e-9):
    flo = fn(lo)
    if flo == 0:
        return lo
    for _ in range(200):
        if hi - lo <= tol * 1e-3:
            break
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def beat_slope(fiber, pair, a, step: float = 0.1e-9) -> float:
    """Central difference d(1/z_b)/da."""
    return float((_beat_tab(fiber, pair, a + step) - _beat_tab(fiber, pair, a - step)) / (2 * step))


def solve_radius(fiber, pair, target, a_range=None, a_guess=None) -> float:
    lo, hi = default_search_range(fiber, pair) if a_range is None else a_range
    sols = _solutions(fiber, pair, target, lo, hi)
    if not sols:
        grid = _beat_tab(fiber, pair, np.linspace(lo, hi, 400))
        raise InversionError(
            f"{target * 1e-3:.3f} /mm outside {pair_name(pair)} range "
            f"[{np.nanmin(grid) * 1e-3:.3f}, {np.nanmax(grid) * 1e-3:.3f}] /mm for a in "
            f"[{lo * 1e9:.1f}, {hi * 1e9:.1f}] nm"
        )
    if len(sols) == 1:
        return sols[0]
    if a_guess is None:
        raise BracketError(
            f"{target * 1e-3:.3f} /mm is reached by {pair_name(pair)} at "
            + ", ".join(f"{s * 1e9:.2f}" for s in sols)
            + " nm; supply a radius guess or a narrower range"
        )
    return min(sols, key=lambda s: abs(s - a_guess))


def invert_radius(peak: BeatPeak, pair, fiber: FiberSpec, delta_n: float = 0.005,
                  a_range=None, a_guess=None) -> RadiusEstimate:
    """Waist radius from a beat peak, with index, statistical and
    uniformity uncertainties."""
    if delta_n < 0:
        raise DomainError("delta_n must be non-negative")
    a_w = solve_radius(fiber, pair, peak.center, a_range, a_guess)
    slope = beat_slope(fiber, pair, a_w)
    if slope == 0:
        raise BracketError("beat curve is flat at the solution")
    s_abs = abs(slope)
    sigma_index = 0.0
    if delta_n > 0:
        for sgn in (-1, 1):
            pert = fiber.with_index(fiber.n_core + sgn * delta_n)
            try:
                lo, hi = default_search_range(pert, pair)
                a_p = solve_radius(pert, pair, peak.center, (lo, hi), a_guess=a_w)
            except InversionError:
                continue
            sigma_index = max(sigma_index, abs(a_p - a_w))
    sigma_stat = peak.center_uncertainty / s_abs
    tl = peak.transform_limit
    unif = math.sqrt(max(0.0, peak.fwhm**2 - tl**2)) / s_abs
    return RadiusEstimate(a_w, sigma_index, sigma_stat, unif, peak.fwhm / s_abs, tuple(pair), slope)


# ---------------------------------------------------------------------------
# pair identification


@dataclass
class PairFit:
    pair: tuple
    a_w: float
    residual: float


@dataclass
class Identification:
    pair: tuple
    a_w: float
    residual: float
    fits: list = field(default_factory=list)
    floor: float = 0.0  # residuals this small count as exact fits

    @property
    def ratio(self) -> float:
        if len(self.fits) < 2:
            return float("inf")
        r1, r2 = self.fits[0].residual + self.floor, self.fits[1].residual + self.floor
        return r2 / r1 if r1 > 0 else float("inf")


def _model_ridge(fiber, pair, profile, s):
    """Beat curve of ``pair`` on ``profile`` at offsets ``s`` from its waist centre;
    0 where the pair is not guided."""
    z = profile.z_center + s
    z = np.clip(z, 0.0, profile.length)
    f = _beat_tab(fiber, pair, profile.radius_at(z))
    return np.nan_to_num(f, nan=0.0)


def identify_pair(s, ridge, fiber: FiberSpec, profile_factory, candidates=CANDIDATE_PAIRS,
                  a_bounds=(250e-9, 600e-9), min_ratio: float = 1.5, min_columns: int = 10) -> Identification:
    """Match a measured ridge against candidate beat curves.

    ``s`` are ridge positions relative to the waist centre and ``ridge`` the
    measured frequencies (NaN = no detection).  ``profile_factory(a_w)``
    returns the model profile for a trial waist radius, which is the only
    free parameter of each candidate.
    """
    s = np.asarray(s, dtype=float)
    ridge = np.asarray(ridge, dtype=float)
    ok = np.isfinite(ridge)
    if ok.sum() < min_columns:
        raise NoBeatDetectedError(f"ridge has {int(ok.sum())} valid columns, need {min_columns}")
    s, ridge = s[ok], ridge[ok]

    def resid(pair, a_w):
        try:
            prof = profile_factory(a_w)
        except Exception:
            return np.inf
        m = _model_ridge(fiber, pair, prof, s)
        return float(np.sqrt(np.mean((m - ridge) ** 2)))

    fits = []
    for pair in candidates:
        lo = max(a_bounds[0], _pair_floor(fiber, pair) * (1 + 1e-6))
        hi = a_bounds[1]
        if lo >= hi:
            continue
        grid = np.linspace(lo, hi, 41)
        r = np.array([resid(pair, a) for a in grid])
        i = int(np.argmin(r))
        b_lo, b_hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(lambda a: resid(pair, a), bounds=(b_lo, b_hi), method="bounded",
                              options={"xatol": 1e-12})
        best_a, best_r = (res.x, res.fun) if res.fun <= r[i] else (grid[i], r[i])
        fits.append(PairFit(tuple(pair), float(best_a), float(best_r)))
    if not fits:
        raise DomainError("no candidate pair is guided in the search range")
    fits.sort(key=lambda f: f.residual)
    # far below any spectral resolution; keeps two exact fits from looking distinct
    floor = RESIDUAL_FLOOR * float(np.median(np.abs(ridge)))
    ident = Identification(fits[0].pair, fits[0].a_w, fits[0].residual, fits, floor)
    if len(fits) > 1 and ident.ratio < min_ratio:
        raise AmbiguousPairError([(f.pair, f.residual) for f in fits[:2]])
    return ident


def ridge_from_trace(trace, profile, channel="transverse", window_length=0.5e-3, hop=None,
                     half_span=None, snr_min=DEFAULT_SNR):
    """Spectrogram ridge around the waist; returns (s, ridge, spectrogram),
    with ``s`` measured from the waist centre.  By default the span runs
    out to where the taper radius reaches 1.5 a_w."""
    zc = profile.z_center
    if half_span is None:
        # reach far enough into the necks for the ridge to bend
        target = min(1.5 * profile.a_min, 0.5 * (profile.a_min + profile.radius_at(0.0)))
        try:
            half_span = zc - profile.find_z_for_radius(target, "input")
        except DomainError:
            half_span = zc
    z0 = max(trace.z[0], zc - half_span)
    z1 = min(trace.z[-1], zc + half_span)
    spec = spectrogram(trace.section(z0, z1), window_length, hop, channel)
    ridge = extract_ridge(spec, snr_min)
    return spec.z_centers - zc, ridge, spec
