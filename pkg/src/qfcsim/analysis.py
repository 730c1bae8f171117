"""Trigger-relative histograms, SNR with the 2.5 x FWHM window rule, mu_1
extraction and the mu_1-versus-pulse-length line fit."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import curve_fit

from .photon_sim import FWHM_TO_SIGMA, PS, WINDOW_FWHM
from .tagfile import TagStream


class AnalysisError(RuntimeError):
    pass


@dataclass
class Histogram:
    bin_width_s: float
    t_start_s: float
    counts: np.ndarray
    n_triggers: int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.n_triggers < 1:
            raise ValueError("histogram needs at least one trigger")
        if not self.bin_width_s > 0:
            raise ValueError("bin_width_s must be positive")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")

    @property
    def span_s(self) -> float:
        return self.counts.size * self.bin_width_s

    @property
    def edges_s(self) -> np.ndarray:
        return self.t_start_s + self.bin_width_s * np.arange(self.counts.size + 1)

    @property
    def centers_s(self) -> np.ndarray:
        return self.t_start_s + self.bin_width_s * (np.arange(self.counts.size) + 0.5)

    def window_counts(self, a_s: float, b_s: float) -> float:
        """Counts in [a, b), splitting edge bins pro rata."""
        if a_s < self.t_start_s - 1e-15 or b_s > self.t_start_s + self.span_s + 1e-15 or b_s < a_s:
            raise AnalysisError(f"window [{a_s:.4g}, {b_s:.4g}] s outside histogram span")
        e = self.edges_s
        overlap = np.clip(np.minimum(e[1:], b_s) - np.maximum(e[:-1], a_s), 0.0, None)
        return float(np.dot(self.counts, overlap / self.bin_width_s))


@dataclass
class SnrResult:
    signal_counts: float
    noise_counts: float
    noise_counts_in_equivalent_window: float
    dark_expected_in_window: float
    snr: float | None
    snr_sigma: float | None
    snr_lower_bound: float | None
    snr_dark_subtracted: float | None
    snr_dark_subtracted_sigma: float | None
    snr_dark_subtracted_lower_bound: float | None
    mu1: float | None
    mu1_sigma: float | None
    mu1_raw: float | None
    mu1_raw_sigma: float | None
    window_s: float
    noise_window_s: float
    n_triggers: int
    dark_subtracted: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Mu1Point:
    fwhm_s: float
    mu1: float
    mu1_sigma: float
    with_cavity: bool

    def __post_init__(self):
        if not self.fwhm_s > 0:
            raise ValueError("fwhm_s must be positive")


@dataclass(frozen=True)
class LineFit:
    slope_per_us: float
    slope_sigma: float
    intercept: float
    intercept_sigma: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FwhmEstimate:
    fwhm_s: float
    sigma_s: float
    center_s: float
    center_sigma_s: float


def default_bin_width(fwhm_s: float) -> float:
    return float(np.clip(fwhm_s / 50.0, 1e-9, 1e-6))


def build_histogram(tags: TagStream, bin_width_s: float, span_s: float) -> Histogram:
    """Histogram of click delays after the most recent preceding trigger."""
    if not tags.is_sorted():
        raise AnalysisError("tag stream is not sorted")
    trig = tags.triggers.astype(np.int64)
    if trig.size == 0:
        raise AnalysisError("tag stream contains no triggers")
    if not (bin_width_s > 0 and span_s > 0):
        raise ValueError("bin width and span must be positive")
    bw = int(round(bin_width_s / PS))
    nbins = int(math.ceil(span_s / bin_width_s - 1e-9))
    clicks = tags.clicks.astype(np.int64)
    # ties: a click stamped with its trigger's time belongs to that trigger
    idx = np.searchsorted(trig, clicks, side="right") - 1
    ok = idx >= 0
    dt = clicks[ok] - trig[idx[ok]]
    b = dt // bw
    b = b[b < nbins]
    counts = np.bincount(b, minlength=nbins)[:nbins]
    return Histogram(bw * PS, 0.0, counts, int(trig.size))


def _ratio(num, num_var, den, den_var):
    """num/den and its first-order sigma; None when den <= 0."""
    if den <= 0:
        return None, None
    r = num / den
    rel2 = (num_var / num**2 if num != 0 else 0.0) + den_var / den**2
    return r, abs(r) * math.sqrt(rel2)


def compute_snr(h: Histogram, pulse_center_s: float, fwhm_s: float, dark_rate_cps: float = 0.0,
                n_triggers: int | None = None, mu_in: float | None = None,
                dark_subtract: bool = True, noise_gap_fwhm: float = 1.0,
                noise_window_s: float | str | None = None,
                noise_reference: tuple[float, float] | None = None) -> SnrResult:
    """SNR of the pulse window against a side window before the pulse.

    The signal window spans ``pulse_center_s +/- 1.25 * fwhm_s``. The noise
    window ends ``noise_gap_fwhm`` FWHMs before it; its length is the
    signal-window length by default, ``"max"`` for everything back to the
    histogram start, or an explicit duration. ``noise_reference`` =
    ``(counts, exposure_s)`` replaces the side window with a noise level
    measured elsewhere (``exposure_s`` = window length x triggers there).
    """
    n = h.n_triggers if n_triggers is None else int(n_triggers)
    w = WINDOW_FWHM * fwhm_s
    s0, s1 = pulse_center_s - 0.5 * w, pulse_center_s + 0.5 * w
    c_sig = h.window_counts(s0, s1)

    if noise_reference is None:
        n_end = s0 - noise_gap_fwhm * fwhm_s
        if noise_window_s is None:
            ln = w
        elif noise_window_s == "max":
            ln = n_end - h.t_start_s
        else:
            ln = float(noise_window_s)
        if ln < w - 1e-15:
            raise AnalysisError("noise window shorter than the signal window")
        c_noise = h.window_counts(n_end - ln, n_end)
        exposure = ln * n
    else:
        c_noise, exposure = noise_reference
        ln = exposure / n
    scale = w * n / exposure
    c_noise_eq = c_noise * scale
    dark = dark_rate_cps * w * n

    snr, snr_sig = _ratio(c_sig, c_sig, c_noise_eq, c_noise * scale**2)
    snr_lb = None
    if snr is None:
        snr_lb = c_sig / scale  # at most one count in the noise window
    sub_num = c_sig - dark
    sub_den = c_noise_eq - dark
    snr_d, snr_d_sig = _ratio(sub_num, c_sig, sub_den, c_noise * scale**2)
    snr_d_lb = None
    if snr_d is None:
        snr_d_lb = sub_num / scale

    def mu1_of(v, sv):
        if mu_in is None or v is None or v <= 0:
            return None, None
        m = mu_in / v
        return m, m * sv / v

    mu1_raw, mu1_raw_sig = mu1_of(snr, snr_sig)
    if dark_subtract:
        mu1_, mu1_sig = mu1_of(snr_d, snr_d_sig)
    else:
        mu1_, mu1_sig = mu1_raw, mu1_raw_sig
    return SnrResult(
        signal_counts=c_sig, noise_counts=float(c_noise), noise_counts_in_equivalent_window=c_noise_eq,
        dark_expected_in_window=dark, snr=snr, snr_sigma=snr_sig, snr_lower_bound=snr_lb,
        snr_dark_subtracted=snr_d, snr_dark_subtracted_sigma=snr_d_sig,
        snr_dark_subtracted_lower_bound=snr_d_lb, mu1=mu1_, mu1_sigma=mu1_sig,
        mu1_raw=mu1_raw, mu1_raw_sigma=mu1_raw_sig, window_s=w, noise_window_s=ln,
        n_triggers=n, dark_subtracted=dark_subtract,
    )


def _gauss(t, a, mu, sig, c):
    return a * np.exp(-0.5 * ((t - mu) / sig) ** 2) + c


def estimate_fwhm(h: Histogram, min_significance: float = 5.0) -> FwhmEstimate:
    """Gaussian-plus-offset least-squares fit to the dominant peak."""
    y = h.counts.astype(float)
    t = h.centers_s
    if y.sum() == 0:
        raise AnalysisError("empty histogram")
    k = max(3, y.size // 100)
    sm = uniform_filter1d(y, k, mode="nearest")
    bg = float(np.median(sm))
    i = int(np.argmax(sm))
    amp = sm[i] - bg
    if amp <= 0:
        raise AnalysisError("no peak above background")
    above = np.flatnonzero(sm - bg > 0.5 * amp)
    width = max((above[-1] - above[0] + 1) * h.bin_width_s, 2 * h.bin_width_s)
    p0 = [amp, t[i], width * FWHM_TO_SIGMA, bg]
    # Pearson weights (sigma^2 = model) avoid the low-count bias of sqrt(counts)
    sigma = np.sqrt(np.maximum(y, 1.0))
    try:
        for _ in range(3):
            popt, pcov = curve_fit(_gauss, t, y, p0=p0, sigma=sigma, absolute_sigma=True, maxfev=5000)
            p0 = popt
            sigma = np.sqrt(np.maximum(_gauss(t, *popt), 1e-3))
    except (RuntimeError, ValueError) as exc:
        raise AnalysisError(f"Gaussian fit failed: {exc}") from None
    perr = np.sqrt(np.diag(pcov))
    a, mu, sig, _ = popt
    sig = abs(sig)
    if not np.all(np.isfinite(perr)) or a <= 0 or a < min_significance * perr[0]:
        raise AnalysisError("no significant peak")
    if mu - 2 * sig < h.t_start_s or mu + 2 * sig > h.t_start_s + h.span_s:
        raise AnalysisError("peak at histogram edge")
    return FwhmEstimate(sig / FWHM_TO_SIGMA, perr[2] / FWHM_TO_SIGMA, float(mu), float(perr[1]))


def fit_mu1_slope(points: Sequence[Mu1Point]) -> LineFit:
    """Weighted (1/sigma^2) straight line mu_1 = slope * FWHM[us] + intercept."""
    if len(points) < 2:
        raise AnalysisError("need at least two points")
    x = np.array([p.fwhm_s for p in points]) * 1e6
    y = np.array([p.mu1 for p in points])
    s = np.array([p.mu1_sigma for p in points])
    if np.any(~(s > 0)):
        raise AnalysisError("every point needs a positive sigma")
    wgt = 1.0 / s**2
    a = np.array([[wgt.sum(), (wgt * x).sum()], [(wgt * x).sum(), (wgt * x * x).sum()]])
    b = np.array([(wgt * y).sum(), (wgt * x * y).sum()])
    det = np.linalg.det(a)
    if abs(det) <= 1e-12 * a[0, 0] * a[1, 1]:
        raise AnalysisError("singular design: all pulse lengths equal")
    cov = np.linalg.inv(a)
    intercept, slope = cov @ b
    return LineFit(float(slope), float(math.sqrt(cov[1, 1])), float(intercept),
                   float(math.sqrt(cov[0, 0])), len(points))


def write_histogram_csv(path, h: Histogram):
    from .io_utils import atomic_write_text

    lines = ["bin_start_s,count"]
    lines += [f"{t:.12e},{c}" for t, c in zip(h.edges_s[:-1], h.counts)]
    atomic_write_text(path, "\n".join(lines) + "\n")
