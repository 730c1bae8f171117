"""Synthetic time-tag generation for weak coherent pulses after conversion.

Per trigger, a Gaussian pulse of ``mu_in`` photons is converted with the
device efficiency and detected with the detector efficiency. On top of
that come flat-spectrum conversion noise, filtered by the active cascade,
and detector dark counts. A non-paralyzable dead time is applied to the
merged click train and clicks falling in chopper lock half-cycles are
removed. Pulses are only sent during measure half-cycles.

The run is cut into blocks of chopper cycles; block ``b`` draws from a
generator seeded with ``(seed, b)``, so the stream depends only on the
scenario and the seed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import erf

from . import kernels
from .filters import FilterCascade, noise_suppression_ratio, reference_elements, build_cascade
from .tagfile import TagStream

PS = 1e-12
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
WINDOW_FWHM = 2.5


def window_fraction(window_fwhm: float = WINDOW_FWHM) -> float:
    """Share of a Gaussian pulse inside a centred window ``window_fwhm`` FWHMs wide."""
    half_in_sigma = 0.5 * window_fwhm / FWHM_TO_SIGMA
    return float(erf(half_in_sigma / math.sqrt(2.0)))


def _default_with():
    e = reference_elements()
    return build_cascade(["lp650", "lp1180", "etalon", "cavity", "fbg"], e)


def _default_without():
    e = reference_elements()
    return build_cascade(["lp650", "lp1180", "etalon", "fbg"], e)


@dataclass(frozen=True)
class Scenario:
    pulse_fwhm_s: float = 385e-9
    mu_in: float = 0.021
    pulse_rate_hz: float = 11.6e3
    n_pulses: int = 2_000_000
    device_efficiency: float = 0.258
    noise_rate_after_waveguide_cps: float = 300.0
    noise_gain: float = 1.0
    cascade_with: FilterCascade = field(default_factory=_default_with)
    cascade_without: FilterCascade = field(default_factory=_default_without)
    use_cavity: bool = True
    dark_rate_cps: float = 9.13
    detector_efficiency: float = 0.10
    dead_time_s: float = 20e-6
    chopper_hz: float = 30.0
    chopper_duty: float = 0.5
    pulse_delay_s: float | None = None
    seed: int = 0
    cycles_per_block: int = 64

    def __post_init__(self):
        if not self.pulse_fwhm_s > 0:
            raise ValueError("pulse_fwhm_s must be positive")
        if not self.pulse_rate_hz > 0:
            raise ValueError("pulse_rate_hz must be positive")
        if self.period_s <= 5 * self.pulse_fwhm_s:
            raise ValueError(f"pulse period {self.period_s:.3g} s must exceed 5 x FWHM "
                             f"({5 * self.pulse_fwhm_s:.3g} s)")
        for name in ("mu_in", "noise_rate_after_waveguide_cps", "noise_gain", "dark_rate_cps",
                     "dead_time_s", "chopper_hz"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("device_efficiency", "detector_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be >= 0")
        if not 0 < self.chopper_duty < 1:
            raise ValueError("chopper_duty must lie in (0, 1)")
        if self.chopper_hz > 0 and self.pulses_per_cycle < 1:
            raise ValueError("no complete pulse period fits in a measure half-cycle")
        d = self.delay_s
        if d - 2.5 * self.pulse_fwhm_s < 0 or d + 2.5 * self.pulse_fwhm_s > self.period_s:
            raise ValueError("pulse_delay_s puts the pulse outside its own period")
        if self.cycles_per_block < 1:
            raise ValueError("cycles_per_block must be >= 1")

    @property
    def period_s(self) -> float:
        return 1.0 / self.pulse_rate_hz

    @property
    def delay_s(self) -> float:
        return 0.5 * self.period_s if self.pulse_delay_s is None else self.pulse_delay_s

    @property
    def pulses_per_cycle(self) -> int:
        """Pulses sent per measure half-cycle (whole periods only)."""
        measure = (1.0 - self.chopper_duty) / self.chopper_hz
        return int(math.floor(measure * self.pulse_rate_hz * (1 + 1e-12)))

    @property
    def active_cascade(self) -> FilterCascade:
        return self.cascade_with if self.use_cavity else self.cascade_without

    @property
    def detected_per_pulse(self) -> float:
        return self.mu_in * self.device_efficiency * self.detector_efficiency

    @property
    def filtered_noise_cps(self) -> float:
        """Detected conversion-noise rate behind the active cascade (dark counts excluded)."""
        base = self.noise_rate_after_waveguide_cps * self.noise_gain * self.detector_efficiency
        if not self.use_cavity:
            return base
        return base / noise_suppression_ratio(self.cascade_without, self.cascade_with)

    @property
    def duration_s(self) -> float:
        if self.chopper_hz > 0:
            cycles = math.ceil(self.n_pulses / self.pulses_per_cycle) if self.n_pulses else 0
            return cycles / self.chopper_hz
        return self.n_pulses * self.period_s

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("cascade_with", "cascade_without"):
            d[key] = [
                {k: (v.value if hasattr(v, "value") else v) for k, v in e.items()}
                for e in d[key]["elements"]
            ]
        return d


def chopper_is_lock(t_s, chopper_hz: float, duty: float = 0.5):
    """True where the chopper passes the locking beam (and blocks the detector)."""
    t = np.asarray(t_s, dtype=float)
    # the tolerance (well below 1 ps at audio chopping rates) sends edge ties to Measure
    return (t * chopper_hz) % 1.0 < duty - 1e-11


def trigger_times_ps(s: Scenario) -> np.ndarray:
    """Trigger timestamps: pulses fill each measure half-cycle from its start."""
    n = s.n_pulses
    if n == 0:
        return np.empty(0, np.int64)
    if s.chopper_hz <= 0:
        t = np.arange(n) * s.period_s
    else:
        m = s.pulses_per_cycle
        k = np.arange(n)
        cycle, j = np.divmod(k, m)
        # round the half-cycle start up so the first trigger never precedes it
        start = np.ceil((cycle + s.chopper_duty) / s.chopper_hz / PS - 1e-3)
        return (start + np.rint(j * s.period_s / PS)).astype(np.int64)
    return np.rint(t / PS).astype(np.int64)


def pulse_centers_s(s: Scenario) -> np.ndarray:
    return trigger_times_ps(s) * PS + s.delay_s


def signal_rate_profile(s: Scenario, t_s):
    """Expected detected signal rate (counts/s) at time(s) ``t_s``."""
    t = np.atleast_1d(np.asarray(t_s, dtype=float))
    centers = pulse_centers_s(s)
    sig = s.pulse_fwhm_s * FWHM_TO_SIGMA
    peak = s.detected_per_pulse / (sig * math.sqrt(2.0 * math.pi))
    out = np.zeros_like(t)
    if centers.size:
        i = np.searchsorted(centers, t)
        for shift in (-1, 0):
            j = np.clip(i + shift, 0, centers.size - 1)
            z = (t - centers[j]) / sig
            out += np.where((i + shift >= 0) & (i + shift < centers.size), peak * np.exp(-0.5 * z * z), 0.0)
    return out if np.ndim(t_s) else float(out[0])


def _poisson_times(rng, rate, t0, t1):
    """Homogeneous Poisson arrivals on [t0, t1) from exponential gaps."""
    if rate <= 0 or t1 <= t0:
        return np.empty(0)
    mean = rate * (t1 - t0)
    chunks = []
    last = t0
    while True:
        n = int(mean + 6.0 * math.sqrt(mean) + 16)
        t = last + np.cumsum(rng.exponential(1.0 / rate, n))
        chunks.append(t[t < t1])
        if t[-1] >= t1:
            break
        last = t[-1]
    return np.concatenate(chunks)


def _block_bounds(s: Scenario):
    """Yield (block index, first pulse, end pulse, t0, t1) covering the whole run."""
    if s.chopper_hz > 0:
        per_block = s.pulses_per_cycle * s.cycles_per_block
        span = s.cycles_per_block / s.chopper_hz
    else:
        per_block = 100_000
        span = per_block * s.period_s
    total = s.duration_s
    b = 0
    while b * span < total:
        p0 = b * per_block
        p1 = min(s.n_pulses, p0 + per_block)
        yield b, p0, p1, b * span, min((b + 1) * span, total)
        b += 1


def _simulate_block(s: Scenario, triggers_ps, t0, t1, rng, noise_cps):
    sig_ps = s.pulse_fwhm_s * FWHM_TO_SIGMA / PS
    counts = rng.poisson(s.detected_per_pulse, size=triggers_ps.size) if s.detected_per_pulse > 0 \
        else np.zeros(triggers_ps.size, np.int64)
    base = np.repeat(triggers_ps + int(round(s.delay_s / PS)), counts)
    signal = base + np.rint(rng.standard_normal(base.size) * sig_ps).astype(np.int64)
    background = _poisson_times(rng, noise_cps + s.dark_rate_cps, t0, t1)
    background = np.rint(background / PS).astype(np.int64)
    return np.concatenate([signal, background])


def simulate_timetags(s: Scenario) -> TagStream:
    triggers = trigger_times_ps(s)
    noise_cps = s.filtered_noise_cps
    root = np.random.SeedSequence(s.seed)
    clicks = []
    for b, p0, p1, t0, t1 in _block_bounds(s):
        rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(b,)))
        clicks.append(_simulate_block(s, triggers[p0:p1], t0, t1, rng, noise_cps))
    clicks = np.sort(np.concatenate(clicks)) if clicks else np.empty(0, np.int64)
    clicks = clicks[clicks >= 0]
    clicks = apply_dead_time_ps(clicks, int(round(s.dead_time_s / PS)))
    if s.chopper_hz > 0:
        clicks = clicks[~chopper_is_lock(clicks * PS, s.chopper_hz, s.chopper_duty)]
    return TagStream.merge(triggers.astype(np.uint64), clicks.astype(np.uint64))


def apply_dead_time_ps(events_ps, dead_time_ps: int) -> np.ndarray:
    ev = np.asarray(events_ps, dtype=np.int64)
    if ev.size and np.any(ev[1:] < ev[:-1]):
        raise ValueError("events must be sorted")
    if dead_time_ps <= 0 or ev.size == 0:
        return ev.copy()
    return ev[kernels.dead_time_keep(ev, dead_time_ps)]


def apply_dead_time(events_s, dead_time_s: float) -> np.ndarray:
    """Non-paralyzable dead time on sorted timestamps in seconds.

    An event survives iff it comes at least ``dead_time_s`` after the last
    surviving event.
    """
    ev = np.asarray(events_s, dtype=float)
    if ev.size and np.any(ev[1:] < ev[:-1]):
        raise ValueError("events must be sorted")
    if ev.size == 0:
        return ev.copy()
    # integer picoseconds keep the comparison exact
    ps = np.rint(ev / PS).astype(np.int64)
    return ev[kernels.dead_time_keep(ps, int(round(dead_time_s / PS)))]


def calibrate_from_snr(snr_sub: float, snr_raw: float, dark_rate_cps: float, mu_in: float,
                       fwhm_s: float, detector_efficiency: float) -> tuple[float, float]:
    """Detected noise rate and device efficiency reproducing a pair of SNRs.

    The SNR convention is window counts over rescaled side-window counts,
    with and without removing the dark-count expectation. Returns
    ``(noise_cps, device_efficiency)``.
    """
    if not snr_sub > snr_raw > 1:
        raise ValueError("need snr_sub > snr_raw > 1")
    noise = (snr_raw - 1.0) * dark_rate_cps / (snr_sub - snr_raw)
    per_window = (snr_sub - 1.0) * noise * WINDOW_FWHM * fwhm_s
    eta = per_window / (mu_in * detector_efficiency * window_fraction())
    return noise, eta


def calibrate_from_slopes(slope_sub_per_us: float, slope_raw_per_us: float, dark_rate_cps: float,
                          detector_efficiency: float) -> tuple[float, float]:
    """Detected noise rate and device efficiency reproducing a pair of mu_1 slopes.

    Uses the high-SNR limit ``mu_1 = 2.5 * FWHM * noise / detected_efficiency``.
    """
    if not slope_raw_per_us > slope_sub_per_us > 0:
        raise ValueError("need slope_raw > slope_sub > 0")
    noise = dark_rate_cps * slope_sub_per_us / (slope_raw_per_us - slope_sub_per_us)
    eta = WINDOW_FWHM * noise / (slope_sub_per_us * 1e6 * detector_efficiency * window_fraction())
    return noise, eta


def noise_gain_for(noise_cps: float, baseline_cps: float, detector_efficiency: float) -> float:
    return noise_cps / (baseline_cps * detector_efficiency)


def with_overrides(s: Scenario, **kw) -> Scenario:
    return replace(s, **kw)
