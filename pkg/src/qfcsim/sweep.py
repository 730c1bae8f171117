"""End-to-end mu_1 versus pulse-length series: simulate, histogram, SNR, line fit."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .analysis import Mu1Point, LineFit, build_histogram, compute_snr, default_bin_width, fit_mu1_slope
from .config import RunConfig, noise_window_arg
from .photon_sim import Scenario, simulate_timetags


@dataclass
class SweepResult:
    points: dict = field(default_factory=dict)  # (with_cavity, dark_subtracted) -> [Mu1Point]
    fits: dict = field(default_factory=dict)  # same keys -> LineFit
    snr: list = field(default_factory=list)

    @property
    def slope_ratio(self) -> float:
        return self.fits[(False, True)].slope_per_us / self.fits[(True, True)].slope_per_us

    @property
    def slope_ratio_raw(self) -> float:
        return self.fits[(False, False)].slope_per_us / self.fits[(True, False)].slope_per_us

    def to_dict(self) -> dict:
        def key(k):
            return ("with_cavity" if k[0] else "without_cavity") + ("" if k[1] else "_raw")

        return {
            "fits": {key(k): v.to_dict() for k, v in self.fits.items()},
            "points": {key(k): [vars(p) for p in v] for k, v in self.points.items()},
            "slope_ratio": self.slope_ratio,
            "slope_ratio_raw": self.slope_ratio_raw,
            "measurements": self.snr,
        }


def sweep_scenarios(cfg: RunConfig):
    """Yield (index, with_cavity, Scenario) for every sweep point."""
    sw = cfg.analysis.sweep
    extra = {}
    if sw.device_efficiency > 0:
        extra["device_efficiency"] = sw.device_efficiency
    if sw.noise_gain > 0:
        extra["noise_gain"] = sw.noise_gain
    for i, (f, m, r) in enumerate(zip(sw.fwhm_s, sw.mu_in, sw.pulse_rate_hz)):
        for cav in (True, False):
            yield i, cav, cfg.scenario_obj(pulse_fwhm_s=f, mu_in=m, pulse_rate_hz=r, n_pulses=sw.n_pulses,
                                           use_cavity=cav, pulse_delay_s=None,
                                           seed=cfg.seed * 1000 + 2 * i + int(cav), **extra)


def _measure(args):
    s, bin_width_s = args
    tags = simulate_timetags(s)
    bw = bin_width_s or default_bin_width(s.pulse_fwhm_s)
    return build_histogram(tags, bw, s.period_s)


def run_mu1_sweep(cfg: RunConfig) -> SweepResult:
    jobs = list(sweep_scenarios(cfg))
    args = [(s, cfg.analysis.bin_width_s) for _, _, s in jobs]
    if cfg.analysis.sweep.workers > 1:
        with ProcessPoolExecutor(cfg.analysis.sweep.workers) as ex:
            hists = list(ex.map(_measure, args))
    else:
        hists = [_measure(a) for a in args]

    a = cfg.analysis
    nw = noise_window_arg(cfg)
    common = dict(dark_rate_cps=cfg.scenario.dark_rate_cps, noise_gap_fwhm=a.noise_gap_fwhm)

    refs = {}
    if a.noise_ref == "shortest-in-group":
        groups = a.sweep.groups or [list(range(len(a.sweep.fwhm_s)))]
        by_key = {(i, cav): (s, h) for (i, cav, s), h in zip(jobs, hists)}
        for g in groups:
            ref_i = min(g, key=lambda i: a.sweep.fwhm_s[i])
            for cav in (True, False):
                s, h = by_key[(ref_i, cav)]
                r = compute_snr(h, s.delay_s, s.pulse_fwhm_s, noise_window_s=nw, **common)
                for i in g:
                    refs[(i, cav)] = (r.noise_counts, r.noise_window_s * r.n_triggers)

    out = SweepResult()
    for (i, cav, s), h in zip(jobs, hists):
        r = compute_snr(h, s.delay_s, s.pulse_fwhm_s, mu_in=s.mu_in, noise_window_s=nw,
                        noise_reference=refs.get((i, cav)), **common)
        out.snr.append({"index": i, "with_cavity": cav, "fwhm_s": s.pulse_fwhm_s, "mu_in": s.mu_in,
                        **r.to_dict()})
        for sub in (True, False):
            m, ms = (r.mu1, r.mu1_sigma) if sub else (r.mu1_raw, r.mu1_raw_sigma)
            if m is None:
                continue
            out.points.setdefault((cav, sub), []).append(Mu1Point(s.pulse_fwhm_s, m, ms, cav))
    for k, pts in out.points.items():
        out.fits[k] = fit_mu1_slope(pts)
    return out
