"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``. Criteria are checked at their stated
tolerances; nothing here is loosened to make a number pass.
"""
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from qfcsim.analysis import build_histogram, compute_snr, default_bin_width
from qfcsim.cli import main
from qfcsim.config import load, noise_window_arg
from qfcsim.conversion import OpticalPath, fit_efficiency_curve, mu1, mu1_from_slope, synthetic_efficiency_points
from qfcsim.lock_sim import CavityState, simulate_lock_session
from qfcsim.photon_sim import simulate_timetags
from qfcsim.sweep import run_mu1_sweep

RESULTS: dict[int, tuple[bool, str]] = {}


def report(n: int, ok: bool, detail: str):
    RESULTS[n] = (ok, detail)
    line = f"[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    return ok


def _cli_json(argv, tmp_path, name):
    rc = main([str(a) for a in argv] + ["--output-dir", str(tmp_path)])
    assert rc == 0, f"CLI exited with {rc}"
    return json.loads((tmp_path / name).read_text())


def test_c1_filter_suppression_ratio(tmp_path):
    t0 = time.perf_counter()
    rec = _cli_json(["filter-report", "--config", "paper"], tmp_path, "filter_report.json")
    dt = time.perf_counter() - t0
    r = rec["suppression_ratio"]
    ok = abs(r - 20.1) <= 0.5 and dt < 1.0
    report(1, ok, f"noise-bandwidth ratio {r:.3f} (target 20.1 +/- 0.5), {dt:.2f} s")
    assert ok


def test_c2_g2_predictions(tmp_path):
    a = _cli_json(["predict-g2", "--g2si", 17.3, "--mu-in", 0.016, "--fwhm", 0.6e-6, "--slope", 2.17e-4],
                  tmp_path, "g2_prediction.json")["g2_ci"]
    b = _cli_json(["predict-g2", "--g2si", "inf", "--mu-in", 0.1, "--fwhm", 10e-6, "--slope", 2.17e-4],
                  tmp_path, "g2_prediction.json")["g2_ci"]
    ok = abs(a - 15.3) <= 0.1 and abs(b - 47) <= 0.5
    report(2, ok, f"g2_ci {a:.3f} (15.3 +/- 0.1), limit {b:.3f} (47 +/- 0.5)")
    assert ok


def test_c3_snr_at_one_photon():
    m1 = mu1_from_slope(2.17e-4, 10e-6)
    snr = 1.0 / m1  # mu_1 = mu_in / SNR at mu_in = 1
    assert mu1(1.0, snr) == pytest.approx(m1)
    ok = math.isclose(snr, 1 / 2.17e-3) and snr > 460
    report(3, ok, f"SNR at mu_in=1, 10 us: {snr:.1f} (> 460)")
    assert ok


def test_c4_efficiency_fit_coverage():
    t0 = time.perf_counter()
    truth = np.array([0.54, 0.95])
    path = OpticalPath()
    pulls = []
    for i, ss in enumerate(np.random.SeedSequence(2024).spawn(500)):
        rng = np.random.default_rng(ss)
        # ~0.3 % absolute on a 25.8 % peak device efficiency
        pts = synthetic_efficiency_points(rng, 0.54, 0.95, 2.7, path, rel_noise=0.0116)
        f = fit_efficiency_curve(pts, path, 2.7, n_mc=1000, seed=i)
        pulls.append(np.abs([f.beta_hat, f.eta_max_hat] - truth) / [f.beta_sigma, f.eta_max_sigma])
    dt = time.perf_counter() - t0
    pulls = np.array(pulls)
    c1 = (pulls < 1).mean(axis=0)
    c2 = (pulls < 2).mean(axis=0)
    ok = bool(np.all(np.abs(c1 - 0.68) <= 0.05) and np.all(c2 >= 0.90) and dt < 60)
    report(4, ok, f"1-sigma coverage beta {c1[0]:.3f}, eta_max {c1[1]:.3f} (0.68 +/- 0.05); "
                  f"2-sigma {c2[0]:.3f}, {c2[1]:.3f}; {dt:.1f} s")
    assert ok


def _overlap(sim, sim_sigma, ref, ref_sigma):
    return abs(sim - ref) <= 2 * (sim_sigma + ref_sigma)


def test_c5_short_pulse_snr_reproduction():
    t0 = time.perf_counter()
    cfg = load("paper")
    assert cfg.scenario.n_pulses >= 2_000_000
    nw = noise_window_arg(cfg)
    out = {}
    for cav in (False, True):
        s = cfg.scenario_obj(use_cavity=cav)
        h = build_histogram(simulate_timetags(s), cfg.analysis.bin_width_s or default_bin_width(s.pulse_fwhm_s),
                            s.period_s)
        out[cav] = compute_snr(h, s.delay_s, s.pulse_fwhm_s, dark_rate_cps=s.dark_rate_cps, mu_in=s.mu_in,
                               noise_gap_fwhm=cfg.analysis.noise_gap_fwhm, noise_window_s=nw)
    dt = time.perf_counter() - t0
    checks = [
        ("no cavity, dark-subtracted", out[False].snr_dark_subtracted, out[False].snr_dark_subtracted_sigma, 7.0, 0.3),
        ("cavity, dark-subtracted", out[True].snr_dark_subtracted, out[True].snr_dark_subtracted_sigma, 98.0, 22.0),
        ("no cavity, raw", out[False].snr, out[False].snr_sigma, 6.1, 0.3),
        ("cavity, raw", out[True].snr, out[True].snr_sigma, 21.0, 2.0),
    ]
    parts, ok = [], dt < 300
    for name, v, sv, p, sp in checks:
        good = v is not None and _overlap(v, sv, p, sp)
        ok &= good
        parts.append(f"{name} {v:.1f}+/-{sv:.1f} vs {p}+/-{sp}")
    report(5, ok, "; ".join(parts) + f"; {dt:.1f} s")
    assert ok


def test_c6_slope_reproduction(tmp_path):
    t0 = time.perf_counter()
    rec = _cli_json(["mu1-sweep", "--config", "paper"], tmp_path, "mu1_sweep.json")
    dt = time.perf_counter() - t0
    n = len(rec["points"]["with_cavity"])
    fw = [p["fwhm_s"] for p in rec["points"]["with_cavity"]]
    slope = rec["slope_with_cavity_per_us"]
    ratio = rec["slope_ratio"]
    ok = (n == 8 and math.isclose(min(fw), 0.186e-6) and math.isclose(max(fw), 13.45e-6)
          and abs(slope / 2.17e-4 - 1) <= 0.15 and abs(ratio / 21.6 - 1) <= 0.15 and dt < 600)
    report(6, ok, f"with-cavity slope {slope:.3e}/us (2.17e-4 +/- 15 %), ratio {ratio:.2f} (21.6 +/- 15 %), "
                  f"{n} points, {dt:.1f} s")
    assert ok


PROPERTY_TESTS = [
    "tests/test_filters.py::test_periodicity",
    "tests/test_filters.py::test_symmetry",
    "tests/test_filters.py::test_product_bounded_by_each_element",
    "tests/test_photon_sim.py::test_dead_time_rate_law",
    "tests/test_photon_sim.py::test_noise_count_poisson",
    "tests/test_conversion.py::test_g2_monotone",
    "tests/test_conversion.py::test_g2_bounded_and_fixed_point",
    "tests/test_analysis.py::test_count_conservation",
    "tests/test_tagfile.py::test_roundtrip_bit_exact",
    "tests/test_photon_sim.py::test_deterministic_replay",
]


def test_c7_property_suites():
    root = Path(__file__).resolve().parents[1]
    p = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                       cwd=root, capture_output=True, text=True)
    tail = p.stdout.strip().splitlines()[-1] if p.stdout.strip() else p.stderr[-200:]
    ok = p.returncode == 0
    report(7, ok, f"{len(PROPERTY_TESTS)} property tests: {tail}")
    assert ok, p.stdout[-2000:]


def test_c8_lock_robustness():
    cfg = load("paper")
    with_c, _ = cfg.cascades()
    cav = with_c.first("FabryPerot")
    lk = cfg.lock
    kw = dict(chopper_hz=30.0, update_hz=lk.update_hz, duty=cfg.scenario.chopper_duty)
    r = simulate_lock_session(CavityState(5 * cav.fwhm_hz, 0.0, 0.0), cfg.controller(), with_c, 2.0, seed=cfg.seed, **kw)
    t_lock = r.first_locked_time()
    d = simulate_lock_session(cfg.cavity_state(), cfg.controller(), with_c, 60.0, seed=cfg.seed, **kw)
    frac = d.locked_fraction()
    ok = t_lock is not None and t_lock < 1.0 and frac >= 0.95
    report(8, ok, f"reacquired from 5 linewidths at t = {t_lock if t_lock is None else round(t_lock, 4)} s (< 1 s); "
                  f"locked fraction over 60 s "
                  f"{frac:.4f} (>= 0.95)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
