import pytest

from qfcsim.config import load
from qfcsim.sweep import run_mu1_sweep, sweep_scenarios


@pytest.fixture
def cfg():
    c = load("paper")
    sw = c.analysis.sweep
    sw.fwhm_s = [0.186e-6, 0.385e-6, 1.17e-6, 2.5e-6]
    sw.mu_in = [0.01, 0.02, 0.07, 0.14]
    sw.pulse_rate_hz = [11.6e3] * 4
    sw.n_pulses = 300_000
    sw.groups = [[0, 1], [2, 3]]
    return c


def test_scenarios_use_sweep_calibration(cfg):
    jobs = list(sweep_scenarios(cfg))
    assert len(jobs) == 8
    assert {s.device_efficiency for _, _, s in jobs} == {cfg.analysis.sweep.device_efficiency}
    assert len({s.seed for _, _, s in jobs}) == 8


def test_sweep_points_and_fits(cfg):
    r = run_mu1_sweep(cfg)
    assert set(r.fits) == {(True, True), (True, False), (False, True), (False, False)}
    assert r.slope_ratio > 5
    # removing dark counts can only lower mu_1
    assert r.fits[(True, True)].slope_per_us < r.fits[(True, False)].slope_per_us
    d = r.to_dict()
    assert len(d["points"]["with_cavity"]) == 4


def test_shortest_in_group_noise_reference(cfg):
    cfg.analysis.noise_ref = "shortest-in-group"
    r = run_mu1_sweep(cfg)
    m = {(x["index"], x["with_cavity"]): x for x in r.snr}
    # members of one group share the reference noise rate
    rate = lambda x: x["noise_counts"] / (x["noise_window_s"] * x["n_triggers"])
    assert rate(m[(0, True)]) == pytest.approx(rate(m[(1, True)]))
    assert rate(m[(2, False)]) == pytest.approx(rate(m[(3, False)]))


def test_parallel_matches_serial(cfg):
    a = run_mu1_sweep(cfg)
    cfg.analysis.sweep.workers = 2
    b = run_mu1_sweep(cfg)
    assert a.to_dict() == b.to_dict()
