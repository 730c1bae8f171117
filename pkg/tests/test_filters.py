import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfcsim.filters import (FilterCascade, FilterElement, FilterKind, airy_peak_area, cascade_transmission,
                            element_transmission, frequency_grid, noise_bandwidth, noise_suppression_ratio)


def airy(fwhm, finesse, tpk=1.0):
    return FilterElement(FilterKind.FABRY_PEROT, fwhm, finesse=finesse, peak_transmission=tpk)


def test_on_resonance_peak():
    assert element_transmission(airy(12.5e6, 100, 0.9), 0.0) == pytest.approx(0.9, abs=1e-15)


def test_fsr_periodicity_example():
    f = airy(12.5e6, 100)
    assert f.fsr_hz == pytest.approx(1.25e9)
    assert element_transmission(f, 1.25e9) == pytest.approx(element_transmission(f, 0.0), abs=1e-12)


def test_half_width_gives_half():
    # FWHM defined through the Airy coefficient lands slightly off 0.5 for finite finesse
    t = element_transmission(airy(12.5e6, 100), 6.25e6)
    assert t == pytest.approx(0.5, abs=1e-3)


def test_product_rule():
    c = FilterCascade((airy(12.5e6, 100, 0.9), airy(12.5e6, 100, 0.9)))
    assert cascade_transmission(c, 0.0) == pytest.approx(0.81)


def test_cascade_unit_peak():
    c = FilterCascade((FilterElement("Etalon", 210e6, finesse=19), airy(12.5e6, 100),
                       FilterElement("Gaussian", 2.4e9)))
    assert cascade_transmission(c, 0.0) == pytest.approx(1.0)


def test_flat_rectangle():
    c = FilterCascade((FilterElement("FlatBand", 1e14),))
    assert noise_bandwidth(c, span_hz=1e9, step_hz=1e6) == pytest.approx(2e9, rel=1e-12)


def test_airy_area_closed_form_vs_quadrature():
    f = airy(12.5e6, 100)
    x = np.linspace(-f.fsr_hz / 2, f.fsr_hz / 2, 2_000_001)
    brute = np.trapezoid(element_transmission(f, x), x)
    assert airy_peak_area(f) == pytest.approx(brute, rel=1e-7)
    # high-finesse limit is pi/2 * FWHM
    assert airy_peak_area(f) == pytest.approx(math.pi / 2 * 12.5e6, rel=2e-4)


def test_identical_cascades_ratio_one(cascades):
    w, _ = cascades
    assert noise_suppression_ratio(w, w) == 1.0


def test_quadrature_converged(cascades):
    w, wo = cascades
    coarse = noise_suppression_ratio(wo, w)
    fine = noise_suppression_ratio(wo, w, step_hz=5e4)
    assert abs(coarse - fine) / fine < 1e-4


def test_ratio_sensitivity_to_cavity_peak(elements):
    # documented lever: a lossy cavity raises the apparent ratio
    from qfcsim.filters import build_cascade
    from dataclasses import replace

    el = dict(elements)
    el["cavity"] = replace(el["cavity"], peak_transmission=0.9)
    w = build_cascade(["etalon", "cavity", "fbg"], el)
    wo = build_cascade(["etalon", "fbg"], el)
    assert noise_suppression_ratio(wo, w) == pytest.approx(18.4, abs=0.1)


def test_errors():
    with pytest.raises(ValueError):
        element_transmission(airy(1e6, 10), float("nan"))
    with pytest.raises(ValueError):
        cascade_transmission(FilterCascade(()), 0.0)
    with pytest.raises(ValueError):
        FilterElement("FabryPerot", 1e6)
    with pytest.raises(ValueError):
        FilterElement("Gaussian", -1.0)
    with pytest.raises(ValueError):
        frequency_grid(1e9, 0)


fwhm = st.floats(1e5, 1e9)
fin = st.floats(1.5, 500)
det = st.floats(-1e10, 1e10)


@settings(max_examples=200, deadline=None)
@given(fwhm, fin, st.floats(0.05, 1.0), st.floats(-3.0, 3.0), st.integers(-5, 5))
def test_periodicity(w, f, tpk, u, k):
    e = airy(w, f, tpk)
    d = u * e.fsr_hz
    a = element_transmission(e, d)
    b = element_transmission(e, d + k * e.fsr_hz)
    assert abs(a - b) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(fwhm, fin, det)
def test_symmetry(w, f, d):
    for e in (airy(w, f), FilterElement("Gaussian", w, peak_transmission=0.6)):
        assert element_transmission(e, d) == pytest.approx(element_transmission(e, -d), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(fwhm, fin, st.floats(0.05, 1.0)), min_size=1, max_size=4), det)
def test_product_bounded_by_each_element(specs, d):
    els = tuple(airy(*s) for s in specs)
    t = cascade_transmission(FilterCascade(els), d)
    assert 0.0 <= t
    for e in els:
        assert t <= element_transmission(e, d) + 1e-15


def test_adding_elements_never_widens(cascades):
    w, wo = cascades
    assert noise_bandwidth(w) < noise_bandwidth(wo)
    fbg_only = FilterCascade(tuple(e for e in wo.elements if e.kind is FilterKind.GAUSSIAN))
    assert noise_bandwidth(wo) < noise_bandwidth(fbg_only)
