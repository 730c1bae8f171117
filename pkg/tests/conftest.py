import numpy as np
import pytest

from qfcsim.filters import build_cascade, reference_elements


@pytest.fixture(scope="session")
def elements():
    return reference_elements()


@pytest.fixture(scope="session")
def cascades(elements):
    with_c = build_cascade(["lp650", "lp1180", "etalon", "cavity", "fbg"], elements)
    without_c = build_cascade(["lp650", "lp1180", "etalon", "fbg"], elements)
    return with_c, without_c


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from importlib import import_module

    try:
        acc = import_module("test_acceptance")
    except ImportError:
        return
    if not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        ok, detail = acc.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
