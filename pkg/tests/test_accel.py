import os
import subprocess
import sys

from qfcsim import _accel

SNIPPET = """
import numpy as np
from qfcsim import _accel
from qfcsim.lock_sim import CavityState, LockController, simulate_lock_session
from qfcsim.filters import FilterElement
cav = FilterElement("FabryPerot", 12.5e6, finesse=100.0)
tr = simulate_lock_session(CavityState(3e7, 1.25e6, 0.4e6), LockController(), cav, 1.0, seed=4)
print(_accel.USE_NUMBA, repr(float(tr.detuning_hz.sum())), tr.final_controller.piezo_setpoint_hz)
"""


def _run(flag):
    env = dict(os.environ)
    env["QFCSIM_DISABLE_NUMBA"] = flag
    return subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True,
                          check=True).stdout.split()


def test_env_flag_selects_backend_and_results_match():
    fast = _run("0")
    slow = _run("1")
    assert slow[0] == "False"
    assert fast[0] == str(_accel.NUMBA_AVAILABLE)
    assert fast[1:] == slow[1:]
