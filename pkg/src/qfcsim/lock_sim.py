"""Chopper-synchronised hill-climbing lock of the filter cavity.

The controller sees the cavity transmission of the locking beam only while
the chopper is in its lock half-cycle. Each dither iteration takes three
readings (at the setpoint, at +step, at -step) and moves the setpoint one
step toward the best of them. The piezo axis is expressed directly as a
resonance shift in Hz.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .filters import FilterCascade, FilterElement, FilterKind, element_transmission


class ChopperPhase(str, enum.Enum):
    LOCK = "Lock"
    MEASURE = "Measure"


class ControllerPhase(enum.IntEnum):
    SETTLE = kernels.SETTLE
    PROBE_PLUS = kernels.PROBE_PLUS
    PROBE_MINUS = kernels.PROBE_MINUS


@dataclass(frozen=True)
class CavityState:
    resonance_offset_hz: float = 0.0
    drift_rate_hz_per_s: float = 1.25e6
    random_walk_sigma_hz_per_sqrt_s: float = 0.4e6

    def __post_init__(self):
        if self.random_walk_sigma_hz_per_sqrt_s < 0:
            raise ValueError("random walk sigma must be >= 0")


@dataclass(frozen=True)
class LockController:
    piezo_setpoint_hz: float = 0.0
    step_hz: float = 1.25e6
    last_transmission: float = 0.0
    phase: ControllerPhase = ControllerPhase.SETTLE
    plus_transmission: float = 0.0

    def __post_init__(self):
        if not self.step_hz > 0:
            raise ValueError("step_hz must be positive")
        object.__setattr__(self, "phase", ControllerPhase(self.phase))

    @property
    def probe_offset_hz(self) -> float:
        """Where the piezo sits relative to the setpoint while this phase is read."""
        if self.phase is ControllerPhase.PROBE_PLUS:
            return self.step_hz
        if self.phase is ControllerPhase.PROBE_MINUS:
            return -self.step_hz
        return 0.0


@dataclass
class LockTrace:
    t_s: np.ndarray
    detuning_hz: np.ndarray
    transmission: np.ndarray
    measure: np.ndarray
    peak_transmission: float
    final_controller: LockController

    @property
    def mean_measure_transmission(self) -> float:
        return float(self.transmission[self.measure].mean())

    def locked_fraction(self, threshold: float = 0.9) -> float:
        """Share of measure time with transmission >= threshold x peak."""
        tr = self.transmission[self.measure]
        return float(np.mean(tr >= threshold * self.peak_transmission))

    def first_locked_time(self, threshold: float = 0.9) -> float | None:
        ok = self.measure & (self.transmission >= threshold * self.peak_transmission)
        idx = np.flatnonzero(ok)
        return float(self.t_s[idx[0]]) if idx.size else None

    def summary(self) -> dict:
        return {
            "mean_measure_transmission": self.mean_measure_transmission,
            "locked_fraction": self.locked_fraction(),
            "first_locked_time_s": self.first_locked_time(),
            "final_setpoint_hz": self.final_controller.piezo_setpoint_hz,
            "final_detuning_hz": float(self.detuning_hz[-1]),
            "duration_s": float(self.t_s[-1]) if self.t_s.size else 0.0,
            "peak_transmission": self.peak_transmission,
        }


def chopper_phase(t: float, chopper_hz: float, duty: float = 0.5) -> ChopperPhase:
    """Lock for the first ``duty`` of every chopper period, Measure otherwise."""
    if not chopper_hz > 0:
        raise ValueError("chopper_hz must be positive")
    return ChopperPhase.LOCK if (t * chopper_hz) % 1.0 < duty else ChopperPhase.MEASURE


def lock_step(ctrl: LockController, measured_transmission: float) -> LockController:
    """Consume one transmission reading taken at ``setpoint + ctrl.probe_offset_hz``."""
    if not 0.0 <= measured_transmission <= 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    if ctrl.phase is ControllerPhase.SETTLE:
        return replace(ctrl, last_transmission=measured_transmission, phase=ControllerPhase.PROBE_PLUS)
    if ctrl.phase is ControllerPhase.PROBE_PLUS:
        return replace(ctrl, plus_transmission=measured_transmission, phase=ControllerPhase.PROBE_MINUS)
    plus, minus, ref = ctrl.plus_transmission, measured_transmission, ctrl.last_transmission
    sp = ctrl.piezo_setpoint_hz
    if plus > minus and plus > ref:
        sp += ctrl.step_hz
    elif minus > plus and minus > ref:
        sp -= ctrl.step_hz
    return replace(ctrl, piezo_setpoint_hz=sp, phase=ControllerPhase.SETTLE)


def _cavity_of(filt) -> FilterElement:
    if isinstance(filt, FilterElement):
        return filt
    if isinstance(filt, FilterCascade):
        return filt.first(FilterKind.FABRY_PEROT)
    raise TypeError("expected a FilterElement or FilterCascade")


def simulate_lock_session(cavity: CavityState, ctrl: LockController, cascade, duration_s: float,
                          chopper_hz: float = 30.0, seed: int = 0, update_hz: float = 1000.0,
                          duty: float = 0.5) -> LockTrace:
    """Run the lock loop at ``update_hz`` for ``duration_s`` seconds.

    ``cascade`` may be the full cascade (its Fabry-Perot element is used) or
    the cavity element itself.
    """
    cav = _cavity_of(cascade)
    if not update_hz > 0 or not duration_s > 0:
        raise ValueError("update_hz and duration_s must be positive")
    dt = 1.0 / update_hz
    n = int(round(duration_s * update_hz)) + 1
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal(n)
    t, det, tr, meas, sp, ph, last, plus = kernels.lock_loop(
        n, dt, float(chopper_hz), float(duty), float(cavity.resonance_offset_hz),
        float(cavity.drift_rate_hz_per_s), float(cavity.random_walk_sigma_hz_per_sqrt_s), normals,
        float(ctrl.piezo_setpoint_hz), float(ctrl.step_hz), int(ctrl.phase),
        float(ctrl.last_transmission), float(ctrl.plus_transmission), cav.fsr_hz,
        cav.airy_coefficient, cav.peak_transmission, cav.center_offset_hz)
    final = replace(ctrl, piezo_setpoint_hz=float(sp), phase=ControllerPhase(int(ph)),
                    last_transmission=float(last), plus_transmission=float(plus))
    return LockTrace(t, det, tr, np.asarray(meas, bool), cav.peak_transmission, final)


def simulate_lock_reference(cavity: CavityState, ctrl: LockController, cascade, duration_s: float,
                            chopper_hz: float = 30.0, seed: int = 0, update_hz: float = 1000.0,
                            duty: float = 0.5) -> LockTrace:
    """Same loop written with the public ``lock_step``; slow, used as a cross-check."""
    cav = _cavity_of(cascade)
    dt = 1.0 / update_hz
    n = int(round(duration_s * update_hz)) + 1
    normals = np.random.default_rng(seed).standard_normal(n)
    res = cavity.resonance_offset_hz
    ts, dets, trs, meas = [], [], [], []
    for k in range(n):
        t = k * dt
        if k > 0:
            res += cavity.drift_rate_hz_per_s * dt + cavity.random_walk_sigma_hz_per_sqrt_s * np.sqrt(dt) * normals[k]
        lock = chopper_phase(t, chopper_hz, duty) is ChopperPhase.LOCK
        offset = ctrl.probe_offset_hz if lock else 0.0
        d = res - (ctrl.piezo_setpoint_hz + offset)
        tr = element_transmission(cav, d)
        ts.append(t)
        dets.append(d)
        trs.append(tr)
        meas.append(not lock)
        if lock:
            ctrl = lock_step(ctrl, tr)
    return LockTrace(np.array(ts), np.array(dets), np.array(trs), np.array(meas), cav.peak_transmission, ctrl)


def write_trace_csv(path, trace: LockTrace):
    from .io_utils import write_csv

    write_csv(path, ["t_s", "detuning_hz", "transmission"],
              zip(trace.t_s.tolist(), trace.detuning_hz.tolist(), trace.transmission.tolist()))
