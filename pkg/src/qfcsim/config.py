"""Run configuration: one TOML file with a section per subsystem.

Keys carry their units (``pulse_fwhm_s``, ``dark_rate_cps``). Every
section is validated by building the corresponding domain object before
anything runs.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .conversion import PUMP_COUPLING, ConversionParams, OpticalPath
from .filters import DEFAULT_SPAN_HZ, DEFAULT_STEP_HZ, FilterElement, build_cascade
from .lock_sim import CavityState, LockController
from .photon_sim import Scenario


class ConfigError(ValueError):
    pass


@dataclass
class ElementConfig:
    kind: str
    fwhm_hz: float
    finesse: float | None = None
    peak_transmission: float = 1.0
    center_offset_hz: float = 0.0


@dataclass
class FiltersConfig:
    span_hz: float = DEFAULT_SPAN_HZ
    step_hz: float = DEFAULT_STEP_HZ
    with_cavity: list = field(default_factory=list)
    without_cavity: list = field(default_factory=list)
    elements: dict = field(default_factory=dict)


@dataclass
class ConversionConfig:
    eta_max: float = 0.95
    beta_per_w_cm2: float = 0.54
    length_cm: float = 2.7
    pump_power_w: float = 0.2
    pump_coupling: float = PUMP_COUPLING
    pump_power_before_waveguide: bool = True


@dataclass
class PathConfig:
    input_coupling: float = 0.70
    fiber_coupling: float = 0.80
    filter_transmission: float = 0.80
    fbg_transmission: float = 0.60
    detector_efficiency: float = 0.10


@dataclass
class ScenarioConfig:
    pulse_fwhm_s: float = 385e-9
    mu_in: float = 0.021
    pulse_rate_hz: float = 11.6e3
    n_pulses: int = 2_000_000
    device_efficiency: float = 0.258
    noise_rate_after_waveguide_cps: float = 300.0
    noise_gain: float = 1.0
    use_cavity: bool = True
    dark_rate_cps: float = 9.13
    dead_time_s: float = 20e-6
    chopper_hz: float = 30.0
    chopper_duty: float = 0.5
    pulse_delay_s: float = 0.0  # 0 -> centre of the pulse period
    cycles_per_block: int = 64


@dataclass
class LockConfig:
    resonance_offset_hz: float = 0.0
    drift_rate_hz_per_s: float = 1.25e6
    random_walk_sigma_hz_per_sqrt_s: float = 0.4e6
    step_hz: float = 1.25e6
    update_hz: float = 1000.0
    duration_s: float = 60.0


@dataclass
class SweepConfig:
    fwhm_s: list = field(default_factory=list)
    mu_in: list = field(default_factory=list)
    pulse_rate_hz: list = field(default_factory=list)
    n_pulses: int = 2_000_000
    device_efficiency: float = 0.0  # 0 -> scenario value
    noise_gain: float = 0.0  # 0 -> scenario value
    groups: list = field(default_factory=list)
    workers: int = 1


@dataclass
class AnalysisConfig:
    bin_width_s: float = 0.0  # 0 -> FWHM/50 clamped to [1 ns, 1 us]
    noise_gap_fwhm: float = 1.0
    noise_window: str = "equal"  # "equal", "max" or a duration in seconds
    dark_subtract: bool = True
    noise_ref: str = "per-measurement"  # or "shortest-in-group"
    sweep: SweepConfig = field(default_factory=SweepConfig)


SECTIONS = {
    "filters": FiltersConfig,
    "conversion": ConversionConfig,
    "path": PathConfig,
    "scenario": ScenarioConfig,
    "lock": LockConfig,
    "analysis": AnalysisConfig,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kw = dict(data)
    if cls is FiltersConfig and "elements" in kw:
        kw["elements"] = {k: _build(ElementConfig, v, f"{where}.elements.{k}") for k, v in kw["elements"].items()}
    if cls is AnalysisConfig and "sweep" in kw:
        kw["sweep"] = _build(SweepConfig, kw["sweep"], f"{where}.sweep")
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_strip_none(v) for v in obj]
    return obj


@dataclass
class RunConfig:
    filters: FiltersConfig = field(default_factory=FiltersConfig)
    conversion: ConversionConfig = field(default_factory=ConversionConfig)
    path: PathConfig = field(default_factory=PathConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    lock: LockConfig = field(default_factory=LockConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    seed: int = 0
    output_dir: str = "qfc_out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = copy.deepcopy(data)
        unknown = set(data) - set(SECTIONS) - {"seed", "output_dir"}
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
        kw = {name: _build(sec, data.get(name, {}), name) for name, sec in SECTIONS.items()}
        cfg = cls(**kw, seed=int(data.get("seed", 0)), output_dir=str(data.get("output_dir", "qfc_out")))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "output_dir": self.output_dir}
        for name in SECTIONS:
            d[name] = asdict(getattr(self, name))
        return _strip_none(d)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # --- domain objects -------------------------------------------------

    def filter_elements(self) -> dict[str, FilterElement]:
        return {name: FilterElement(kind=e.kind, fwhm_hz=e.fwhm_hz, finesse=e.finesse,
                                    peak_transmission=e.peak_transmission,
                                    center_offset_hz=e.center_offset_hz, name=name)
                for name, e in self.filters.elements.items()}

    def cascades(self):
        el = self.filter_elements()
        return build_cascade(self.filters.with_cavity, el), build_cascade(self.filters.without_cavity, el)

    def conversion_params(self) -> ConversionParams:
        c = self.conversion
        p = c.pump_power_w * (c.pump_coupling if c.pump_power_before_waveguide else 1.0)
        return ConversionParams(eta_max=c.eta_max, beta=c.beta_per_w_cm2, length_cm=c.length_cm, pump_power_w=p)

    def optical_path(self) -> OpticalPath:
        return OpticalPath(**asdict(self.path))

    def scenario_obj(self, **overrides) -> Scenario:
        with_c, without_c = self.cascades()
        kw = asdict(self.scenario)
        if kw["pulse_delay_s"] == 0.0:
            kw["pulse_delay_s"] = None
        kw.update(cascade_with=with_c, cascade_without=without_c,
                  detector_efficiency=self.path.detector_efficiency, seed=self.seed)
        kw.update(overrides)
        return Scenario(**kw)

    def cavity_state(self) -> CavityState:
        lk = self.lock
        return CavityState(lk.resonance_offset_hz, lk.drift_rate_hz_per_s, lk.random_walk_sigma_hz_per_sqrt_s)

    def controller(self) -> LockController:
        return LockController(step_hz=self.lock.step_hz)

    def validate(self):
        try:
            if not self.filters.with_cavity or not self.filters.without_cavity:
                raise ValueError("filters.with_cavity and filters.without_cavity must be non-empty")
            self.cascades()
            self.conversion_params()
            self.optical_path()
            if not 0 < self.conversion.pump_coupling <= 1:
                raise ValueError("conversion.pump_coupling must lie in (0, 1]")
            self.scenario_obj()
            self.cavity_state()
            self.controller()
            if not (self.lock.update_hz > 0 and self.lock.duration_s > 0):
                raise ValueError("lock.update_hz and lock.duration_s must be positive")
            a = self.analysis
            if a.noise_ref not in ("per-measurement", "shortest-in-group"):
                raise ValueError(f"analysis.noise_ref must be per-measurement or shortest-in-group")
            if a.noise_gap_fwhm < 0:
                raise ValueError("analysis.noise_gap_fwhm must be >= 0")
            if a.noise_window not in ("equal", "max"):
                float(a.noise_window)
            sw = a.sweep
            if not (len(sw.fwhm_s) == len(sw.mu_in) == len(sw.pulse_rate_hz)):
                raise ValueError("analysis.sweep lists must have equal length")
            for i, (f, m, r) in enumerate(zip(sw.fwhm_s, sw.mu_in, sw.pulse_rate_hz)):
                self.scenario_obj(pulse_fwhm_s=f, mu_in=m, pulse_rate_hz=r, n_pulses=sw.n_pulses)
            for g in sw.groups:
                if any(not 0 <= i < len(sw.fwhm_s) for i in g):
                    raise ValueError("analysis.sweep.groups index out of range")
        except (ValueError, KeyError, LookupError) as exc:
            raise ConfigError(str(exc)) from None


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return RunConfig.from_dict(data)


PAPER_CONFIG = "paper"


def paper_config_path():
    return resources.files("qfcsim").joinpath("data/paper.config")


def load(path) -> RunConfig:
    """Read a config file; the name ``paper`` selects the bundled reproduction config."""
    p = Path(path)
    if str(path) == PAPER_CONFIG and not p.exists():
        return loads(paper_config_path().read_text())
    return loads(p.read_text())


def dump(cfg: RunConfig, path):
    from .io_utils import atomic_write_text

    atomic_write_text(path, cfg.dumps())


def noise_window_arg(cfg: RunConfig) -> Any:
    nw = cfg.analysis.noise_window
    if nw == "equal":
        return None
    if nw == "max":
        return "max"
    return float(nw)
