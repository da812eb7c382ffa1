"""Run configuration: INI files layered over named scenario presets."""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import constants

from .dynamics import DEFAULT_DECAY_RATE
from .spectroscopy.hamiltonian import Observable
from .trap import CrystalConfig, Geometry, TrapConfig, mode_set


class ConfigError(ValueError):
    """Bad configuration; ``line`` points into the file when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.line = line


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class TrapSection:
    magnetic_field: float | None = 1.865
    cyclotron_frequency: float | None = None
    axial_frequency: float = 162e3
    ion_mass_u: float = 39.9625909
    wavelength: float = 729e-9


@dataclass
class CrystalSection:
    ion_count: int = 2
    geometry: str = "string"
    rotation_frequency: float | None = None


@dataclass
class SimulationSection:
    initial_nbar: tuple[float, ...] = (87.0, 51.0)
    tail: float = 4e-7
    decay_rate: float = DEFAULT_DECAY_RATE
    cooling_rabi: float = 120e3
    budget: float = 0.02
    iterations: int = 60
    map_size: int = 300
    seed: int = 0


@dataclass
class SpectrumSection:
    kind: str = "coherent"                 # coherent | doppler
    observable: str = "single_ion"
    probe_rabi: float = 14e3
    probe_duration: float = 210e-6
    ion_split: float = 2e3
    nbar: tuple[float, ...] = (0.3, 0.07)
    sigma: tuple[float, ...] = (0.0, 0.0)
    offset: float = 0.0
    shots: int = 200
    half_width: float = 10e3
    step: float = 1e3
    span: float = 600e3
    fit_broadening: bool = False
    cutoff: int = 5                        # Fock levels per mode in coherent runs
    thermal_max: int = 4                   # highest Fock state of the thermal mixture


@dataclass
class HeatingSection:
    rates: tuple[float, ...] = (11.0, 1.0)
    delays: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2)
    start_nbar: tuple[float, ...] = (0.3, 0.07)
    relative_noise: float = 0.1
    noise_floor: float = 0.03


_SECTIONS = {
    "trap": TrapSection,
    "crystal": CrystalSection,
    "simulation": SimulationSection,
    "spectrum": SpectrumSection,
    "heating": HeatingSection,
}


@dataclass
class RunConfig:
    scenario: str = "custom"
    trap: TrapSection = field(default_factory=TrapSection)
    crystal: CrystalSection = field(default_factory=CrystalSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    heating: HeatingSection = field(default_factory=HeatingSection)

    # ---- derived objects -------------------------------------------------
    def trap_config(self) -> TrapConfig:
        mass = self.trap.ion_mass_u * constants.atomic_mass
        if self.trap.cyclotron_frequency is not None:
            return TrapConfig.from_cyclotron_frequency(self.trap.cyclotron_frequency, self.trap.axial_frequency,
                                                       ion_mass=mass, wavelength=self.trap.wavelength)
        return TrapConfig(self.trap.magnetic_field, self.trap.axial_frequency, ion_mass=mass,
                          wavelength=self.trap.wavelength)

    def crystal_config(self) -> CrystalConfig:
        return CrystalConfig(self.crystal.ion_count, Geometry(self.crystal.geometry),
                             self.crystal.rotation_frequency)

    def modes(self):
        return mode_set(self.trap_config(), self.crystal_config())

    def signed_eta(self) -> np.ndarray:
        return np.array([m.signed_lamb_dicke() for m in self.modes()]).T

    def ion_offsets(self) -> tuple[float, ...]:
        n = self.crystal.ion_count
        if self.crystal.geometry == Geometry.PLANAR.value or n == 1:
            return (0.0,) * n
        split = self.spectrum.ion_split
        return tuple(split * (k - (n - 1) / 2) for k in range(n))

    @property
    def observable(self) -> Observable:
        return Observable(self.spectrum.observable)


PRESETS: dict[str, dict[str, dict[str, str]]] = {
    "fig2": {
        "crystal": {"ion_count": "1"},
        "simulation": {"initial_nbar": "0 0"},
    },
    "fig3": {},
    "doppler-162k": {
        "spectrum": {"kind": "doppler", "probe_duration": "100e-6"},
    },
    "fig5": {
        "simulation": {"initial_nbar": "0.3 0.07"},
    },
    "fig7": {
        "trap": {"magnetic_field": "", "cyclotron_frequency": "715e3", "axial_frequency": "346e3"},
        "crystal": {"geometry": "planar", "rotation_frequency": "106e3"},
        "simulation": {"initial_nbar": "0.1 0.1"},
        "spectrum": {"observable": "both_excited", "probe_duration": "800e-6", "nbar": "0.1 0.1",
                     "sigma": "700 1000", "step": "500", "half_width": "8e3", "fit_broadening": "true",
                     "ion_split": "0"},
        "heating": {"rates": "0.8 0.8", "start_nbar": "0.1 0.1", "delays": "0 0.1 0.2 0.3 0.4 0.5"},
    },
    "fig8": {
        "trap": {"axial_frequency": "379e3"},
        "crystal": {"ion_count": "3", "geometry": "planar", "rotation_frequency": "130e3"},
        "simulation": {"initial_nbar": "0.05 0.05"},
        "spectrum": {"observable": "at_least_one_excited", "probe_duration": "250e-6",
                     "nbar": "0.05 0.05 0.05", "sigma": "0 0 0", "step": "1000", "ion_split": "0",
                     "cutoff": "3", "thermal_max": "2"},
    },
}
PRESETS["fig4"] = PRESETS["doppler-162k"]


def _coerce(cls, name: str, text: str, source: str, line: int | None):
    f = {x.name: x for x in fields(cls)}[name]
    kind = str(f.type)
    text = text.strip()
    try:
        if "None" in kind and text == "":
            return None
        if "tuple" in kind:
            return _floats(text)
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if "int" in kind and "float" not in kind:
            return int(text)
        if "float" in kind:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{cls.__name__}] {name}: {exc}", source, line) from None


def _line_of(text: str | None, section: str, key: str) -> int | None:
    if text is None:
        return None
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if current == section and not key:
                return i
        elif key and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _apply(cfg: RunConfig, values: dict[str, dict[str, str]], source: str, text: str | None = None) -> None:
    for section, items in values.items():
        if section == "scenario":
            for key, value in items.items():
                if key != "name":
                    raise ConfigError(f"unknown key [scenario] {key}", source, _line_of(text, section, key))
                cfg.scenario = value.strip()
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", source, _line_of(text, section, ""))
        cls = _SECTIONS[section]
        target = getattr(cfg, section)
        known = {f.name for f in fields(cls)}
        for key, value in items.items():
            line = _line_of(text, section, key)
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key}", source, line)
            setattr(target, key, _coerce(cls, key, value, source, line))


def validate(cfg: RunConfig, source: str = "<config>") -> RunConfig:
    t, c, s, sp, h = cfg.trap, cfg.crystal, cfg.simulation, cfg.spectrum, cfg.heating
    if (t.magnetic_field is None) == (t.cyclotron_frequency is None):
        raise ConfigError("give exactly one of [trap] magnetic_field or cyclotron_frequency", source)
    positive = {
        "trap.axial_frequency": t.axial_frequency, "trap.ion_mass_u": t.ion_mass_u,
        "trap.wavelength": t.wavelength, "simulation.tail": s.tail, "simulation.cooling_rabi": s.cooling_rabi,
        "simulation.budget": s.budget, "spectrum.probe_rabi": sp.probe_rabi,
        "spectrum.probe_duration": sp.probe_duration, "spectrum.step": sp.step,
        "spectrum.half_width": sp.half_width, "spectrum.span": sp.span,
    }
    if t.magnetic_field is not None:
        positive["trap.magnetic_field"] = t.magnetic_field
    if t.cyclotron_frequency is not None:
        positive["trap.cyclotron_frequency"] = t.cyclotron_frequency
    if c.rotation_frequency is not None:
        positive["crystal.rotation_frequency"] = c.rotation_frequency
    for name, value in positive.items():
        if not (value > 0 and math.isfinite(value)):
            raise ConfigError(f"{name} must be positive, got {value!r}", source)
    non_negative = {"simulation.decay_rate": s.decay_rate, "spectrum.ion_split": sp.ion_split,
                    "spectrum.shots": sp.shots, "heating.relative_noise": h.relative_noise,
                    "heating.noise_floor": h.noise_floor}
    for name, value in non_negative.items():
        if value < 0:
            raise ConfigError(f"{name} must be non-negative, got {value!r}", source)
    for name, values in {"simulation.initial_nbar": s.initial_nbar, "spectrum.nbar": sp.nbar,
                         "spectrum.sigma": sp.sigma, "heating.rates": h.rates,
                         "heating.delays": h.delays, "heating.start_nbar": h.start_nbar}.items():
        if any(v < 0 for v in values):
            raise ConfigError(f"{name} entries must be non-negative", source)
    if sp.cutoff <= sp.thermal_max or sp.thermal_max < 0:
        raise ConfigError("spectrum.cutoff must exceed spectrum.thermal_max >= 0", source)
    if sp.kind not in ("coherent", "doppler"):
        raise ConfigError(f"spectrum.kind must be coherent or doppler, got {sp.kind!r}", source)
    try:
        Observable(sp.observable)
        Geometry(c.geometry)
        cfg.crystal_config()
    except ValueError as exc:
        raise ConfigError(str(exc), source) from None
    return cfg


def load_config(path: str | Path | None = None, scenario: str | None = None) -> RunConfig:
    """Preset (if named) first, then the file on top; everything validated."""
    cfg = RunConfig()
    if scenario is not None:
        if scenario not in PRESETS:
            raise ConfigError(f"unknown scenario {scenario!r}; choose from {sorted(PRESETS)}")
        _apply(cfg, PRESETS[scenario], f"preset {scenario}")
        cfg.scenario = scenario
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        source = str(path)
        text = path.read_text()
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}", source, getattr(exc, "lineno", None)) from None
        _apply(cfg, {s: dict(parser.items(s)) for s in parser.sections()}, source, text)
        if scenario is None and cfg.scenario == "custom":
            cfg.scenario = path.stem
    return validate(cfg, source)
