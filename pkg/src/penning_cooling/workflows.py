"""End-to-end pipelines shared by the command line, scripts and tests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import RunConfig
from .coupling import SidebandOrder, StrengthMap, strength_map
from .dynamics import (COM2_B1, TABLE1_SIDEBANDS, CoolingSequence, PhononDistribution, apply_heating,
                       run_sequence, table1_sequence, thermal_distribution)
from .spectroscopy import (CoherentModel, FitConfig, FitResult, Observable, ProbePulse, SpectrumPoint,
                           average_fits, fit_sideband_spectrum, heating_rate_fit, simulate_spectrum_thermal,
                           synthesize_spectrum, window_grid)

DARK_CELL = (49, 86)
DARK_WINDOW = 4
DARK_MAP_SIZE = 140


# ---- spectra ---------------------------------------------------------------

def coherent_model(cfg: RunConfig) -> CoherentModel:
    modes = cfg.modes()
    return CoherentModel(cfg.signed_eta(), modes.frequencies, cfg.spectrum.probe_duration,
                         cfg.ion_offsets(), cutoff=cfg.spectrum.cutoff, thermal_max=cfg.spectrum.thermal_max)


def coherent_grid(cfg: RunConfig) -> np.ndarray:
    """Carrier plus first red and blue sideband of every mode."""
    freqs = cfg.modes().frequencies
    centres = [0.0] + [s * f for f in freqs for s in (-1, 1)]
    centres = [c + cfg.spectrum.offset for c in centres]
    return window_grid(centres, cfg.spectrum.half_width, cfg.spectrum.step)


def _observed_ions(cfg: RunConfig, observable: Observable) -> range:
    return range(cfg.crystal.ion_count) if observable is Observable.SINGLE_ION else range(1)


def model_spectrum(cfg: RunConfig, observable: Observable | None = None) -> list[SpectrumPoint]:
    """Noiseless coherent spectrum at the configured n-bar."""
    observable = cfg.observable if observable is None else Observable(observable)
    model = coherent_model(cfg)
    grid = coherent_grid(cfg)
    out = []
    for ion in _observed_ions(cfg, observable):
        out += synthesize_spectrum(model, grid, cfg.spectrum.nbar, cfg.spectrum.probe_rabi, observable, ion,
                                   offset=cfg.spectrum.offset, shots=0,
                                   sigmas=cfg.spectrum.sigma if any(cfg.spectrum.sigma) else None,
                                   region_half_width=cfg.spectrum.half_width)
    return out


def synthetic_spectrum(cfg: RunConfig, seed: int, observable: Observable | None = None) -> list[SpectrumPoint]:
    observable = cfg.observable if observable is None else Observable(observable)
    model = coherent_model(cfg)
    grid = coherent_grid(cfg)
    rng = np.random.default_rng(seed)
    out = []
    for ion in _observed_ions(cfg, observable):
        out += synthesize_spectrum(model, grid, cfg.spectrum.nbar, cfg.spectrum.probe_rabi, observable, ion,
                                   offset=cfg.spectrum.offset, shots=cfg.spectrum.shots, rng=rng,
                                   sigmas=cfg.spectrum.sigma if any(cfg.spectrum.sigma) else None,
                                   region_half_width=cfg.spectrum.half_width)
    return out


@dataclass
class SpectrumFit:
    per_ion: list[FitResult]
    combined: FitResult


def fit_spectrum(cfg: RunConfig, points: Sequence[SpectrumPoint], observable: Observable | None = None) -> SpectrumFit:
    """Fit each ion's spectrum separately (or the joint observable) and average."""
    observable = cfg.observable if observable is None else Observable(observable)
    ions = sorted({p.ion for p in points if p.observable is observable})
    if not ions:
        raise ValueError(f"no {observable.value} points in the data")
    results = []
    for ion in ions:
        fc = FitConfig(coherent_model(cfg), observable=observable, ion=ion, rabi_guess=cfg.spectrum.probe_rabi,
                       fit_broadening=cfg.spectrum.fit_broadening, region_half_width=cfg.spectrum.half_width)
        results.append(fit_sideband_spectrum(points, fc))
    return SpectrumFit(results, average_fits(results) if len(results) > 1 else results[0])


def doppler_spectrum(cfg: RunConfig) -> list[SpectrumPoint]:
    nb = cfg.simulation.initial_nbar
    dist = thermal_distribution(nb[0], nb[1] if len(nb) > 1 else 0.0, tail=cfg.simulation.tail)
    modes = cfg.modes()
    freqs = list(modes.frequencies) + [1.0] * (2 - len(modes))
    etas = list(modes.etas) + [0.0] * (2 - len(modes))
    step = cfg.spectrum.step
    k = int(round(cfg.spectrum.span / step))
    detunings = np.arange(-k, k + 1) * step
    probe = ProbePulse(0.0, cfg.spectrum.probe_duration, cfg.spectrum.probe_rabi)
    return simulate_spectrum_thermal(dist, etas[:2], probe, detunings, freqs[:2])


# ---- cooling ---------------------------------------------------------------

def no_intermodulation_map(eta: Sequence[float], size: int = DARK_MAP_SIZE) -> StrengthMap:
    sidebands = [sb for sb in TABLE1_SIDEBANDS if sb.delta_n1 == 0 or sb.delta_n2 == 0]
    return strength_map(sidebands, eta, (size, size))


def dark_component(eta: Sequence[float], size: int = DARK_MAP_SIZE) -> np.ndarray:
    """Connected dark region near (49, 86) of the map without intermodulation sidebands."""
    comp = no_intermodulation_map(eta, size).component_containing(DARK_CELL, DARK_WINDOW)
    if comp is None:
        return np.zeros((size + 1, size + 1), dtype=bool)
    return comp


@dataclass
class CoolingOutcome:
    distribution: PhononDistribution
    nbar: tuple[float, float]
    ground: tuple[float, float]
    dark_mass: float
    total_time: float


def initial_distribution(cfg: RunConfig) -> PhononDistribution:
    nb = cfg.simulation.initial_nbar
    return thermal_distribution(nb[0], nb[1] if len(nb) > 1 else 0.0, tail=cfg.simulation.tail)


def cool(cfg: RunConfig, sequence: CoolingSequence | None = None,
         initial: PhononDistribution | None = None) -> CoolingOutcome:
    eta = cfg.modes().etas
    eta = tuple(eta) + (0.0,) * (2 - len(eta))
    seq = table1_sequence(cfg.simulation.cooling_rabi) if sequence is None else sequence
    dist = initial_distribution(cfg) if initial is None else initial
    final, nbar = run_sequence(dist, seq, eta[:2], cfg.simulation.decay_rate)
    mass = final.mass_in(dark_component(eta[:2])) if cfg.crystal.ion_count == 2 else 0.0
    return CoolingOutcome(final, nbar, final.ground_occupation(), mass, seq.total_time)


def without_intermodulation(seq: CoolingSequence, sideband: SidebandOrder = COM2_B1) -> CoolingSequence:
    return seq.without(sideband)


# ---- heating ---------------------------------------------------------------

def heating_scan(cfg: RunConfig, seed: int) -> list[tuple[float, int, float, float]]:
    """Synthetic (delay, mode, nbar, uncertainty) rows from the heating model plus Gaussian noise."""
    h = cfg.heating
    rng = np.random.default_rng(seed)
    start = thermal_distribution(*(tuple(h.start_nbar) + (0.0,))[:2], tail=1e-12)
    rows = []
    for t in h.delays:
        truth = apply_heating(start, h.rates[:2], t).nbar()
        for k in range(min(len(h.rates), 2)):
            unc = max(h.relative_noise * truth[k], h.noise_floor)
            rows.append((float(t), k, float(truth[k] + rng.normal(0.0, unc)), float(unc)))
    return rows


def fit_heating(rows: Sequence[tuple[float, int, float, float]]):
    modes = sorted({r[1] for r in rows})
    return {k: heating_rate_fit([(t, nb, u) for t, m, nb, u in rows if m == k]) for k in modes}

