"""Excitation spectra: incoherent Doppler sums and coherent cooled-crystal models."""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..coupling import rabi_curve
from ..dynamics import PhononDistribution
from .hamiltonian import Observable, ProbePulse, detection_observable, frame_hamiltonian, propagate_populations

THERMAL_MAX = 4          # highest Fock state in the fitted thermal mixture
DEFAULT_CUTOFF = 5       # motional levels kept per mode in coherent runs
_BATCH = 128


class SidebandOverlapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpectrumPoint:
    detuning: float
    excitation: float
    observable: Observable = Observable.SINGLE_ION
    shots: int = 0
    ion: int = 0

    def __post_init__(self):
        if not 0.0 <= self.excitation <= 1.0:
            raise ValueError(f"excitation {self.excitation} outside [0, 1]")
        object.__setattr__(self, "observable", Observable(self.observable))


def _observable_tag(p: SpectrumPoint) -> str:
    if p.observable is Observable.SINGLE_ION:
        return f"{p.observable.value}:{p.ion}"
    return p.observable.value


def write_spectrum_csv(points: Iterable[SpectrumPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_hz", "excitation", "shots", "observable"])
        for p in points:
            w.writerow([repr(float(p.detuning)), repr(float(p.excitation)), int(p.shots), _observable_tag(p)])


def read_spectrum_csv(path) -> list[SpectrumPoint]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"detuning_hz", "excitation", "shots", "observable"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            tag, _, ion = row["observable"].partition(":")
            out.append(SpectrumPoint(float(row["detuning_hz"]), float(row["excitation"]),
                                     Observable(tag), int(row["shots"]), int(ion) if ion else 0))
    return out


# ---------------------------------------------------------------------------
# incoherent sum for hot crystals

def rabi_lineshape(rabi: np.ndarray, detuning: np.ndarray, duration: float) -> np.ndarray:
    """Two-level excitation probability; both frequencies in Hz."""
    rabi = np.asarray(rabi, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    gen = np.hypot(rabi, detuning)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(gen > 0, rabi**2 / np.where(gen > 0, gen, 1.0) ** 2, 0.0)
    return frac * np.sin(math.pi * gen * duration) ** 2


def _compressed_rabi(dist: PhononDistribution, eta: Sequence[float], d1: int, d2: int,
                     bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted histogram of coupling magnitudes for one sideband over the distribution."""
    n1, n2 = dist.n_max
    c1 = np.abs(rabi_curve(eta[0], d1, n1))
    c2 = np.abs(rabi_curve(eta[1], d2, n2))
    strength = np.outer(c1, c2).ravel()
    w = dist.probs.ravel()
    keep = w > 0
    strength, w = strength[keep], w[keep]
    if strength.size <= bins:
        return strength, w
    edges = np.linspace(0.0, strength.max() * (1 + 1e-12), bins + 1)
    idx = np.clip(np.searchsorted(edges, strength, side="right") - 1, 0, bins - 1)
    mass = np.bincount(idx, weights=w, minlength=bins)
    mean = np.bincount(idx, weights=w * strength, minlength=bins)
    ok = mass > 0
    return mean[ok] / mass[ok], mass[ok]


def sideband_positions(mode_freqs: Sequence[float], span: float, max_order: int = 12) -> list[tuple[int, int, float]]:
    """All (m1, m2, m1*nu1 + m2*nu2) inside +-span."""
    out = []
    for m1 in range(-max_order, max_order + 1):
        for m2 in range(-max_order, max_order + 1):
            f = m1 * mode_freqs[0] + m2 * mode_freqs[1]
            if abs(f) <= span:
                out.append((m1, m2, f))
    return out


def simulate_spectrum_thermal(dist: PhononDistribution, eta: Sequence[float], probe: ProbePulse,
                              detunings: Sequence[float], mode_freqs: Sequence[float],
                              window: float | None = None, max_order: int = 8,
                              bins: int = 400, overlap_level: float = 1e-3) -> list[SpectrumPoint]:
    """Single-ion excitation summed incoherently over phonon states and sidebands.

    Each sideband (m1, m2) contributes only to detunings within `window` of its
    resonance ``m1 nu1 + m2 nu2``. `window` defaults to a quarter of the smaller
    mode frequency. Where two sidebands both add more than `overlap_level`
    the contributions are summed and a single warning is issued.
    """
    detunings = np.asarray(detunings, dtype=float)
    if abs(dist.total() - 1.0) > 1e-6:
        raise ValueError("distribution is not normalised")
    window = 0.25 * min(mode_freqs) if window is None else window
    span = float(np.max(np.abs(detunings))) + window
    lines = sideband_positions(mode_freqs, span, max_order)
    excitation = np.zeros_like(detunings)
    hits = np.zeros(detunings.shape, dtype=int)
    for m1, m2, f in lines:
        near = np.abs(detunings - f) < window
        if not near.any():
            continue
        strength, weight = _compressed_rabi(dist, eta, m1, m2, bins)
        rabi = probe.rabi_frequency * strength
        shape = rabi_lineshape(rabi[None, :], (detunings[near] - f)[:, None], probe.duration)
        contribution = shape @ weight
        excitation[near] += contribution
        hits[near] += contribution > overlap_level
    if (hits > 1).any():
        warnings.warn(f"{int((hits > 1).sum())} detunings lie within the window of more than one sideband; "
                      "their contributions were summed", SidebandOverlapWarning, stacklevel=2)
    excitation = np.clip(excitation, 0.0, 1.0)
    return [SpectrumPoint(float(d), float(e)) for d, e in zip(detunings, excitation)]


# ---------------------------------------------------------------------------
# coherent model for cooled crystals

def thermal_weights(nbar: float, n_max: int = THERMAL_MAX) -> np.ndarray:
    """Thermal occupation of 0..n_max renormalised on that range."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    if nbar == 0:
        w = np.zeros(n_max + 1)
        w[0] = 1.0
        return w
    r = nbar / (nbar + 1.0)
    w = r ** np.arange(n_max + 1)
    return w / w.sum()


@dataclass
class CoherentModel:
    """Thermal mixture of Fock states probed coherently on a few ions.

    eta: signed per-ion Lamb-Dicke parameters, shape (n_ions, n_modes).
    ion_offsets: carrier shift of each ion in Hz (the string's 2 kHz split).
    """

    eta: np.ndarray
    mode_freqs: tuple[float, ...]
    duration: float
    ion_offsets: tuple[float, ...] = (0.0, 0.0)
    cutoff: int = DEFAULT_CUTOFF
    thermal_max: int = THERMAL_MAX
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.mode_freqs = tuple(float(f) for f in self.mode_freqs)
        self.ion_offsets = tuple(float(o) for o in self.ion_offsets)
        if len(self.ion_offsets) != self.n_ions:
            raise ValueError("one carrier offset per ion is required")
        if self.thermal_max >= self.cutoff:
            raise ValueError("cutoff must exceed thermal_max")

    @property
    def n_ions(self) -> int:
        return self.eta.shape[0]

    @property
    def n_modes(self) -> int:
        return self.eta.shape[1]

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return (self.cutoff,) * self.n_modes

    def initial_states(self) -> list[tuple[int, ...]]:
        return list(itertools.product(range(self.thermal_max + 1), repeat=self.n_modes))

    def _columns(self) -> np.ndarray:
        # |down...down> block comes first, so motional index is the flat index
        return np.array([np.ravel_multi_index(s, self.cutoffs) for s in self.initial_states()])

    def joint_table(self, detunings: Sequence[float], rabi: float, offset: float = 0.0) -> np.ndarray:
        """Joint internal populations, shape (n_points, n_initial, 2, ..., 2)."""
        detunings = np.asarray(detunings, dtype=float)
        key = (detunings.tobytes(), float(rabi), float(offset))
        if key in self._cache:
            return self._cache[key]
        laser = detunings[:, None] - offset - np.asarray(self.ion_offsets)[None, :]
        cols = self._columns()
        shape = (2,) * self.n_ions + self.cutoffs
        out = np.empty((len(detunings), len(cols)) + (2,) * self.n_ions)
        for start in range(0, len(detunings), _BATCH):
            sl = slice(start, start + _BATCH)
            h, _ = frame_hamiltonian(self.eta, self.mode_freqs, laser[sl], rabi, self.cutoffs)
            pops = propagate_populations(h, cols, self.duration)      # (b, D, S)
            pops = np.moveaxis(pops, 2, 1).reshape((pops.shape[0], len(cols)) + shape)
            out[sl] = pops.sum(axis=tuple(range(2 + self.n_ions, 2 + self.n_ions + self.n_modes)))
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out

    def excitation_table(self, detunings: Sequence[float], rabi: float, offset: float,
                         observable: Observable | str, ion: int = 0) -> np.ndarray:
        """Observable for each detuning and initial Fock state, shape (n_points, n_initial)."""
        joint = self.joint_table(detunings, rabi, offset)
        return np.asarray(detection_observable(joint, observable, ion, n_ions=self.n_ions))

    def mixture_weights(self, nbars: Sequence[float]) -> np.ndarray:
        w = np.ones(1)
        for nb in nbars:
            w = np.outer(w, thermal_weights(nb, self.thermal_max)).ravel()
        return w

    def spectrum(self, detunings: Sequence[float], nbars: Sequence[float], rabi: float, offset: float,
                 observable: Observable | str, ion: int = 0) -> np.ndarray:
        table = self.excitation_table(detunings, rabi, offset, observable, ion)
        return np.clip(table @ self.mixture_weights(nbars), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Gaussian broadening

def gaussian_smooth(values: np.ndarray, step: float, sigma: float) -> np.ndarray:
    """Convolve uniformly sampled values with a unit-area Gaussian.

    The discrete kernel is normalised over the points that exist, so the
    window edges are not pulled towards zero.
    """
    values = np.asarray(values, dtype=float)
    if sigma <= 0 or values.size < 2:
        return values.copy()
    x = np.arange(values.size) * step
    kernel = np.exp(-0.5 * ((x[:, None] - x[None, :]) / sigma) ** 2)
    return (kernel @ values) / kernel.sum(axis=1)


def _uniform_step(x: np.ndarray) -> float:
    steps = np.diff(x)
    if steps.size == 0:
        return 1.0
    step = float(np.median(steps))
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-6 * abs(step) + 1e-9:
        raise ValueError("convolution needs a uniform detuning grid inside the window")
    return step


def convolve_gaussian(spectrum: Sequence[SpectrumPoint], sigma: float,
                      region: tuple[float, float]) -> list[SpectrumPoint]:
    """Broaden the points whose detuning lies in ``region``; others pass through."""
    lo, hi = region
    if sigma > 0 and hi - lo < 3 * sigma:
        warnings.warn(f"window {hi - lo:.3g} Hz is narrower than 3 sigma", RuntimeWarning, stacklevel=2)
    det = np.array([p.detuning for p in spectrum])
    order = np.argsort(det, kind="stable")
    inside = order[(det[order] >= lo) & (det[order] <= hi)]
    out = list(spectrum)
    if sigma <= 0 or inside.size < 2:
        return out
    step = _uniform_step(det[inside])
    smoothed = gaussian_smooth(np.array([spectrum[i].excitation for i in inside]), step, sigma)
    for i, v in zip(inside, smoothed):
        p = spectrum[i]
        out[i] = SpectrumPoint(p.detuning, float(min(max(v, 0.0), 1.0)), p.observable, p.shots, p.ion)
    return out


@dataclass(frozen=True)
class BroadeningRegion:
    mode: int
    lo: float
    hi: float


def default_regions(mode_freqs: Sequence[float], half_width: float, offset: float = 0.0) -> list[BroadeningRegion]:
    """Windows around the first red and blue sideband of each mode.

    Neighbouring windows of the same sign are split at the midpoint between
    the two sideband frequencies.
    """
    regions = []
    freqs = list(mode_freqs)
    for k, f in enumerate(freqs):
        lo, hi = f - half_width, f + half_width
        for j, g in enumerate(freqs):
            if j == k or abs(g - f) >= 2 * half_width:
                continue
            mid = 0.5 * (f + g)
            if g < f:
                lo = max(lo, mid)
            else:
                hi = min(hi, mid)
        for sign in (1, -1):
            a, b = sorted((sign * lo, sign * hi))
            regions.append(BroadeningRegion(k, a + offset, b + offset))
    return regions


def apply_broadening(detunings: np.ndarray, values: np.ndarray, sigmas: Sequence[float],
                     regions: Sequence[BroadeningRegion]) -> np.ndarray:
    """Array version of convolve_gaussian over several mode regions."""
    out = np.array(values, dtype=float, copy=True)
    if not regions:
        return out
    order = np.argsort(detunings, kind="stable")
    sorted_det = detunings[order]
    for r in regions:
        sigma = sigmas[r.mode]
        if sigma <= 0:
            continue
        sel = order[(sorted_det >= r.lo) & (sorted_det < r.hi)]
        if sel.size < 2:
            continue
        out[sel] = gaussian_smooth(values[sel], _uniform_step(detunings[sel]), sigma)
    return out


def window_grid(centres: Iterable[float], half_width: float, step: float) -> np.ndarray:
    """Points of the lattice ``k * step`` lying within half_width of any centre.

    Using one lattice keeps overlapping windows uniformly sampled.
    """
    keys: set[int] = set()
    for c in centres:
        lo = math.ceil((c - half_width) / step - 1e-9)
        hi = math.floor((c + half_width) / step + 1e-9)
        keys.update(range(lo, hi + 1))
    return np.array(sorted(keys), dtype=float) * step


# ---------------------------------------------------------------------------
# synthetic data

def synthesize_spectrum(model: CoherentModel, detunings: Sequence[float], nbars: Sequence[float],
                        rabi: float, observable: Observable | str, ion: int = 0, offset: float = 0.0,
                        shots: int = 200, rng: np.random.Generator | None = None,
                        sigmas: Sequence[float] | None = None,
                        regions: Sequence[BroadeningRegion] | None = None,
                        region_half_width: float = 10e3) -> list[SpectrumPoint]:
    """Noisy spectrum: exact model, optional broadening, then binomial sampling.

    ``shots=0`` returns the noiseless probabilities. Broadening regions
    default to windows around the (offset) sidebands of every mode.
    """
    detunings = np.asarray(detunings, dtype=float)
    p = model.spectrum(detunings, nbars, rabi, offset, observable, ion)
    if sigmas is not None:
        if regions is None:
            regions = default_regions(model.mode_freqs, region_half_width, offset)
        p = np.clip(apply_broadening(detunings, p, sigmas, regions), 0.0, 1.0)
    if shots:
        rng = np.random.default_rng() if rng is None else rng
        p = rng.binomial(shots, p) / shots
    observable = Observable(observable)
    return [SpectrumPoint(float(d), float(v), observable, shots, ion) for d, v in zip(detunings, p)]


def rotational_sideband_annotations(mode_freqs: Sequence[float], rotation: float,
                                    misalignment: float) -> list[dict]:
    """Labels for features offset by the crystal rotation from each axial peak.

    Only produced when a non-zero misalignment coefficient is given; the
    coefficient is carried through as a relative strength and no dynamics
    are attached to it.
    """
    if misalignment == 0:
        return []
    notes = []
    peaks = [("carrier", 0.0)]
    for k, f in enumerate(mode_freqs):
        peaks += [(f"red{k + 1}", -f), (f"blue{k + 1}", f)]
    for name, f in peaks:
        for sign, tag in ((-1, "-rot"), (1, "+rot")):
            notes.append({"label": f"{name}{tag}", "detuning_hz": f + sign * rotation,
                          "relative_strength": float(misalignment)})
    return notes
