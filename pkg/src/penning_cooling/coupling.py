"""Sideband coupling strengths outside the Lamb-Dicke regime.

The relative Rabi frequency of a transition ``n -> n'`` on one motional mode is

    sqrt(n_<! / n_>!) * eta**|n' - n| * exp(-eta**2 / 2) * L_{n_<}^{|n' - n|}(eta**2)

and for two modes the coupling is the product of the single-mode factors.
Everything here is normalised to a bare Rabi frequency of one.

Laguerre polynomials come from the three-term recurrence in ``n`` at a fixed
argument, and the factorial ratio is taken in log form so nothing
overflows for phonon numbers in the thousands.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.special import gammaln

DARK_FRACTION = 0.02
MAX_ORDER = 4


@dataclass(frozen=True, order=True)
class SidebandOrder:
    """Phonon-number change on each mode; negative is a red sideband."""

    delta_n1: int
    delta_n2: int = 0

    def __post_init__(self):
        if abs(self.delta_n1) > MAX_ORDER or abs(self.delta_n2) > MAX_ORDER:
            raise ValueError(f"sideband order beyond +-{MAX_ORDER}: {self}")

    @property
    def is_carrier(self) -> bool:
        return self.delta_n1 == 0 and self.delta_n2 == 0

    @property
    def is_red(self) -> bool:
        return self.delta_n1 < 0 or self.delta_n2 < 0

    def __str__(self):
        return f"{self.delta_n1},{self.delta_n2}"


CARRIER = SidebandOrder(0, 0)


def laguerre_table(n_max: int, alpha: int, x: float) -> np.ndarray:
    """[L_0^alpha(x), ..., L_n_max^alpha(x)] by upward recurrence."""
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + alpha - x
    for k in range(2, n_max + 1):
        out[k] = ((2 * k - 1 + alpha - x) * out[k - 1] - (k - 1 + alpha) * out[k - 2]) / k
    return out


def _log_factorial_ratio(n_low: np.ndarray, step: int) -> np.ndarray:
    """log(n_low! / (n_low + step)!) without evaluating either factorial."""
    n_low = np.asarray(n_low, dtype=float)
    return gammaln(n_low + 1) - gammaln(n_low + step + 1)


def rabi_curve(eta: float, delta_n: int, n_max: int) -> np.ndarray:
    """Relative Rabi frequency of ``n -> n + delta_n`` for n = 0..n_max.

    Entries whose target would be negative are zero. Values are signed; take
    ``abs`` for a coupling magnitude.
    """
    step = abs(delta_n)
    out = np.zeros(n_max + 1)
    if eta == 0:
        if step == 0:
            out[:] = 1.0
        return out
    x = eta * eta
    # n_low is min(n, n + delta_n); for red sidebands the curve is shifted by step
    n_low_max = n_max if delta_n >= 0 else n_max - step
    if n_low_max < 0:
        return out
    lag = laguerre_table(n_low_max, step, x)
    n_low = np.arange(n_low_max + 1)
    logpref = 0.5 * _log_factorial_ratio(n_low, step) + step * math.log(eta) - x / 2
    values = np.exp(logpref) * lag
    if delta_n >= 0:
        out[:] = values
    else:
        out[step:] = values
    return out


def relative_rabi(n: int, n_prime: int, eta: float) -> float:
    """Coupling between Fock states n and n' relative to the bare Rabi frequency."""
    if n < 0 or n_prime < 0:
        raise ValueError("phonon numbers must be non-negative")
    lo, hi = min(n, n_prime), max(n, n_prime)
    return float(rabi_curve(eta, hi - lo, lo)[lo])


def two_mode_rabi(n1: int, n1_prime: int, n2: int, n2_prime: int, eta1: float, eta2: float) -> float:
    return relative_rabi(n1, n1_prime, eta1) * relative_rabi(n2, n2_prime, eta2)


def sideband_grid(sideband: SidebandOrder, eta: Sequence[float], n_max: Sequence[int]) -> np.ndarray:
    """|Omega_{s -> s + sideband}| / Omega_0 for every start state s on the grid.

    States whose target leaves the grid from below are zero; targets above the
    grid still count (the coupling is defined regardless of truncation).
    """
    c1 = rabi_curve(eta[0], sideband.delta_n1, n_max[0])
    c2 = rabi_curve(eta[1], sideband.delta_n2, n_max[1])
    return np.abs(np.outer(c1, c2))


def strength_curve(eta: float, order: int, n_max: int) -> np.ndarray:
    """|coupling| of the ``order``-th red sideband (0 = carrier) against start n."""
    return np.abs(rabi_curve(eta, -order, n_max))


def find_minima(eta: float, order: int, n_max: int, dark_fraction: float = DARK_FRACTION) -> list[int]:
    """Start phonon numbers where the red sideband of `order` nearly vanishes.

    A point qualifies when it is a local minimum of the strength curve and its
    strength is below ``dark_fraction`` times the curve maximum.
    """
    if n_max < 2 or order < 0:
        raise ValueError("need n_max >= 2 and order >= 0")
    s = strength_curve(eta, order, n_max + 1)
    threshold = dark_fraction * s.max()
    # states below `order` cannot drive the sideband at all; they are not minima
    return [n for n in range(order + 1, n_max + 1)
            if s[n] <= s[n - 1] and s[n] <= s[n + 1] and s[n] < threshold]


@dataclass(frozen=True)
class StrengthMap:
    grid: np.ndarray
    sidebands: tuple[SidebandOrder, ...]
    eta: tuple[float, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def threshold(self, dark_fraction: float = DARK_FRACTION) -> float:
        return dark_fraction * float(self.grid.max())

    def dark_mask(self, dark_fraction: float = DARK_FRACTION) -> np.ndarray:
        """Cells below threshold, excluding the motional ground state."""
        mask = self.grid < self.threshold(dark_fraction)
        mask[0, 0] = False
        return mask

    def dark_components(self, dark_fraction: float = DARK_FRACTION) -> list[np.ndarray]:
        """Boolean masks of the 4-connected dark regions."""
        labels, count = ndimage.label(self.dark_mask(dark_fraction))
        return [labels == k for k in range(1, count + 1)]

    def component_containing(self, cell: tuple[int, int], window: int = 0,
                             dark_fraction: float = DARK_FRACTION) -> np.ndarray | None:
        """Dark component touching the square of half-width `window` around `cell`."""
        labels, _ = ndimage.label(self.dark_mask(dark_fraction))
        i, j = cell
        patch = labels[max(i - window, 0):i + window + 1, max(j - window, 0):j + window + 1]
        hits = np.unique(patch[patch > 0])
        if hits.size == 0:
            return None
        return np.isin(labels, hits)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n1", "n2", "strength"])
            for (i, j), v in np.ndenumerate(self.grid):
                w.writerow([i, j, repr(float(v))])


def read_strength_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n1 = max(int(r["n1"]) for r in rows) + 1
    n2 = max(int(r["n2"]) for r in rows) + 1
    grid = np.zeros((n1, n2))
    for r in rows:
        grid[int(r["n1"]), int(r["n2"])] = float(r["strength"])
    return grid


def strength_map(sidebands: Iterable[SidebandOrder], eta: Sequence[float],
                 n_max: Sequence[int] = (300, 300)) -> StrengthMap:
    """Best available coupling over a set of sidebands for each start state."""
    sidebands = tuple(sidebands)
    if not sidebands:
        raise ValueError("need at least one sideband")
    grid = np.zeros((n_max[0] + 1, n_max[1] + 1))
    for sb in sidebands:
        np.maximum(grid, sideband_grid(sb, eta, n_max), out=grid)
    return StrengthMap(grid, sidebands, (float(eta[0]), float(eta[1])))
