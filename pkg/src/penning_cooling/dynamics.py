"""Rate model for multi-pulse sideband cooling of two axial modes.

Population lives on a truncated grid P(n1, n2). A pulse of duration tau with
the quench laser on is split into ``K = ceil(gamma * tau)`` excite-decay cycles
of length ``tau / K``. In each cycle a start state s moves to its sideband
target with probability

    sin^2(x / 2)                  for x <= pi
    (1 - exp(-x^2 / 2)) / 2       for x >  pi

where ``x = Omega_s * tau / K`` and Omega_s is the state-dependent coupling.
Decay back to S_1/2 leaves the phonon numbers unchanged (recoil neglected).
With ``gamma = 0`` the pulse is a single coherent cycle.

Rabi frequencies are cyclic (Hz); the quench decay rate is a rate in 1/s.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .coupling import SidebandOrder, sideband_grid

log = logging.getLogger(__name__)

DEFAULT_RABI = 14e3
DEFAULT_DECAY_RATE = 2 * math.pi * 5e3
LEAKAGE_LIMIT = 1e-6
DEFAULT_TAIL = 1e-9


class TruncationError(RuntimeError):
    """Population reached the edge of the phonon grid."""


@dataclass
class PhononDistribution:
    probs: np.ndarray
    labels: tuple[str, str] = ("COM", "B")
    leakage: float = 0.0

    def __post_init__(self):
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if np.any(self.probs < -1e-15):
            raise ValueError("negative probabilities")

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def n_max(self) -> tuple[int, int]:
        return self.probs.shape[0] - 1, self.probs.shape[1] - 1

    def total(self) -> float:
        return float(self.probs.sum())

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.probs.sum(axis=1), self.probs.sum(axis=0)

    def nbar(self) -> tuple[float, float]:
        p1, p2 = self.marginals()
        return float(np.arange(p1.size) @ p1), float(np.arange(p2.size) @ p2)

    def ground_occupation(self) -> tuple[float, float]:
        p1, p2 = self.marginals()
        return float(p1[0]), float(p2[0])

    def mass_in(self, mask: np.ndarray) -> float:
        n1 = min(mask.shape[0], self.shape[0])
        n2 = min(mask.shape[1], self.shape[1])
        return float(self.probs[:n1, :n2][mask[:n1, :n2]].sum())

    def padded(self, n_max: Sequence[int]) -> "PhononDistribution":
        """Copy on a grid at least ``n_max`` in each direction."""
        s1 = max(n_max[0] + 1, self.shape[0])
        s2 = max(n_max[1] + 1, self.shape[1])
        out = np.zeros((s1, s2))
        out[: self.shape[0], : self.shape[1]] = self.probs
        return replace(self, probs=out)

    def to_csv(self, path, threshold: float = 0.0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n1", "n2", "prob"])
            for (i, j), v in np.ndenumerate(self.probs):
                if v > threshold or (i, j) == (self.shape[0] - 1, self.shape[1] - 1):
                    w.writerow([i, j, repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "PhononDistribution":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        n1 = max(int(r["n1"]) for r in rows) + 1
        n2 = max(int(r["n2"]) for r in rows) + 1
        probs = np.zeros((n1, n2))
        for r in rows:
            probs[int(r["n1"]), int(r["n2"])] = float(r["prob"])
        return cls(probs)


def _geometric_ratio(nbar: float) -> float:
    return nbar / (nbar + 1.0)


def thermal_cutoff(nbar: float, tail: float = DEFAULT_TAIL) -> int:
    """Smallest n_max whose thermal tail beyond it is below `tail`."""
    if nbar <= 0:
        return 0
    q = _geometric_ratio(nbar)
    return max(int(math.ceil(math.log(tail) / math.log(q))) - 1, 1)


def thermal_distribution(nbar1: float, nbar2: float = 0.0, n_max: Sequence[int] | None = None,
                         tail: float = DEFAULT_TAIL) -> PhononDistribution:
    """Product of two thermal (geometric) distributions, renormalised on the grid.

    With ``n_max=None`` the grid is sized so each mode's tail is below `tail`.
    """
    if nbar1 < 0 or nbar2 < 0:
        raise ValueError("mean phonon numbers must be non-negative")
    if n_max is None:
        n_max = (thermal_cutoff(nbar1, tail), thermal_cutoff(nbar2, tail))
    marg = []
    kept = 1.0
    for nbar, top in zip((nbar1, nbar2), n_max):
        q = _geometric_ratio(nbar)
        n = np.arange(top + 1)
        p = (1 - q) * q**n
        kept *= 1 - q ** (top + 1)
        marg.append(p)
    if 1 - kept > LEAKAGE_LIMIT:
        raise TruncationError(
            f"grid {tuple(n_max)} drops {1 - kept:.3g} of the thermal population"
        )
    probs = np.outer(*marg)
    return PhononDistribution(probs / probs.sum())


@dataclass(frozen=True)
class PulseSpec:
    sideband: SidebandOrder
    duration: float
    rabi_frequency: float = DEFAULT_RABI
    repeats: int = 1

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    @property
    def total_time(self) -> float:
        return self.duration * self.repeats


@dataclass(frozen=True)
class Block:
    pulses: tuple[PulseSpec, ...]
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("block repeats must be >= 1")


@dataclass(frozen=True)
class CoolingSequence:
    blocks: tuple[Block, ...]

    def __post_init__(self):
        if not self.blocks or any(not b.pulses for b in self.blocks):
            raise ValueError("a cooling sequence needs at least one pulse")

    def pulses(self) -> Iterable[PulseSpec]:
        """Every pulse application in time order, repeats expanded."""
        for block in self.blocks:
            for _ in range(block.repeats):
                for pulse in block.pulses:
                    for _ in range(pulse.repeats):
                        yield replace(pulse, repeats=1)

    @property
    def total_time(self) -> float:
        return sum(b.repeats * sum(p.total_time for p in b.pulses) for b in self.blocks)

    def without(self, sideband: SidebandOrder) -> "CoolingSequence":
        blocks = []
        for b in self.blocks:
            kept = tuple(p for p in b.pulses if p.sideband != sideband)
            if kept:
                blocks.append(Block(kept, b.repeats))
        return CoolingSequence(tuple(blocks))

    def with_rabi(self, rabi: float) -> "CoolingSequence":
        return CoolingSequence(tuple(
            Block(tuple(replace(p, rabi_frequency=rabi) for p in b.pulses), b.repeats)
            for b in self.blocks))


def transfer_probability(x: np.ndarray) -> np.ndarray:
    """Per-cycle transfer for pulse area ``x = Omega * t`` (radians)."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= math.pi, np.sin(x / 2) ** 2, 0.5 * (1 - np.exp(-x**2 / 2)))


def cycles_per_pulse(duration: float, decay_rate: float) -> int:
    if decay_rate <= 0:
        return 1
    return max(1, math.ceil(decay_rate * duration - 1e-9))


@numba.njit(cache=True)
def _lowering_cycles(probs, p, d1, d2, cycles):
    # d1, d2 <= 0: ascending order visits each target before its source
    n1, n2 = probs.shape
    for _ in range(cycles):
        for i in range(-d1, n1):
            for j in range(-d2, n2):
                m = p[i, j] * probs[i, j]
                probs[i, j] -= m
                probs[i + d1, j + d2] += m


@numba.njit(cache=True)
def _general_cycles(probs, p, d1, d2, cycles):
    n1, n2 = probs.shape
    lost = 0.0
    for _ in range(cycles):
        for ii in range(n1):
            i = ii if d1 <= 0 else n1 - 1 - ii
            ti = i + d1
            for jj in range(n2):
                j = jj if d2 <= 0 else n2 - 1 - jj
                m = p[i, j] * probs[i, j]
                probs[i, j] -= m
                tj = j + d2
                if 0 <= ti < n1 and 0 <= tj < n2:
                    probs[ti, tj] += m
                else:
                    lost += m
    return lost


def _run_cycles(probs: np.ndarray, p: np.ndarray, d1: int, d2: int, cycles: int) -> float:
    """Apply `cycles` transfer steps in place; returns the mass pushed off the grid.

    States are visited target-first along the transfer direction, so every
    outflow is computed from the population at the start of the cycle.
    """
    if d1 <= 0 and d2 <= 0:
        # targets below zero have zero coupling, so nothing can leave the grid
        _lowering_cycles(probs, p, d1, d2, cycles)
        return 0.0
    return _general_cycles(probs, p, d1, d2, cycles)


def pulse_transfer_grid(shape: tuple[int, int], pulse: PulseSpec, eta: Sequence[float],
                        decay_rate: float) -> tuple[np.ndarray, int]:
    """Per-cycle transfer probability for every start state, and the cycle count."""
    k = cycles_per_pulse(pulse.duration, decay_rate)
    strength = sideband_grid(pulse.sideband, eta, (shape[0] - 1, shape[1] - 1))
    area = 2 * math.pi * pulse.rabi_frequency * strength * (pulse.duration / k)
    return transfer_probability(area), k


def apply_pulse(dist: PhononDistribution, pulse: PulseSpec, eta: Sequence[float],
                decay_rate: float = DEFAULT_DECAY_RATE, _cache: dict | None = None) -> PhononDistribution:
    """Apply one pulse (all of its repeats) to a phonon distribution."""
    key = (pulse.sideband, pulse.duration, pulse.rabi_frequency, dist.shape)
    if _cache is not None and key in _cache:
        p, k = _cache[key]
    else:
        p, k = pulse_transfer_grid(dist.shape, pulse, eta, decay_rate)
        if _cache is not None:
            _cache[key] = (p, k)
    probs = dist.probs.copy()
    d1, d2 = pulse.sideband.delta_n1, pulse.sideband.delta_n2
    lost = _run_cycles(probs, p, d1, d2, k * pulse.repeats)
    leakage = dist.leakage + lost
    if leakage > LEAKAGE_LIMIT:
        raise TruncationError(f"{leakage:.3g} of the population left the grid")
    probs /= probs.sum()
    return replace(dist, probs=probs, leakage=leakage)


def run_sequence(dist: PhononDistribution, seq: CoolingSequence, eta: Sequence[float],
                 decay_rate: float = DEFAULT_DECAY_RATE) -> tuple[PhononDistribution, tuple[float, float]]:
    cache: dict = {}
    for pulse in seq.pulses():
        dist = apply_pulse(dist, pulse, eta, decay_rate, _cache=cache)
    return dist, dist.nbar()


def _heating_generator(size: int, rate: float) -> sparse.csr_matrix:
    """Birth-death generator with d<n>/dt = rate; flux out of the top level is lost."""
    n = np.arange(size, dtype=float)
    up = rate * (n[:-1] + 1)      # n -> n + 1
    down = rate * n[1:]           # n -> n - 1
    diag = -rate * (2 * n + 1)
    return sparse.diags([up, diag, down], [-1, 0, 1], format="csr")


def apply_heating(dist: PhononDistribution, rates: Sequence[float], delay: float,
                  tail: float = 1e-12) -> PhononDistribution:
    """Evolve under the infinite-temperature heating master equation for `delay`.

    Each mode heats independently with d<n_k>/dt = rates[k]. The grid grows as
    needed to hold the heated tail.
    """
    if any(r < 0 for r in rates) or delay < 0:
        raise ValueError("heating rates and delay must be non-negative")
    if delay == 0 or not any(rates):
        return replace(dist, probs=dist.probs.copy())
    nbar = dist.nbar()
    need = []
    for k in range(2):
        if rates[k] == 0:
            need.append(dist.n_max[k])
            continue
        final = nbar[k] + rates[k] * delay
        need.append(max(dist.n_max[k], thermal_cutoff(final, tail) + 4 * int(math.sqrt(final + 1)) + 8))
    out = dist.padded(need)
    probs = out.probs
    if rates[0] > 0:
        g = _heating_generator(probs.shape[0], rates[0])
        probs = expm_multiply(g * delay, probs)
    if rates[1] > 0:
        g = _heating_generator(probs.shape[1], rates[1])
        probs = expm_multiply(g * delay, probs.T).T
    probs = np.clip(probs, 0.0, None)
    leakage = dist.leakage + (1.0 - float(probs.sum()))
    if leakage > LEAKAGE_LIMIT:
        raise TruncationError(f"heating pushed {leakage:.3g} of the population off the grid")
    return replace(out, probs=probs / probs.sum(), leakage=max(leakage, 0.0))


def _sb(d1, d2=0):
    return SidebandOrder(d1, d2)


COM1, COM2, COM3 = _sb(-1), _sb(-2), _sb(-3)
B1, B2 = _sb(0, -1), _sb(0, -2)
COM2_B1 = _sb(-2, -1)


def table1_sequence(rabi: float = DEFAULT_RABI) -> CoolingSequence:
    """Pulse sequence used on the two-ion string at 162 kHz (durations in us)."""
    def block(repeats, *pulses):
        return Block(tuple(PulseSpec(sb, t / 1e6, rabi) for sb, t in pulses), repeats)

    return CoolingSequence((
        block(15, (COM2, 500), (B2, 500), (COM3, 300), (B1, 200), (COM2_B1, 500)),
        block(2, (B1, 200), (COM2, 500), (COM1, 500), (COM2_B1, 500)),
        block(1, (COM2_B1, 500), (COM1, 2000), (B1, 500)),
    ))


TABLE1_SIDEBANDS = (COM1, COM2, COM3, B1, B2, COM2_B1)


# --- sequence search -------------------------------------------------------

def _cost(dist: PhononDistribution) -> float:
    return sum(dist.nbar())


def _flat(pulses: Sequence[PulseSpec]) -> CoolingSequence:
    return CoolingSequence((Block(tuple(pulses), 1),))


def sequence_cost(initial: PhononDistribution, pulses: Sequence[PulseSpec], eta, decay_rate) -> float:
    dist = initial
    cache: dict = {}
    for p in pulses:
        dist = apply_pulse(dist, p, eta, decay_rate, _cache=cache)
    return _cost(dist)


def round_robin(candidates: Sequence[SidebandOrder], budget: float, duration: float,
                rabi: float = DEFAULT_RABI) -> list[PulseSpec]:
    pulses = []
    t = 0.0
    i = 0
    while t + duration <= budget * (1 + 1e-12):
        pulses.append(PulseSpec(candidates[i % len(candidates)], duration, rabi))
        t += duration
        i += 1
    return pulses


@dataclass
class SearchTrace:
    baseline_cost: float = math.nan
    greedy_cost: float = math.nan
    final_cost: float = math.nan
    accepted_moves: int = 0
    history: list = field(default_factory=list)


def optimize_sequence(initial: PhononDistribution, eta: Sequence[float], budget: float,
                      candidate_sidebands: Sequence[SidebandOrder],
                      durations: Sequence[float] = (100e-6, 200e-6, 300e-6, 500e-6),
                      rabi: float = DEFAULT_RABI, decay_rate: float = DEFAULT_DECAY_RATE,
                      seed: int = 0, iterations: int = 200,
                      start: CoolingSequence | None = None,
                      trace: SearchTrace | None = None) -> CoolingSequence | None:
    """Greedy construction followed by seeded local search.

    The greedy stage appends, one at a time, the (sideband, duration) pair
    with the largest drop of n1 + n2 per unit time. Local search then tries
    pairwise swaps and duration changes and keeps any that lower the final
    n1 + n2. The result is never worse than a round-robin over the candidates
    with the longest duration, nor than `start` if one is given.
    """
    if budget <= 0 or not candidate_sidebands:
        raise ValueError("need a positive budget and at least one candidate sideband")
    durations = sorted(durations)
    if durations[0] > budget:
        warnings.warn(f"budget {budget:.3g} s is shorter than every pulse duration", stacklevel=2)
        return None
    trace = trace if trace is not None else SearchTrace()
    rng = np.random.default_rng(seed)

    def cost(pulses):
        return sequence_cost(initial, pulses, eta, decay_rate)

    baseline = round_robin(candidate_sidebands, budget, durations[-1], rabi)
    if not baseline:
        baseline = round_robin(candidate_sidebands, budget, durations[0], rabi)
    trace.baseline_cost = cost(baseline)

    # greedy, one pulse application at a time on the evolving distribution
    greedy: list[PulseSpec] = []
    dist = initial
    used = 0.0
    caches: dict = {}
    while True:
        best = None
        here = _cost(dist)
        for sb in candidate_sidebands:
            for t in durations:
                if used + t > budget * (1 + 1e-12):
                    continue
                p = PulseSpec(sb, t, rabi)
                trial = apply_pulse(dist, p, eta, decay_rate, _cache=caches)
                gain = (here - _cost(trial)) / t
                if best is None or gain > best[0]:
                    best = (gain, p, trial)
        if best is None or best[0] <= 0:
            break
        greedy.append(best[1])
        used += best[1].duration
        dist = best[2]
    trace.greedy_cost = _cost(dist) if greedy else math.inf

    pool = [(trace.baseline_cost, baseline)]
    if greedy:
        pool.append((trace.greedy_cost, greedy))
    if start is not None:
        flat = list(start.pulses())
        if sum(p.duration for p in flat) <= budget * (1 + 1e-12):
            pool.append((cost(flat), flat))
    current_cost, current = min(pool, key=lambda item: item[0])
    current = list(current)

    for _ in range(iterations):
        trial = list(current)
        if len(trial) >= 2 and rng.random() < 0.5:
            i, j = rng.choice(len(trial), size=2, replace=False)
            if trial[i].sideband == trial[j].sideband:
                continue
            trial[i], trial[j] = trial[j], trial[i]
        else:
            i = int(rng.integers(len(trial)))
            t = float(rng.choice(durations))
            if t == trial[i].duration:
                continue
            trial[i] = replace(trial[i], duration=t)
            if sum(p.duration for p in trial) > budget * (1 + 1e-12):
                continue
        c = cost(trial)
        if c < current_cost:
            current, current_cost = trial, c
            trace.accepted_moves += 1
            trace.history.append(c)
    trace.final_cost = current_cost
    log.info("sequence search: baseline %.4g, greedy %.4g, final %.4g",
             trace.baseline_cost, trace.greedy_cost, current_cost)
    return _flat(current)
