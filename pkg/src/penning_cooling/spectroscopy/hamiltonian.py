"""Coherent probe dynamics of a few ions in the Lamb-Dicke regime.

The interaction-picture Hamiltonian keeps the carrier with its Debye-Waller
factor ``1 - sum_k eta_k^2 (n_k + 1/2)`` and the first red and blue sidebands of
every mode, including the terms rotating at the mode frequencies. Written in
the frame

    H0 = -sum_k nu_k a_k^dag a_k + sum_j delta_j |up_j><up_j|

it becomes time independent, so a probe pulse is exactly
``psi_I(t) = exp(i H0 t) exp(-i (H0 + H_S) t) psi(0)``. ``delta_j`` is the
laser detuning from ion j's carrier (rad/s); red sidebands sit at
negative detuning.

A diagonal gauge ``i**(n_1 + ... + n_K)`` on the Fock basis makes ``H0 + H_S``
real symmetric, which halves the cost of the eigendecompositions.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

NORM_TOLERANCE = 1e-8


class Observable(str, enum.Enum):
    SINGLE_ION = "single_ion"
    AT_LEAST_ONE_BRIGHT = "at_least_one_bright"    # P(at least one ion in S)
    AT_LEAST_ONE_EXCITED = "at_least_one_excited"  # P(at least one ion in D)
    BOTH_EXCITED = "both_excited"                  # P(every ion in D)


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbePulse:
    detuning: float
    duration: float
    rabi_frequency: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("probe duration must be positive")


@dataclass
class IonState:
    """Amplitudes over (ion_1, ..., ion_N, mode_1, ..., mode_K); |down> = 0."""

    amplitudes: np.ndarray
    n_ions: int
    cutoffs: tuple[int, ...]

    @classmethod
    def fock(cls, n_ions: int, cutoffs: Sequence[int], phonons: Sequence[int],
             excited: Sequence[int] | None = None) -> "IonState":
        cutoffs = tuple(cutoffs)
        amps = np.zeros((2,) * n_ions + cutoffs, dtype=complex)
        spins = tuple(excited) if excited is not None else (0,) * n_ions
        amps[spins + tuple(phonons)] = 1.0
        return cls(amps.ravel(), n_ions, cutoffs)

    @property
    def shape(self) -> tuple[int, ...]:
        return (2,) * self.n_ions + self.cutoffs

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def joint_populations(self) -> np.ndarray:
        """Internal-state probabilities, shape (2,) * n_ions."""
        p = np.abs(self.amplitudes.reshape(self.shape)) ** 2
        return p.sum(axis=tuple(range(self.n_ions, self.n_ions + len(self.cutoffs))))


# TwoIonState is the two-ion case of the same container
TwoIonState = IonState


@lru_cache(maxsize=32)
def _operators(n_ions: int, cutoffs: tuple[int, ...]):
    """Number operators (diagonals) and gauge-real quadratures for each mode.

    After the i**n gauge the operator i (a + a^dag) becomes the real matrix
    X_k with <m|X|n> = i^(n-m) <m|i(a+a^dag)|n>, i.e. a^dag - a.
    """
    dim_m = int(np.prod(cutoffs))
    numbers = []
    quads = []
    for k, c in enumerate(cutoffs):
        eye_before = int(np.prod(cutoffs[:k]))
        eye_after = int(np.prod(cutoffs[k + 1:]))
        n = np.arange(c, dtype=float)
        numbers.append(np.kron(np.kron(np.ones(eye_before), n), np.ones(eye_after)))
        x = np.zeros((c, c))
        for m in range(c - 1):
            # <m|a|m+1> = sqrt(m+1): phase i * i^(+1) = -1 ; <m+1|a^dag|m>: i * i^(-1) = +1
            x[m, m + 1] = -math.sqrt(m + 1)
            x[m + 1, m] = math.sqrt(m + 1)
        quads.append(np.kron(np.kron(np.eye(eye_before), x), np.eye(eye_after)))
    return dim_m, numbers, quads


def _gauge(cutoffs: tuple[int, ...]) -> np.ndarray:
    total = np.zeros(1, dtype=int)
    for c in cutoffs:
        total = (total[:, None] + np.arange(c)[None, :]).ravel()
    return 1j ** total


def frame_hamiltonian(eta: np.ndarray, mode_freqs: Sequence[float], laser_detunings: np.ndarray,
                      rabi: float, cutoffs: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Real symmetric frame Hamiltonians (rad/s) for a batch of detunings.

    eta: signed per-ion Lamb-Dicke parameters, shape (n_ions, n_modes).
    laser_detunings: laser minus carrier for each ion in Hz, shape (batch, n_ions).
    Returns ``(H, h0)`` with H of shape (batch, D, D) and h0 the diagonal of H0,
    shape (batch, D).
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    n_ions, n_modes = eta.shape
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != n_modes or len(mode_freqs) != n_modes:
        raise ValueError("eta, mode_freqs and cutoffs disagree on the number of modes")
    laser_detunings = np.atleast_2d(np.asarray(laser_detunings, dtype=float))
    dim_m, numbers, quads = _operators(n_ions, cutoffs)
    dim_s = 2**n_ions
    dim = dim_s * dim_m
    omega = 2 * math.pi * rabi

    # spin-independent motional diagonal of H0
    motional = -sum(2 * math.pi * nu * n for nu, n in zip(mode_freqs, numbers))
    spins = np.array(np.unravel_index(np.arange(dim_s), (2,) * n_ions)).T  # (dim_s, n_ions)
    delta = 2 * math.pi * laser_detunings                                 # (batch, n_ions)
    h0 = (spins @ delta.T).T[:, :, None] + motional[None, None, :]        # (batch, dim_s, dim_m)
    h0 = h0.reshape(len(laser_detunings), dim)

    coupling = np.zeros((dim, dim))
    for j in range(n_ions):
        carrier = 1.0 - sum(eta[j, k] ** 2 * (numbers[k] + 0.5) for k in range(n_modes))
        d_op = np.diag(carrier) + sum(eta[j, k] * quads[k] for k in range(n_modes))
        # sigma_j^- couples |..up_j..> (column) to |..down_j..> (row)
        lower = np.zeros((dim_s, dim_s))
        for s in range(dim_s):
            if spins[s, j] == 1:
                t = s - 2 ** (n_ions - 1 - j)
                lower[t, s] = 1.0
        block = np.kron(lower, d_op)
        coupling += block + block.T
    h = np.broadcast_to(0.5 * omega * coupling, (len(laser_detunings), dim, dim)).copy()
    idx = np.arange(dim)
    h[:, idx, idx] += h0
    return h, h0


def propagate(h: np.ndarray, h0: np.ndarray, columns: np.ndarray, t: float,
              cutoffs: Sequence[int], n_ions: int) -> np.ndarray:
    """Interaction-picture amplitudes at time t for basis-state initial conditions.

    columns: indices of the initial basis states (in the physical basis).
    Returns complex array (batch, D, len(columns)).
    """
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * t)                                   # (batch, D)
    gauge = np.tile(_gauge(tuple(cutoffs)), 2**n_ions)
    # physical |s> = gauge_s |s>_real, so the real-frame initial vector picks up conj(gauge_s)
    rows = v[:, columns, :]                                       # (batch, S, D)
    coeff = phase[:, :, None] * np.conj(gauge[columns])[None, None, :] * np.swapaxes(rows, 1, 2)
    psi_real = v @ coeff                                          # (batch, D, S)
    psi = gauge[None, :, None] * psi_real
    return np.exp(1j * h0 * t)[:, :, None] * psi


def propagate_populations(h: np.ndarray, columns: np.ndarray, t: float) -> np.ndarray:
    """|amplitude|^2 at time t for basis-state initial conditions, shape (batch, D, S).

    Diagonal phases (the frame and the gauge) drop out of populations, so
    only the real eigenvectors and two real products are needed.
    """
    w, v = np.linalg.eigh(h)
    rows = np.swapaxes(v[:, columns, :], 1, 2)                    # (batch, D, S)
    re = v @ (np.cos(w * t)[:, :, None] * rows)
    im = v @ (np.sin(w * t)[:, :, None] * rows)
    return re * re + im * im


def evolve_ions(state: IonState, probe: ProbePulse, eta: np.ndarray, mode_freqs: Sequence[float],
                t: float | None = None, ion_offsets: Sequence[float] | None = None) -> IonState:
    """Evolve an arbitrary state for time t (default: the probe duration).

    ion_offsets shifts each ion's carrier (Hz); the laser detuning seen by ion j
    is ``probe.detuning - ion_offsets[j]``.
    """
    t = probe.duration if t is None else t
    check_lamb_dicke(state, eta)
    offsets = np.zeros(state.n_ions) if ion_offsets is None else np.asarray(ion_offsets, float)
    h, h0 = frame_hamiltonian(eta, mode_freqs, (probe.detuning - offsets)[None, :],
                              probe.rabi_frequency, state.cutoffs)
    w, v = np.linalg.eigh(h[0])
    gauge = np.tile(_gauge(state.cutoffs), 2**state.n_ions)
    psi_real = v @ (np.exp(-1j * w * t) * (v.T @ (np.conj(gauge) * state.amplitudes)))
    out = np.exp(1j * h0[0] * t) * (gauge * psi_real)
    drift = abs(np.linalg.norm(out) - state.norm())
    if drift > NORM_TOLERANCE:
        raise NormDriftError(f"norm drifted by {drift:.2e}")
    return IonState(out, state.n_ions, state.cutoffs)


def check_lamb_dicke(state: IonState, eta: np.ndarray, limit: float = 0.5) -> float:
    """Warn when eta * sqrt(2 <n> + 1) reaches `limit` on any mode; returns the worst value."""
    p = np.abs(state.amplitudes.reshape(state.shape)) ** 2
    p = p.sum(axis=tuple(range(state.n_ions)))
    eta = np.atleast_2d(np.abs(np.asarray(eta, dtype=float)))
    worst = 0.0
    for k, c in enumerate(state.cutoffs):
        marginal = p.sum(axis=tuple(a for a in range(p.ndim) if a != k))
        nbar = float(np.arange(c) @ marginal)
        worst = max(worst, float(eta[:, k].max()) * math.sqrt(2 * nbar + 1))
    if worst >= limit:
        warnings.warn(f"eta*sqrt(2n+1) = {worst:.2f}; outside the Lamb-Dicke regime",
                      RuntimeWarning, stacklevel=3)
    return worst


def evolve_two_ion(state: IonState, probe: ProbePulse, eta: np.ndarray, mode_freqs: Sequence[float],
                   t: float | None = None, ion_offsets: Sequence[float] = (0.0, 0.0)) -> IonState:
    if state.n_ions != 2:
        raise ValueError("expected a two-ion state")
    return evolve_ions(state, probe, eta, mode_freqs, t, ion_offsets)


def detection_observable(joint: np.ndarray, observable: Observable | str, ion: int = 0,
                         n_ions: int | None = None) -> float | np.ndarray:
    """Map joint internal populations (..., 2, 2[, 2]) to a detection probability.

    The trailing ``n_ions`` axes index the ions; leading axes broadcast.
    Index 1 is the shelved (dark, D_5/2) state. Pass ``n_ions`` whenever a
    leading axis may itself have length 2; otherwise it is inferred.
    """
    observable = Observable(observable)
    joint = np.asarray(joint)
    n_ions = _trailing_ions(joint) if n_ions is None else n_ions
    if joint.ndim < n_ions or any(s != 2 for s in joint.shape[joint.ndim - n_ions:]):
        raise ValueError(f"expected {n_ions} trailing ion axes of length 2, got shape {joint.shape}")
    axes = tuple(range(joint.ndim - n_ions, joint.ndim))
    all_down = joint[(...,) + (0,) * n_ions]
    all_up = joint[(...,) + (1,) * n_ions]
    if observable is Observable.SINGLE_ION:
        others = tuple(a for a in axes if a != axes[ion])
        marginal = joint.sum(axis=others) if others else joint
        return marginal[..., 1]
    if observable is Observable.BOTH_EXCITED:
        return all_up
    if observable is Observable.AT_LEAST_ONE_EXCITED:
        return joint.sum(axis=axes) - all_down
    return joint.sum(axis=axes) - all_up


def _trailing_ions(joint: np.ndarray) -> int:
    n = 0
    for size in reversed(joint.shape):
        if size != 2:
            break
        n += 1
    return min(n, 3) if n else 1
