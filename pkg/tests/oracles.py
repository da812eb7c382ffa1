"""Independent reference calculations used by the tests.

Nothing here imports the package; each oracle is a brute-force version of a
quantity the package computes by a faster route.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm


def displacement_elements(eta: float, levels: int = 200) -> np.ndarray:
    """|<m| exp(i eta (a + a^dag)) |n>| on a truncated oscillator."""
    a = np.diag(np.sqrt(np.arange(1, levels)), 1)
    return np.abs(expm(1j * eta * (a + a.T)))


def thermal_tail(nbar: float, n_above: int) -> float:
    """P(n > n_above) for a thermal state, in closed form."""
    q = nbar / (nbar + 1.0)
    return q ** (n_above + 1)


def evolve_explicit(psi0, eta, mode_freqs, ion_detunings, rabi, cutoffs, t):
    """Integrate the time-dependent interaction-picture Hamiltonian directly.

    Carrier with Debye-Waller factor plus first red and blue sidebands of every
    mode, each carrying its explicit phase exp(i(+-nu - delta_j)t). State layout
    matches the package: (ion_1, ..., ion_N, mode_1, ..., mode_K), |down> = 0.
    """
    eta = np.atleast_2d(eta)
    n_ions, n_modes = eta.shape
    shape = (2,) * n_ions + tuple(cutoffs)
    index = {s: i for i, s in enumerate(itertools.product(*(range(d) for d in shape)))}
    omega = 2 * math.pi * rabi
    rows, cols, amps, freqs = [], [], [], []

    def couple(src, dst, amp, freq):
        rows.append(index[dst])
        cols.append(index[src])
        amps.append(amp)
        freqs.append(freq)

    for state in index:
        for j in range(n_ions):
            if state[j] != 1:
                continue
            down = list(state)
            down[j] = 0
            n = state[n_ions:]
            delta = 2 * math.pi * ion_detunings[j]
            dw = 1 - sum(eta[j, k] ** 2 * (n[k] + 0.5) for k in range(n_modes))
            couple(state, tuple(down), omega / 2 * dw, -delta)
            for k in range(n_modes):
                nu = 2 * math.pi * mode_freqs[k]
                if n[k] > 0:
                    lower = list(down)
                    lower[n_ions + k] -= 1
                    couple(state, tuple(lower), 0.5j * omega * eta[j, k] * math.sqrt(n[k]), nu - delta)
                if n[k] + 1 < cutoffs[k]:
                    upper = list(down)
                    upper[n_ions + k] += 1
                    couple(state, tuple(upper), 0.5j * omega * eta[j, k] * math.sqrt(n[k] + 1), -nu - delta)
    rows, cols = np.array(rows), np.array(cols)
    amps, freqs = np.array(amps), np.array(freqs)
    dim = len(index)

    def rhs(time, y):
        v = amps * np.exp(1j * freqs * time)
        out = np.zeros(dim, dtype=complex)
        np.add.at(out, rows, v * y[cols])
        np.add.at(out, cols, np.conj(v) * y[rows])
        return -1j * out

    sol = solve_ivp(rhs, (0.0, t), np.asarray(psi0, dtype=complex), method="DOP853", rtol=1e-11, atol=1e-12)
    return sol.y[:, -1]
