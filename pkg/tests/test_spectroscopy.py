import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import displacement_elements, evolve_explicit
from penning_cooling import workflows
from penning_cooling.config import load_config
from penning_cooling.dynamics import PhononDistribution, thermal_distribution
from penning_cooling.spectroscopy import (BroadeningRegion, CoherentModel, IonState, NormDriftError, Observable,
                                          ProbePulse, SidebandOverlapWarning, SpectrumPoint, apply_broadening,
                                          check_lamb_dicke, convolve_gaussian, default_regions,
                                          detection_observable, evolve_ions, evolve_two_ion, gaussian_smooth,
                                          read_spectrum_csv, simulate_spectrum_thermal, synthesize_spectrum,
                                          thermal_weights, window_grid, write_spectrum_csv)

STRING_ETA = np.array([[0.1703, 0.1294], [0.1703, -0.1294]])
STRING_FREQS = (162e3, math.sqrt(3) * 162e3)


# ---- coherent evolution against the explicit time-dependent integration ----

@pytest.mark.parametrize("detuning", [-162e3, 162e3, -280.6e3, 3e3])
@pytest.mark.parametrize("cutoff", [3, 4])
def test_matches_explicit_integration(detuning, cutoff):
    state = IonState.fock(2, (cutoff, cutoff), (1, 0))
    probe = ProbePulse(detuning, 60e-6, 14e3)
    out = evolve_two_ion(state, probe, STRING_ETA, STRING_FREQS, ion_offsets=(0.0, 2e3))
    ref = evolve_explicit(state.amplitudes, STRING_ETA, STRING_FREQS, (detuning, detuning - 2e3), 14e3,
                          (cutoff, cutoff), 60e-6)
    assert np.max(np.abs(out.amplitudes - ref)) < 1e-6


def test_three_ion_matches_explicit_integration():
    cfg = load_config(scenario="fig8")
    eta = cfg.signed_eta()
    freqs = cfg.modes().frequencies
    state = IonState.fock(3, (3, 3, 3), (0, 1, 0))
    probe = ProbePulse(-freqs[1], 40e-6, 14e3)
    out = evolve_ions(state, probe, eta, freqs)
    ref = evolve_explicit(state.amplitudes, eta, freqs, (-freqs[1],) * 3, 14e3, (3, 3, 3), 40e-6)
    assert np.max(np.abs(out.amplitudes - ref)) < 1e-6


@given(st.integers(0, 2**31), st.floats(-300e3, 300e3))
@settings(max_examples=10, deadline=None)
def test_norm_preserved_over_10_ms(seed, detuning):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=2 * 2 * 4 * 4) + 1j * rng.normal(size=2 * 2 * 4 * 4)
    # keep the motional state low so the Lamb-Dicke check stays quiet
    amps.reshape(2, 2, 4, 4)[..., 2:, :] = 0
    amps /= np.linalg.norm(amps)
    state = IonState(amps, 2, (4, 4))
    out = evolve_two_ion(state, ProbePulse(detuning, 10e-3, 14e3), STRING_ETA, STRING_FREQS)
    assert abs(out.norm() - 1.0) < 1e-8


@given(st.floats(1e-6, 500e-6), st.floats(1e3, 50e3))
@settings(max_examples=20, deadline=None)
def test_decoupled_carrier(t, rabi):
    state = IonState.fock(2, (3, 3), (0, 0))
    out = evolve_two_ion(state, ProbePulse(0.0, t, rabi), np.zeros((2, 2)), STRING_FREQS)
    p = math.sin(math.pi * rabi * t) ** 2
    joint = out.joint_populations()
    np.testing.assert_allclose(joint, np.outer([1 - p, p], [1 - p, p]), atol=1e-10)


def test_ion_split_changes_each_ion():
    model = CoherentModel(STRING_ETA, STRING_FREQS, 210e-6, (-1e3, 1e3))
    det = np.arange(-10e3, 10.5e3, 500.0)
    a = model.spectrum(det, (0.3, 0.07), 14e3, 0.0, Observable.SINGLE_ION, ion=0)
    b = model.spectrum(det, (0.3, 0.07), 14e3, 0.0, Observable.SINGLE_ION, ion=1)
    assert np.max(np.abs(a - b)) > 0.1


def test_lamb_dicke_warning():
    hot = IonState.fock(2, (12, 3), (10, 0))
    with pytest.warns(RuntimeWarning):
        check_lamb_dicke(hot, STRING_ETA)
    cold = IonState.fock(2, (5, 5), (0, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_lamb_dicke(cold, STRING_ETA)


def test_probe_needs_positive_duration():
    with pytest.raises(ValueError):
        ProbePulse(0.0, 0.0, 14e3)
    assert issubclass(NormDriftError, RuntimeError)


@pytest.mark.parametrize("nbar", [0.05, 0.3, 1.0])
def test_weak_pulse_sideband_asymmetry(nbar):
    rabi, nu = 2e3, 162e3
    # whole number of off-resonant carrier cycles, so the carrier leaves no floor under the sidebands
    tau = 100 / math.hypot(rabi, nu)
    model = CoherentModel(np.array([[0.02]]), (nu,), tau, (0.0,), cutoff=16, thermal_max=15)
    red = model.spectrum([-nu], (nbar,), rabi, 0.0, Observable.SINGLE_ION)[0]
    blue = model.spectrum([nu], (nbar,), rabi, 0.0, Observable.SINGLE_ION)[0]
    assert red / blue == pytest.approx(nbar / (nbar + 1), rel=0.02)


def test_thermal_weights():
    w = thermal_weights(0.3, 4)
    assert w.sum() == pytest.approx(1.0)
    assert w[1] / w[0] == pytest.approx(0.3 / 1.3)
    assert thermal_weights(0.0).tolist() == [1, 0, 0, 0, 0]


# ---- detection observables ----

def test_detection_examples():
    product = np.outer([0.5, 0.5], [0.5, 0.5])
    assert detection_observable(product, Observable.BOTH_EXCITED) == pytest.approx(0.25)
    correlated = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert detection_observable(correlated, Observable.BOTH_EXCITED) == 0.0
    assert detection_observable(correlated, Observable.AT_LEAST_ONE_EXCITED) == pytest.approx(1.0)
    assert detection_observable(correlated, Observable.AT_LEAST_ONE_BRIGHT) == pytest.approx(1.0)
    joint = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert detection_observable(joint, Observable.SINGLE_ION, ion=0) == pytest.approx(0.7)
    assert detection_observable(joint, Observable.SINGLE_ION, ion=1) == pytest.approx(0.6)
    batch = np.stack([product, correlated])
    np.testing.assert_allclose(detection_observable(batch, Observable.BOTH_EXCITED, n_ions=2), [0.25, 0.0])
    with pytest.raises(ValueError):
        detection_observable(np.ones((2, 3)), Observable.BOTH_EXCITED, n_ions=2)


@given(st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_detection_three_ions_consistent(values):
    joint = np.array(values).reshape(2, 2, 2)
    if joint.sum() == 0:
        return
    joint /= joint.sum()
    one = detection_observable(joint, Observable.AT_LEAST_ONE_EXCITED)
    assert one == pytest.approx(1 - joint[0, 0, 0])
    assert detection_observable(joint, Observable.AT_LEAST_ONE_BRIGHT) == pytest.approx(1 - joint[1, 1, 1])


def test_planar_red_sideband_suppressed():
    cfg = load_config(scenario="fig7")
    model = workflows.coherent_model(cfg)
    f = cfg.modes().frequencies
    red = model.spectrum(window_grid([-f[0], -f[1]], 8e3, 500.0), (0.1, 0.1), 14e3, 0.0, Observable.BOTH_EXCITED)
    blue = model.spectrum(window_grid([f[0], f[1]], 8e3, 500.0), (0.1, 0.1), 14e3, 0.0, Observable.BOTH_EXCITED)
    assert red.max() < 0.02
    assert red.max() < blue.max() / 10


def test_three_ion_blue_sideband_near_one():
    cfg = load_config(scenario="fig8")
    model = workflows.coherent_model(cfg)
    f = cfg.modes().frequencies
    # COM and tilt are only 6 kHz apart, so their blue sidebands form one feature
    blue = model.spectrum(window_grid([f[0], f[1]], 8e3, 250.0), cfg.spectrum.nbar, 14e3, 0.0,
                          Observable.AT_LEAST_ONE_EXCITED)
    red = model.spectrum(window_grid([-f[0], -f[1]], 8e3, 250.0), cfg.spectrum.nbar, 14e3, 0.0,
                         Observable.AT_LEAST_ONE_EXCITED)
    assert blue.max() > 0.95
    assert red.max() < 0.1


# ---- incoherent Doppler spectrum ----

def test_doppler_ground_state_carrier_only():
    dist = PhononDistribution(np.array([[1.0]]))
    probe = ProbePulse(0.0, 100e-6, 14e3)
    det = np.array([-162e3, -5e3, 0.0, 162e3])
    pts = simulate_spectrum_thermal(dist, (1e-6, 0.0), probe, det, (162e3, 280e3))
    assert pts[2].excitation == pytest.approx(math.sin(math.pi * 14e3 * 100e-6) ** 2, rel=1e-9)
    assert pts[0].excitation < 1e-9 and pts[3].excitation < 1e-9
    assert pts[1].excitation < pts[2].excitation


def test_doppler_sideband_direct_sum():
    nbar, eta, rabi, tau = 0.3, 0.17, 14e3, 100e-6
    dist = thermal_distribution(nbar, 0.0, tail=1e-12)
    pts = simulate_spectrum_thermal(dist, (eta, 0.0), ProbePulse(0.0, tau, rabi), [-162e3, 162e3], (162e3, 280e3))
    d = displacement_elements(eta, 80)
    p = dist.marginals()[0]
    n = np.arange(p.size)
    red = sum(p[k] * math.sin(math.pi * rabi * d[k - 1, k] * tau) ** 2 for k in n[1:])
    blue = sum(p[k] * math.sin(math.pi * rabi * d[k + 1, k] * tau) ** 2 for k in n)
    assert pts[0].excitation == pytest.approx(red, rel=1e-9)
    assert pts[1].excitation == pytest.approx(blue, rel=1e-9)


def test_doppler_weak_asymmetry():
    nbar = 0.3
    dist = thermal_distribution(nbar, 0.0, tail=1e-14)
    pts = simulate_spectrum_thermal(dist, (0.005, 0.0), ProbePulse(0.0, 100e-6, 14e3), [-162e3, 162e3],
                                    (162e3, 280e3))
    assert pts[1].excitation / pts[0].excitation == pytest.approx((nbar + 1) / nbar, rel=0.05)


def test_doppler_overlap_warning():
    dist = thermal_distribution(20.0, 10.0)
    with pytest.warns(SidebandOverlapWarning):
        simulate_spectrum_thermal(dist, (0.17, 0.13), ProbePulse(0.0, 100e-6, 14e3),
                                  np.arange(-40e3, 40e3, 1e3), (20e3, 25e3))


# ---- broadening ----

@pytest.mark.parametrize("sigma_steps", [2.0, 5.0, 10.0])
def test_convolution_peak_height(sigma_steps):
    step, h = 100.0, 0.8
    values = np.zeros(401)
    values[200] = h
    out = gaussian_smooth(values, step, sigma_steps * step)
    sigma = sigma_steps * step
    assert out[200] == pytest.approx(h * step / (sigma * math.sqrt(2 * math.pi)), rel=0.02)
    # area preserved away from the edges
    assert out.sum() == pytest.approx(values.sum(), rel=0.01)


def test_convolution_identity_and_window():
    pts = [SpectrumPoint(d, e) for d, e in zip(np.arange(0, 5000, 100.0), np.linspace(0, 1, 50))]
    assert convolve_gaussian(pts, 0.0, (0, 5000)) == pts
    out = convolve_gaussian(pts, 300.0, (1000, 3000))
    assert out[:10] == pts[:10] and out[31:] == pts[31:]
    assert out[20] != pts[20]
    with pytest.warns(RuntimeWarning):
        convolve_gaussian(pts, 1000.0, (1000, 3000))


def test_default_regions_split_close_modes():
    regions = default_regions((346e3, 339.146e3), 8e3)
    com_blue = [r for r in regions if r.mode == 0 and r.lo > 0][0]
    tilt_blue = [r for r in regions if r.mode == 1 and r.lo > 0][0]
    assert com_blue.lo == pytest.approx(tilt_blue.hi)
    assert com_blue.hi == pytest.approx(354e3)
    # the carrier is never broadened
    assert all(not (r.lo <= 0 <= r.hi) for r in regions)


def test_apply_broadening_per_mode():
    det = np.arange(-20e3, 20.5e3, 500.0)
    values = np.zeros_like(det)
    values[np.argmin(abs(det - 10e3))] = 1.0
    values[np.argmin(abs(det + 10e3))] = 1.0
    regions = [BroadeningRegion(0, 5e3, 15e3), BroadeningRegion(1, -15e3, -5e3)]
    out = apply_broadening(det, values, (1000.0, 0.0), regions)
    assert out[np.argmin(abs(det - 10e3))] < 0.5
    assert out[np.argmin(abs(det + 10e3))] == 1.0


@given(st.lists(st.floats(-500e3, 500e3), min_size=1, max_size=6), st.sampled_from([250.0, 500.0, 1000.0]))
def test_window_grid_on_one_lattice(centres, step):
    grid = window_grid(centres, 10e3, step)
    k = grid / step
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)
    assert np.all(np.diff(grid) > 0)
    for c in centres:
        assert np.any(np.abs(grid - c) <= step / 2 + 1e-6)


# ---- synthesis and CSV ----

def test_synthesis_is_seeded_and_binomial():
    model = CoherentModel(STRING_ETA, STRING_FREQS, 210e-6, (-1e3, 1e3))
    det = window_grid([0.0, 162e3], 5e3, 1e3)
    a = synthesize_spectrum(model, det, (0.3, 0.07), 14e3, "single_ion", shots=200, rng=np.random.default_rng(4))
    b = synthesize_spectrum(model, det, (0.3, 0.07), 14e3, "single_ion", shots=200, rng=np.random.default_rng(4))
    assert a == b
    assert all(abs(p.excitation * 200 - round(p.excitation * 200)) < 1e-9 for p in a)
    exact = synthesize_spectrum(model, det, (0.3, 0.07), 14e3, "single_ion", shots=0)
    assert [p.shots for p in exact] == [0] * len(det)


points = st.builds(SpectrumPoint, st.floats(-1e6, 1e6), st.floats(0, 1), st.sampled_from(list(Observable)),
                   st.integers(0, 1000), st.integers(0, 2))


@given(st.lists(points, max_size=30))
@settings(deadline=None)
def test_spectrum_csv_round_trip(tmp_path_factory, pts):
    pts = [p if p.observable is Observable.SINGLE_ION else SpectrumPoint(p.detuning, p.excitation, p.observable,
                                                                         p.shots, 0) for p in pts]
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    write_spectrum_csv(pts, path)
    assert read_spectrum_csv(path) == pts


def test_excitation_bounds():
    with pytest.raises(ValueError):
        SpectrumPoint(0.0, 1.5)
