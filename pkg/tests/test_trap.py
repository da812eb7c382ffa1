import math

import pytest
from hypothesis import given, settings, strategies as st

from penning_cooling.trap import (CrystalConfig, Geometry, ModeLabel, TrapConfig, TrapStabilityError,
                                  cyclotron_frequency, effective_radial_frequency, lamb_dicke_parameters,
                                  mode_set, radial_frequencies, rotation_from_tilt, single_ion_lamb_dicke,
                                  tilt_frequency)

FIELD = 1.865


def test_cyclotron_at_design_field():
    assert cyclotron_frequency(TrapConfig(FIELD, 162e3)) == pytest.approx(715e3, abs=2e3)


def test_cyclotron_linear_in_field():
    assert cyclotron_frequency(TrapConfig(0.0, 0.0)) == 0.0
    one = cyclotron_frequency(TrapConfig(FIELD, 1e3))
    assert cyclotron_frequency(TrapConfig(2 * FIELD, 1e3)) == pytest.approx(2 * one, rel=1e-14)


def test_radial_frequencies_limits():
    trap = TrapConfig.from_cyclotron_frequency(715e3, 0.0)
    assert radial_frequencies(trap) == pytest.approx((715e3, 0.0), abs=1e-6)
    edge = TrapConfig.from_cyclotron_frequency(715e3, 715e3 / math.sqrt(2))
    plus, minus = radial_frequencies(edge)
    assert plus == pytest.approx(357.5e3, rel=1e-6) and minus == pytest.approx(357.5e3, rel=1e-6)


def test_magnetron_near_97_khz():
    _, minus = radial_frequencies(TrapConfig.from_cyclotron_frequency(715e3, 346e3))
    # nu_c/2 - sqrt(nu_c^2/4 - nu_z^2/2), evaluated by hand
    expected = 357.5e3 - math.sqrt(357.5e3**2 - 346e3**2 / 2)
    assert minus == pytest.approx(expected, rel=1e-12)
    assert minus == pytest.approx(97e3, abs=0.5e3)


def test_unstable_trap_raises():
    with pytest.raises(TrapStabilityError):
        radial_frequencies(TrapConfig.from_cyclotron_frequency(715e3, 600e3))


stable = st.tuples(st.floats(200e3, 2e6), st.floats(0.05, 0.7)).map(
    lambda p: TrapConfig.from_cyclotron_frequency(p[0], p[1] * p[0]))


@given(stable)
def test_radial_identities(trap):
    nu_c = trap.cyclotron
    plus, minus = radial_frequencies(trap)
    assert plus + minus == pytest.approx(nu_c, rel=1e-12)
    assert plus * minus == pytest.approx(trap.axial_frequency**2 / 2, rel=1e-9)
    assert plus >= minus


@given(stable, st.floats(0.0, 1.0))
def test_effective_frequency_symmetric(trap, frac):
    plus, minus = radial_frequencies(trap)
    nu_r = minus + frac * (plus - minus)
    a = effective_radial_frequency(nu_r, trap)
    b = effective_radial_frequency(trap.cyclotron - nu_r, trap)
    # compare squares: near the boundary the square root amplifies rounding in the radicand
    assert a**2 == pytest.approx(b**2, rel=1e-9, abs=1e-12 * trap.cyclotron**2)
    assert a <= effective_radial_frequency(trap.cyclotron / 2, trap) + 1e-6


def test_effective_frequency_examples():
    trap = TrapConfig.from_cyclotron_frequency(715e3, 162e3)
    assert effective_radial_frequency(357.5e3, trap) == pytest.approx(
        math.sqrt(357.5e3**2 - 162e3**2 / 2), rel=1e-12)
    planar = TrapConfig.from_cyclotron_frequency(715e3, 346e3)
    assert effective_radial_frequency(106e3, planar) == pytest.approx(68e3, abs=1e3)
    assert tilt_frequency(106e3, planar) == pytest.approx(339e3, abs=1e3)
    _, minus = radial_frequencies(planar)
    assert effective_radial_frequency(minus, planar) == pytest.approx(0.0, abs=1e-3)


@given(st.floats(0.05, 0.95))
@settings(max_examples=50)
def test_rotation_round_trip(frac):
    trap = TrapConfig.from_cyclotron_frequency(715e3, 346e3)
    _, minus = radial_frequencies(trap)
    # nu_eff stays below nu_z for every rotation here; the lower root lies below nu_c / 2
    nu_r = minus + frac * (trap.cyclotron / 2 - minus)
    est = rotation_from_tilt(tilt_frequency(nu_r, trap), trap)
    assert est.primary == pytest.approx(nu_r, rel=1e-9)
    assert est.primary + est.secondary == pytest.approx(trap.cyclotron, rel=1e-12)


def test_rotation_at_full_tilt_is_magnetron():
    trap = TrapConfig.from_cyclotron_frequency(715e3, 346e3)
    assert rotation_from_tilt(346e3, trap).primary == pytest.approx(radial_frequencies(trap)[1], rel=1e-9)
    with pytest.raises(TrapStabilityError):
        rotation_from_tilt(400e3, trap)


def test_lamb_dicke_values():
    trap = TrapConfig(FIELD, 162e3)
    assert single_ion_lamb_dicke(trap) == pytest.approx(0.24, abs=0.005)
    etas = lamb_dicke_parameters(trap, CrystalConfig(2))
    assert etas[ModeLabel.COM] == pytest.approx(0.17, abs=0.005)
    assert etas[ModeLabel.BREATHING] == pytest.approx(0.13, abs=0.005)
    assert lamb_dicke_parameters(TrapConfig(FIELD, 353e3), CrystalConfig(2))[ModeLabel.COM] == pytest.approx(
        0.115, abs=0.003)


@given(st.floats(10e3, 500e3))
def test_lamb_dicke_scaling(nu):
    trap = TrapConfig(FIELD, nu)
    assert single_ion_lamb_dicke(TrapConfig(FIELD, 4 * nu)) == pytest.approx(
        single_ion_lamb_dicke(trap) / 2, rel=1e-12)


def test_mode_sets():
    trap = TrapConfig(FIELD, 162e3)
    single = mode_set(trap, CrystalConfig(1))
    assert len(single) == 1 and single[0].eta == pytest.approx(single_ion_lamb_dicke(trap))
    string = mode_set(trap, CrystalConfig(2))
    assert [m.label for m in string] == [ModeLabel.COM, ModeLabel.BREATHING]
    assert string[1].frequency == pytest.approx(math.sqrt(3) * 162e3)
    assert string[1].frequency == pytest.approx(280.6e3, abs=0.1e3)
    assert all(v > 0 for m in string for v in m.lamb_dicke)

    planar_trap = TrapConfig.from_cyclotron_frequency(715e3, 379e3)
    three = mode_set(planar_trap, CrystalConfig(3, Geometry.PLANAR, 130e3))
    tilts = [m for m in three if m.label is ModeLabel.TILT]
    assert len(tilts) == 2 and tilts[0].frequency == tilts[1].frequency
    com = three[0]
    assert len(set(com.lamb_dicke)) == 1


def test_planar_needs_rotation_inside_radial_band():
    trap = TrapConfig.from_cyclotron_frequency(715e3, 346e3)
    with pytest.raises(TrapStabilityError):
        mode_set(trap, CrystalConfig(2, Geometry.PLANAR, 5e3))
    with pytest.raises(ValueError):
        CrystalConfig(2, Geometry.PLANAR)
