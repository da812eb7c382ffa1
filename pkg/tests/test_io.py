import numpy as np
import pytest
from hypothesis import given, strategies as st

from penning_cooling.config import PRESETS, ConfigError, load_config
from penning_cooling.coupling import SidebandOrder, read_strength_csv, strength_map
from penning_cooling.dynamics import Block, CoolingSequence, PulseSpec, table1_sequence
from penning_cooling.sequence_io import SequenceFormatError, parse_sequence, read_sequence, serialize_sequence

orders = st.builds(SidebandOrder, st.integers(-4, 4), st.integers(-4, 4))
pulses = st.builds(PulseSpec, orders, st.floats(1e-9, 1.0, allow_subnormal=False),
                   st.sampled_from([14e3, 120e3]) | st.floats(1.0, 1e6), st.integers(1, 5))
blocks = st.builds(Block, st.lists(pulses, min_size=1, max_size=5).map(tuple), st.integers(1, 20))
sequences = st.builds(CoolingSequence, st.lists(blocks, min_size=1, max_size=4).map(tuple))


@given(sequences)
def test_sequence_round_trip_bit_exact(seq):
    text = serialize_sequence(seq, default_rabi=14e3)
    back = parse_sequence(text, default_rabi=14e3)
    assert back == seq
    assert serialize_sequence(back, default_rabi=14e3) == text


def test_shipped_table1_file():
    seq = read_sequence("sequences/table1.seq", default_rabi=120e3)
    assert seq == table1_sequence(120e3)
    assert seq.total_time == pytest.approx(15 * 2.0e-3 + 2 * 1.7e-3 + 3.0e-3)


def test_loose_pulses_and_comments():
    text = """
    # two loose pulses around a block
    sideband=-1,0 duration_us=100
    begin-block 3   # repeated
    sideband=0,-1 duration_us=200 rabi_hz=5000
    end-block
    sideband=-2,-1 duration_us=50 repeats=2
    """
    seq = parse_sequence(text, default_rabi=14e3)
    assert [b.repeats for b in seq.blocks] == [1, 3, 1]
    assert seq.blocks[1].pulses[0].rabi_frequency == 5000.0
    assert seq.blocks[0].pulses[0].duration == 100e-6
    assert len(list(seq.pulses())) == 1 + 3 + 2


@pytest.mark.parametrize("text,line", [
    ("sideband=-1 duration_us=5", 1),
    ("sideband=-1,0", 1),
    ("\nsideband=-1,0 duration_us=5 colour=red", 2),
    ("begin-block 2\nbegin-block 2", 2),
    ("begin-block 2\nsideband=-1,0 duration_us=5", 1),
    ("end-block", 1),
    ("begin-block 0", 1),
    ("begin-block 2\nend-block", 2),
    ("sideband=-9,0 duration_us=5", 1),
    ("sideband=-1,0 duration_us=-5", 1),
])
def test_sequence_errors_carry_line(text, line):
    with pytest.raises(SequenceFormatError) as info:
        parse_sequence(text, source="s.seq")
    assert info.value.line == line
    assert f"s.seq:{line}" in str(info.value)


def test_empty_sequence_rejected():
    with pytest.raises(SequenceFormatError):
        parse_sequence("# nothing\n")


def test_strength_csv_round_trip(tmp_path):
    smap = strength_map([SidebandOrder(-1, 0), SidebandOrder(0, -2)], (0.17, 0.13), (20, 30))
    smap.to_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(read_strength_csv(tmp_path / "m.csv"), smap.grid)


# ---- configuration ----

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_load(name):
    cfg = load_config(scenario=name)
    assert cfg.scenario == name
    assert len(cfg.modes()) >= 1


def test_string_preset_values():
    cfg = load_config(scenario="fig3")
    modes = cfg.modes()
    assert [round(m.frequency / 1e3, 1) for m in modes] == [162.0, 280.6]
    assert cfg.ion_offsets() == (-1e3, 1e3)
    assert load_config(scenario="fig7").ion_offsets() == (0.0, 0.0)


def test_file_layers_over_preset(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[scenario]\nname = mine\n[spectrum]\nnbar = 0.2 0.1\nshots = 100\n")
    cfg = load_config(path, "fig3")
    assert cfg.scenario == "mine"
    assert cfg.spectrum.nbar == (0.2, 0.1) and cfg.spectrum.shots == 100
    assert cfg.trap.axial_frequency == 162e3
    bare = tmp_path / "other.ini"
    bare.write_text("[crystal]\nion_count = 1\n")
    assert load_config(bare).scenario == "other"


@pytest.mark.parametrize("text,line", [
    ("[trap]\naxial_frequency = 1e5\ncolour = 3\n", 3),
    ("\n[trapp]\nx = 1\n", 2),
    ("[spectrum]\nshots = many\n", 2),
    ("[spectrum]\nfit_broadening = maybe\n", 2),
])
def test_config_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == line


@pytest.mark.parametrize("text", [
    "[trap]\naxial_frequency = -1\n",
    "[trap]\ncyclotron_frequency = 715e3\n",
    "[spectrum]\nkind = sideways\n",
    "[spectrum]\ncutoff = 3\nthermal_max = 4\n",
    "[crystal]\ngeometry = cube\n",
    "[heating]\nrates = 1 -1\n",
])
def test_config_validation(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        load_config(scenario="fig99")
