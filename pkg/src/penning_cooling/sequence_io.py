"""Plain-text cooling sequence files.

One pulse per line::

    # comment
    begin-block 15
    sideband=-2,0 duration_us=500 repeats=1
    sideband=0,-2 duration_us=500
    end-block
    sideband=-1,0 duration_us=2000 rabi_hz=120000.0

Pulses outside a block form their own one-pass block. Durations are written
in microseconds via an exact decimal shift, so parse(serialize(seq)) == seq
bit for bit.
"""
from __future__ import annotations

from decimal import Decimal
from pathlib import Path

from .coupling import SidebandOrder
from .dynamics import DEFAULT_RABI, Block, CoolingSequence, PulseSpec


class SequenceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<string>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


def _us_text(seconds: float) -> str:
    d = Decimal(repr(float(seconds))).scaleb(6).normalize()
    text = format(d, "f")
    return text


def _seconds(text: str) -> float:
    return float(Decimal(text).scaleb(-6))


def _parse_pulse(line: str, default_rabi: float, lineno: int, source: str) -> PulseSpec:
    fields = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep or not value:
            raise SequenceFormatError(f"expected key=value, got {token!r}", lineno, source)
        if key in fields:
            raise SequenceFormatError(f"duplicate key {key!r}", lineno, source)
        fields[key] = value
    unknown = set(fields) - {"sideband", "duration_us", "repeats", "rabi_hz"}
    if unknown:
        raise SequenceFormatError(f"unknown keys {sorted(unknown)}", lineno, source)
    try:
        parts = fields["sideband"].split(",")
        if len(parts) != 2:
            raise ValueError("sideband needs two comma-separated integers")
        sideband = SidebandOrder(int(parts[0]), int(parts[1]))
        duration = _seconds(fields["duration_us"])
        repeats = int(fields.get("repeats", "1"))
        rabi = float(fields["rabi_hz"]) if "rabi_hz" in fields else default_rabi
        return PulseSpec(sideband, duration, rabi, repeats)
    except KeyError as exc:
        raise SequenceFormatError(f"missing field {exc.args[0]!r}", lineno, source) from None
    except (ValueError, ArithmeticError) as exc:
        raise SequenceFormatError(str(exc), lineno, source) from None


def parse_sequence(text: str, default_rabi: float = DEFAULT_RABI, source: str = "<string>") -> CoolingSequence:
    blocks: list[Block] = []
    open_block: list[PulseSpec] | None = None
    open_repeats = 1
    open_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()
        if head[0] == "begin-block":
            if open_block is not None:
                raise SequenceFormatError("nested begin-block", lineno, source)
            if len(head) != 2:
                raise SequenceFormatError("begin-block takes one repeat count", lineno, source)
            try:
                open_repeats = int(head[1])
            except ValueError:
                raise SequenceFormatError(f"bad repeat count {head[1]!r}", lineno, source) from None
            if open_repeats < 1:
                raise SequenceFormatError("repeat count must be >= 1", lineno, source)
            open_block, open_line = [], lineno
        elif head[0] == "end-block":
            if open_block is None:
                raise SequenceFormatError("end-block without begin-block", lineno, source)
            if not open_block:
                raise SequenceFormatError("empty block", lineno, source)
            blocks.append(Block(tuple(open_block), open_repeats))
            open_block = None
        else:
            pulse = _parse_pulse(line, default_rabi, lineno, source)
            if open_block is None:
                blocks.append(Block((pulse,), 1))
            else:
                open_block.append(pulse)
    if open_block is not None:
        raise SequenceFormatError("begin-block never closed", open_line, source)
    if not blocks:
        raise SequenceFormatError("no pulses found", None, source)
    return CoolingSequence(tuple(blocks))


def _pulse_line(p: PulseSpec, default_rabi: float) -> str:
    parts = [f"sideband={p.sideband.delta_n1},{p.sideband.delta_n2}", f"duration_us={_us_text(p.duration)}",
             f"repeats={p.repeats}"]
    if p.rabi_frequency != default_rabi:
        parts.append(f"rabi_hz={p.rabi_frequency!r}")
    return " ".join(parts)


def serialize_sequence(seq: CoolingSequence, default_rabi: float = DEFAULT_RABI) -> str:
    lines = []
    for b in seq.blocks:
        lines.append(f"begin-block {b.repeats}")
        lines.extend(_pulse_line(p, default_rabi) for p in b.pulses)
        lines.append("end-block")
    return "\n".join(lines) + "\n"


def read_sequence(path, default_rabi: float = DEFAULT_RABI) -> CoolingSequence:
    path = Path(path)
    return parse_sequence(path.read_text(), default_rabi, source=str(path))


def write_sequence(seq: CoolingSequence, path, default_rabi: float = DEFAULT_RABI) -> None:
    Path(path).write_text(serialize_sequence(seq, default_rabi))
