"""Command-line entry point: ``penning-cooling <command> [options]``.

Exit codes: 0 success, 1 usage or missing input file, 2 configuration or
parse error, 3 numerical failure (truncation, norm drift, non-convergence).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__, workflows
from .config import ConfigError, RunConfig, load_config
from .coupling import SidebandOrder, find_minima, strength_curve, strength_map
from .dynamics import TABLE1_SIDEBANDS, TruncationError, optimize_sequence, table1_sequence
from .sequence_io import SequenceFormatError, read_sequence, write_sequence
from .spectroscopy import (FitWarning, NormDriftError, Observable, read_spectrum_csv,
                           rotational_sideband_annotations, write_spectrum_csv)
from .trap import TrapStabilityError

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3
log = logging.getLogger("penning_cooling")


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- output helpers --------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    def __init__(self, args, cfg: RunConfig, command: str):
        self.args, self.cfg, self.command = args, cfg, command
        self.seed = args.seed if args.seed is not None else cfg.simulation.seed
        self.dir = Path(args.out) / cfg.scenario / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        if args.config:
            self.add_input(Path(args.config))

    def add_input(self, path: Path):
        self.inputs[str(path)] = _sha256(path)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def write_json(self, name: str, payload) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return p

    def finish(self, summary: str):
        manifest = {
            "command": self.command,
            "scenario": self.cfg.scenario,
            "seed": self.seed,
            "config": asdict(self.cfg),
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "versions": {"penning_cooling": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        print(summary)


def _require(path: str | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required for this command")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file {p}")
    return p


def _observable(args, cfg: RunConfig) -> Observable:
    return Observable(args.observable) if args.observable else cfg.observable


# ---- commands --------------------------------------------------------------

def cmd_modes(args, cfg: RunConfig) -> int:
    run = Run(args, cfg, "modes")
    modes = cfg.modes()
    rows = [("label", "frequency_hz", "eta", "participation")]
    lines = [f"{'mode':<10} {'frequency (kHz)':>16} {'eta':>8}"]
    for m in modes:
        rows.append((m.label.value, repr(m.frequency), repr(m.eta), " ".join(str(s) for s in m.participation)))
        lines.append(f"{m.label.value:<10} {m.frequency / 1e3:16.3f} {m.eta:8.4f}")
    with open(run.path("modes.csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    print("\n".join(lines))
    run.finish(f"{len(modes)} axial mode(s)")
    return 0


def cmd_couplings(args, cfg: RunConfig) -> int:
    """Coupling curves and minima (one ion) or strength maps and dark regions (two ions)."""
    run = Run(args, cfg, "couplings")
    modes = cfg.modes()
    size = cfg.simulation.map_size
    if len(modes) == 1:
        eta = modes[0].eta
        with open(run.path("curves.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "carrier", "red1", "red2", "red3"])
            curves = [strength_curve(eta, k, size) for k in range(4)]
            for n in range(size + 1):
                w.writerow([n] + [repr(float(c[n])) for c in curves])
        minima = {f"order{k}": find_minima(eta, k, size) for k in range(4)}
        run.write_json("minima.json", {"eta": eta, "minima": minima})
        run.finish(f"eta={eta:.4f} first carrier minimum n={minima['order0'][:1]} "
                   f"first red minimum n={minima['order1'][:1]}")
        return 0
    eta = modes.etas[:2]
    panels = {
        "a": [SidebandOrder(-k, 0) for k in (1, 2, 3)],
        "b": [SidebandOrder(0, -k) for k in (1, 2)],
        "c": [SidebandOrder(-2, -1)],
    }
    panels["d"] = panels["a"] + panels["b"] + panels["c"]
    summary = {}
    for name, sbs in panels.items():
        smap = strength_map(sbs, eta, (size, size))
        smap.to_csv(run.path(f"map_{name}.csv"))
        edge = workflows.DARK_MAP_SIZE + 1
        summary[name] = {"sidebands": [str(s) for s in sbs],
                         "dark_cells_to_140": int(smap.dark_mask()[:edge, :edge].sum())}
    comp = workflows.dark_component(eta)
    cells = np.argwhere(comp)
    summary["no_intermodulation_component"] = (
        {"cells": int(comp.sum()), "n1_range": [int(cells[:, 0].min()), int(cells[:, 0].max())],
         "n2_range": [int(cells[:, 1].min()), int(cells[:, 1].max())]} if cells.size else None)
    run.write_json("dark_regions.json", summary)
    run.finish(f"dark cells in [0,140]^2: combined map {summary['d']['dark_cells_to_140']}, "
               f"component without intermodulation {int(comp.sum())} cells")
    return 0


def cmd_spectrum(args, cfg: RunConfig) -> int:
    run = Run(args, cfg, "spectrum")
    if cfg.spectrum.kind == "doppler":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            points = workflows.doppler_spectrum(cfg)
        for w in caught:
            log.warning("%s", w.message)
    else:
        points = workflows.model_spectrum(cfg, _observable(args, cfg))
    write_spectrum_csv(points, run.path("spectrum.csv"))
    rot = cfg.crystal.rotation_frequency
    if args.misalignment and rot:
        run.write_json("annotations.json", rotational_sideband_annotations(cfg.modes().frequencies, rot,
                                                                           args.misalignment))
    peak = max(points, key=lambda p: p.excitation)
    run.finish(f"{len(points)} points, peak excitation {peak.excitation:.3f} at {peak.detuning / 1e3:.1f} kHz")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    run = Run(args, cfg, "synth")
    points = workflows.synthetic_spectrum(cfg, run.seed, _observable(args, cfg))
    write_spectrum_csv(points, run.path("spectrum.csv"))
    rows = workflows.heating_scan(cfg, run.seed)
    with open(run.path("heating.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_s", "mode", "nbar", "uncertainty"])
        w.writerows([repr(t), k, repr(nb), repr(u)] for t, k, nb, u in rows)
    run.finish(f"{len(points)} spectrum points and {len(rows)} heating points (seed {run.seed})")
    return 0


def _sequence(args, cfg: RunConfig, run: Run):
    if args.sequence is None:
        return table1_sequence(cfg.simulation.cooling_rabi)
    path = _require(args.sequence, "--sequence")
    run.add_input(path)
    return read_sequence(path, default_rabi=cfg.simulation.cooling_rabi)


def cmd_cool(args, cfg: RunConfig) -> int:
    run = Run(args, cfg, "cool")
    seq = _sequence(args, cfg, run)
    out = workflows.cool(cfg, seq)
    out.distribution.to_csv(run.path("distribution.csv"), threshold=1e-15)
    write_sequence(seq, run.path("sequence.seq"), default_rabi=cfg.simulation.cooling_rabi)
    run.write_json("summary.json", {"final_nbar": list(out.nbar), "ground_occupation": list(out.ground),
                                    "dark_region_mass": out.dark_mass, "total_time_s": out.total_time,
                                    "leakage": out.distribution.leakage})
    run.finish(f"final nbar = ({out.nbar[0]:.4f}, {out.nbar[1]:.4f}), ground occupation = "
               f"({out.ground[0]:.3f}, {out.ground[1]:.3f}), dark-region mass = {out.dark_mass:.3e}")
    return 0


def cmd_optimize(args, cfg: RunConfig) -> int:
    run = Run(args, cfg, "optimize")
    start = _sequence(args, cfg, run) if args.sequence else None
    dist = workflows.initial_distribution(cfg)
    eta = (tuple(cfg.modes().etas) + (0.0,))[:2]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        best = optimize_sequence(dist, eta, cfg.simulation.budget, TABLE1_SIDEBANDS,
                                 rabi=cfg.simulation.cooling_rabi, decay_rate=cfg.simulation.decay_rate,
                                 seed=run.seed, iterations=cfg.simulation.iterations, start=start)
    if best is None:
        raise NumericError("; ".join(str(w.message) for w in caught) or "no sequence fits the budget")
    out = workflows.cool(cfg, best, initial=dist)
    write_sequence(best, run.path("best.seq"), default_rabi=cfg.simulation.cooling_rabi)
    run.write_json("summary.json", {"final_nbar": list(out.nbar), "ground_occupation": list(out.ground),
                                    "total_time_s": best.total_time, "budget_s": cfg.simulation.budget})
    run.finish(f"optimized {sum(1 for _ in best.pulses())} pulses: final nbar = ({out.nbar[0]:.4f}, {out.nbar[1]:.4f})")
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    path = _require(args.data, "--data")
    run = Run(args, cfg, "fit")
    run.add_input(path)
    points = read_spectrum_csv(path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FitWarning)
        result = workflows.fit_spectrum(cfg, points, _observable(args, cfg))
    run.write_json("fit.json", {"per_ion": [json.loads(r.to_json()) for r in result.per_ion],
                                "combined": json.loads(result.combined.to_json())})
    c = result.combined
    run.finish("fitted nbar = (" + ", ".join(f"{v:.3f}+-{e:.3f}" for v, e in zip(c.nbar, c.nbar_err))
               + f"), rabi = {c.rabi_frequency:.0f} Hz, reduced chi2 = {c.reduced_chi2:.2f}")
    if not c.converged or any(issubclass(w.category, FitWarning) for w in caught):
        raise NumericError("fit did not converge; result written but flagged")
    return 0


def cmd_heat(args, cfg: RunConfig) -> int:
    path = _require(args.data, "--data")
    run = Run(args, cfg, "heat")
    run.add_input(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"delay_s", "mode", "nbar", "uncertainty"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        for r in reader:
            rows.append((float(r["delay_s"]), int(r["mode"]), float(r["nbar"]), float(r["uncertainty"])))
    fits = workflows.fit_heating(rows)
    run.write_json("heat.json", {str(k): {"rate_per_s": f.rate, "uncertainty": f.uncertainty,
                                          "intercept": f.intercept, "chi2": f.chi2} for k, f in fits.items()})
    run.finish("heating rates: " + ", ".join(f"mode {k}: {f.rate:.2f}+-{f.uncertainty:.2f} /s"
                                             for k, f in fits.items()))
    return 0


COMMANDS = {
    "modes": cmd_modes,
    "couplings": cmd_couplings,
    "spectrum": cmd_spectrum,
    "synth": cmd_synth,
    "cool": cmd_cool,
    "optimize": cmd_optimize,
    "fit": cmd_fit,
    "heat": cmd_heat,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file layered over the scenario preset")
    common.add_argument("--scenario", help="named preset: fig2, fig3, doppler-162k (fig4), fig5, fig7, fig8")
    common.add_argument("--out", default="out", help="output root (default: out)")
    common.add_argument("--seed", type=int, help="overrides [simulation] seed")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="penning-cooling", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "modes": "axial mode frequencies and Lamb-Dicke parameters",
        "couplings": "coupling minima (one ion) or strength maps (two ions)",
        "spectrum": "model spectrum (Doppler incoherent sum or coherent cooled model)",
        "synth": "seeded synthetic spectrum and heating scan",
        "cool": "run a cooling sequence from the scenario's initial distribution",
        "optimize": "search for a cooling sequence within the time budget",
        "fit": "fit n-bar from a spectrum CSV",
        "heat": "fit heating rates from a delay scan CSV",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name in ("cool", "optimize"):
            p.add_argument("--sequence", help="sequence file (default: built-in string cooling sequence)")
        if name in ("fit", "heat"):
            p.add_argument("--data", help="input CSV")
        if name in ("spectrum", "synth", "fit"):
            p.add_argument("--observable", choices=[o.value for o in Observable])
        if name == "spectrum":
            p.add_argument("--misalignment", type=float, default=0.0,
                           help="relative strength for rotational-sideband annotations")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config and not Path(args.config).is_file():
            raise UsageError(f"--config: no such file {args.config}")
        cfg = load_config(args.config, args.scenario)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"penning-cooling: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, TrapStabilityError, SequenceFormatError) as exc:
        print(f"penning-cooling: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, NormDriftError, NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"penning-cooling: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"penning-cooling: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
