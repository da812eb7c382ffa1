"""Run the built-in string cooling sequence from Doppler temperature, with and without the intermodulation pulse."""
import argparse
import time

from penning_cooling import workflows
from penning_cooling.config import load_config
from penning_cooling.dynamics import table1_sequence
from penning_cooling.sequence_io import read_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="fig3")
    ap.add_argument("--sequence", help="sequence file instead of the built-in one")
    args = ap.parse_args()
    cfg = load_config(scenario=args.scenario)
    rabi = cfg.simulation.cooling_rabi
    seq = read_sequence(args.sequence, default_rabi=rabi) if args.sequence else table1_sequence(rabi)
    for name, s in (("full", seq), ("no intermodulation", workflows.without_intermodulation(seq))):
        t0 = time.perf_counter()
        out = workflows.cool(cfg, s)
        print(f"{name:<20} nbar=({out.nbar[0]:.3f}, {out.nbar[1]:.3f})  ground=({out.ground[0]:.3f}, "
              f"{out.ground[1]:.3f})  dark mass={out.dark_mass:.2e}  [{time.perf_counter() - t0:.1f} s]")


if __name__ == "__main__":
    main()
