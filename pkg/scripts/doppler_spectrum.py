"""Incoherent thermal spectrum of a Doppler-cooled string, written as CSV."""
import argparse

from penning_cooling import workflows
from penning_cooling.config import load_config
from penning_cooling.spectroscopy import write_spectrum_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="doppler-162k")
    ap.add_argument("--out", default="doppler_spectrum.csv")
    args = ap.parse_args()
    cfg = load_config(scenario=args.scenario)
    points = workflows.doppler_spectrum(cfg)
    write_spectrum_csv(points, args.out)
    peak = max(points, key=lambda p: p.excitation)
    print(f"{len(points)} points -> {args.out}; strongest feature {peak.excitation:.3f} "
          f"at {peak.detuning / 1e3:.1f} kHz")


if __name__ == "__main__":
    main()
