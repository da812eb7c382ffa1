"""Heating-rate regression on synthetic delay scans."""
import argparse

import numpy as np

from penning_cooling import workflows
from penning_cooling.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="fig3")
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()
    cfg = load_config(scenario=args.scenario)
    rates = []
    for seed in range(args.trials):
        fits = workflows.fit_heating(workflows.heating_scan(cfg, seed))
        rates.append([fits[k].rate for k in sorted(fits)])
        if seed < 3:
            print("  ".join(f"mode {k}: {f.rate:.2f}+-{f.uncertainty:.2f} /s" for k, f in fits.items()))
    rates = np.array(rates)
    print(f"truth {cfg.heating.rates}  mean {rates.mean(0).round(3)}  std {rates.std(0).round(3)}")


if __name__ == "__main__":
    main()
