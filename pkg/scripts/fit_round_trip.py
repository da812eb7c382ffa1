"""Synthesize noisy cooled spectra and fit them back, over a range of seeds."""
import argparse

import numpy as np

from penning_cooling import workflows
from penning_cooling.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="fig3")
    ap.add_argument("--trials", type=int, default=5)
    args = ap.parse_args()
    cfg = load_config(scenario=args.scenario)
    found = []
    for seed in range(args.trials):
        fit = workflows.fit_spectrum(cfg, workflows.synthetic_spectrum(cfg, seed)).combined
        found.append(fit.nbar)
        errs = ", ".join(f"{n:.3f}+-{e:.3f}" for n, e in zip(fit.nbar, fit.nbar_err))
        print(f"seed {seed:3d}  nbar {errs}  sigma {tuple(round(s) for s in fit.sigma)}  "
              f"chi2/dof {fit.reduced_chi2:.2f}")
    found = np.array(found)
    print(f"truth {cfg.spectrum.nbar}  mean {found.mean(0).round(3)}  std {found.std(0).round(3)}")


if __name__ == "__main__":
    main()
