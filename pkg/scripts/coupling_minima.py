"""First carrier and red-sideband minima against the Lamb-Dicke parameter."""
import argparse
import csv

from penning_cooling.coupling import find_minima, strength_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eta", type=float, nargs="+", default=[0.12, 0.17, 0.24])
    ap.add_argument("--n-max", type=int, default=300)
    ap.add_argument("--csv", help="write the strength curves here")
    args = ap.parse_args()
    for eta in args.eta:
        mins = {k: find_minima(eta, k, args.n_max)[:2] for k in range(4)}
        print(f"eta={eta:.3f}  " + "  ".join(f"order {k}: {v}" for k, v in mins.items()))
    if args.csv:
        curves = {(eta, k): strength_curve(eta, k, args.n_max) for eta in args.eta for k in range(4)}
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n"] + [f"eta{eta}_order{k}" for eta, k in curves])
            for n in range(args.n_max + 1):
                w.writerow([n] + [f"{c[n]:.10g}" for c in curves.values()])


if __name__ == "__main__":
    main()
