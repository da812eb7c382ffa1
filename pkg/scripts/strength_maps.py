"""Dark regions of the two-mode strength maps with and without the intermodulation sideband."""
import argparse

import numpy as np

from penning_cooling import workflows
from penning_cooling.coupling import SidebandOrder, strength_map


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eta", type=float, nargs=2, default=[0.17, 0.13])
    ap.add_argument("--size", type=int, default=workflows.DARK_MAP_SIZE)
    args = ap.parse_args()
    com = [SidebandOrder(-k, 0) for k in (1, 2, 3)]
    breathing = [SidebandOrder(0, -k) for k in (1, 2)]
    panels = {"COM reds": com, "breathing reds": breathing, "both": com + breathing,
              "both + intermodulation": com + breathing + [SidebandOrder(-2, -1)]}
    for name, sbs in panels.items():
        smap = strength_map(sbs, args.eta, (args.size, args.size))
        comps = smap.dark_components()
        sizes = sorted((int(c.sum()) for c in comps), reverse=True)
        print(f"{name:<24} dark cells {int(smap.dark_mask().sum()):6d}  components {len(comps):3d}  "
              f"largest {sizes[:3]}")
    comp = workflows.dark_component(args.eta, args.size)
    if comp.any():
        cells = np.argwhere(comp)
        print(f"component near {workflows.DARK_CELL}: {len(cells)} cells, n1 {cells[:, 0].min()}-"
              f"{cells[:, 0].max()}, n2 {cells[:, 1].min()}-{cells[:, 1].max()}")


if __name__ == "__main__":
    main()
