"""The four pressures along a volume family, interacting and free.

    python scripts/volume_collapse.py --lengths 4 8 16 32 --caps 2 6 2
"""

import argparse

from cnumber.model import EnsembleParams
from cnumber.verify import check_pressure_collapse, volume_family


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lengths", type=float, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--caps", type=int, nargs=3, default=[2, 6, 2])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--mu", type=float, default=-0.5)
    ap.add_argument("--lam", type=float, default=0.0)
    ap.add_argument("--g", type=float, default=1.0)
    args = ap.parse_args()

    p = EnsembleParams(args.beta, args.mu, args.lam)
    for label, g in (("interacting", args.g), ("free", 0.0)):
        fam = volume_family(args.lengths, args.caps, g=g, phi=None if g else 0.0)
        r = check_pressure_collapse(fam, p, closed_form=(g == 0.0))
        print(f"{label}: {r.verdict}, spread ratio {r.payload['spread_ratio']:.4f}")
        print(f"  {'V':>6} {'p':>10} {'p_lower':>10} {'p_upper':>10} {'p_max':>10} {'spread':>10}")
        for row in r.payload["family"]:
            print(f"  {row['V']:6g} {row['p']:10.5f} {row['p_lower']:10.5f} "
                  f"{row['p_upper']:10.5f} {row['p_max']:10.5f} {row['spread']:10.5f}")


if __name__ == "__main__":
    main()
