"""How tight the peak bound is: slack against log V along a volume family.

The slack should grow no faster than log V if the occupation factor is the
only loss.

    python scripts/peak_sharpness.py
"""

import argparse
import math

import numpy as np

from cnumber.model import EnsembleParams
from cnumber.verify import check_peak, volume_family


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lengths", type=float, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--caps", type=int, nargs=3, default=[1, 16, 1])
    ap.add_argument("--lam", type=float, default=0.1)
    args = ap.parse_args()

    p = EnsembleParams(1.0, -0.5, args.lam)
    logv, slack = [], []
    for m in volume_family(args.lengths, args.caps):
        r = check_peak(m, p)
        logv.append(math.log(m.volume))
        slack.append(r.raw_gap)
        print(f"V={m.volume:6g} slack {r.raw_gap:.4f} split holds {r.payload['split_holds']}")
    slope = np.polyfit(logv, slack, 1)[0]
    print(f"d(slack)/d(log V) = {slope:.3f}")


if __name__ == "__main__":
    main()
