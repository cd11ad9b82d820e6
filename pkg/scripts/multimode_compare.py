"""Gap per substituted mode when one or two modes are replaced by c-numbers.

    python scripts/multimode_compare.py --caps 10 24 10
"""

import argparse

from cnumber.model import EnsembleParams, default_model
from cnumber.verify import check_multimode, instance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--caps", type=int, nargs=3, default=[10, 24, 10])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--mu", type=float, nargs="+", default=[-1.0, -0.5])
    args = ap.parse_args()

    inst = instance(default_model(), args.caps)
    by_label = {md.label: md for md in inst.spec.modes}
    plans = [[(0,)], [(1,)], [(0,), (1,)]]
    for mu in args.mu:
        p = EnsembleParams(args.beta, mu)
        for plan in plans:
            r = check_multimode(inst, p, [by_label[lab] for lab in plan])
            print(f"mu={mu:<5} modes={plan!s:<12} {r.verdict:<10} "
                  f"diff {r.payload['upper_minus_lower']:.4f} bound {r.payload['bound']:.4f} "
                  f"per mode {r.payload['per_mode_gap']:.4f}")


if __name__ == "__main__":
    main()
