"""Condensate density surrogates against the symmetry-breaking field and volume.

    python scripts/condensate_sweep.py --lams 0.05 0.1 0.2 0.4
"""

import argparse

from cnumber.model import EnsembleParams
from cnumber.verify import check_concentration, check_condensate, volume_family


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lengths", type=float, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--caps", type=int, nargs=3, default=[1, 16, 1])
    ap.add_argument("--lams", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.4])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--mu", type=float, default=-0.5)
    args = ap.parse_args()

    fam = volume_family(args.lengths, args.caps)
    r = check_condensate(fam, EnsembleParams(args.beta, args.mu), args.lams)
    print(f"condensate: {r.verdict}  cs margin {r.payload['cs_margin']:.3g}")
    print(f"  {'V':>6} {'lam':>6} {'<n0>/V':>10} {'|<a0>|^2/V':>11} {'|zmax|^2/V':>11}")
    for row in r.payload["rows"]:
        print(f"  {row['V']:6g} {row['lam']:6g} {row['n0_per_V']:10.5f} "
              f"{row['a0sq_per_V']:11.5f} {row['zmax_sq_per_V']:11.5f}")

    lam = sorted(args.lams)[len(args.lams) // 2]
    c = check_concentration(fam, EnsembleParams(args.beta, args.mu, lam))
    print(f"concentration at lam={lam}: {c.verdict}")
    for row in c.payload["rows"]:
        mf, mu_ = (complex(*row[k]) for k in ("mean_full", "mean_upper"))
        print(f"  V={row['V']:6g} mean {mf:.4f} / {mu_:.4f} "
              f"var {row['var_full']:.4f} / {row['var_upper']:.4f}")


if __name__ == "__main__":
    main()
