"""Reference-qubit entropy decay and the threshold time tau(S_R = s0) versus L.

Usage: python scripts/ref_qubit_tau.py --p 0.02 0.5 --L 8 10 12 --trajectories 500 --cycles 3000
"""

import argparse
import csv

from kickreset.experiments import tau_point


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.02, 0.5])
    ap.add_argument("--L", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--trajectories", type=int, default=500)
    ap.add_argument("--cycles", type=int, default=3000)
    ap.add_argument("--prep", default="stochastic", choices=["stochastic", "xx_chain"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="ref_qubit_tau.csv")
    args = ap.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "L", "tau", "stderr"])
        for p in args.p:
            for L in args.L:
                tau, err, _ = tau_point(L, p, args.trajectories, args.cycles, prep=args.prep, seed=args.seed)
                w.writerow([p, L, tau, err])
                fh.flush()
                print(f"p={p} L={L}: tau = {tau:.3f} +- {err:.3f}", flush=True)


if __name__ == "__main__":
    main()
