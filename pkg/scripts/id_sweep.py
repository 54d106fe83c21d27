"""Intrinsic dimension of X-basis snapshot datasets versus p (2-NN estimator).

Usage: python scripts/id_sweep.py --L 16 --alpha 0.5 --n 1000 --p 0.2 0.35 0.5 0.65 0.8
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from kickreset.analysis import make_snapshots, steady_window, twoNN
from kickreset.core import ModelParams, rng_stream
from kickreset.trajectories import TrajectorySource


def snapshot_point(L, p, n=1000, m=10, alpha=0.5, h=0.9, seed=0):
    """Steady-state snapshot dataset for one (L, p); the source is burned in past t_steady."""
    P = ModelParams(L=L, alpha=alpha, h=h, p=p, master_seed=seed * 1000 + 53 * L + int(round(1000 * p)))
    src = TrajectorySource(P, 0)
    burn = int(np.ceil(steady_window(P)[0] / P.T))
    return make_snapshots(src, m, n, "X", rng_stream(P.master_seed, 1), burn_in=burn, params={"L": L, "p": p})


def id_point(L, p, n=1000, m=10, alpha=0.5, h=0.9, seed=0, metric="hamming"):
    return twoNN(snapshot_point(L, p, n, m, alpha, h, seed), metric)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--p", type=float, nargs="+", default=[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--metric", default="hamming", choices=["hamming", "integer_xor"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="id_sweep.csv")
    ap.add_argument("--save", help="directory for the packed datasets (p{p}.npy)")
    args = ap.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "I_d", "n_unique", "n_kept", "discarded_fraction"])
        for p in args.p:
            t0 = time.perf_counter()
            ds = snapshot_point(args.L, p, args.n, args.m, args.alpha, seed=args.seed)
            if args.save:
                Path(args.save).mkdir(parents=True, exist_ok=True)
                np.save(Path(args.save) / f"p{p}.npy", np.packbits(ds.records, axis=1))
            r = twoNN(ds, args.metric)
            w.writerow([p, r.dimension, r.n_unique, r.n_kept, r.discarded_fraction])
            fh.flush()
            print(f"p={p}: I_d = {r.dimension:.3f} (kept {r.n_kept}/{r.n_unique}, {time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()
