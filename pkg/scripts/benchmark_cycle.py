"""Wall time of one full trajectory cycle (unitary, reset layer, X and X^2) versus L.

Usage: python scripts/benchmark_cycle.py --L 12 14 16 18 20
"""

import argparse

from kickreset.experiments import cycle_time, scaling_exponent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, nargs="+", default=list(range(12, 21)))
    args = ap.parse_args()
    ts = []
    for L in args.L:
        ts.append(cycle_time(L))
        print(f"L={L}: {ts[-1] * 1e3:.3f} ms per cycle")
    print(f"exponent of L 2^L: {scaling_exponent(args.L, ts):.3f}")


if __name__ == "__main__":
    main()
