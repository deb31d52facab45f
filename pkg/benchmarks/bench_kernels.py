"""Compiled vs pure-Python local solver kernel.

    python benchmarks/bench_kernels.py [--repeats 5]

Prints best-of-N wall time per backend and the largest coefficient
difference against the Python result. Both backends run the same
algorithm, so the difference should sit at rounding level.
"""

import argparse

from locagg.bench import bench_kernels
from locagg.kernels import compiled_available


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not compiled_available():
        print("compiled kernels not built; timing the Python fallback only")
    rows = bench_kernels(sizes=((100, 30), (200, 100), (500, 200)), repeats=args.repeats)
    base = {(f, n, t): s for b, f, n, t, s, _ in rows if b == "python"}
    print(f"{'backend':8} {'family':9} {'n':>5} {'tau':>5} {'ms':>9} {'speedup':>8} {'max|diff|':>10}")
    for backend, family, n, tau, secs, diff in rows:
        speedup = base[(family, n, tau)] / secs
        print(f"{backend:8} {family:9} {n:5d} {tau:5d} {secs * 1e3:9.3f} {speedup:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
