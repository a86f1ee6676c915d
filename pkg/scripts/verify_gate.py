"""Monte Carlo versus oracle comparison on the default grid.

Exits nonzero when any |z| exceeds the threshold or the oracle fails to
converge. Same check as ``cvdistill --verify``, with a per-quantity summary.

    python scripts/verify_gate.py
    python scripts/verify_gate.py --shots 200000 --sigma 0.3 0.497
"""

import argparse
import collections
import sys

from cvdistill.harness import DEFAULT_Q_GRID, DEFAULT_SIGMAS, SweepSpec, verify
from cvdistill.protocol import ProtocolConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--shots", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=ProtocolConfig.seed)
    ap.add_argument("--sigma", type=float, nargs="+", default=list(DEFAULT_SIGMAS))
    ap.add_argument("--threshold", type=float, default=4.0)
    args = ap.parse_args()

    spec = SweepSpec(Q_grid=DEFAULT_Q_GRID, sigma_list=tuple(args.sigma), base=ProtocolConfig(n_shots=args.shots, seed=args.seed))
    report = verify(spec, threshold=args.threshold)
    by_quantity = collections.defaultdict(list)
    for c in report.comparisons:
        by_quantity[c.quantity].append(c.z)
    print(f"{'quantity':>12} {'n':>4} {'max|z|':>7} {'rms z':>6}")
    for name, zs in by_quantity.items():
        rms = (sum(z * z for z in zs) / len(zs)) ** 0.5
        print(f"{name:>12} {len(zs):4d} {max(abs(z) for z in zs):7.2f} {rms:6.2f}")
    for msg in report.oracle_failures:
        print("oracle:", msg)
    print(f"{len(report.comparisons)} comparisons, max |z| = {report.max_abs_z:.2f}: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
