"""Generate the sweep datasets behind the threshold, total-variance, matrix and determinant figures.

    python scripts/figure_data.py --out runs/default
    python scripts/figure_data.py --out runs/quick --shots 200000 --sigma 0.497
"""

import argparse
import logging
import time

from cvdistill.harness import DEFAULT_Q_GRID, DEFAULT_SIGMAS, SweepSpec, run_sweep
from cvdistill.protocol import ProtocolConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--shots", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=ProtocolConfig.seed)
    ap.add_argument("--sigma", type=float, nargs="+", default=list(DEFAULT_SIGMAS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    spec = SweepSpec(
        Q_grid=DEFAULT_Q_GRID,
        sigma_list=tuple(args.sigma),
        base=ProtocolConfig(n_shots=args.shots, seed=args.seed),
        output_path=args.out,
    )
    t0 = time.perf_counter()
    res = run_sweep(spec)
    print(f"{len(res.rows)} points in {time.perf_counter() - t0:.1f}s -> {args.out}")
    print(f"{'sigma':>6} {'Q':>6} {'rate':>7} {'I':>14} {'D':>14} {'kurt':>14}")
    for r in res.rows:
        print(
            f"{r['sigma_pn']:6.3f} {r['Q']:6.3g} {r['success_rate']:7.4f} "
            f"{r['I']:7.4f}+-{r['I_se']:.4f} {r['D']:7.3f}+-{r['D_se']:.3f} "
            f"{r['kurtosis']:7.3f}+-{r['kurtosis_se']:.3f} {r['flag']}"
        )


if __name__ == "__main__":
    main()
