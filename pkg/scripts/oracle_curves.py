"""Noise-free reference curves from the quadrature oracle.

Prints total variance, determinant and log-negativity against success
rate for each phase-noise strength, with no sampling error.

    python scripts/oracle_curves.py
    python scripts/oracle_curves.py --sigma 0.497 --rates 0.02 0.05 0.1 0.2 0.5 0.8
"""

import argparse
import math

from cvdistill.harness import DEFAULT_SIGMAS
from cvdistill.metrics import log_negativity
from cvdistill.oracle import oracle_conditional_moments, q_for_success_rate
from cvdistill.protocol import ProtocolConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sigma", type=float, nargs="+", default=list(DEFAULT_SIGMAS))
    ap.add_argument("--rates", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9])
    args = ap.parse_args()

    print(f"{'sigma':>6} {'rate':>6} {'Q':>8} {'I':>8} {'D':>8} {'E_N':>7} {'Var X+':>8}")
    for sigma in args.sigma:
        cfg = ProtocolConfig(sigma_pn=sigma)
        points = [(r, q_for_success_rate(cfg, r)) for r in args.rates] + [(1.0, math.inf)]
        for rate, Q in points:
            o = oracle_conditional_moments(cfg, Q=Q)
            print(
                f"{sigma:6.3f} {rate:6.3f} {Q:8.4f} {o.total_variance:8.5f} {o.determinant:8.4f} "
                f"{log_negativity(o.gamma_normalized):7.4f} {o.var_xplus:8.5f}"
            )


if __name__ == "__main__":
    main()
