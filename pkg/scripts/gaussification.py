"""Excess kurtosis of X_A + X_B versus success rate at one phase-noise strength.

Measures only the (X,X) setting so every shot contributes.

    python scripts/gaussification.py --sigma 0.497
"""

import argparse
import math

from cvdistill.metrics import gaussianity
from cvdistill.oracle import q_for_success_rate
from cvdistill.protocol import ProtocolConfig, simulate_shots


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sigma", type=float, default=0.497)
    ap.add_argument("--shots", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=ProtocolConfig.seed)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.02, 0.05, 0.1, 0.2, 0.5, 0.8])
    args = ap.parse_args()

    cfg = ProtocolConfig(sigma_pn=args.sigma, n_shots=args.shots, seed=args.seed, bhd_settings=((0.0, 0.0),))
    shots = simulate_shots(cfg)
    print(f"{'target':>7} {'rate':>7} {'accepted':>9} {'kurtosis':>17}")
    for target in [*args.rates, 1.0]:
        Q = math.inf if target >= 1 else q_for_success_rate(cfg, target)
        ens = shots.ensemble(Q)
        xx = ens.readings((0.0, 0.0))
        k = gaussianity(xx[:, 0] + xx[:, 1])
        print(f"{target:7.3f} {ens.success_rate:7.4f} {ens.accepted:9d} {k.value:8.4f}+-{k.se:.4f}")


if __name__ == "__main__":
    main()
