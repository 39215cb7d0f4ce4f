"""Two-particle oscillatory runs: lattice invariance, mean closeness, effective gap."""

import argparse
import json
import logging

from hj_homogenize.experiments import n_particle_homogenization_check
from hj_homogenize.hamiltonians import MEAN_FIELD, HamiltonianSpec, TrigPotential


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", type=int, default=3, help="eps = 1/4, 1/8, ... (count)")
    parser.add_argument("--final-time", type=float, default=0.5)
    parser.add_argument("--interaction", type=float, default=0.0)
    parser.add_argument("--out")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    W0 = (TrigPotential(1, (((1,), args.interaction, 0.0),)) if args.interaction
          else TrigPotential.zero(1))
    spec = HamiltonianSpec(MEAN_FIELD, N=2, V0=TrigPotential.cosine(1), W0=W0)
    eps = [2.0 ** -(2 + k) for k in range(args.levels)]
    report = n_particle_homogenization_check(spec, TrigPotential.cosine(0.2), eps,
                                             args.final_time)
    ratios = [float("nan")] + report.closeness_ratios
    print(f"{'eps':>8} {'invariance':>11} {'closeness':>11} {'ratio':>7} {'eff. gap':>11}")
    for row in zip(report.eps, report.invariance, report.closeness, ratios, report.effective_gap):
        print("{:8.5f} {:11.2e} {:11.4e} {:7.3f} {:11.4e}".format(*row))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)


if __name__ == "__main__":
    main()
