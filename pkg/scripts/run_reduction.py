"""Reduced one-particle effective Hamiltonian against N-particle cell problems."""

import argparse
import json
import logging

from hj_homogenize.experiments import model_reduction_compare
from hj_homogenize.hamiltonians import TrigPotential


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--interaction", type=float, default=0.5,
                        help="W0(w) = a cos(2 pi w); 0 gives the separable control case")
    parser.add_argument("--particles", type=int, nargs="+", default=[2, 3])
    parser.add_argument("--cells", type=int, nargs="+", default=[64, 32])
    parser.add_argument("--tolerances", type=float, nargs="+", default=[1e-8, 1e-6])
    parser.add_argument("--samples", type=int, default=9)
    parser.add_argument("--out")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    W0 = (TrigPotential(1, (((1,), args.interaction, 0.0),)) if args.interaction
          else TrigPotential.zero(1))
    report = model_reduction_compare(TrigPotential.cosine(1), W0, -2.0, 2.0, args.samples,
                                     particles=args.particles, cells=args.cells,
                                     tolerances=args.tolerances)
    for N, n, gap, mean in zip(report.particles, report.cells, report.max_gap, report.mean_gap):
        print(f"N={N} on {n}^{N} cells: max gap {gap:.3e}, mean gap {mean:.3e}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)


if __name__ == "__main__":
    main()
