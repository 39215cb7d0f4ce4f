"""Homogenization rate study: sup error between oscillatory and effective solutions."""

import argparse
import json
import logging

from hj_homogenize.experiments import lipschitz_sweep, rate_experiment
from hj_homogenize.hamiltonians import QUADRATIC, HamiltonianSpec, TrigPotential


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", type=int, default=4, help="eps = 1/8, 1/16, ... (count)")
    parser.add_argument("--final-time", type=float, default=0.5)
    parser.add_argument("--cells-per-period", type=int, default=16)
    parser.add_argument("--amplitude", type=float, default=1.0, help="potential A cos(2 pi y)")
    parser.add_argument("--out", help="write the JSON report here")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    spec = HamiltonianSpec(QUADRATIC, V0=TrigPotential.cosine(args.amplitude))
    u0 = TrigPotential.cosine(0.2)
    eps = [2.0 ** -(3 + k) for k in range(args.levels)]
    rate = rate_experiment(spec, u0, eps, args.final_time, args.cells_per_period)
    sweep = lipschitz_sweep(spec, u0, eps, args.final_time, args.cells_per_period)

    print(f"{'eps':>10} {'error':>12} {'envelope':>12} {'max|Du|':>10}")
    for e, err, env, g in zip(rate.eps, rate.errors, rate.envelope, sweep.max_gradient):
        print(f"{e:10.6f} {err:12.4e} {env:12.4e} {g:10.4f}")
    print(f"slope {rate.slope:.3f}  envelope {'ok' if rate.envelope_ok else 'VIOLATED'}  "
          f"gradient ratio {sweep.gradient_ratio:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"rate": rate.to_dict(), "lipschitz": sweep.to_dict()}, fh, indent=1)


if __name__ == "__main__":
    main()
