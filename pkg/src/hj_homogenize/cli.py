"""``hj-homogenize <command> --config <path> [--set section.key=value]...``

Writes ``<output_dir>/<command>-<digest>.json`` and ``.csv``.  Exit status: 0 success,
1 invariant violated, 2 configuration error, 3 solver divergence or non-convergence.
Failures also write ``<command>-<digest>-error.json`` (``<command>-error.json`` when
the config itself is invalid).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .cache import cache_dir, cached_table
from .cell import solve_discounted, solve_large_time
from .config import COMMANDS, RunConfig, load_config, parse_toml
from .errors import (ConfigurationError, InvariantViolation, NonConvergenceError,
                     OutOfRangeError, SolverDivergenceError)
from .grid import GridFunction, PeriodicGrid
from .hamiltonians import (TrigPotential, check_periodicity, check_rearrangement_invariance,
                           coercivity_probe, embed_momentum)
from .reduction import symmetrize
from .scheme import snapshot_csv, solve_cauchy

log = logging.getLogger("hj_homogenize")

EXIT_CODES = {"ok": 0, "invariant": 1, "config": 2, "solver": 3}


def write_csv(rows) -> str:
    """Rows to CSV text; floats at 17 significant digits with '.' as separator."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _grid(cfg: RunConfig) -> PeriodicGrid:
    D = cfg.hamiltonian["N"] * cfg.hamiltonian["d"]
    cells = cfg.numerics["cells"]
    cells = cells * D if len(cells) == 1 else cells
    return PeriodicGrid(tuple(cells), (1.0,) * D)


def _u0(cfg: RunConfig) -> TrigPotential:
    return TrigPotential.from_rows(1, cfg.numerics["u0"])


def _momentum(cfg):
    return np.broadcast_to(np.asarray(cfg.numerics["p"], dtype=float), (cfg.hamiltonian["d"],))


def _tabulator(cfg):
    directory = cache_dir(cfg.io["cache_dir"])

    def tabulate(spec, grid, lower, upper, samples, lam, tolerance, theta=None):
        table, hit = cached_table(spec, grid, lower, upper, samples, lam, tolerance, theta,
                                  directory, cfg.numerics["max_iters"])
        log.info("effective table %s", "loaded from cache" if hit else "computed")
        return table
    return tabulate


def run_cell(cfg):
    spec, grid, n = cfg.spec(), _grid(cfg), cfg.numerics
    p = _momentum(cfg)
    sol = solve_discounted(spec, grid, p, n["lambda"], n["tolerance"], n["max_iters"])
    x = np.moveaxis(grid.coords(), 0, -1)
    bound = float(np.max(np.abs(spec(x, np.broadcast_to(embed_momentum(spec, p), x.shape)))))
    lam_v = float(np.max(np.abs(sol.lam * sol.discounted.values)))
    report = {"p": list(sol.p), "lambda": sol.lam, "c_estimate": sol.c_estimate,
              "residual": sol.residual, "iterations": sol.iterations, "spread": sol.spread,
              "theta": list(sol.theta), "max_abs_lambda_v": lam_v, "hamiltonian_bound": bound}
    violations = []
    if lam_v > bound + n["tolerance"]:
        violations.append(f"|lambda v| = {lam_v:.6g} exceeds max |H(y, p)| = {bound:.6g}")
    if n["horizon"] > 0:
        lt = solve_large_time(spec, grid, p, n["horizon"])
        report["large_time"] = {"c_estimate": lt.c_estimate, "c_naive": lt.c_naive,
                                "spread": lt.spread, "horizon": lt.horizon}
    if spec.N > 1 and spec.N <= 4:
        asym = symmetrize(sol.corrector, spec.N).asymmetry
        report["corrector_asymmetry"] = asym
        if asym > 1e-8:
            violations.append(f"corrector asymmetry {asym:.3e} > 1e-8")
    return report, snapshot_csv(sol.corrector), violations


def run_effective_table(cfg):
    n = cfg.numerics
    table = _tabulator(cfg)(cfg.spec(), _grid(cfg), n["p_lower"], n["p_upper"], n["samples"],
                            n["lambda"], n["tolerance"])
    return json.loads(table.to_json()), write_csv(table.csv_rows()), []


def run_cauchy(cfg):
    spec, grid, n = cfg.spec(), _grid(cfg), cfg.numerics
    eps = n["eps"][0] if n["eps"] else 0.0
    u0 = GridFunction(grid, experiments.grid_values(_u0(cfg), grid.cells[0], grid.dim))
    if len(set(grid.cells)) != 1:
        raise ConfigurationError("cauchy runs use the same cell count on every axis")
    sol = solve_cauchy(u0, spec, eps=eps, final_time=n["final_time"])
    report = {"eps": eps, "times": list(sol.times), "steps": sol.steps, "dt": sol.dt,
              "theta": list(sol.theta), "max_gradient": sol.max_gradient,
              "time_lipschitz": sol.time_lipschitz, "barrier_constant": sol.barrier_constant,
              "barrier_excess": sol.barrier_excess,
              "sup_norm": [f.sup_norm() for f in sol.snapshots]}
    violations = []
    if sol.barrier_excess > 1e-8:
        violations.append(f"barrier bound exceeded by {sol.barrier_excess:.3e}")
    return report, sol.to_csv(), violations


def run_rate(cfg):
    n = cfg.numerics
    rep = experiments.rate_experiment(
        cfg.spec(), _u0(cfg), n["eps"], n["final_time"], n["cells_per_period"],
        n["table_samples"], n["lambda"], n["tolerance"], n["cfl_factor"], _tabulator(cfg))
    violations = []
    if not rep.envelope_ok:
        violations.append("error exceeds the eps^(1/3) envelope")
    if "degenerate" not in rep.flags and not rep.slope >= 0.33:
        violations.append(f"fitted slope {rep.slope:.3f} < 0.33")
    return rep.to_dict(), write_csv(rep.csv_rows()), violations


def run_reduce_compare(cfg):
    h, n = cfg.hamiltonian, cfg.numerics
    V0 = TrigPotential.from_rows(1, h["V0"])
    W0 = TrigPotential.from_rows(1, h["W0"])
    rep = experiments.model_reduction_compare(
        V0, W0, n["p_lower"], n["p_upper"], n["samples"], n["lambda"], n["particles"],
        n["particle_cells"], n["particle_tolerances"])
    violations = []
    if W0.is_constant:
        for N, gap, tol in zip(rep.particles, rep.max_gap, rep.tolerances):
            if gap > 2 * tol:
                violations.append(f"N={N}: separability gap {gap:.3e} > 2*tolerance")
    return rep.to_dict(), write_csv(rep.csv_rows()), violations


def run_symmetry_check(cfg):
    spec, n = cfg.spec(), cfg.numerics
    shift = np.asarray(n["shift"], dtype=float).ravel()
    periodic = check_periodicity(spec, n["sample_count"], shift=shift)
    report = {"periodicity_deviation": periodic}
    violations = []
    if periodic > 1e-12:
        violations.append(f"periodicity deviation {periodic:.3e}")
    perm = check_rearrangement_invariance(spec, min(n["sample_count"], 500))
    report.update(rearrangement_deviation=perm.deviation,
                  chain_rule_mismatch=perm.chain_rule_mismatch,
                  permutations=perm.permutations)
    if not perm.ok:
        violations.append("rearrangement invariance or chain rule failed")
    radii = np.linspace(0.0, spec.momentum_cap, 6)[1:]
    probe = coercivity_probe(spec, radii)
    report["coercivity"] = {"radii": radii.tolist(), "values": probe.tolist()}
    if not probe[-1] >= probe[0] + 1:
        violations.append("coercivity probe did not increase by at least 1")
    rows = [["check", "value"], ["periodicity", periodic], ["rearrangement", perm.deviation],
            ["chain_rule", perm.chain_rule_mismatch]]
    rows += [[f"coercivity_r={r:.6g}", v] for r, v in zip(radii, probe)]
    return report, write_csv(rows), violations


def run_n_particle_check(cfg):
    n = cfg.numerics
    rep = experiments.n_particle_homogenization_check(
        cfg.spec(), _u0(cfg), n["eps"], n["final_time"], n["cells_per_period"],
        n["table_samples"], n["lambda"], n["tolerance"], n["cfl_factor"], _tabulator(cfg))
    violations = []
    if max(rep.invariance) > 1e-12:
        violations.append(f"lattice-shift invariance deviation {max(rep.invariance):.3e}")
    return rep.to_dict(), write_csv(rep.csv_rows()), violations


RUNNERS = {
    "cell": run_cell, "effective-table": run_effective_table, "cauchy": run_cauchy,
    "rate": run_rate, "reduce-compare": run_reduce_compare,
    "symmetry-check": run_symmetry_check, "n-particle-check": run_n_particle_check,
}


def _dump(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def run(cfg: RunConfig) -> int:
    """Dispatch, write artifacts, and map failures to exit statuses."""
    out = Path(cfg.io["output_dir"])
    stem = f"{cfg.command}-{cfg.digest()}"
    try:
        report, csv_text, violations = RUNNERS[cfg.command](cfg)
    except (ConfigurationError, OutOfRangeError) as exc:
        return _fail(out / f"{stem}-error.json", "config", exc)
    except (SolverDivergenceError, NonConvergenceError) as exc:
        return _fail(out / f"{stem}-error.json", "solver", exc)
    except InvariantViolation as exc:
        return _fail(out / f"{stem}-error.json", "invariant", exc)
    payload = {"command": cfg.command, "digest": cfg.digest(), "config": cfg.canonical(),
               "report": report, "violations": violations}
    if cfg.io["json"]:
        _dump(out / f"{stem}.json", payload)
    if cfg.io["csv"]:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(csv_text)
    for v in violations:
        log.error("invariant violated: %s", v)
    return EXIT_CODES["invariant"] if violations else EXIT_CODES["ok"]


def _fail(path: Path, kind: str, exc: Exception) -> int:
    payload = {"status": kind, "exit_code": EXIT_CODES[kind], "type": type(exc).__name__,
               "message": str(exc)}
    if isinstance(exc, ConfigurationError):
        payload["errors"] = exc.errors
    if isinstance(exc, NonConvergenceError):
        payload.update(last_residual=exc.last_residual, iterations=exc.iterations)
    if isinstance(exc, SolverDivergenceError):
        payload["step"] = exc.step
    _dump(path, payload)
    log.error("%s", exc)
    return EXIT_CODES[kind]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hj-homogenize", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable; wins over the file)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        return _fail(Path("out") / f"{args.command}-error.json", "config",
                     ConfigurationError(f"cannot read config: {exc}"))
    try:
        cfg = load_config(args.command, text, args.set)
    except ConfigurationError as exc:
        out = _output_dir_guess(text)
        return _fail(out / f"{args.command}-error.json", "config", exc)
    return run(cfg)


def _output_dir_guess(text: str) -> Path:
    """Best-effort output directory for reporting an invalid config."""
    try:
        value = parse_toml(text).get("io", {}).get("output_dir", "out")
        return Path(value if isinstance(value, str) else "out")
    except ConfigurationError:
        return Path("out")


if __name__ == "__main__":
    sys.exit(main())
