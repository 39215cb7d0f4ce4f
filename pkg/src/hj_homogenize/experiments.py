"""Orchestrated studies: convergence rate in eps, model reduction across particle
counts, equi-Lipschitz sweeps and the two-particle homogenization check.

Every report is a flat dataclass of floats, strings and lists, so
``Report.from_dict(json.loads(json.dumps(report.to_dict()))) == report``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .cell import DEFAULT_LAMBDA, DEFAULT_TOLERANCE, cell_dissipation, tabulate_effective
from .errors import ConfigurationError
from .grid import GridFunction, make_grid
from .hamiltonians import (MEAN_FIELD, HamiltonianSpec, TrigPotential, reduced_hamiltonian)
from .reduction import mean_closeness_report, y_eps_invariance_check
from .scheme import (MIN_CELLS_PER_PERIOD, SchemeConfig, default_scheme, solve_cauchy,
                     solve_effective_cauchy)

log = logging.getLogger(__name__)

RATE_EXPONENT = 1.0 / 3.0
ENVELOPE_FACTOR = 1.5


class _Report:
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def _floats(values) -> list:
    return [float(v) for v in values]


def grid_values(g: TrigPotential, cells: int, dim: int = 1, multiplier: int = 1) -> np.ndarray:
    """``g(multiplier * sum_k x_k)`` at the nodes of a ``cells^dim`` unit grid.

    The argument is reduced modulo 1 in integer arithmetic, so the result is exactly
    periodic in every coordinate and exactly a function of the coordinate sum.
    """
    idx = np.indices((cells,) * dim).sum(axis=0) * multiplier
    return g((np.mod(idx, cells) / cells)[..., None])


def _check_eps_sequence(eps_list, cells_per_period):
    eps = [float(e) for e in eps_list]
    if len(eps) < 2:
        raise ConfigurationError("need at least two eps values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigurationError("eps sequence must be strictly decreasing")
    if cells_per_period < MIN_CELLS_PER_PERIOD:
        raise ConfigurationError(
            f"cells_per_period must be >= {MIN_CELLS_PER_PERIOD} (got {cells_per_period})")
    cells = []
    for e in eps:
        n = cells_per_period / e
        if abs(n - round(n)) > 1e-9 * n:
            lo = cells_per_period / np.floor(n)
            hi = cells_per_period / np.ceil(n)
            raise ConfigurationError(
                f"eps = {e!r} is not grid-commensurate with {cells_per_period} cells per "
                f"period; nearest commensurate values: {hi:.10g}, {lo:.10g}")
        cells.append(int(round(n)))
    return eps, cells


def _common_scheme(spec, grids_and_data, final_time, eps_list, cfl_factor):
    """One dissipation and working radius valid for every run of a sweep."""
    schemes = [default_scheme(spec, grid, u0, final_time, eps, cfl_factor)
               for (grid, u0), eps in zip(grids_and_data, eps_list)]
    theta = max(s.theta[0] for s in schemes)
    radius = max(s.momentum_radius for s in schemes)
    return SchemeConfig(theta=(theta,), final_time=final_time, cfl_factor=cfl_factor,
                        momentum_radius=radius)


def _effective_box(gradient_bound, margin=1.5):
    half = max(1.0, margin * gradient_bound)
    return -half, half


@dataclass(frozen=True)
class _OscillatoryRuns:
    eps: list
    solutions: list
    scheme: SchemeConfig


def _oscillatory_runs(spec, u0, eps_list, final_time, cells_per_period, cfl_factor):
    eps, cells = _check_eps_sequence(eps_list, cells_per_period)
    d = spec.dim
    data = []
    for n in cells:
        grid = make_grid(d, n)
        data.append((grid, GridFunction(grid, grid_values(u0, n, d))))
    scheme = _common_scheme(spec, data, final_time, eps, cfl_factor)
    solutions = []
    for (grid, f), e in zip(data, eps):
        log.info("oscillatory run eps=%g on %s cells", e, grid.cells)
        solutions.append(solve_cauchy(f, spec, scheme, eps=e))
    return _OscillatoryRuns(eps, solutions, scheme)


def fit_rate(eps, errors, use=None) -> tuple[float, float]:
    """Least-squares slope of ``log error`` against ``log eps`` and the RMS residual."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = np.ones(eps.size, bool) if use is None else np.asarray(use, bool)
    if mask.sum() < 2:
        return float("nan"), float("nan")
    x, y = np.log(eps[mask]), np.log(errors[mask])
    coeffs = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y) ** 2)))
    return float(coeffs[0]), residual


@dataclass(frozen=True)
class RateReport(_Report):
    spec_digest: str
    eps: list
    errors: list
    slope: float
    fit_residual: float
    prefactor: float
    horizon: float
    flags: list
    resolution_limited: list
    envelope: list
    envelope_ok: bool
    max_gradient: list
    time_lipschitz: list
    barrier_constant: list

    def csv_rows(self) -> list[list]:
        rows = [["eps", "error", "envelope", "resolution_limited"]]
        for e, err, env, lim in zip(self.eps, self.errors, self.envelope,
                                    self.resolution_limited):
            rows.append([e, err, env, int(lim)])
        return rows


def rate_experiment(spec: HamiltonianSpec, u0: TrigPotential, eps_list, final_time: float,
                    cells_per_period: int = MIN_CELLS_PER_PERIOD, table_samples: int = 33,
                    lam: float = DEFAULT_LAMBDA, tolerance: float = DEFAULT_TOLERANCE,
                    cfl_factor: float = 0.5, tabulate=tabulate_effective) -> RateReport:
    """Sup-norm gap between oscillatory and effective solutions across ``eps``.

    The effective Hamiltonian is tabulated on the same ``cells_per_period`` cell grid
    with the same dissipation as the oscillatory scheme: the discrete oscillatory
    problem then homogenizes to exactly that discrete effective equation, so the
    measured gap isolates the homogenization error.  ``tabulate`` has the signature
    of :func:`tabulate_effective` and lets callers substitute a cached version.
    """
    if spec.N != 1:
        raise ConfigurationError("rate_experiment expects a single-particle spec")
    runs = _oscillatory_runs(spec, u0, eps_list, final_time, cells_per_period, cfl_factor)
    degenerate = not spec.has_potential
    gmax = max(s.max_gradient for s in runs.solutions)
    lo, hi = _effective_box(gmax)
    table = tabulate(spec, make_grid(spec.d, cells_per_period), lo, hi, table_samples, lam,
                     tolerance, theta=runs.scheme.theta[0])
    # the effective march reuses the oscillatory dissipation and hence the same time step
    effective_scheme = SchemeConfig(theta=runs.scheme.theta, final_time=final_time,
                                    cfl_factor=cfl_factor)
    errors = []
    for sol in runs.solutions:
        eff = solve_effective_cauchy(sol.initial, table, final_time, sol.times,
                                     scheme=effective_scheme)
        errors.append(max(float(np.max(np.abs(a.values - b.values)))
                          for a, b in zip(sol.snapshots, eff.snapshots)))
    return _rate_report(spec.digest(), runs, errors, final_time, degenerate)


def _rate_report(digest, runs, errors, final_time, degenerate):
    eps = runs.eps
    limited = [False] + [errors[i] >= errors[i - 1] for i in range(1, len(errors))]
    flags = []
    if degenerate:
        flags.append("degenerate")
    if any(limited):
        flags.append("resolution-limited")
    if degenerate or max(errors) <= 0:
        slope, resid = float("nan"), float("nan")
    else:
        slope, resid = fit_rate(eps, errors, [not x for x in limited])
    prefactor = errors[0] / eps[0] ** RATE_EXPONENT
    envelope = [ENVELOPE_FACTOR * prefactor * e ** RATE_EXPONENT for e in eps]
    return RateReport(
        spec_digest=digest, eps=_floats(eps), errors=_floats(errors), slope=slope,
        fit_residual=resid, prefactor=float(prefactor), horizon=float(final_time),
        flags=flags, resolution_limited=limited, envelope=_floats(envelope),
        envelope_ok=bool(all(err <= env for err, env in zip(errors, envelope))),
        max_gradient=_floats(s.max_gradient for s in runs.solutions),
        time_lipschitz=_floats(s.time_lipschitz for s in runs.solutions),
        barrier_constant=_floats(s.barrier_constant for s in runs.solutions))


@dataclass(frozen=True)
class LipschitzSweep(_Report):
    eps: list
    max_gradient: list
    time_lipschitz: list
    barrier_constant: list
    gradient_ratio: float
    time_ratio: float
    time_within_barrier: bool

    def csv_rows(self) -> list[list]:
        rows = [["eps", "max_gradient", "time_lipschitz", "barrier_constant"]]
        rows += [list(r) for r in zip(self.eps, self.max_gradient, self.time_lipschitz,
                                      self.barrier_constant)]
        return rows


def lipschitz_sweep(spec: HamiltonianSpec, u0: TrigPotential, eps_list, final_time: float,
                    cells_per_period: int = MIN_CELLS_PER_PERIOD, cfl_factor: float = 0.5,
                    tolerance: float = 1e-6) -> LipschitzSweep:
    """Observed spatial and temporal Lipschitz constants of ``u^eps`` across ``eps``."""
    runs = _oscillatory_runs(spec, u0, eps_list, final_time, cells_per_period, cfl_factor)
    grad = [s.max_gradient for s in runs.solutions]
    tlip = [s.time_lipschitz for s in runs.solutions]
    c0 = [s.barrier_constant for s in runs.solutions]
    return LipschitzSweep(
        eps=_floats(runs.eps), max_gradient=_floats(grad), time_lipschitz=_floats(tlip),
        barrier_constant=_floats(c0), gradient_ratio=float(max(grad) / min(grad)),
        time_ratio=float(max(tlip) / min(tlip)) if min(tlip) > 0 else 1.0,
        time_within_barrier=bool(all(t <= c + tolerance for t, c in zip(tlip, c0))))


@dataclass(frozen=True)
class ReductionReport(_Report):
    p_nodes: list
    particles: list
    cells: list
    reduced_values: list
    particle_values: list
    max_gap: list
    mean_gap: list
    w0_amplitude: float
    theta: float
    tolerances: list

    def csv_rows(self) -> list[list]:
        rows = [["N", "cells", "p", "Hbar_reduced", "Hbar_N", "gap"]]
        for N, n, ref, vals in zip(self.particles, self.cells, self.reduced_values,
                                   self.particle_values):
            for p, a, b in zip(self.p_nodes, ref, vals):
                rows.append([N, n, p, a, b, abs(a - b)])
        return rows


def model_reduction_compare(V0: TrigPotential, W0: TrigPotential, lower: float, upper: float,
                            samples: int = 9, lam: float = DEFAULT_LAMBDA,
                            particles=(2, 3), cells=(64, 32), tolerances=None
                            ) -> ReductionReport:
    """Effective Hamiltonian of the reduced one-particle problem against ``N`` particles.

    For each ``N`` the reduced table is computed on a 1-d grid with the same number of
    cells per axis and the same dissipation as the ``N``-particle table; with
    ``W0 = 0`` the discrete problems then decouple exactly.
    """
    tolerances = [DEFAULT_TOLERANCE] * len(particles) if tolerances is None else list(tolerances)
    if not (len(particles) == len(cells) == len(tolerances)):
        raise ConfigurationError("particles, cells and tolerances must have equal length")
    reduced = reduced_hamiltonian(V0, W0)
    nodes = np.linspace(lower, upper, samples)
    theta = max(cell_dissipation(reduced.with_particles(N), nodes[:, None])[0]
                for N in (1, *particles))
    ref_values, part_values, max_gap, mean_gap = [], [], [], []
    for N, n, tol in zip(particles, cells, tolerances):
        ref = tabulate_effective(reduced, make_grid(1, n), lower, upper, samples, lam,
                                 DEFAULT_TOLERANCE, theta=theta)
        log.info("N=%d particle table on %d^%d cells", N, n, N)
        part = tabulate_effective(reduced.with_particles(N), make_grid(N, n), lower, upper,
                                  samples, lam, tol, theta=theta)
        gaps = np.abs(ref.values - part.values)
        ref_values.append(_floats(ref.values))
        part_values.append(_floats(part.values))
        max_gap.append(float(gaps.max()))
        mean_gap.append(float(gaps.mean()))
    return ReductionReport(
        p_nodes=_floats(nodes), particles=[int(N) for N in particles],
        cells=[int(n) for n in cells], reduced_values=ref_values, particle_values=part_values,
        max_gap=max_gap, mean_gap=mean_gap,
        w0_amplitude=float(sum(abs(a) + abs(b) for _, a, b in W0.terms)),
        theta=float(theta), tolerances=_floats(tolerances))


@dataclass(frozen=True)
class ParticleHomogenizationReport(_Report):
    eps: list
    invariance: list
    closeness: list
    closeness_ratios: list
    effective_gap: list
    effective_prefactor: float
    effective_envelope_ok: bool
    horizon: float

    def csv_rows(self) -> list[list]:
        rows = [["eps", "invariance", "closeness", "closeness_ratio", "effective_gap"]]
        ratios = [float("nan")] + list(self.closeness_ratios)
        for row in zip(self.eps, self.invariance, self.closeness, ratios, self.effective_gap):
            rows.append(list(row))
        return rows


def n_particle_homogenization_check(spec: HamiltonianSpec, g: TrigPotential, eps_list,
                                    final_time: float,
                                    cells_per_period: int = MIN_CELLS_PER_PERIOD,
                                    table_samples: int = 33, lam: float = DEFAULT_LAMBDA,
                                    tolerance: float = DEFAULT_TOLERANCE,
                                    cfl_factor: float = 0.5, tabulate=tabulate_effective
                                    ) -> ParticleHomogenizationReport:
    """Oscillatory two-particle run from ``u0 = g(x1 + x2)`` against the mean dynamics.

    Reports the exact lattice-shift invariance, the distance to the value at the mean
    configuration and the gap between ``u^eps`` on the diagonal and the 1-d effective
    solution ``U_t + Hbar_N(U_m) = 0``, ``U(m, 0) = g(N m)``.
    """
    if spec.family != MEAN_FIELD or spec.d != 1 or spec.N != 2:
        raise ConfigurationError("the particle homogenization check expects mean_field_N, "
                                 "N = 2, d = 1")
    N = spec.N
    eps, cells = _check_eps_sequence(eps_list, cells_per_period)
    data = []
    for n in cells:
        grid = make_grid(N, n)
        data.append((grid, GridFunction(grid, grid_values(g, n, N))))
    scheme = _common_scheme(spec, data, final_time, eps, cfl_factor)
    slope_bound = N * g.gradient_bound
    lo, hi = _effective_box(slope_bound)
    table = tabulate(spec, make_grid(N, cells_per_period), lo, hi, table_samples, lam,
                     tolerance, theta=scheme.theta[0])
    z = np.array([[1], [-1]])
    invariance, closeness, gaps = [], [], []
    for (grid, u0), e, n in zip(data, eps, cells):
        log.info("two-particle run eps=%g on %d^2 cells", e, n)
        sol = solve_cauchy(u0, spec, scheme, eps=e)
        invariance.append(y_eps_invariance_check(sol, e, z).deviation)
        closeness.append(mean_closeness_report(sol, N).deviation)
        line = make_grid(1, n)
        U0 = GridFunction(line, grid_values(g, n, 1, multiplier=N))
        eff = solve_effective_cauchy(U0, table, final_time, sol.times, cfl_factor=cfl_factor)
        diag = np.arange(n)
        gaps.append(max(float(np.max(np.abs(s.values[diag, diag] - u.values)))
                        for s, u in zip(sol.snapshots, eff.snapshots)))
    ratios = [closeness[i] / closeness[i + 1] for i in range(len(eps) - 1)]
    prefactor = gaps[0] / eps[0] ** RATE_EXPONENT
    ok = all(gap <= ENVELOPE_FACTOR * prefactor * e ** RATE_EXPONENT for gap, e in zip(gaps, eps))
    return ParticleHomogenizationReport(
        eps=_floats(eps), invariance=_floats(invariance), closeness=_floats(closeness),
        closeness_ratios=_floats(ratios), effective_gap=_floats(gaps),
        effective_prefactor=float(prefactor), effective_envelope_ok=bool(ok),
        horizon=float(final_time))
