"""Monotone Lax-Friedrichs time stepping for ``u_t + H(x/eps, Du) = 0`` on periodic grids."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, OutOfRangeError, SolverDivergenceError
from .grid import GridFunction, PeriodicGrid, one_sided_differences
from .hamiltonians import (HamiltonianSpec, coercivity_radius, estimate_momentum_lipschitz)

MIN_CELLS_PER_PERIOD = 16


@dataclass(frozen=True)
class SchemeConfig:
    """Dissipation, CFL factor and horizon.  ``dt`` is derived unless given.

    With ``momentum_radius`` set, the kinetic term is extended linearly beyond that
    radius inside the scheme, which keeps the flux monotone for any gradient.
    """

    theta: tuple
    final_time: float
    cfl_factor: float = 0.5
    dt: float | None = None
    momentum_radius: float | None = None

    def __post_init__(self):
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if any(not t >= 0 for t in theta):
            raise ConfigurationError(f"dissipation must be non-negative (got {theta})")
        if not 0 < self.cfl_factor <= 1:
            raise ConfigurationError(f"cfl_factor must lie in (0, 1] (got {self.cfl_factor})")
        if not self.final_time > 0:
            raise ConfigurationError(f"final time must be positive (got {self.final_time})")
        object.__setattr__(self, "theta", theta)

    def theta_for(self, grid: PeriodicGrid) -> np.ndarray:
        theta = np.asarray(self.theta)
        if theta.size == 1:
            return np.full(grid.dim, theta[0])
        if theta.size != grid.dim:
            raise ConfigurationError(f"{theta.size} dissipation values for a {grid.dim}-d grid")
        return theta

    def time_step(self, grid: PeriodicGrid) -> float:
        theta = self.theta_for(grid)
        h = np.asarray(grid.spacing)
        D = grid.dim
        if self.dt is None:
            if not np.any(theta > 0):
                return float(self.final_time)   # q-independent flux: any step is exact
            active = theta > 0
            return float(self.cfl_factor * np.min(h[active] / (D * theta[active])))
        ratio = self.dt * D * theta / h
        if np.any(ratio > 1.0):
            axis = int(np.argmax(ratio))
            raise ConfigurationError(
                f"CFL violated on axis {axis}: dt*D*theta/h = {ratio[axis]:.4g} > 1")
        return float(self.dt)


def lf_numerical_hamiltonian(hamiltonian, x, p_minus, p_plus, theta) -> np.ndarray | float:
    """``H(x, (p- + p+)/2) - sum_k theta_k/2 (p+_k - p-_k)``; momenta on the last axis."""
    p_minus = np.asarray(p_minus, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), p_minus.shape[-1:])
    value = hamiltonian(x, 0.5 * (p_minus + p_plus)) - np.sum(
        0.5 * theta * (p_plus - p_minus), axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def cells_per_period(grid: PeriodicGrid, eps: float,
                     minimum: int = MIN_CELLS_PER_PERIOD) -> tuple[int, ...]:
    """Integer number of grid cells per ``eps``-period on every axis, or raise."""
    counts = []
    for axis, h in enumerate(grid.spacing):
        ratio = eps / h
        n = int(round(ratio))
        if abs(ratio - n) > 1e-9 * max(1.0, ratio) or n < minimum:
            lower = max(minimum, int(np.floor(ratio)))
            upper = max(minimum, int(np.ceil(ratio)))
            options = sorted({lower * h, upper * h})
            raise ConfigurationError(
                f"eps = {eps!r} is not grid-commensurate on axis {axis} "
                f"(needs an integer >= {minimum} cells per period); "
                f"nearest commensurate values: {', '.join(f'{v:.10g}' for v in options)}")
        counts.append(n)
    return tuple(counts)


def node_points(grid: PeriodicGrid, eps: float = 0.0) -> np.ndarray:
    """Spatial argument of ``H`` at the nodes, shape ``(*shape, dim)``.

    For ``eps > 0`` this is ``x/eps`` reduced modulo one period by integer index
    arithmetic, so ``eps``-lattice shifts of the grid are exact symmetries.
    """
    idx = grid.indices()
    if eps:
        n = np.asarray(cells_per_period(grid, eps)).reshape((-1,) + (1,) * grid.dim)
        pts = np.mod(idx, n) / n
    else:
        pts = idx * np.asarray(grid.spacing).reshape((-1,) + (1,) * grid.dim)
    return np.moveaxis(pts, 0, -1)


class LaxFriedrichsOperator:
    """Node-wise numerical Hamiltonian with global dissipation on a periodic grid.

    ``kinetic`` maps component-first momenta ``(dim, *shape)`` to ``(*shape)``;
    ``potential`` is a node array (or scalar); ``shift`` is a constant momentum
    added to every discrete gradient (the cell-problem offset).
    """

    def __init__(self, grid, theta, kinetic, potential=0.0, shift=None, kinetic_gradient=None):
        self.grid = grid
        self.theta = np.broadcast_to(np.asarray(theta, dtype=float), (grid.dim,)).copy()
        self.h = np.asarray(grid.spacing)
        self.kinetic = kinetic
        self.kinetic_gradient = kinetic_gradient
        self.potential = potential
        shape = (grid.dim,) + (1,) * grid.dim
        self.shift = None if shift is None else np.asarray(shift, dtype=float).reshape(shape)

    @classmethod
    def from_spec(cls, spec: HamiltonianSpec, grid, theta, eps=0.0, shift=None, radius=None):
        if spec.dim != grid.dim:
            raise ConfigurationError(f"grid dimension {grid.dim} != N*d = {spec.dim}")
        potential = spec.potential(node_points(grid, eps)) if spec.has_potential else 0.0
        if radius is None:
            kinetic = lambda P: spec.kinetic(P, axis=0)  # noqa: E731
            gradient = lambda P: spec.kinetic_gradient(P, axis=0)  # noqa: E731
        else:
            kinetic, gradient = spec.capped_kinetic(radius, axis=0)
        return cls(grid, theta, kinetic, potential, shift, gradient)

    def momenta(self, u):
        pm, pp = one_sided_differences(u, self.h)
        mean = 0.5 * (pm + pp)
        if self.shift is not None:
            mean = mean + self.shift
        return pm, pp, mean

    def __call__(self, u) -> np.ndarray:
        pm, pp, mean = self.momenta(u)
        dissipation = np.tensordot(0.5 * self.theta, pp - pm, axes=(0, 0))
        return self.kinetic(mean) + self.potential - dissipation

    def jacobian(self, u) -> sp.csr_matrix:
        """Sparse derivative of the node-wise numerical Hamiltonian with respect to ``u``."""
        _, _, mean = self.momenta(u)
        g = self.kinetic_gradient(mean)
        grid = self.grid
        size = grid.size
        index = np.arange(size).reshape(grid.shape)
        rows = [index.ravel()]
        cols = [index.ravel()]
        vals = [np.full(size, np.sum(self.theta / self.h))]
        for k in range(grid.dim):
            h, th = self.h[k], self.theta[k]
            for direction, sign in ((-1, 1.0), (1, -1.0)):
                rows.append(index.ravel())
                cols.append(np.roll(index, direction, axis=k).ravel())
                vals.append(((sign * g[k] - th) / (2 * h)).ravel())
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size, size))

    def max_gradient(self, u) -> float:
        pm, pp = one_sided_differences(u, self.h)
        per_axis = np.maximum(np.abs(pm), np.abs(pp))
        if self.shift is not None:
            per_axis = per_axis + np.abs(self.shift)
        return float(np.sqrt(np.sum(per_axis**2, axis=0)).max())


def barrier_constant(operator: LaxFriedrichsOperator, hamiltonian_at, u0: np.ndarray) -> float:
    """``C0``: max over nodes of ``|H(x, p-)|``, ``|H(x, p+)|`` and the numerical flux at ``u0``.

    Including the flux makes ``u0 -/+ C0 t`` exact discrete sub/supersolutions.
    """
    pm, pp = one_sided_differences(u0, operator.h)
    values = [np.abs(hamiltonian_at(pm)), np.abs(hamiltonian_at(pp)), np.abs(operator(u0))]
    return float(max(v.max() for v in values))


def _spec_evaluator(spec, grid, eps):
    potential = spec.potential(node_points(grid, eps)) if spec.has_potential else 0.0
    return lambda P: spec.kinetic(P, axis=0) + potential


def initial_gradient_bound(grid: PeriodicGrid, u0: np.ndarray) -> float:
    pm, pp = one_sided_differences(np.asarray(u0, dtype=float), grid.spacing)
    per_axis = np.maximum(np.abs(pm), np.abs(pp))
    return float(np.sqrt(np.sum(per_axis**2, axis=0)).max())


def default_scheme(spec: HamiltonianSpec, grid: PeriodicGrid, u0, final_time: float,
                   eps: float = 0.0, cfl_factor: float = 0.5) -> SchemeConfig:
    """Global Lax-Friedrichs dissipation from the momentum Lipschitz constant.

    The working radius is ``max(2 * max|Du0|, coercivity radius at level C0)``.
    """
    u0 = np.asarray(u0.values if isinstance(u0, GridFunction) else u0, dtype=float)
    evaluate = _spec_evaluator(spec, grid, eps)
    pm, pp = one_sided_differences(u0, grid.spacing)
    c0 = float(max(np.abs(evaluate(pm)).max(), np.abs(evaluate(pp)).max()))
    radius = max(2.0 * initial_gradient_bound(grid, u0), coercivity_radius(spec, c0), 1e-3)
    theta = estimate_momentum_lipschitz(spec, radius)
    return SchemeConfig(theta=(theta,), final_time=final_time, cfl_factor=cfl_factor,
                        momentum_radius=radius)


@dataclass(frozen=True)
class CauchySolution:
    grid: PeriodicGrid
    times: tuple
    snapshots: tuple
    eps: float
    initial: GridFunction
    max_gradient: float
    time_lipschitz: float
    barrier_constant: float
    barrier_excess: float
    steps: int
    dt: float
    theta: tuple = field(default=())

    def snapshot_at(self, t: float) -> GridFunction:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.snapshots[i]

    def to_csv(self, index: int = -1) -> str:
        return snapshot_csv(self.snapshots[index])


def snapshot_csv(f: GridFunction) -> str:
    """One row per node: integer indices, coordinates, value (17 significant digits)."""
    grid = f.grid
    D = grid.dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"i{k}" for k in range(D)] + [f"x{k}" for k in range(D)] + ["value"])
    idx = grid.indices().reshape(D, -1).T
    h = np.asarray(grid.spacing)
    for row, value in zip(idx, f.values.ravel()):
        writer.writerow([int(i) for i in row] + [f"{c:.17g}" for c in row * h] + [f"{value:.17g}"])
    return buf.getvalue()


def _march(operator, u0, final_time, dt, snapshot_times, evaluate):
    """Forward Euler to each snapshot time; returns snapshots and diagnostics."""
    times = sorted(float(t) for t in snapshot_times)
    if times and (times[0] < 0 or times[-1] > final_time * (1 + 1e-12)):
        raise ConfigurationError(f"snapshot times must lie in [0, {final_time}]")
    u = np.array(u0, dtype=float)
    c0 = barrier_constant(operator, evaluate, u)
    t = 0.0
    step = 0
    snapshots = []
    max_grad = operator.max_gradient(u)
    time_lip = 0.0
    excess = -np.inf
    for target in times:
        while t < target - 1e-13 * max(1.0, target):
            tau = min(dt, target - t)
            flux = operator(u)
            if not np.all(np.isfinite(flux)):
                raise SolverDivergenceError(f"non-finite values at step {step}", step=step)
            u = u - tau * flux
            t += tau
            step += 1
            time_lip = max(time_lip, float(np.max(np.abs(flux))))
            max_grad = max(max_grad, operator.max_gradient(u))
        t = target
        snapshots.append(u.copy())
        excess = max(excess, float(np.max(np.abs(u - u0))) - c0 * target)
    return times, snapshots, c0, max_grad, time_lip, excess, step


def default_snapshots(final_time: float) -> tuple:
    return tuple(final_time * f for f in (0.25, 0.5, 0.75, 1.0))


def solve_cauchy(u0: GridFunction, spec: HamiltonianSpec, scheme: SchemeConfig | None = None,
                 eps: float = 0.0, snapshot_times=None, final_time: float | None = None
                 ) -> CauchySolution:
    """March ``u_t + H(x/eps, Du) = 0`` (``eps = 0``: ``H(x, Du)``) from ``u0``."""
    grid = u0.grid
    if scheme is None:
        if final_time is None:
            raise ConfigurationError("give either a scheme or a final time")
        scheme = default_scheme(spec, grid, u0, final_time, eps)
    theta = scheme.theta_for(grid)
    dt = scheme.time_step(grid)
    operator = LaxFriedrichsOperator.from_spec(spec, grid, theta, eps,
                                               radius=scheme.momentum_radius)
    snaps = default_snapshots(scheme.final_time) if snapshot_times is None else snapshot_times
    evaluate = _spec_evaluator(spec, grid, eps)
    times, values, c0, max_grad, time_lip, excess, steps = _march(
        operator, u0.values, scheme.final_time, dt, snaps, evaluate)
    return CauchySolution(grid, tuple(times), tuple(GridFunction(grid, v) for v in values),
                          float(eps), u0, max_grad, time_lip, c0, excess, steps, dt, tuple(theta))


def step(u: GridFunction, spec: HamiltonianSpec, scheme: SchemeConfig, eps: float = 0.0
         ) -> GridFunction:
    """One forward-Euler update ``u - dt * H_LF``; CFL is checked first."""
    theta = scheme.theta_for(u.grid)
    dt = scheme.time_step(u.grid)
    operator = LaxFriedrichsOperator.from_spec(spec, u.grid, theta, eps,
                                               radius=scheme.momentum_radius)
    return GridFunction(u.grid, u.values - dt * operator(u.values))


def solve_effective_cauchy(u0: GridFunction, table, final_time: float, snapshot_times=None,
                           cfl_factor: float = 0.5, scheme: SchemeConfig | None = None
                           ) -> CauchySolution:
    """March ``u_t + Hbar(Du) = 0`` with ``Hbar`` interpolated from an effective table."""
    grid = u0.grid
    if grid.dim != table.box.dim:
        raise ConfigurationError(f"grid dimension {grid.dim} != table dimension {table.box.dim}")
    if scheme is None:
        scheme = SchemeConfig(theta=(table.lipschitz,), final_time=final_time,
                              cfl_factor=cfl_factor)

    def kinetic(P):
        pts = np.moveaxis(P, 0, -1)
        try:
            return table(pts)
        except OutOfRangeError as exc:
            raise OutOfRangeError(
                f"gradient left the tabulated momentum box; tabulate over a larger box ({exc})"
            ) from None

    theta = scheme.theta_for(grid)
    operator = LaxFriedrichsOperator(grid, theta, kinetic)
    snaps = default_snapshots(scheme.final_time) if snapshot_times is None else snapshot_times
    times, values, c0, max_grad, time_lip, excess, steps = _march(
        operator, u0.values, scheme.final_time, scheme.time_step(grid), snaps, kinetic)
    return CauchySolution(grid, tuple(times), tuple(GridFunction(grid, v) for v in values),
                          0.0, u0, max_grad, time_lip, c0, excess, steps,
                          scheme.time_step(grid), tuple(theta))
