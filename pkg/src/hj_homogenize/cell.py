"""Discounted cell problems, ergodic constants and effective-Hamiltonian tables.

For a macroscopic momentum ``p`` the discrete discounted cell problem is

    lam * v + H_LF(y, p_emb + D-v, p_emb + D+v) = 0   on the N-particle torus,

with ``p_emb = (p/N, ..., p/N)``.  ``-lam * v`` approximates the ergodic constant
``Hbar(p)`` to ``O(lam)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConfigurationError, InvariantViolation, NonConvergenceError,
                     SolverDivergenceError)
from .grid import BoxGrid, GridFunction, PeriodicGrid, interpolate
from .hamiltonians import (QUARTIC, HamiltonianSpec, coercivity_radius, embed_momentum,
                           estimate_momentum_lipschitz, potential_range)
from .scheme import LaxFriedrichsOperator, SchemeConfig, _march

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-3
DEFAULT_TOLERANCE = 1e-8
LAMBDA_SEQUENCE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


@dataclass(frozen=True)
class CellSolution:
    p: tuple
    lam: float
    corrector: GridFunction
    discounted: GridFunction
    c_estimate: float
    residual: float
    iterations: int
    theta: tuple
    radius: float

    @property
    def spread(self) -> float:
        """``max - min`` of ``lam * v`` over the nodes."""
        return float(self.lam * np.ptp(self.discounted.values))


def cell_dissipation(spec: HamiltonianSpec, momenta, margin: float = 1.1) -> tuple[float, float]:
    """``(theta, radius)`` covering every corrector gradient for the given momenta.

    Any discrete solution has ``K(|p_emb + Dv|) <= max_y H(y, p_emb) - min U``, which
    fixes ``radius`` through coercivity; ``theta`` is the momentum Lipschitz constant
    on that ball times ``margin``.
    """
    momenta = np.atleast_2d(np.asarray(momenta, dtype=float).reshape(-1, spec.d))
    _, u_hi = potential_range(spec)
    level = -np.inf
    p_norm = 0.0
    for p in momenta:
        q = embed_momentum(spec, p)
        level = max(level, float(spec.kinetic(q)) + u_hi)
        p_norm = max(p_norm, float(np.linalg.norm(q)))
    radius = max(coercivity_radius(spec, level), p_norm, 1e-3)
    return margin * estimate_momentum_lipschitz(spec, radius), radius


def cell_theta(spec: HamiltonianSpec, momenta, margin: float = 1.1) -> float:
    return cell_dissipation(spec, momenta, margin)[0]


def cell_operator(spec: HamiltonianSpec, grid: PeriodicGrid, p, theta, radius=None
                  ) -> LaxFriedrichsOperator:
    return LaxFriedrichsOperator.from_spec(spec, grid, theta, shift=embed_momentum(spec, p),
                                           radius=radius)


def _node_hamiltonian_range(spec, grid, p):
    op = cell_operator(spec, grid, p, 1.0)
    values = op.kinetic(op.shift) + op.potential
    values = np.broadcast_to(values, grid.shape)
    return float(values.min()), float(values.max())


def _check_inputs(spec, grid, lam):
    if not lam > 0:
        raise ConfigurationError(f"discount must be positive (got {lam})")
    if grid.dim != spec.dim:
        raise ConfigurationError(f"grid dimension {grid.dim} != N*d = {spec.dim}")


def _newton_direction(J, rhs, dim):
    """Direct LU up to two dimensions; BiCGSTAB in 3-d where LU fill-in is prohibitive."""
    if dim >= 3:
        scale = float(np.max(np.abs(rhs))) or 1.0
        delta, info = spla.bicgstab(J, rhs, rtol=1e-13, atol=1e-14 * scale, maxiter=20000)
        if info == 0:
            return delta
        log.debug("bicgstab returned %d; falling back to direct solve", info)
    return spla.spsolve(J.tocsc(), rhs)


def solve_discounted(spec: HamiltonianSpec, grid: PeriodicGrid, p, lam: float = DEFAULT_LAMBDA,
                     tolerance: float = DEFAULT_TOLERANCE, max_iters: int = 200,
                     initial=None, theta: float | None = None, method: str = "newton",
                     radius: float | None = None) -> CellSolution:
    """Solve the discrete discounted cell problem to a max-norm residual ``tolerance``.

    The kinetic term is extended linearly beyond the working ``radius``, so the flux is
    monotone for every argument and the Newton Jacobian is an M-matrix.  For convex
    families full Newton steps then converge monotonically (Howard's argument); the
    nonconvex family uses a line search with pseudo-time fallback.  ``method="march"``
    runs only the semi-implicit pseudo-time iteration.
    """
    _check_inputs(spec, grid, lam)
    p = tuple(np.broadcast_to(np.asarray(p, dtype=float), (spec.d,)).tolist())
    auto_theta, auto_radius = cell_dissipation(spec, [p])
    theta = auto_theta if theta is None else float(theta)
    radius = auto_radius if radius is None else float(radius)
    op = cell_operator(spec, grid, p, theta, radius)
    dt = 0.5 * float(np.min(np.asarray(grid.spacing) / (grid.dim * theta)))

    # v = base + w with scalar base ~ -c/lam; differencing only w keeps rounding at O(eps)
    if initial is None:
        lo, hi = _node_hamiltonian_range(spec, grid, p)
        base, w = -0.5 * (lo + hi) / lam, np.zeros(grid.shape)
    else:
        v0 = np.array(np.broadcast_to(np.asarray(
            initial.values if isinstance(initial, GridFunction) else initial, dtype=float),
            grid.shape))
        base = float(np.mean(v0))
        w = v0 - base

    def residual_of(base, w):
        r = lam * base + lam * w + op(w)
        if not np.all(np.isfinite(r)):
            raise SolverDivergenceError("non-finite residual in discounted cell solve")
        return r

    def shifted(base, w, delta):
        mean = float(np.mean(delta))
        return base + mean, w + (delta - mean)

    r = residual_of(base, w)
    res = float(np.max(np.abs(r)))
    iterations = 0
    convex = spec.family != QUARTIC and radius <= spec.momentum_cap
    eye = sp.identity(grid.size, format="csr")
    while res > tolerance and iterations < max_iters:
        iterations += 1
        if method == "march":
            w_new = (w - dt * (lam * base + op(w))) / (1.0 + lam * dt)
            base, w = shifted(base, np.zeros_like(w), w_new)
            r = residual_of(base, w)
            res = float(np.max(np.abs(r)))
            continue
        J = lam * eye + op.jacobian(w)
        delta = _newton_direction(J, -r.ravel(), grid.dim).reshape(grid.shape)
        if convex:
            # Howard-type iteration: full steps converge monotonically for convex H
            base, w = shifted(base, w, delta)
            r = residual_of(base, w)
            res = float(np.max(np.abs(r)))
            continue
        alpha = 1.0
        while alpha >= 1.0 / 1024:
            trial = shifted(base, w, alpha * delta)
            r_trial = residual_of(*trial)
            res_trial = float(np.max(np.abs(r_trial)))
            if res_trial < (1.0 - 1e-4 * alpha) * res:
                (base, w), r, res = trial, r_trial, res_trial
                break
            alpha *= 0.5
        else:
            log.debug("line search stalled at residual %.3e; taking pseudo-time steps", res)
            for _ in range(20):
                w_new = (w - dt * (lam * base + op(w))) / (1.0 + lam * dt)
                base, w = shifted(base, np.zeros_like(w), w_new)
            r = residual_of(base, w)
            res = float(np.max(np.abs(r)))
    if res > tolerance:
        raise NonConvergenceError(
            f"discounted cell solve at p={list(p)} did not reach {tolerance:g} in "
            f"{max_iters} iterations (last residual {res:.3e})",
            last_residual=res, iterations=iterations)
    return CellSolution(
        p=p, lam=float(lam),
        corrector=GridFunction(grid, w - w.min()),
        discounted=GridFunction(grid, base + w),
        c_estimate=float(-lam * (base + np.mean(w))),
        residual=res, iterations=iterations, theta=(theta,) * grid.dim, radius=radius)


@dataclass(frozen=True)
class LargeTimeEstimate:
    c_estimate: float
    c_naive: float
    spread: float
    horizon: float


def solve_large_time(spec: HamiltonianSpec, grid: PeriodicGrid, p, horizon: float = 50.0,
                     scheme: SchemeConfig | None = None, theta: float | None = None
                     ) -> LargeTimeEstimate:
    """Ergodic constant from ``w_t + H_LF(y, p_emb + Dw) = 0``, ``w(0) = 0``.

    ``c_estimate`` is the mean decay rate over ``[T/2, T]``; ``c_naive`` is the mean
    of ``-w(T)/T`` and ``spread`` its range over the nodes.
    """
    if horizon < 10:
        raise ConfigurationError(f"large-time horizon must be >= 10 (got {horizon})")
    if grid.dim != spec.dim:
        raise ConfigurationError(f"grid dimension {grid.dim} != N*d = {spec.dim}")
    if scheme is None:
        auto_theta, radius = cell_dissipation(spec, [p])
        scheme = SchemeConfig(theta=(auto_theta if theta is None else theta,),
                              final_time=horizon, momentum_radius=radius)
    op = cell_operator(spec, grid, p, scheme.theta_for(grid), scheme.momentum_radius)
    _, snaps, *_ = _march(op, np.zeros(grid.shape), horizon, scheme.time_step(grid),
                          (horizon / 2, horizon), lambda P: op.kinetic(P) + op.potential)
    half, end = snaps
    decay = -end / horizon
    return LargeTimeEstimate(
        c_estimate=float(np.mean(half - end) / (horizon / 2)),
        c_naive=float(decay.mean()),
        spread=float(np.ptp(decay)),
        horizon=float(horizon))


def check_constant_uniqueness(spec, grid, p, lam, guesses, tolerance=DEFAULT_TOLERANCE,
                              theta=None, max_iters=200, radius=None
                              ) -> tuple[float, float, float]:
    """Ergodic-constant estimates from two initial guesses and their difference."""
    a, b = (np.broadcast_to(np.asarray(g, dtype=float), grid.shape) for g in guesses)
    if np.max(np.abs(a - b)) < 1.0:
        raise ConfigurationError("initial guesses must differ by at least 1 in sup-norm")
    c1 = solve_discounted(spec, grid, p, lam, tolerance, max_iters, a, theta,
                          radius=radius).c_estimate
    c2 = solve_discounted(spec, grid, p, lam, tolerance, max_iters, b, theta,
                          radius=radius).c_estimate
    return c1, c2, abs(c1 - c2)


@dataclass
class EffectiveTable:
    """Sampled ``p -> Hbar(p)`` on a closed momentum box."""

    box: BoxGrid
    values: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.box.shape)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).reshape(self.box.shape)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float).reshape(self.box.shape)

    @property
    def lipschitz(self) -> float:
        """Largest adjacent-node slope along any axis."""
        slopes = [0.0]
        for k, h in enumerate(self.box.spacing):
            slopes.append(float(np.max(np.abs(np.diff(self.values, axis=k))) / h))
        return max(slopes)

    def __call__(self, p):
        return interpolate(self.box, self.values, p)

    def validate(self, tolerance: float = 1e-6) -> list[str]:
        """Return the violated invariants (empty when the table is sound)."""
        problems = []
        if not np.all(np.isfinite(self.values)):
            problems.append("non-finite table values")
            return problems
        below = self.values < self.lower_bounds - tolerance
        above = self.values > self.upper_bounds + tolerance
        if np.any(below) or np.any(above):
            problems.append(f"sandwich bound violated at {int(np.sum(below | above))} nodes")
        center = tuple(int(np.argmin(np.abs(self.box.axis_nodes(k)))) for k in range(self.box.dim))
        for k in range(self.box.dim):
            for end in (0, -1):
                node = list(center)
                node[k] = end if end == 0 else self.box.samples[k] - 1
                node = tuple(node)
                # coercivity is forced only where the whole fibre sits above the centre
                if self.lower_bounds[node] > self.upper_bounds[center] + tolerance \
                        and not self.values[node] > self.values[center]:
                    problems.append(f"coercivity violated along axis {k}")
        return problems

    def to_json(self) -> str:
        return json.dumps({
            "metadata": self.metadata,
            "box": {"lower": list(self.box.lower), "upper": list(self.box.upper),
                    "samples": list(self.box.samples)},
            "values": self.values.ravel().tolist(),
            "lower_bounds": self.lower_bounds.ravel().tolist(),
            "upper_bounds": self.upper_bounds.ravel().tolist(),
            "lipschitz": self.lipschitz,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EffectiveTable":
        data = json.loads(text)
        box = BoxGrid(tuple(data["box"]["lower"]), tuple(data["box"]["upper"]),
                      tuple(data["box"]["samples"]))
        return cls(box, data["values"], data["lower_bounds"], data["upper_bounds"],
                   data.get("metadata", {}))

    def csv_rows(self) -> list[list[str]]:
        D = self.box.dim
        header = [f"p{k}" for k in range(D)] + ["Hbar", "lower", "upper"]
        rows = [header]
        nodes = self.box.nodes().reshape(-1, D)
        for p, h, lo, hi in zip(nodes, self.values.ravel(), self.lower_bounds.ravel(),
                                self.upper_bounds.ravel()):
            rows.append([f"{c:.17g}" for c in p] + [f"{h:.17g}", f"{lo:.17g}", f"{hi:.17g}"])
        return rows


def _sweep_order(box: BoxGrid) -> list[tuple]:
    """Node order starting next to ``p = 0`` so each solve can warm-start from the last."""
    if box.dim == 1:
        n = box.samples[0]
        c = int(np.argmin(np.abs(box.axis_nodes(0))))
        order = [c]
        for step in range(1, n):
            for j in (c + step, c - step):
                if 0 <= j < n:
                    order.append(j)
        return [(j,) for j in order]
    order = []
    for i in range(box.samples[0]):
        rows = range(box.samples[1]) if i % 2 == 0 else reversed(range(box.samples[1]))
        order.extend((i, j) for j in rows)
    return order


def tabulate_effective(spec: HamiltonianSpec, grid: PeriodicGrid, lower, upper, samples,
                       lam: float = DEFAULT_LAMBDA, tolerance: float = DEFAULT_TOLERANCE,
                       theta: float | None = None, max_iters: int = 200,
                       warm_start: bool = True, check: bool = True,
                       radius: float | None = None) -> EffectiveTable:
    """Tabulate ``Hbar`` on a momentum box by per-node discounted solves."""
    d = spec.d
    lower = tuple(np.broadcast_to(np.asarray(lower, dtype=float), (d,)).tolist())
    upper = tuple(np.broadcast_to(np.asarray(upper, dtype=float), (d,)).tolist())
    samples = tuple(int(s) for s in np.broadcast_to(np.asarray(samples), (d,)))
    if any(s < 9 for s in samples):
        raise ConfigurationError("samples_per_axis must be >= 9")
    if any(a > 0 or b < 0 for a, b in zip(lower, upper)):
        raise ConfigurationError("the momentum box must contain 0")
    box = BoxGrid(lower, upper, samples)
    nodes = box.nodes()
    auto_theta, auto_radius = cell_dissipation(spec, nodes.reshape(-1, d))
    theta = auto_theta if theta is None else float(theta)
    radius = auto_radius if radius is None else float(radius)
    values = np.empty(box.shape)
    lo_b = np.empty(box.shape)
    hi_b = np.empty(box.shape)
    previous: dict[tuple, np.ndarray] = {}
    last = None
    for node in _sweep_order(box):
        p = nodes[node]
        start = None
        if warm_start:
            neighbours = [previous.get(tuple(n)) for n in _neighbours(node, box)]
            neighbours = [v for v in neighbours if v is not None]
            start = neighbours[0] if neighbours else last
        try:
            sol = solve_discounted(spec, grid, p, lam, tolerance, max_iters, start, theta,
                                   radius=radius)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"table node p={p.tolist()} failed: {exc}",
                                      exc.last_residual, exc.iterations) from exc
        except SolverDivergenceError as exc:
            raise SolverDivergenceError(f"table node p={p.tolist()} failed: {exc}",
                                        exc.step) from exc
        values[node] = sol.c_estimate
        lo_b[node], hi_b[node] = _node_hamiltonian_range(spec, grid, p)
        previous[node] = sol.discounted.values
        last = sol.discounted.values
    table = EffectiveTable(box, values, lo_b, hi_b, {
        "lambda": float(lam), "tolerance": float(tolerance),
        "theta": float(theta), "radius": float(radius),
        "grid": grid.to_dict(), "spec": spec.to_dict(), "spec_digest": spec.digest(),
    })
    if check:
        problems = table.validate(tolerance=max(10 * tolerance, 1e-9))
        if problems:
            raise InvariantViolation("; ".join(problems))
    return table


def _neighbours(node, box):
    out = []
    for k in range(box.dim):
        for s in (-1, 1):
            n = list(node)
            n[k] += s
            if 0 <= n[k] < box.samples[k]:
                out.append(tuple(n))
    return out
