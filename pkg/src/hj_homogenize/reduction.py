"""Particle-resolution symmetry toolkit: mean projection, lattice decomposition,
eps-lattice invariance and closeness to the mean configuration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import GridFunction, PeriodicGrid, interpolate
from .scheme import CauchySolution, cells_per_period

MAX_SYMMETRIZE_PARTICLES = 4


@dataclass(frozen=True)
class ParticleConfiguration:
    """``N`` particles in ``R^d``, one row per particle."""

    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ConfigurationError(f"positions must be an N x d matrix (got shape {x.shape})")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("positions must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "positions", x)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


def empirical_norm(x) -> float:
    """``sqrt((1/N) sum_i |x_i|^2)`` for an ``N x d`` array."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return float(np.sqrt(np.sum(x**2) / x.shape[0]))


def empirical_inner(a, b) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.broadcast_to(np.asarray(b, dtype=float), a.shape)
    return float(np.sum(a * b) / a.shape[0])


def mean_projection(x: ParticleConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """``(Mx, P_Y x)``: the row mean and the mean-zero remainder."""
    mean = x.positions.mean(axis=0)
    return mean, x.positions - mean


def round_half_to_zero(a) -> np.ndarray:
    """Nearest integer, with exact half-integers rounded toward zero."""
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.ceil(np.abs(a) - 0.5)


@dataclass(frozen=True)
class MeanDecomposition:
    """``x = x_eps + eps * z_x + Mx`` with ``z_x`` integer and mean-zero.

    ``z0`` (rounded lattice part), ``eta`` (integer correction) and ``m`` (the
    column means of ``z0``) are kept for auditing.
    """

    mean: np.ndarray
    z0: np.ndarray
    eta: np.ndarray
    m: np.ndarray
    z_x: np.ndarray
    x_eps: np.ndarray
    eps: float

    def reconstruct(self) -> np.ndarray:
        return self.x_eps + self.eps * self.z_x + self.mean

    @property
    def remainder_norm(self) -> float:
        return empirical_norm(self.x_eps)

    @property
    def eta_norm(self) -> float:
        return empirical_norm(self.eta)


def lattice_decompose(x: ParticleConfiguration, eps: float) -> MeanDecomposition:
    """Split ``x`` into its mean, an ``eps``-scaled mean-zero lattice part and a small remainder.

    Rounding ``P_Y x / eps`` leaves integer column sums ``S_j`` with ``|S_j| <= N/2``;
    the correction ``eta`` puts ``sign(S_j)`` on the ``|S_j|`` lowest-indexed particles
    so that ``z_x = z0 - eta`` has zero column sums.
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive (got {eps})")
    mean, centred = mean_projection(x)
    z0 = round_half_to_zero(centred / eps)
    sums = z0.sum(axis=0)
    eta = np.zeros_like(z0)
    for j, s in enumerate(sums):
        count = int(abs(s))
        eta[:count, j] = np.sign(s)
    z_x = z0 - eta
    return MeanDecomposition(mean=mean, z0=z0, eta=eta, m=sums / x.N, z_x=z_x,
                             x_eps=centred - eps * z_x, eps=float(eps))


def _particle_dims(grid: PeriodicGrid, N: int) -> int:
    if N < 1 or grid.dim % N:
        raise ConfigurationError(f"grid dimension {grid.dim} is not a multiple of N = {N}")
    return grid.dim // N


@dataclass(frozen=True)
class InvarianceReport:
    deviation: float
    mean_zero: bool
    index_shift: tuple

    def ok(self, tolerance: float = 1e-12) -> bool:
        return self.deviation <= tolerance


def y_eps_invariance_check(solution: CauchySolution, eps: float, z, times=None
                           ) -> InvarianceReport:
    """Max of ``|u(x + eps z, t) - u(x, t)|`` over nodes, the initial data and snapshots.

    The shift is an integer index roll, so for mean-zero ``z`` and a symmetric
    Hamiltonian the deviation is exactly zero.  A non-mean-zero ``z`` is allowed
    (``mean_zero`` is then False) to exhibit the broken symmetry.
    """
    grid = solution.grid
    z = np.atleast_2d(np.asarray(z))
    if not np.array_equal(z, np.round(z)):
        raise ConfigurationError("z must be an integer matrix")
    N = z.shape[0]
    d = _particle_dims(grid, N)
    if z.shape[1] != d:
        raise ConfigurationError(f"z must be {N} x {d} (got {z.shape})")
    per_period = np.asarray(cells_per_period(grid, eps))
    shift = tuple(int(s) for s in z.astype(np.int64).ravel() * per_period)
    fields = [solution.initial]
    if times is None:
        fields += list(solution.snapshots)
    else:
        fields += [solution.snapshot_at(t) for t in times]
    deviation = 0.0
    for f in fields:
        shifted = np.roll(f.values, [-s for s in shift], axis=tuple(range(grid.dim)))
        deviation = max(deviation, float(np.max(np.abs(shifted - f.values))))
    mean_zero = bool(np.all(z.sum(axis=0) == 0))
    return InvarianceReport(deviation=deviation, mean_zero=mean_zero, index_shift=shift)


def diagonal_points(grid: PeriodicGrid, N: int) -> np.ndarray:
    """The point ``(Mx, ..., Mx)`` for every node ``x``, shape ``(*shape, dim)``."""
    d = _particle_dims(grid, N)
    coords = np.moveaxis(grid.coords(), 0, -1)
    particles = coords.reshape(grid.shape + (N, d))
    mean = particles.mean(axis=-2, keepdims=True)
    return np.broadcast_to(mean, particles.shape).reshape(grid.shape + (grid.dim,))


@dataclass(frozen=True)
class MeanClosenessReport:
    eps: float
    deviation: float
    worst_time: float
    field: GridFunction = field(repr=False)


def mean_closeness_report(solution: CauchySolution, N: int, times=None) -> MeanClosenessReport:
    """``max |u(x, t) - u(Mx, ..., Mx, t)|`` with the diagonal value interpolated."""
    grid = solution.grid
    diag = diagonal_points(grid, N)
    if times is None:
        pairs = list(zip(solution.times, solution.snapshots))
    else:
        pairs = [(t, solution.snapshot_at(t)) for t in times]
    best = (-1.0, 0.0, None)
    for t, f in pairs:
        gap = np.abs(f.values - interpolate(grid, f.values, diag))
        if gap.max() > best[0]:
            best = (float(gap.max()), float(t), gap)
    return MeanClosenessReport(eps=solution.eps, deviation=best[0], worst_time=best[1],
                               field=GridFunction(grid, best[2]))


def permute_particles(values: np.ndarray, sigma, d: int) -> np.ndarray:
    """``f(x o sigma)`` on the grid: particle ``i`` takes the axes of particle ``sigma[i]``."""
    axes = [sigma[i] * d + k for i in range(len(sigma)) for k in range(d)]
    return np.transpose(values, axes)


@dataclass(frozen=True)
class SymmetrizedFunction:
    symmetric: GridFunction
    asymmetry: float


def symmetrize(f: GridFunction, N: int) -> SymmetrizedFunction:
    """Average over all particle relabelings; ``asymmetry = max_sigma |f - f o sigma|``."""
    if N > MAX_SYMMETRIZE_PARTICLES:
        raise ConfigurationError(
            f"symmetrize supports N <= {MAX_SYMMETRIZE_PARTICLES} (got {N}; N! permutations)")
    d = _particle_dims(f.grid, N)
    blocks = {f.grid.cells[i * d:(i + 1) * d] for i in range(N)}
    blocks_p = {f.grid.periods[i * d:(i + 1) * d] for i in range(N)}
    if len(blocks) > 1 or len(blocks_p) > 1:
        raise ConfigurationError("all particles need identical grid axes to be permuted")
    total = np.zeros(f.grid.shape)
    asymmetry = 0.0
    for sigma in itertools.permutations(range(N)):
        g = permute_particles(f.values, sigma, d)
        total += g
        asymmetry = max(asymmetry, float(np.max(np.abs(f.values - g))))
    return SymmetrizedFunction(GridFunction(f.grid, total / math.factorial(N)), asymmetry)
