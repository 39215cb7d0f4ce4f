"""Uniform periodic grids, one-sided differences and multilinear interpolation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, OutOfRangeError

MIN_CELLS = 4


@dataclass(frozen=True)
class PeriodicGrid:
    """Node-centred tensor grid on the torus prod_k [0, period_k).

    Node ``i`` along axis ``k`` sits at ``i * spacing[k]``; indices wrap.
    """

    cells: tuple[int, ...]
    periods: tuple[float, ...]

    def __post_init__(self):
        if len(self.cells) == 0:
            raise ConfigurationError("grid dimension must be >= 1")
        if len(self.periods) != len(self.cells):
            raise ConfigurationError(
                f"got {len(self.cells)} cell counts but {len(self.periods)} periods")
        for axis, (n, L) in enumerate(zip(self.cells, self.periods)):
            if int(n) != n or n < MIN_CELLS:
                raise ConfigurationError(f"axis {axis}: cells < {MIN_CELLS} (got {n})")
            if not (L > 0 and np.isfinite(L)):
                raise ConfigurationError(f"axis {axis}: period must be positive (got {L})")
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "periods", tuple(float(L) for L in self.periods))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.periods, self.cells))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.arange(self.cells[axis]) * self.spacing[axis]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*[self.axis_coords(k) for k in range(self.dim)],
                                    indexing="ij"))

    def indices(self) -> np.ndarray:
        """Integer node indices, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*[np.arange(n) for n in self.cells], indexing="ij"))

    def to_dict(self) -> dict:
        return {"cells": list(self.cells), "periods": list(self.periods)}


def make_grid(dim: int, cells_per_axis, period_per_axis=None) -> PeriodicGrid:
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1 (got {dim})")
    cells = np.broadcast_to(np.asarray(cells_per_axis), (dim,))
    periods = np.ones(dim) if period_per_axis is None else np.broadcast_to(
        np.asarray(period_per_axis, dtype=float), (dim,))
    return PeriodicGrid(tuple(int(c) for c in cells), tuple(float(p) for p in periods))


@dataclass(frozen=True)
class GridFunction:
    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ConfigurationError(
                f"value count {values.size} does not match grid size {self.grid.size}")
        values = values.reshape(self.grid.shape)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def one_sided_differences(values: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences along every axis, each ``(dim, *shape)``."""
    minus = np.empty((values.ndim,) + values.shape)
    plus = np.empty_like(minus)
    for k, h in enumerate(spacing):
        plus[k] = (np.roll(values, -1, axis=k) - values) / h
        minus[k] = (values - np.roll(values, 1, axis=k)) / h
    return minus, plus


def one_sided_gradients(f: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """``(p_minus, p_plus)`` with periodic wraparound."""
    return one_sided_differences(np.asarray(f.values), f.grid.spacing)


@dataclass(frozen=True)
class BoxGrid:
    """Closed, non-periodic tensor grid ``prod_k [lower_k, upper_k]`` (momentum tables)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    samples: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.samples)):
            raise ConfigurationError("box bounds and samples must have equal length")
        for k, (a, b, n) in enumerate(zip(self.lower, self.upper, self.samples)):
            if not b > a:
                raise ConfigurationError(f"axis {k}: box upper bound must exceed lower bound")
            if n < 2:
                raise ConfigurationError(f"axis {k}: need at least 2 samples")
        object.__setattr__(self, "lower", tuple(float(a) for a in self.lower))
        object.__setattr__(self, "upper", tuple(float(b) for b in self.upper))
        object.__setattr__(self, "samples", tuple(int(n) for n in self.samples))

    @property
    def dim(self) -> int:
        return len(self.samples)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.samples

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.samples))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.samples[axis])

    def nodes(self) -> np.ndarray:
        """All nodes, shape ``(*shape, dim)``, row-major."""
        mesh = np.meshgrid(*[self.axis_nodes(k) for k in range(self.dim)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def contains(self, points, rtol=1e-12) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        slack = rtol * np.maximum(1.0, hi - lo)
        return np.all((pts >= lo - slack) & (pts <= hi + slack), axis=-1)


def _cell_coordinates(grid, pts):
    """Lower corner index and fractional offset per axis, both ``(..., dim)``."""
    if isinstance(grid, PeriodicGrid):
        n = np.asarray(grid.cells)
        s = pts / np.asarray(grid.spacing)
        base = np.floor(s)
        frac = s - base
        lo = np.mod(base.astype(np.int64), n)
        hi = np.mod(lo + 1, n)
        return lo, hi, frac
    inside = grid.contains(pts)
    if not np.all(inside):
        bad = pts[~inside] if pts.ndim > 1 else pts
        raise OutOfRangeError(
            f"query {np.atleast_2d(bad)[0].tolist()} outside table box "
            f"{list(zip(grid.lower, grid.upper))}")
    n = np.asarray(grid.samples)
    s = (pts - np.asarray(grid.lower)) / np.asarray(grid.spacing)
    s = np.clip(s, 0, n - 1)
    lo = np.minimum(np.floor(s).astype(np.int64), n - 2)
    return lo, lo + 1, s - lo


def interpolate(grid, values, points) -> np.ndarray | float:
    """Multilinear interpolation of node ``values`` at ``points`` (``(..., dim)``).

    Periodic grids wrap; a :class:`BoxGrid` raises :class:`OutOfRangeError`
    for queries outside the box.
    """
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0 and grid.dim == 1:
        pts = pts.reshape(1)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts) if scalar else pts
    if pts.shape[-1] != grid.dim:
        raise ConfigurationError(f"query dimension {pts.shape[-1]} != grid dimension {grid.dim}")
    lo, hi, frac = _cell_coordinates(grid, pts)
    out = np.zeros(pts.shape[:-1])
    for corner in itertools.product((0, 1), repeat=grid.dim):
        weight = np.ones(pts.shape[:-1])
        index = []
        for k, c in enumerate(corner):
            weight = weight * (frac[..., k] if c else 1.0 - frac[..., k])
            index.append(hi[..., k] if c else lo[..., k])
        out += weight * values[tuple(index)]
    return float(out[0]) if scalar else out
