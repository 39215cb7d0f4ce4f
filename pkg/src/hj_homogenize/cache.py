"""On-disk cache of effective-Hamiltonian tables keyed by a digest of their inputs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

from .cell import DEFAULT_LAMBDA, DEFAULT_TOLERANCE, EffectiveTable, tabulate_effective
from .grid import PeriodicGrid
from .hamiltonians import HamiltonianSpec

log = logging.getLogger(__name__)

CACHE_ENV = "HJ_CACHE_DIR"


def cache_dir(default: str | os.PathLike | None = None) -> Path:
    """``$HJ_CACHE_DIR`` if set, else ``default`` (else ``.hj-cache``)."""
    return Path(os.environ.get(CACHE_ENV) or default or ".hj-cache")


def table_digest(spec: HamiltonianSpec, grid: PeriodicGrid, lower, upper, samples,
                 lam: float, tolerance: float, theta: float | None = None) -> str:
    key = {
        "spec": spec.to_dict(), "grid": grid.to_dict(),
        "lower": [float(v) for v in _seq(lower)], "upper": [float(v) for v in _seq(upper)],
        "samples": [int(v) for v in _seq(samples)], "lambda": float(lam),
        "tolerance": float(tolerance), "theta": None if theta is None else float(theta),
    }
    text = json.dumps(key, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _seq(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _path(directory, digest) -> Path:
    return Path(directory) / f"table-{digest}.json"


def cache_lookup(digest: str, directory=None) -> EffectiveTable | None:
    """Cached table or ``None``; unreadable or invalid files count as misses."""
    path = _path(cache_dir(directory), digest)
    if not path.exists():
        return None
    try:
        table = EffectiveTable.from_json(path.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        log.warning("ignoring corrupted cache file %s (%s)", path, exc)
        return None
    tol = float(table.metadata.get("tolerance", DEFAULT_TOLERANCE))
    problems = table.validate(tolerance=max(10 * tol, 1e-9))
    if problems:
        log.warning("ignoring cache file %s that fails validation: %s", path, "; ".join(problems))
        return None
    return table


def cache_store(table: EffectiveTable, digest: str, directory=None) -> Path:
    """Atomic write: temp file in the cache directory, then rename."""
    directory = cache_dir(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = _path(directory, digest)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(table.to_json())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def cached_table(spec: HamiltonianSpec, grid: PeriodicGrid, lower, upper, samples,
                 lam: float = DEFAULT_LAMBDA, tolerance: float = DEFAULT_TOLERANCE,
                 theta: float | None = None, directory=None, max_iters: int = 200
                 ) -> tuple[EffectiveTable, bool]:
    """``(table, hit)``: reuse a cached table when the input digest matches."""
    digest = table_digest(spec, grid, lower, upper, samples, lam, tolerance, theta)
    table = cache_lookup(digest, directory)
    if table is not None:
        return table, True
    table = tabulate_effective(spec, grid, lower, upper, samples, lam, tolerance, theta=theta,
                               max_iters=max_iters)
    table.metadata["digest"] = digest
    cache_store(table, digest, directory)
    return table, False
