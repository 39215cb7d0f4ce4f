"""Run configuration: a strict TOML schema with aggregated validation errors.

A config has three tables::

    [hamiltonian]   family, d, N, V0, W0, momentum_cap
    [numerics]      grid, discount, tolerances, horizons, eps list, momentum box ...
    [io]            output_dir, cache_dir, json, csv

Potentials are lists of rows ``[k_1, ..., k_d, cos_coeff, sin_coeff]``.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .hamiltonians import FAMILIES, MEAN_FIELD, HamiltonianSpec, TrigPotential
from .scheme import MIN_CELLS_PER_PERIOD

COMMANDS = ("cell", "effective-table", "cauchy", "rate", "reduce-compare", "symmetry-check",
            "n-particle-check")


@dataclass(frozen=True)
class Field:
    kind: str
    default: Any = None
    check: Callable[[Any], str | None] | None = None
    doc: str = ""


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _cfl(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _min_samples(v):
    return None if v >= 9 else "must be >= 9"


SCHEMA: dict[str, dict[str, Field]] = {
    "hamiltonian": {
        "family": Field("str", "separable_quadratic",
                        lambda v: None if v in FAMILIES else f"must be one of {list(FAMILIES)}"),
        "d": Field("int", 1, lambda v: None if v in (1, 2) else "must be 1 or 2"),
        "N": Field("int", 1, lambda v: None if 1 <= v <= 10 else "must lie in [1, 10]"),
        "V0": Field("rows", []),
        "W0": Field("rows", []),
        "momentum_cap": Field("float", 10.0, _positive),
    },
    "numerics": {
        "cells": Field("int_list", [256], doc="cells per axis (one value or one per axis)"),
        "lambda": Field("float", 1e-3, _positive),
        "tolerance": Field("float", 1e-8, _positive),
        "max_iters": Field("int", 200, _positive),
        "cfl_factor": Field("float", 0.5, _cfl),
        "final_time": Field("float", 0.5, _positive),
        "horizon": Field("float", 0.0, _non_negative, "large-time cross-check horizon (0: off)"),
        "eps": Field("float_list", [], doc="oscillation scales; one value for cauchy"),
        "cells_per_period": Field("int", MIN_CELLS_PER_PERIOD,
                                  lambda v: None if v >= MIN_CELLS_PER_PERIOD
                                  else f"must be >= {MIN_CELLS_PER_PERIOD}"),
        "p": Field("float_list", [0.0]),
        "p_lower": Field("float", -2.0),
        "p_upper": Field("float", 2.0),
        "samples": Field("int", 17, _min_samples),
        "table_samples": Field("int", 33, _min_samples),
        "u0": Field("rows", [[1, 0.2, 0.0]], doc="initial data g, u0(x) = g(sum x_i)"),
        "particles": Field("int_list", [2, 3]),
        "particle_cells": Field("int_list", [64, 32]),
        "particle_tolerances": Field("float_list", [1e-8, 1e-4]),
        "shift": Field("rows", [[1], [-1]], doc="lattice shift z for symmetry-check"),
        "sample_count": Field("int", 1000, lambda v: None if v >= 100 else "must be >= 100"),
    },
    "io": {
        "output_dir": Field("str", "out"),
        "cache_dir": Field("str", ".hj-cache"),
        "json": Field("bool", True),
        "csv": Field("bool", True),
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    hamiltonian: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    io: dict = field(default_factory=dict)

    def spec(self) -> HamiltonianSpec:
        h = self.hamiltonian
        d = h["d"]
        kwargs = dict(family=h["family"], d=d, N=h["N"], V0=TrigPotential.from_rows(d, h["V0"]),
                      momentum_cap=h["momentum_cap"])
        if h["family"] == MEAN_FIELD:
            kwargs["W0"] = TrigPotential.from_rows(d, h["W0"])
        return HamiltonianSpec(**kwargs)

    def canonical(self) -> dict:
        """Everything that determines the numbers (``io`` excluded)."""
        return {"command": self.command, "hamiltonian": self.hamiltonian,
                "numerics": self.numerics}

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _coerce(kind: str, value):
    """Convert a parsed TOML value to the schema type or raise ``TypeError``."""
    def number(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeError
        return float(v)

    def integer(v):
        if isinstance(v, bool):
            raise TypeError
        if isinstance(v, float) and v.is_integer():
            return int(v)
        if not isinstance(v, int):
            raise TypeError
        return v

    if kind == "str":
        if not isinstance(value, str):
            raise TypeError
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError
        return value
    if kind == "float":
        return number(value)
    if kind == "int":
        return integer(value)
    if kind in ("float_list", "int_list"):
        items = value if isinstance(value, list) else [value]
        conv = number if kind == "float_list" else integer
        return [conv(v) for v in items]
    if kind == "rows":
        if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
            raise TypeError
        return [[number(v) for v in row] for row in value]
    raise AssertionError(kind)


def _suggest(key: str, options) -> str:
    match = difflib.get_close_matches(key, list(options), n=1, cutoff=0.6)
    return f"; did you mean '{match[0]}'?" if match else ""


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"syntax error: {exc}") from None


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as TOML literals."""
    errors = []
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for item in overrides or ():
        if "=" not in item:
            errors.append(f"override '{item}' is not of the form section.key=value")
            continue
        key, raw = item.split("=", 1)
        if "." not in key:
            errors.append(f"override key '{key}' must be section.key")
            continue
        section, name = key.strip().split(".", 1)
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        data.setdefault(section, {})[name] = value
    if errors:
        raise ConfigurationError("; ".join(errors), errors)
    return data


def _commensurate_error(eps: float, cells: int | None, per_period: int) -> str | None:
    """Message naming the nearest admissible values when ``eps`` misses the grid."""
    if cells is None:
        n = per_period / eps
        if abs(n - round(n)) <= 1e-9 * n and round(n) >= 1:
            return None
        lo, hi = int(max(1, n // 1)), int(max(1, -(-n // 1)))
        near = sorted({per_period / hi, per_period / lo})
    else:
        n = eps * cells
        if abs(n - round(n)) <= 1e-9 * max(1.0, n) and round(n) >= per_period:
            return None
        lo = max(per_period, int(n // 1))
        hi = max(per_period, int(-(-n // 1)))
        near = sorted({lo / cells, hi / cells})
    return (f"numerics.eps: {eps!r} is not grid-commensurate; nearest commensurate values: "
            + ", ".join(f"{v:.10g}" for v in near))


def validate(command: str, data: dict) -> RunConfig:
    """Validate every field against the schema and collect all errors before raising."""
    errors = []
    if command not in COMMANDS:
        errors.append(f"unknown command '{command}'{_suggest(command, COMMANDS)}")
    sections = {}
    for name in data:
        if name == "command":
            continue
        if name not in SCHEMA:
            errors.append(f"unknown section [{name}]{_suggest(name, SCHEMA)}")
        elif not isinstance(data[name], dict):
            errors.append(f"[{name}] must be a table")
    for section, fields in SCHEMA.items():
        raw = data.get(section, {})
        raw = raw if isinstance(raw, dict) else {}
        out = {}
        for key in raw:
            if key not in fields:
                errors.append(f"unknown key '{section}.{key}'{_suggest(key, fields)}")
        for key, spec in fields.items():
            if key not in raw:
                out[key] = spec.default
                continue
            try:
                value = _coerce(spec.kind, raw[key])
            except (TypeError, ValueError):
                errors.append(f"{section}.{key}: expected {spec.kind}, got {raw[key]!r}")
                continue
            problem = spec.check(value) if spec.check else None
            if problem:
                errors.append(f"{section}.{key}: {problem} (got {value!r})")
                continue
            out[key] = value
        sections[section] = out
    if not errors:
        errors.extend(_semantic_errors(command, sections))
    if errors:
        raise ConfigurationError(
            f"{len(errors)} configuration error(s): " + "; ".join(errors), errors)
    return RunConfig(command, sections["hamiltonian"], sections["numerics"], sections["io"])


def _semantic_errors(command, s) -> list[str]:
    h, n = s["hamiltonian"], s["numerics"]
    errors = []
    d, N = h["d"], h["N"]
    if h["family"] != MEAN_FIELD and N != 1:
        errors.append("hamiltonian.N: only mean_field_N supports N > 1")
    if h["family"] == MEAN_FIELD and d != 1:
        errors.append("hamiltonian.d: particle problems support d = 1 only")
    if N * d > 3:
        errors.append(f"hamiltonian: N*d = {N * d} exceeds the supported grid dimension 3")
    for key in ("V0", "W0"):
        for row in h[key]:
            if len(row) != d + 2:
                errors.append(f"hamiltonian.{key}: row {row} needs {d} frequencies + 2 coefficients")
            elif any(k != round(k) for k in row[:d]):
                errors.append(f"hamiltonian.{key}: frequencies must be integers (row {row})")
    if h["family"] == MEAN_FIELD and not errors:
        if not TrigPotential.from_rows(d, h["W0"]).is_even:
            errors.append("hamiltonian.W0: interaction potential must be even (no sine terms)")
    D = N * d
    cells = n["cells"]
    if len(cells) not in (1, D):
        errors.append(f"numerics.cells: give 1 or {D} values (got {len(cells)})")
    if any(c < 4 for c in cells):
        errors.append(f"numerics.cells: cells < 4 (got {cells})")
    if len(n["p"]) not in (1, d):
        errors.append(f"numerics.p: give {d} component(s)")
    if not n["p_lower"] <= 0 <= n["p_upper"] or n["p_lower"] == n["p_upper"]:
        errors.append("numerics.p_lower/p_upper: the momentum box must contain 0")
    for row in n["u0"]:
        if len(row) != 3 or row[0] != round(row[0]):
            errors.append(f"numerics.u0: rows are [integer k, cos_coeff, sin_coeff] (got {row})")
    eps = n["eps"]
    if any(e <= 0 for e in eps):
        errors.append("numerics.eps: values must be positive")
    elif command == "cauchy" and eps:
        if len(eps) != 1:
            errors.append("numerics.eps: cauchy takes a single eps")
        elif len(set(cells)) == 1:
            msg = _commensurate_error(eps[0], cells[0], n["cells_per_period"])
            if msg:
                errors.append(msg)
    elif command in ("rate", "n-particle-check"):
        if len(eps) < 2:
            errors.append("numerics.eps: need at least two values")
        elif any(b >= a for a, b in zip(eps, eps[1:])):
            errors.append("numerics.eps: must be strictly decreasing")
        for e in eps:
            msg = _commensurate_error(e, None, n["cells_per_period"])
            if msg:
                errors.append(msg)
    if command == "rate" and (h["family"] == MEAN_FIELD and N != 1):
        errors.append("rate: use a single-particle Hamiltonian")
    if command == "n-particle-check" and (h["family"] != MEAN_FIELD or N != 2):
        errors.append("n-particle-check: requires family mean_field_N with N = 2")
    if command == "reduce-compare":
        if h["family"] != MEAN_FIELD:
            errors.append("reduce-compare: requires family mean_field_N")
        if not len(n["particles"]) == len(n["particle_cells"]) == len(n["particle_tolerances"]):
            errors.append("numerics.particles/particle_cells/particle_tolerances: equal lengths")
        if any(not 2 <= k <= 3 for k in n["particles"]):
            errors.append("numerics.particles: N must be 2 or 3")
    if command == "symmetry-check":
        shift = n["shift"]
        if len(shift) != N or any(len(r) != d for r in shift):
            errors.append(f"numerics.shift: must be an {N} x {d} integer matrix")
    return errors


def load_config(command: str, text: str, overrides=None) -> RunConfig:
    data = parse_toml(text)
    if "command" in data and data["command"] != command:
        raise ConfigurationError(
            f"config is for command '{data['command']}', not '{command}'")
    return validate(command, apply_overrides(data, overrides))
