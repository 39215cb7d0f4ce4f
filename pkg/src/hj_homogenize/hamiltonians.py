"""Hamiltonian families on the N-particle torus and numerical checks of their symmetries.

Every built-in family splits as ``H(x, q) = K(|q|) + U(x)`` with a radial kinetic
part ``K``; the scheme and the cell solver rely on that split.  Momenta ``q`` are
coordinate gradients in ``R^(N*d)``.  For the mean-field family the empirical inner
product ``<a, b> = (1/N) sum a_i . b_i`` turns ``1/2 ||p||^2`` into ``(N/2) |q|^2``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi

QUADRATIC = "separable_quadratic"
EIKONAL = "separable_eikonal"
QUARTIC = "nonconvex_quartic"
MEAN_FIELD = "mean_field_N"
FAMILIES = (QUADRATIC, EIKONAL, QUARTIC, MEAN_FIELD)


@dataclass(frozen=True)
class TrigPotential:
    """Finite trigonometric polynomial ``sum a cos(2 pi k.x) + b sin(2 pi k.x)``.

    ``terms`` holds ``(k, a, b)`` triples.  Fractional frequencies are refused
    unless ``allow_fractional`` is set (only useful for building broken examples).
    """

    d: int
    terms: tuple = ()
    allow_fractional: bool = False

    def __post_init__(self):
        clean = []
        for k, a, b in self.terms:
            k = tuple(float(v) for v in np.atleast_1d(k))
            if len(k) != self.d:
                raise ConfigurationError(f"frequency {k} does not have dimension {self.d}")
            if not self.allow_fractional and any(v != round(v) for v in k):
                raise ConfigurationError(f"frequency {k} is not an integer vector")
            clean.append((k, float(a), float(b)))
        object.__setattr__(self, "terms", tuple(clean))
        freqs = np.array([k for k, _, _ in clean]).reshape(len(clean), self.d)
        object.__setattr__(self, "_freqs", freqs)
        object.__setattr__(self, "_cos", np.array([a for _, a, _ in clean]))
        object.__setattr__(self, "_sin", np.array([b for _, _, b in clean]))

    @classmethod
    def cosine(cls, amplitude=1.0, d=1, k=None):
        k = (1,) + (0,) * (d - 1) if k is None else k
        return cls(d, ((k, amplitude, 0.0),))

    @classmethod
    def zero(cls, d=1):
        return cls(d, ())

    @classmethod
    def from_rows(cls, d, rows):
        """Rows ``[k_1, ..., k_d, a, b]`` as used in run configs."""
        terms = []
        for row in rows:
            if len(row) != d + 2:
                raise ConfigurationError(
                    f"potential row {row} must have {d} frequencies plus cosine and sine coefficients")
            terms.append((tuple(row[:d]), row[d], row[d + 1]))
        return cls(d, tuple(terms))

    def rows(self) -> list[list[float]]:
        return [list(k) + [a, b] for k, a, b in self.terms]

    @property
    def is_constant(self) -> bool:
        oscillating = np.any(self._freqs != 0, axis=1)
        return not (np.any(self._cos[oscillating]) or np.any(self._sin[oscillating]))

    @property
    def is_even(self) -> bool:
        return not np.any(self._sin[np.any(self._freqs != 0, axis=1)])

    @property
    def gradient_bound(self) -> float:
        norms = np.linalg.norm(self._freqs, axis=1)
        return float(np.sum(TWO_PI * norms * (np.abs(self._cos) + np.abs(self._sin))))

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        return TWO_PI * np.tensordot(x, self._freqs.T, axes=([-1], [0]))

    def __call__(self, x) -> np.ndarray:
        if not self.terms:
            return np.zeros(np.shape(x)[:-1])
        phase = self._phase(x)
        return np.cos(phase) @ self._cos + np.sin(phase) @ self._sin

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros(x.shape)
        phase = self._phase(x)
        coef = -np.sin(phase) * self._cos + np.cos(phase) * self._sin
        return TWO_PI * coef @ self._freqs


def _radial_kinetic(family, N):
    if family == QUADRATIC:
        return (lambda r: 0.5 * r**2), (lambda r: r)
    if family == EIKONAL:
        return (lambda r: r), (lambda r: np.ones_like(r))
    if family == QUARTIC:
        return (lambda r: (r**2 - 1.0) ** 2), (lambda r: 4.0 * r * (r**2 - 1.0))
    return (lambda r: 0.5 * N * r**2), (lambda r: N * r)


@dataclass(frozen=True)
class HamiltonianSpec:
    family: str
    d: int = 1
    N: int = 1
    V0: TrigPotential = None
    W0: TrigPotential = None
    momentum_cap: float = 10.0
    _k: object = field(init=False, repr=False, compare=False)
    _dk: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        errors = []
        if self.family not in FAMILIES:
            errors.append(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.d not in (1, 2):
            errors.append(f"base dimension d must be 1 or 2 (got {self.d})")
        if self.N < 1:
            errors.append(f"particle count N must be >= 1 (got {self.N})")
        if self.family != MEAN_FIELD and self.N != 1:
            errors.append(f"family {self.family} is single-particle; N must be 1")
        if self.d == 2 and self.N != 1:
            errors.append("d = 2 is supported for N = 1 only")
        if self.N * self.d > 3:
            errors.append(f"N*d = {self.N * self.d} exceeds the supported grid dimension 3")
        if not self.momentum_cap > 0:
            errors.append("momentum_cap must be positive")
        V0 = self.V0 if self.V0 is not None else TrigPotential.zero(self.d)
        W0 = self.W0 if self.W0 is not None else TrigPotential.zero(self.d)
        if V0.d != self.d or W0.d != self.d:
            errors.append("potential dimension differs from d")
        if self.family != MEAN_FIELD and W0.terms:
            errors.append("an interaction potential W0 is only meaningful for mean_field_N")
        if not W0.is_even:
            errors.append("W0 must be even (sine coefficients must vanish)")
        if errors:
            raise ConfigurationError("; ".join(errors), errors)
        object.__setattr__(self, "V0", V0)
        object.__setattr__(self, "W0", W0)
        k, dk = _radial_kinetic(self.family, self.N)
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_dk", dk)

    @property
    def dim(self) -> int:
        return self.N * self.d

    @property
    def has_potential(self) -> bool:
        return bool(self.V0.terms) or bool(self.W0.terms)

    # kinetic part ---------------------------------------------------------

    def kinetic_radial(self, r) -> np.ndarray:
        """``K`` as a function of ``|q|``, truncated beyond the momentum cap."""
        r = np.asarray(r, dtype=float)
        R = self.momentum_cap
        inner = self._k(np.minimum(r, R))
        return np.where(r > R, self._k(np.float64(R)) + 0.5 * (r - R) ** 2, inner)

    def kinetic_radial_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        R = self.momentum_cap
        return np.where(r > R, r - R, self._dk(np.minimum(r, R)))

    def kinetic(self, q, axis=-1) -> np.ndarray:
        return self.kinetic_radial(np.sqrt(np.sum(np.square(q), axis=axis)))

    def kinetic_gradient(self, q, axis=-1) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        r = np.sqrt(np.sum(np.square(q), axis=axis, keepdims=True))
        dk = self.kinetic_radial_derivative(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, q / r, 0.0)
        return dk * unit

    def capped_kinetic(self, radius: float, axis: int = 0):
        """``K`` extended linearly beyond ``radius`` and its gradient, as functions of ``q``.

        The extension keeps ``|grad K| <= max_{r <= radius} |K'(r)|`` everywhere, so a
        Lax-Friedrichs flux built on it is monotone for every argument.
        """
        k_r = float(self.kinetic_radial(radius))
        dk_r = float(self.kinetic_radial_derivative(radius))

        def norm(q):
            return np.sqrt(np.sum(np.square(q), axis=axis, keepdims=True))

        def kinetic(q):
            r = np.squeeze(norm(q), axis=axis)
            return np.where(r > radius, k_r + dk_r * (r - radius),
                            self.kinetic_radial(np.minimum(r, radius)))

        def gradient(q):
            q = np.asarray(q, dtype=float)
            r = norm(q)
            dk = np.where(r > radius, dk_r, self.kinetic_radial_derivative(np.minimum(r, radius)))
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r > 0, q / r, 0.0)
            return dk * unit

        return kinetic, gradient

    # potential part -------------------------------------------------------

    def potential(self, x) -> np.ndarray:
        """``U(x)`` for ``x`` of shape ``(..., N*d)``."""
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        if self.family != MEAN_FIELD:
            return self.V0(x)
        N, d = self.N, self.d
        xs = x.reshape(x.shape[:-1] + (N, d))
        out = self.V0(xs).sum(axis=-1) / N
        if self.W0.terms:
            diff = xs[..., :, None, :] - xs[..., None, :, :]
            out = out + self.W0(diff).sum(axis=(-1, -2)) / (2.0 * N * N)
        return out

    def potential_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        if self.family != MEAN_FIELD:
            return self.V0.gradient(x)
        N, d = self.N, self.d
        xs = x.reshape(x.shape[:-1] + (N, d))
        grad = self.V0.gradient(xs) / N
        if self.W0.terms:
            diff = xs[..., :, None, :] - xs[..., None, :, :]
            grad = grad + self.W0.gradient(diff).sum(axis=-2) / (N * N)
        return grad.reshape(x.shape)

    def _check_dim(self, x):
        if x.shape[-1] != self.dim:
            raise ConfigurationError(
                f"point dimension {x.shape[-1]} does not match N*d = {self.dim}")

    def __call__(self, x, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        self._check_dim(q)
        return self.kinetic(q) + self.potential(x)

    # bookkeeping ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "family": self.family, "d": self.d, "N": self.N,
            "V0": self.V0.rows(), "W0": self.W0.rows(),
            "momentum_cap": self.momentum_cap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HamiltonianSpec":
        d = int(data.get("d", 1))
        return cls(
            family=data["family"], d=d, N=int(data.get("N", 1)),
            V0=TrigPotential.from_rows(d, data.get("V0", [])),
            W0=TrigPotential.from_rows(d, data.get("W0", [])),
            momentum_cap=float(data.get("momentum_cap", 10.0)),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_particles(self, N: int) -> "HamiltonianSpec":
        return HamiltonianSpec(MEAN_FIELD, self.d, N, self.V0, self.W0, self.momentum_cap)


def eval_hamiltonian(spec: HamiltonianSpec, x, q) -> np.ndarray | float:
    out = spec(x, q)
    return float(out) if np.ndim(out) == 0 else out


def reduced_hamiltonian(V0: TrigPotential, W0: TrigPotential | None = None,
                        momentum_cap: float = 10.0) -> HamiltonianSpec:
    """``H~(x, p) = H(x chi_I, p chi_I)``: the one-particle mean-field Hamiltonian."""
    return HamiltonianSpec(MEAN_FIELD, V0.d, 1, V0, W0, momentum_cap)


def embed_momentum(spec: HamiltonianSpec, p) -> np.ndarray:
    """Coordinate momentum of the constant configuration ``p chi_I``: ``(p/N, ..., p/N)``."""
    p = np.broadcast_to(np.asarray(p, dtype=float), (spec.d,))
    return np.tile(p / spec.N, spec.N)


# --- sampled estimates ----------------------------------------------------------


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _ball_samples(rng, count, dim, radius):
    direction = rng.normal(size=(count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * radius * rng.random((count, 1)) ** (1.0 / dim)


def potential_range(spec: HamiltonianSpec, resolution: int | None = None) -> tuple[float, float]:
    """Guaranteed enclosure ``(lo, hi)`` of ``U`` over the torus.

    Node extrema are widened by the gradient bound times the half-diagonal of a cell.
    """
    D = spec.dim
    if resolution is None:
        resolution = {1: 4096, 2: 256, 3: 48}[D]
    axes = [np.arange(resolution) / resolution] * D
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    values = spec.potential(pts)
    slack = lipschitz_bound_space(spec) * 0.5 * np.sqrt(D) / resolution
    return float(values.min() - slack), float(values.max() + slack)


def lipschitz_bound_space(spec: HamiltonianSpec) -> float:
    """Closed-form upper bound on ``|grad U|`` from the trigonometric coefficients."""
    if spec.family != MEAN_FIELD:
        return spec.V0.gradient_bound
    N = spec.N
    per_particle = spec.V0.gradient_bound / N + spec.W0.gradient_bound * (N - 1) / N**2
    return per_particle * np.sqrt(N)


def estimate_momentum_lipschitz(spec: HamiltonianSpec, radius: float, samples: int = 4001) -> float:
    """Sampled ``max |grad_q H|`` over ``|q| <= radius``."""
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    r = np.linspace(0.0, radius, samples)
    return float(np.max(np.abs(spec.kinetic_radial_derivative(r))))


def estimate_space_lipschitz(spec: HamiltonianSpec, samples: int = 20000, rng=0) -> float:
    """Sampled ``max |grad_x H|`` (independent of ``q`` for the built-in families)."""
    rng = _rng(rng)
    D = spec.dim
    per_axis = max(2, int(round(samples ** (1.0 / D))))
    axes = [np.arange(per_axis) / per_axis] * D
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D)
    pts = np.concatenate([pts, rng.random((samples, D))])
    if not spec.has_potential:
        return 0.0
    return float(np.max(np.linalg.norm(spec.potential_gradient(pts), axis=-1)))


def coercivity_probe(spec: HamiltonianSpec, radii, samples: int = 2000, directions: int = 64,
                     rng=0) -> np.ndarray:
    """For each radius: ``min`` over sampled ``x`` and ``|q| = radius`` of ``H(x, q)``."""
    rng = _rng(rng)
    D = spec.dim
    xs = rng.random((samples, D))
    dirs = rng.normal(size=(directions, D))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    u_min = spec.potential(xs).min()
    out = []
    for r in np.asarray(radii, dtype=float):
        out.append(float(spec.kinetic(r * dirs).min() + u_min))
    return np.array(out)


def coercivity_radius(spec: HamiltonianSpec, level: float) -> float:
    """Smallest ``r`` with ``H(x, q) > level`` for all ``x`` and all ``|q| >= r``."""
    u_lo, _ = potential_range(spec)
    top = 1.0
    while spec.kinetic_radial(top) + u_lo <= level:
        top *= 2.0
    r = np.linspace(0.0, top, 20001)
    below = np.nonzero(spec.kinetic_radial(r) + u_lo <= level)[0]
    return 0.0 if below.size == 0 else float(r[min(below[-1] + 1, r.size - 1)])


# --- symmetry checks ------------------------------------------------------------


def check_periodicity(spec: HamiltonianSpec, sample_count: int = 1000, shift=None, rng=0) -> float:
    """``max |H(x + shift, q) - H(x, q)|`` over random samples."""
    if sample_count < 100:
        raise ConfigurationError("sample_count must be >= 100")
    rng = _rng(rng)
    D = spec.dim
    shift = np.ones(D) if shift is None else np.broadcast_to(np.asarray(shift, dtype=float), (D,))
    if np.any(shift != np.round(shift)):
        raise ConfigurationError("shift must be an integer vector")
    x = rng.random((sample_count, D))
    q = _ball_samples(rng, sample_count, D, spec.momentum_cap)
    return float(np.max(np.abs(spec(x + shift, q) - spec(x, q))))


def _particle_permutations(N, count, rng):
    if N <= 4:
        return [np.array(p) for p in itertools.permutations(range(N))]
    return [rng.permutation(N) for _ in range(count)]


def _permute(spec, x, sigma):
    xs = x.reshape(x.shape[:-1] + (spec.N, spec.d))
    return xs[..., sigma, :].reshape(x.shape)


@dataclass
class RearrangementReport:
    deviation: float
    chain_rule_mismatch: float
    permutations: int

    @property
    def ok(self) -> bool:
        return self.deviation <= 1e-12 and self.chain_rule_mismatch <= 1e-6


def check_rearrangement_invariance(spec: HamiltonianSpec, sample_count: int = 200, rng=0,
                                   fd_step: float = 1e-5) -> RearrangementReport:
    """Permutation invariance of ``H`` plus the discrete chain rule.

    The chain rule compares central differences of ``x -> H(x o s, q o s)`` with
    ``(grad_x H)(x o s) o s^-1``.
    """
    rng = _rng(rng)
    D = spec.dim
    x = rng.random((sample_count, D))
    q = _ball_samples(rng, sample_count, D, spec.momentum_cap)
    base = spec(x, q)
    deviation = 0.0
    mismatch = 0.0
    perms = _particle_permutations(spec.N, 24, rng)
    for sigma in perms:
        deviation = max(deviation, float(np.max(np.abs(
            spec(_permute(spec, x, sigma), _permute(spec, q, sigma)) - base))))
        inverse = np.argsort(sigma)
        analytic = _permute(spec, spec.potential_gradient(_permute(spec, x, sigma)), inverse)
        numeric = np.empty_like(x)
        for k in range(D):
            e = np.zeros(D)
            e[k] = fd_step
            f_plus = spec(_permute(spec, x + e, sigma), _permute(spec, q, sigma))
            f_minus = spec(_permute(spec, x - e, sigma), _permute(spec, q, sigma))
            numeric[:, k] = (f_plus - f_minus) / (2 * fd_step)
        mismatch = max(mismatch, float(np.max(np.abs(numeric - analytic))))
    return RearrangementReport(deviation, mismatch, len(perms))
