import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from oracles import best_mean_zero_lattice

from hj_homogenize.cell import solve_discounted
from hj_homogenize.errors import ConfigurationError
from hj_homogenize.experiments import grid_values
from hj_homogenize.grid import GridFunction, make_grid
from hj_homogenize.hamiltonians import MEAN_FIELD, QUADRATIC, HamiltonianSpec, TrigPotential
from hj_homogenize.reduction import (ParticleConfiguration, diagonal_points, empirical_inner,
                                     empirical_norm, lattice_decompose, mean_closeness_report,
                                     mean_projection, permute_particles, round_half_to_zero,
                                     symmetrize, y_eps_invariance_check)
from hj_homogenize.scheme import solve_cauchy

COS = TrigPotential.cosine(1)
G = TrigPotential(1, (((1,), 0.3, 0.1),))


def config(rows):
    return ParticleConfiguration(np.array(rows, dtype=float))


# ---------------------------------------------------------------- projection

def test_mean_projection_example():
    mean, centred = mean_projection(config([[0.2], [0.4]]))
    np.testing.assert_allclose(mean, [0.3])
    np.testing.assert_allclose(centred, [[-0.1], [0.1]])


def test_constant_configuration_has_no_centred_part():
    _, centred = mean_projection(config([[0.7, -1.0]] * 4))
    np.testing.assert_array_equal(centred, 0.0)


@given(hnp.arrays(float, (5, 2), elements=st.floats(-10, 10)),
       hnp.arrays(float, 2, elements=st.floats(-10, 10)))
def test_centred_part_orthogonal_to_constants(x, c):
    _, centred = mean_projection(ParticleConfiguration(x))
    assert abs(empirical_inner(centred, c)) <= 1e-12 * (1 + np.abs(x).max() * np.abs(c).max())


def test_configuration_validation():
    with pytest.raises(ConfigurationError, match="finite"):
        config([[np.nan]])
    with pytest.raises(ConfigurationError, match="N x d"):
        ParticleConfiguration(np.zeros((2, 2, 2)))
    assert config([0.1, 0.2, 0.3]).N == 3


def test_rounding_ties_go_toward_zero():
    np.testing.assert_array_equal(round_half_to_zero([0.5, -0.5, 1.5, -2.5, 0.51, -1.49]),
                                  [0, 0, 1, -2, 1, -1])


# ---------------------------------------------------------------- lattice decomposition

def test_two_particle_decomposition_example():
    dec = lattice_decompose(config([[0.9], [-0.9]]), 0.5)
    np.testing.assert_array_equal(dec.mean, [0.0])
    np.testing.assert_array_equal(dec.z0, [[2], [-2]])
    np.testing.assert_array_equal(dec.m, [0.0])
    np.testing.assert_array_equal(dec.eta, 0)
    np.testing.assert_array_equal(dec.z_x, dec.z0)
    np.testing.assert_allclose(dec.x_eps, [[-0.1], [0.1]], atol=1e-15)
    assert dec.remainder_norm == pytest.approx(0.1)
    centred = mean_projection(config([[0.9], [-0.9]]))[1]
    np.testing.assert_array_equal(dec.z_x, best_mean_zero_lattice(centred, 0.5))


def test_three_particle_decomposition_example():
    dec = lattice_decompose(config([[0.6], [0.0], [-0.6]]), 0.5)
    np.testing.assert_array_equal(dec.z0, [[1], [0], [-1]])
    np.testing.assert_array_equal(dec.m, [0.0])
    np.testing.assert_allclose(dec.x_eps, [[0.1], [0.0], [-0.1]], atol=1e-15)
    assert dec.remainder_norm <= 1.5 * 0.5


def test_mean_only_configuration():
    dec = lattice_decompose(config([[0.3, 1.0]] * 3), 0.1)
    np.testing.assert_array_equal(dec.z_x, 0)
    np.testing.assert_array_equal(dec.x_eps, 0)


def test_correction_needed_when_rounding_breaks_the_mean():
    # centred/eps = (0.6, 0.6, -1.2) rounds to (1, 1, -1): column sum 1
    dec = lattice_decompose(config([[0.3], [0.3], [-0.6]]), 0.5)
    np.testing.assert_array_equal(dec.z0, [[1], [1], [-1]])
    np.testing.assert_array_equal(dec.eta, [[1], [0], [0]])
    np.testing.assert_array_equal(dec.z_x.sum(axis=0), 0)
    np.testing.assert_allclose(dec.m, [1 / 3])


def test_nonpositive_eps_rejected():
    with pytest.raises(ConfigurationError):
        lattice_decompose(config([[0.1], [0.2]]), 0.0)


@given(st.sampled_from([2, 3, 5, 10]), st.sampled_from([1, 2]),
       st.floats(0.01, 2.0), st.integers(0, 2**32 - 1))
def test_decomposition_invariants(N, d, eps, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, (N, d))
    dec = lattice_decompose(ParticleConfiguration(x), eps)
    np.testing.assert_allclose(dec.reconstruct(), x, rtol=0, atol=16 * np.spacing(3.0))
    np.testing.assert_array_equal(dec.z_x, np.round(dec.z_x))
    np.testing.assert_array_equal(dec.z_x.sum(axis=0), 0)
    np.testing.assert_array_equal(np.round(N * dec.m), N * dec.m)
    assert dec.remainder_norm <= 1.5 * np.sqrt(d) * eps * (1 + 1e-12)
    assert dec.eta_norm <= np.sqrt(d) + 1e-12


@given(hnp.arrays(float, (3, 1), elements=st.floats(-1, 1)))
def test_decomposition_is_near_optimal(x):
    eps = 0.5
    dec = lattice_decompose(ParticleConfiguration(x), eps)
    centred = mean_projection(ParticleConfiguration(x))[1]
    best = best_mean_zero_lattice(centred, eps)
    optimum = empirical_norm(centred - eps * best)
    assert optimum <= dec.remainder_norm + 1e-12
    assert dec.remainder_norm <= 1.5 * eps


def test_empirical_norm():
    assert empirical_norm([[3.0, 4.0], [0.0, 0.0]]) == pytest.approx(np.sqrt(12.5))


# ---------------------------------------------------------------- invariance and closeness

@pytest.fixture(scope="module")
def two_particle_solution():
    cells, eps = 64, 0.25
    grid = make_grid(2, cells)
    spec = HamiltonianSpec(MEAN_FIELD, N=2, V0=COS, W0=TrigPotential(1, (((1,), 0.2, 0.0),)))
    u0 = GridFunction(grid, grid_values(G, cells, 2))
    return solve_cauchy(u0, spec, eps=eps, final_time=0.2), eps


def test_mean_zero_shift_is_exact(two_particle_solution):
    sol, eps = two_particle_solution
    report = y_eps_invariance_check(sol, eps, [[1], [-1]])
    assert report.mean_zero and report.deviation <= 1e-12 and report.ok()
    assert report.index_shift == (16, -16)


def test_zero_shift_is_identity(two_particle_solution):
    sol, eps = two_particle_solution
    assert y_eps_invariance_check(sol, eps, [[0], [0]]).deviation == 0.0


def test_non_mean_zero_shift_is_flagged(two_particle_solution):
    sol, eps = two_particle_solution
    report = y_eps_invariance_check(sol, eps, [[1], [0]])
    assert not report.mean_zero
    s = np.arange(128) / 64
    direct = np.max(np.abs(G(((s + eps) % 1)[:, None]) - G((s % 1)[:, None])))
    assert report.deviation >= direct - 1e-12
    assert not report.ok()


def test_invariance_needs_commensurate_eps(two_particle_solution):
    sol, _ = two_particle_solution
    with pytest.raises(ConfigurationError, match="commensurate"):
        y_eps_invariance_check(sol, 0.3, [[1], [-1]])


def test_closeness_field_is_permutation_invariant(two_particle_solution):
    sol, _ = two_particle_solution
    report = mean_closeness_report(sol, 2)
    field = report.field.values
    assert np.max(np.abs(field - field.T)) <= 1e-12
    assert report.deviation > 0


def test_mean_dependent_solution_is_close_to_diagonal():
    cells = 32
    grid = make_grid(2, cells)
    u0 = GridFunction(grid, grid_values(G, cells, 2))
    sol = solve_cauchy(u0, HamiltonianSpec(QUADRATIC, d=2), final_time=0.1)
    report = mean_closeness_report(sol, 2)
    # u stays a function of x1 + x2; the diagonal value is bilinear interpolation of it
    curvature = 0.2 * (2 * np.pi) ** 2 * 4
    assert report.deviation <= curvature * grid.spacing[0] ** 2


def test_diagonal_points():
    grid = make_grid(2, 4)
    diag = diagonal_points(grid, 2)
    np.testing.assert_allclose(diag[1, 3], [0.5, 0.5])


# ---------------------------------------------------------------- symmetrization

def test_symmetric_function_unchanged():
    grid = make_grid(2, 16)
    x = grid.coords()
    f = GridFunction(grid, np.cos(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1]))
    out = symmetrize(f, 2)
    assert out.asymmetry == 0.0
    np.testing.assert_array_equal(out.symmetric.values, f.values)


def test_first_particle_only_function():
    grid = make_grid(2, 16)
    values = np.sin(2 * np.pi * grid.coords()[0])
    out = symmetrize(GridFunction(grid, values), 2)
    brute = max(abs(values[i, j] - values[j, i]) for i in range(16) for j in range(16))
    assert out.asymmetry == pytest.approx(brute)
    np.testing.assert_allclose(out.symmetric.values, 0.5 * (values + values.T))


def test_three_particle_symmetrization_is_invariant():
    grid = make_grid(3, 6)
    values = np.random.default_rng(0).random(grid.shape)
    sym = symmetrize(GridFunction(grid, values), 3).symmetric.values
    for sigma in itertools.permutations(range(3)):
        np.testing.assert_allclose(permute_particles(sym, sigma, 1), sym, atol=1e-15)


def test_cell_corrector_is_symmetric():
    spec = HamiltonianSpec(MEAN_FIELD, N=2, V0=COS, W0=TrigPotential(1, (((1,), 0.4, 0.0),)))
    corrector = solve_discounted(spec, make_grid(2, 24), 0.5, 1e-2).corrector
    assert symmetrize(corrector, 2).asymmetry <= 1e-8


def test_symmetrize_guards():
    with pytest.raises(ConfigurationError, match="N <= 4"):
        symmetrize(GridFunction(make_grid(5, 4), np.zeros((4,) * 5)), 5)
    with pytest.raises(ConfigurationError, match="identical"):
        symmetrize(GridFunction(make_grid(2, [8, 16]), np.zeros((8, 16))), 2)
