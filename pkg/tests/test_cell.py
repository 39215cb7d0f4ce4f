import numpy as np
import pytest
from oracles import quadratic_effective_1d

from hj_homogenize.cell import (EffectiveTable, check_constant_uniqueness, cell_dissipation,
                                solve_discounted, solve_large_time, tabulate_effective)
from hj_homogenize.errors import ConfigurationError, InvariantViolation, NonConvergenceError
from hj_homogenize.grid import BoxGrid, make_grid
from hj_homogenize.hamiltonians import (EIKONAL, MEAN_FIELD, QUADRATIC, QUARTIC, HamiltonianSpec,
                                        TrigPotential, estimate_momentum_lipschitz)

COS = TrigPotential.cosine(1)
QUAD = HamiltonianSpec(QUADRATIC)
QUAD_COS = HamiltonianSpec(QUADRATIC, V0=COS)
FLAT_EDGE = 4 / np.pi


def cos_oracle(p):
    return quadratic_effective_1d(p, lambda y: np.cos(2 * np.pi * y), 1.0)


def test_free_particle_corrector_is_constant():
    sol = solve_discounted(QUAD, make_grid(1, 64), 1.2, 1e-3)
    assert sol.c_estimate == pytest.approx(0.72, abs=1e-3)
    assert sol.spread <= 1e-3
    assert np.ptp(sol.corrector.values) <= 1e-3
    assert sol.residual <= 1e-8


@pytest.mark.xfail(strict=True, reason="global Lax-Friedrichs bias O(theta*h) is about 0.027 "
                   "at 256 cells; 1024 cells meets the bound")
def test_cosine_flat_value_at_256_cells():
    sol = solve_discounted(QUAD_COS, make_grid(1, 256), 0.0, 1e-3)
    assert sol.c_estimate == pytest.approx(1.0, abs=2e-2)


def test_cosine_flat_value_at_1024_cells():
    sol = solve_discounted(QUAD_COS, make_grid(1, 1024), 0.0, 1e-3)
    assert sol.c_estimate == pytest.approx(1.0, abs=2e-2)


def test_discounted_bound_holds():
    grid = make_grid(1, 128)
    for p in (0.0, 0.7, 2.5):
        sol = solve_discounted(QUAD_COS, grid, p, 1e-2)
        h_max = max(abs(0.5 * p * p + 1.0), abs(0.5 * p * p - 1.0))
        assert np.max(np.abs(sol.lam * sol.discounted.values)) <= h_max + 1e-8


@pytest.mark.parametrize("spec", [QUAD_COS, HamiltonianSpec(EIKONAL, V0=COS),
                                  HamiltonianSpec(QUARTIC, V0=COS)],
                         ids=["quadratic", "eikonal", "quartic"])
def test_halving_discount_moves_constant_by_order_lambda(spec):
    grid = make_grid(1, 128)
    constants = []
    for lam in (1e-2, 1e-3):
        for p in (0.0, 0.5, 1.0):
            a = solve_discounted(spec, grid, p, lam).c_estimate
            b = solve_discounted(spec, grid, p, 2 * lam).c_estimate
            constants.append(abs(a - b) / (lam * (1 + p)))
    # the constant is empirical; it must be of order one and stable under halving
    assert max(constants) <= 1.0
    first, second = np.array(constants[:3]), np.array(constants[3:])
    # the recorded constant does not grow as the discount shrinks
    assert np.all(second <= 1.1 * first + 1e-9)


def test_pseudo_time_march_agrees_with_newton():
    grid = make_grid(1, 32)
    newton = solve_discounted(QUAD_COS, grid, 0.5, 0.5)
    march = solve_discounted(QUAD_COS, grid, 0.5, 0.5, method="march", max_iters=100000)
    assert march.c_estimate == pytest.approx(newton.c_estimate, abs=1e-7)
    assert march.iterations > newton.iterations


def test_iteration_budget_exhaustion_reports_residual():
    with pytest.raises(NonConvergenceError) as info:
        solve_discounted(QUAD_COS, make_grid(1, 64), 0.0, 1e-3, max_iters=1)
    assert info.value.last_residual > 1e-8
    assert info.value.iterations == 1


def test_bad_inputs_are_rejected():
    with pytest.raises(ConfigurationError, match="discount"):
        solve_discounted(QUAD_COS, make_grid(1, 16), 0.0, 0.0)
    with pytest.raises(ConfigurationError, match="dimension"):
        solve_discounted(QUAD_COS, make_grid(2, 16), 0.0)


# ---------------------------------------------------------------- large time

def test_large_time_free_particle():
    est = solve_large_time(QUAD, make_grid(1, 32), 1.0, horizon=20)
    assert est.c_estimate == pytest.approx(0.5, abs=1 / 20)
    assert est.c_naive == pytest.approx(0.5, abs=1 / 20)


def test_large_time_cosine_flat_value():
    est = solve_large_time(QUAD_COS, make_grid(1, 256), 0.0, horizon=50)
    assert est.c_estimate == pytest.approx(1.0, abs=5e-2)
    assert est.spread <= 5.0 / 50


def test_large_time_rejects_short_horizon():
    with pytest.raises(ConfigurationError, match="horizon"):
        solve_large_time(QUAD, make_grid(1, 16), 0.0, horizon=5)


@pytest.mark.parametrize("spec, p", [(QUAD_COS, 0.5), (QUAD_COS, 2.0),
                                     (HamiltonianSpec(EIKONAL, V0=COS), 0.5)])
def test_large_time_and_discounted_agree(spec, p):
    grid = make_grid(1, 64)
    lam, T = 1e-3, 50.0
    theta, _ = cell_dissipation(spec, [p])
    c_disc = solve_discounted(spec, grid, p, lam, theta=theta).c_estimate
    c_time = solve_large_time(spec, grid, p, horizon=T, theta=theta).c_estimate
    assert abs(c_disc - c_time) <= max(lam, 1 / T)


# ---------------------------------------------------------------- uniqueness

def test_constant_guesses_share_the_constant():
    grid = make_grid(1, 128)
    c1, c2, gap = check_constant_uniqueness(QUAD_COS, grid, 0.5, 1e-3, (0.0, 10.0))
    assert gap <= 2e-6


def test_noise_guess_shares_the_constant():
    grid = make_grid(1, 128)
    noise = 5 * np.random.default_rng(1).uniform(-1, 1, grid.shape)
    noise[0] = 5.0
    _, _, gap = check_constant_uniqueness(QUAD_COS, grid, 0.5, 1e-3, (np.zeros(grid.shape), noise))
    assert gap <= 2e-6


def test_free_particle_guesses_both_exact():
    c1, c2, _ = check_constant_uniqueness(QUAD, make_grid(1, 64), 1.5, 1e-3, (0.0, 10.0))
    assert c1 == pytest.approx(1.125, abs=1e-8)
    assert c2 == pytest.approx(1.125, abs=1e-8)


def test_close_guesses_rejected():
    with pytest.raises(ConfigurationError, match="differ"):
        check_constant_uniqueness(QUAD, make_grid(1, 16), 0.0, 1e-3, (0.0, 0.5))


# ---------------------------------------------------------------- tables

def test_free_particle_table():
    table = tabulate_effective(QUAD, make_grid(1, 256), -2, 2, 17)
    p = table.box.axis_nodes(0)
    np.testing.assert_allclose(table.values, 0.5 * p**2, atol=1e-3)


@pytest.fixture(scope="module")
def cosine_table():
    return tabulate_effective(QUAD_COS, make_grid(1, 1024), -3, 3, 25)


def test_cosine_table_matches_quadrature(cosine_table):
    p = cosine_table.box.axis_nodes(0)
    flat = np.abs(p) <= FLAT_EDGE
    np.testing.assert_allclose(cosine_table.values[flat], 1.0, atol=2e-2)
    expected = np.array([cos_oracle(q) for q in p])
    np.testing.assert_allclose(cosine_table.values, expected, atol=2e-2)
    right = cosine_table.values[p > FLAT_EDGE]
    left = cosine_table.values[p < -FLAT_EDGE]
    assert np.all(np.diff(right) > 0) and np.all(np.diff(left) < 0)


def test_cosine_table_slopes_bounded(cosine_table):
    slopes = np.abs(np.diff(cosine_table.values)) / cosine_table.box.spacing[0]
    assert slopes.max() <= estimate_momentum_lipschitz(QUAD_COS, 3.0) + 1e-8


def test_table_sandwich_and_validation(cosine_table):
    assert cosine_table.validate(1e-8) == []
    assert np.all(cosine_table.values >= cosine_table.lower_bounds - 1e-8)
    assert np.all(cosine_table.values <= cosine_table.upper_bounds + 1e-8)


def test_corrupted_table_fails_validation(cosine_table):
    bad = EffectiveTable(cosine_table.box, cosine_table.values + 5.0,
                         cosine_table.lower_bounds, cosine_table.upper_bounds)
    assert any("sandwich" in problem for problem in bad.validate())
    values = cosine_table.values.copy()
    values[-1] = np.nan
    assert bad.validate() and EffectiveTable(cosine_table.box, values, values, values).validate()


def test_table_json_round_trip(cosine_table):
    again = EffectiveTable.from_json(cosine_table.to_json())
    np.testing.assert_array_equal(again.values, cosine_table.values)
    assert again.metadata == cosine_table.metadata
    assert again.lipschitz == cosine_table.lipschitz
    assert again(0.3) == cosine_table(0.3)


def test_table_metadata(cosine_table):
    meta = cosine_table.metadata
    assert meta["lambda"] == 1e-3
    assert meta["grid"]["cells"] == [1024]
    assert meta["spec_digest"] == QUAD_COS.digest()


def test_table_input_errors():
    grid = make_grid(1, 16)
    with pytest.raises(ConfigurationError, match=">= 9"):
        tabulate_effective(QUAD, grid, -1, 1, 5)
    with pytest.raises(ConfigurationError, match="contain 0"):
        tabulate_effective(QUAD, grid, 0.5, 1, 9)


def test_table_failure_names_the_node():
    with pytest.raises(NonConvergenceError, match="p=") as info:
        tabulate_effective(QUAD_COS, make_grid(1, 32), -1, 1, 9, max_iters=1)
    assert info.value.last_residual > 0


def test_table_validation_failure_raises(monkeypatch):
    monkeypatch.setattr(EffectiveTable, "validate", lambda self, tolerance=1e-6: ["forced"])
    with pytest.raises(InvariantViolation, match="forced"):
        tabulate_effective(QUAD, make_grid(1, 16), -1, 1, 9)


def test_corrector_difference_controlled_by_momentum_gap():
    grid = make_grid(1, 256)
    lam = 1e-2
    L = estimate_momentum_lipschitz(QUAD_COS, 3.0)
    sols = {p: solve_discounted(QUAD_COS, grid, p, lam) for p in (0.0, 0.5, 1.5, 2.5)}
    for p in sols:
        for q in sols:
            gap = lam * np.max(np.abs(sols[p].discounted.values - sols[q].discounted.values))
            assert gap <= L * abs(p - q) + 1e-8


# ---------------------------------------------------------------- particles

def test_two_particle_corrector_is_permutation_symmetric():
    W0 = TrigPotential(1, (((1,), 0.5, 0.0),))
    spec = HamiltonianSpec(MEAN_FIELD, N=2, V0=COS, W0=W0)
    sol = solve_discounted(spec, make_grid(2, 32), 0.7, 1e-2)
    v = sol.corrector.values
    assert np.max(np.abs(v - v.T)) <= 1e-8


def test_two_particle_separable_constant_matches_one_particle():
    grid1 = make_grid(1, 32)
    grid2 = make_grid(2, 32)
    spec2 = HamiltonianSpec(MEAN_FIELD, N=2, V0=COS)
    spec1 = spec2.with_particles(1)
    for p in (0.0, 1.0):
        theta = max(cell_dissipation(spec1, [p])[0], cell_dissipation(spec2, [p])[0])
        c1 = solve_discounted(spec1, grid1, p, 1e-3, theta=theta).c_estimate
        c2 = solve_discounted(spec2, grid2, p, 1e-3, theta=theta).c_estimate
        assert abs(c1 - c2) <= 2e-8


def test_two_dimensional_table():
    spec = HamiltonianSpec(QUADRATIC, d=2)
    table = tabulate_effective(spec, make_grid(2, 16), [-1, -1], [1, 1], [9, 9])
    nodes = table.box.nodes()
    np.testing.assert_allclose(table.values, 0.5 * np.sum(nodes**2, axis=-1), atol=1e-3)
    assert table(np.array([0.25, -0.5])) == pytest.approx(0.5 * (0.0625 + 0.25), abs=0.02)
    assert len(table.csv_rows()) == 1 + 81


def test_box_grid_shape():
    box = BoxGrid((-1.0,), (1.0,), (9,))
    assert box.spacing == (0.25,)
