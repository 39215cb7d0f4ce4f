import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hj_homogenize.errors import ConfigurationError
from hj_homogenize.experiments import (RATE_EXPONENT, LipschitzSweep, RateReport,
                                       ReductionReport, fit_rate, grid_values, lipschitz_sweep,
                                       model_reduction_compare, n_particle_homogenization_check,
                                       rate_experiment)
from hj_homogenize.hamiltonians import MEAN_FIELD, QUADRATIC, HamiltonianSpec, TrigPotential

COS = TrigPotential.cosine(1)
U0 = TrigPotential.cosine(0.2)
QUAD_COS = HamiltonianSpec(QUADRATIC, V0=COS)


@given(st.floats(0.1, 3.0), st.floats(0.01, 100.0))
def test_fit_recovers_power_law(rate, prefactor):
    eps = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    slope, residual = fit_rate(eps, prefactor * eps**rate)
    assert slope == pytest.approx(rate, abs=1e-9)
    assert residual <= 1e-9


def test_fit_respects_mask():
    eps = np.array([0.5, 0.25, 0.125])
    errors = np.array([1.0, 0.5, 7.0])
    assert fit_rate(eps, errors, [True, True, False])[0] == pytest.approx(1.0)
    assert math.isnan(fit_rate(eps, errors, [True, False, False])[0])


def test_grid_values_depend_on_coordinate_sum():
    v = grid_values(TrigPotential(1, (((1,), 1.0, 0.5),)), 8, 2)
    for i in range(8):
        for j in range(8):
            assert v[i, j] == v[(i + j) % 8, 0]


@pytest.fixture(scope="module")
def cosine_rate():
    return rate_experiment(QUAD_COS, U0, [1 / 8, 1 / 16, 1 / 32], 0.5)


def test_rate_errors_shrink_and_respect_envelope(cosine_rate):
    errors = cosine_rate.errors
    assert all(0 < e < math.inf for e in errors)
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert cosine_rate.envelope_ok
    assert cosine_rate.slope >= RATE_EXPONENT
    assert cosine_rate.flags == []
    assert cosine_rate.prefactor == pytest.approx(errors[0] / (1 / 8) ** RATE_EXPONENT)


def test_rate_report_round_trip(cosine_rate):
    again = RateReport.from_dict(json.loads(json.dumps(cosine_rate.to_dict())))
    assert again == cosine_rate
    assert cosine_rate.csv_rows()[0] == ["eps", "error", "envelope", "resolution_limited"]


def test_rate_is_reproducible(cosine_rate):
    assert rate_experiment(QUAD_COS, U0, [1 / 8, 1 / 16, 1 / 32], 0.5) == cosine_rate


def test_degenerate_rate_run_is_flagged():
    report = rate_experiment(HamiltonianSpec(QUADRATIC), U0, [1 / 8, 1 / 16], 0.5)
    assert "degenerate" in report.flags
    assert math.isnan(report.slope)
    # the only gap left is linear interpolation of p^2/2, at most spacing^2/8 per unit time
    spacing = 2 * max(1.0, 1.5 * max(report.max_gradient)) / 32
    assert max(report.errors) <= report.horizon * spacing**2 / 8


def test_rate_inputs_validated():
    with pytest.raises(ConfigurationError, match="decreasing"):
        rate_experiment(QUAD_COS, U0, [1 / 16, 1 / 8], 0.5)
    with pytest.raises(ConfigurationError, match="two"):
        rate_experiment(QUAD_COS, U0, [1 / 8], 0.5)
    with pytest.raises(ConfigurationError, match="single-particle"):
        rate_experiment(HamiltonianSpec(MEAN_FIELD, N=2), U0, [1 / 8, 1 / 16], 0.5)


def test_lipschitz_sweep_without_potential_is_constant():
    sweep = lipschitz_sweep(HamiltonianSpec(QUADRATIC), U0, [1 / 8, 1 / 16, 1 / 32], 0.5)
    # each eps uses its own grid; the gradient of 0.2 cos is then resolved to O(h^2)
    assert sweep.gradient_ratio <= 1 + 1e-2
    assert sweep.time_within_barrier


def test_lipschitz_sweep_with_cosine():
    sweep = lipschitz_sweep(QUAD_COS, U0, [1 / 8, 1 / 16, 1 / 32, 1 / 64], 0.5)
    assert sweep.gradient_ratio <= 1.2
    assert sweep.time_within_barrier
    assert all(t <= c + 1e-6 for t, c in zip(sweep.time_lipschitz, sweep.barrier_constant))
    assert LipschitzSweep.from_dict(sweep.to_dict()) == sweep


def test_single_particle_matches_reduced_family():
    report = model_reduction_compare(COS, TrigPotential.zero(1), -1, 1, samples=9,
                                     particles=(1,), cells=(64,))
    assert report.max_gap[0] <= 1e-12


def test_separable_two_particles():
    report = model_reduction_compare(COS, TrigPotential.zero(1), -1, 1, samples=9,
                                     particles=(2,), cells=(24,))
    assert report.max_gap[0] <= 2e-8


def test_interaction_gaps_are_finite():
    W0 = TrigPotential(1, (((1,), 0.5, 0.0),))
    report = model_reduction_compare(COS, W0, -1, 1, samples=9, particles=(2,), cells=(24,))
    assert all(np.isfinite(report.max_gap)) and report.w0_amplitude == 0.5
    assert ReductionReport.from_dict(report.to_dict()) == report
    assert len(report.csv_rows()) == 1 + 9


def test_reduction_lengths_must_match():
    with pytest.raises(ConfigurationError, match="equal length"):
        model_reduction_compare(COS, TrigPotential.zero(1), -1, 1, particles=(2, 3), cells=(8,))


def test_particle_check_without_potentials():
    spec = HamiltonianSpec(MEAN_FIELD, N=2)
    report = n_particle_homogenization_check(spec, U0, [1 / 4, 1 / 8], 0.25, table_samples=17)
    assert max(report.invariance) <= 1e-12
    # the solution is a function of x1 + x2: diagonal interpolation and tabulation errors only
    assert max(report.closeness) <= 1e-2
    assert max(report.effective_gap) <= 1e-2


def test_particle_check_rejects_other_specs():
    with pytest.raises(ConfigurationError, match="N = 2"):
        n_particle_homogenization_check(QUAD_COS, U0, [1 / 4, 1 / 8], 0.25)
