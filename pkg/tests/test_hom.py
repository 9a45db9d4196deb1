import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photonstats.errors import DataError, ValidationError
from photonstats.hom import (correct_visibility, emission_pairs, empirical_density,
                             expected_visibility, first_emission_density, gated_model_overlap,
                             overlap_from_emission_times, overlap_integral, visibility_from_counts)
from photonstats.sim import EmitterConfig, simulate_emissions

TAU = 204.0


def test_identical_times_overlap_fully():
    assert overlap_from_emission_times(np.full((2000, 2), 37.0), TAU) == pytest.approx(1.0)


def test_fixed_offset_of_one_lifetime():
    pairs = np.column_stack([np.zeros(2000), np.full(2000, TAU)])
    assert overlap_from_emission_times(pairs, TAU) == pytest.approx(np.exp(-1))


def test_overlap_errors():
    with pytest.raises(DataError, match="at least"):
        overlap_from_emission_times(np.zeros((10, 2)), TAU)
    with pytest.raises(DataError, match="after gating"):
        overlap_from_emission_times(np.zeros((2000, 2)), TAU, t_start=5.0)
    with pytest.raises(ValidationError):
        overlap_from_emission_times(np.zeros((2000, 2)), 0.0)


def test_exponential_times_give_one_half():
    # |t_a - t_b| of two Exp(tau) draws is Exp(tau), and E exp(-X / tau) = 1/2
    rng = np.random.default_rng(0)
    pairs = rng.exponential(TAU, (400_000, 2))
    assert overlap_from_emission_times(pairs, TAU) == pytest.approx(0.5, abs=3e-3)


@pytest.fixture(scope="module")
def pi_records():
    cfg = EmitterConfig(pulse_area=np.pi, n_pulses=2_000_000, seed=31)
    return cfg, simulate_emissions(cfg)


def test_estimator_matches_numerical_integration(pi_records):
    _, r = pi_records
    pairs = emission_pairs(r)
    m_pairs = overlap_from_emission_times(pairs, TAU)
    dens = empirical_density(r.first_emission_times(), step=0.25)
    assert m_pairs == pytest.approx(overlap_integral(dens, 0.25, TAU), abs=1e-3)


def test_model_density_matches_simulation(pi_records):
    cfg, r = pi_records
    model = first_emission_density(cfg, 0.25)
    emp = empirical_density(r.first_emission_times(), 0.25, t_max=model.size * 0.25)[: model.size]
    assert overlap_integral(model, 0.25, TAU) == pytest.approx(overlap_integral(emp, 0.25, TAU), abs=1e-3)
    assert model.sum() == pytest.approx(np.mean(r.counts > 0), abs=2e-3)


def test_pi_pulse_overlap_below_one_and_gating_helps(pi_records):
    cfg, r = pi_records
    assert overlap_from_emission_times(emission_pairs(r), TAU) < 1
    dens = first_emission_density(cfg, 0.25)
    assert gated_model_overlap(cfg, 150.0, density=dens) > gated_model_overlap(cfg, 0.0, density=dens)


def test_model_gating_monotone():
    cfg = EmitterConfig(pulse_area=np.pi)
    dens = first_emission_density(cfg, 0.25)
    m = [gated_model_overlap(cfg, t, density=dens) for t in np.arange(0, 301, 10)]
    assert np.all(np.diff(m) >= -1e-12)


def test_correct_visibility_examples():
    assert correct_visibility(0.9, 0.0) == 0.9
    for v in (0.5, 0.9):
        m = [correct_visibility(v, g) for g in (0.0, 0.02, 0.05)]
        assert m == sorted(m) and all(x >= v for x in m)
    with pytest.raises(ValidationError):
        correct_visibility(0.5, 1.0)
    with pytest.raises(ValidationError):
        correct_visibility(1.5, 0.0)


@given(st.floats(-1, 1), st.floats(0, 0.5))
def test_correction_inverts_forward_model(v, g2):
    m = correct_visibility(v, g2)
    assert expected_visibility(m, g2) == pytest.approx(v, abs=1e-12)
    if g2 > 0 and v >= 0:
        assert m >= v


def test_visibility_from_counts():
    assert visibility_from_counts(0, 100) == 1.0
    assert visibility_from_counts(100, 100) == -1.0
    assert visibility_from_counts(50, 100) == 0.0
    assert visibility_from_counts(50, 100, pattern_factor=1.0) == 0.5
    with pytest.raises(DataError):
        visibility_from_counts(1, 0)
