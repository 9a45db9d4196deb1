import numba
import numpy as np
import pytest
from scipy import stats

from photonstats.correlator import build_histogram, g_zero
from photonstats.errors import ValidationError
from photonstats.sim import (DetectionConfig, EmissionRecords, EmitterConfig, detect,
                             no_jump_tables, photon_number_histogram, reference_emissions,
                             simulate, simulate_emissions, simulate_reference)
from photonstats.timetag import CLOCK

# Mean photons per pulse, Gamma * int rho_ee dt + rho_ee(T_p), from an independent
# solve_ivp integration of the optical Bloch equations (square pulse, tau = 204 ps).
BLOCH_MEAN = {
    (1.0, 15.0): 1.0088608825523597,
    (2.0, 15.0): 0.06358211765244896,
    (3.0, 15.0): 1.0098179943661163,
    (2.0, 0.5): 0.0021437632215468437,
}


def _frac(records, k):
    return float(np.mean(records.counts >= k))


def test_pi_pulse_short_limit():
    r = simulate_emissions(EmitterConfig(pulse_area=np.pi, pulse_duration=0.1, n_pulses=200_000, seed=1))
    p1 = _frac(r, 1)
    assert abs(1.0 - p1) <= 3 * np.sqrt(max(p1 * (1 - p1), 1.0 / 200_000) / 200_000)
    assert _frac(r, 2) < 1e-3


def test_two_pi_returns_to_ground():
    r = simulate_emissions(EmitterConfig(pulse_area=2 * np.pi, pulse_duration=0.1, n_pulses=200_000, seed=2))
    assert _frac(r, 1) < 1e-2


def test_two_photon_fraction_linear_in_pulse_duration():
    f = [_frac(simulate_emissions(EmitterConfig(pulse_area=2 * np.pi, pulse_duration=tp,
                                                n_pulses=1_000_000, seed=3)), 2)
         for tp in (2.0, 4.0, 8.0)]
    assert f[1] / f[0] == pytest.approx(2.0, rel=0.1)
    assert f[2] / f[0] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("theta, tp", sorted(BLOCH_MEAN))
def test_mean_photon_number_matches_bloch(theta, tp):
    r = simulate_emissions(EmitterConfig(pulse_area=theta * np.pi, pulse_duration=tp,
                                         n_pulses=1_000_000, seed=4))
    c = r.counts.astype(float)
    assert abs(c.mean() - BLOCH_MEAN[theta, tp]) <= 4 * c.std() / np.sqrt(c.size) + 1e-4


def test_gaussian_pulse_pi_inverts():
    r = simulate_emissions(EmitterConfig(pulse_area=np.pi, pulse_duration=0.5, pulse_shape="gaussian",
                                         n_pulses=100_000, seed=5))
    assert _frac(r, 1) > 0.99


def test_no_jump_tables_lossless_limit():
    t = no_jump_tables(EmitterConfig(pulse_area=np.pi / 2, pulse_duration=1.0, lifetime=1e12))
    assert t.norm2[0, -1] == pytest.approx(1.0, abs=1e-9)
    assert t.pe_end[0] == pytest.approx(np.sin(np.pi / 4) ** 2, abs=1e-9)
    assert np.all(np.diff(t.norm2[0]) <= 0)


def test_times_strictly_increasing_and_final_wait_exponential():
    cfg = EmitterConfig(pulse_area=3 * np.pi, pulse_duration=15.0, n_pulses=200_000, seed=6)
    r = simulate_emissions(cfg)
    starts, counts = r.starts, r.counts
    for k in np.flatnonzero(counts > 1)[:2000]:
        assert np.all(np.diff(r.times[starts[k]:starts[k] + counts[k]]) > 0)
    wait = r.times[r.times > cfg.pulse_duration] - cfg.pulse_duration
    assert wait.size >= 100_000
    assert stats.kstest(wait[:100_000], "expon", args=(0, cfg.lifetime)).pvalue > 0.01
    # at most one emission after the pulse per record
    after = np.add.reduceat((r.times > cfg.pulse_duration).astype(int), starts[counts > 0])
    assert after.max() == 1


def test_photon_number_histogram_counting():
    d = photon_number_histogram(EmissionRecords.from_lists([[1.0], [2.0], [1.0, 3.0], []]))
    assert d.p == pytest.approx((0.25, 0.5, 0.25, 0.0, 0.0))
    assert photon_number_histogram(EmissionRecords.from_lists([[], []])).p[0] == 1.0


def test_photon_number_histogram_folds_high_counts():
    with pytest.warns(RuntimeWarning, match="folded"):
        d = photon_number_histogram(EmissionRecords.from_lists([[1, 2, 3, 4, 5], [1]]))
    assert d.truncated and d.p == pytest.approx((0, 0.5, 0, 0, 0.5))


def test_records_interface():
    r = EmissionRecords.from_lists([[1.0], [], [2.0, 5.0]])
    assert r[2].emission_times == (2.0, 5.0) and r[1].emission_times == ()
    assert r.first_emission_times().tolist() == [1.0, 2.0]
    assert r.pulse_indices().tolist() == [0, 2, 2]


def test_detect_zero_transmission_gives_clock_only():
    r = reference_emissions("fock", 1, 1000)
    s = detect(r, DetectionConfig(eta_t=0.0))
    assert np.all(s.channels == CLOCK) and len(s) == 1000


def test_detect_lossless_single_detector():
    r = simulate_emissions(EmitterConfig(pulse_area=2.5 * np.pi, n_pulses=20_000, seed=7))
    s = detect(r, DetectionConfig(eta_t=1.0, n_detectors=1, jitter_sigma=0.0))
    assert np.count_nonzero(s.channels == 1) == r.times.size
    assert s.channels_present() == [0, 1]


def test_detect_binomial_loss():
    s = simulate_reference("fock", 1, 1_000_000, DetectionConfig(eta_t=0.25), seed=8)
    n = np.count_nonzero(s.detector_mask())
    assert abs(n - 250_000) <= 5 * np.sqrt(1e6 * 0.25 * 0.75)


def test_detect_splitting_and_absolute_times():
    r = reference_emissions("fock", 1, 400_000)
    s = detect(r, DetectionConfig(eta_t=1.0, splitting=(0.1, 0.2, 0.3, 0.4), jitter_sigma=0.0, offset=0.0))
    frac = np.bincount(s.channels, minlength=5)[1:] / 400_000
    assert frac == pytest.approx([0.1, 0.2, 0.3, 0.4], abs=5 * np.sqrt(0.25 / 400_000))
    det = s.times[s.detector_mask()]
    expected = np.sort(np.arange(400_000) * 12_500 + np.round(r.times).astype(np.int64))
    assert np.abs(np.sort(det) - expected).max() <= 1


def test_background_uniform():
    r = reference_emissions("fock", 0, 100_000)
    s = detect(r, DetectionConfig(background_rate=1e6))
    det = s.times[s.detector_mask()]
    expected = 1e6 * 100_000 * 12_500e-12
    assert abs(det.size - expected) <= 5 * np.sqrt(expected)
    phase = det % 12_500
    assert stats.kstest(phase / 12_500, "uniform").pvalue > 0.01


def test_fock_lossless_one_tag_per_pulse():
    s = simulate_reference("fock", 1, 10_000, DetectionConfig(eta_t=1.0), seed=9)
    clock = s.channel_times(CLOCK)
    det = s.times[s.detector_mask()]
    assert det.size == 10_000
    assert np.all(np.bincount(np.searchsorted(clock, det, side="right") - 1) == 1)


def test_thermal_counts_match_geometric_oracle():
    r = reference_emissions("thermal", 0.3, 400_000, seed=10)
    q = 0.3 / 1.3
    k = np.arange(6)
    observed = np.bincount(np.minimum(r.counts, 5), minlength=6)
    expected = np.append((1 - q) * q ** k[:5], q ** 5) * r.counts.size
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_coherent_counts_poisson():
    r = reference_emissions("coherent", 0.7, 400_000, seed=11)
    observed = np.bincount(np.minimum(r.counts, 5), minlength=6)
    pmf = stats.poisson.pmf(np.arange(5), 0.7)
    expected = np.append(pmf, 1 - pmf.sum()) * r.counts.size
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_deterministic_regardless_of_threads():
    cfg = EmitterConfig(pulse_area=2 * np.pi, n_pulses=200_000, seed=12)
    n0 = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        r1, s1 = simulate(cfg, DetectionConfig(background_rate=1e5))
        numba.set_num_threads(n0)
        r2, s2 = simulate(cfg, DetectionConfig(background_rate=1e5))
    finally:
        numba.set_num_threads(n0)
    assert np.array_equal(r1.times, r2.times) and s1 == s2
    _, s3 = simulate(EmitterConfig(pulse_area=2 * np.pi, n_pulses=200_000, seed=13), DetectionConfig())
    assert s3 != s1


def test_source_g2_matches_correlator(two_pi_run):
    records, stream = two_pi_run
    c = records.counts.astype(float)
    blocks = np.array_split(c, 50)
    g_blocks = [np.mean(b * (b - 1)) / np.mean(b) ** 2 for b in blocks]
    g_true = np.mean(c * (c - 1)) / c.mean() ** 2
    s_true = np.std(g_blocks, ddof=1) / np.sqrt(len(blocks))
    est = g_zero(build_histogram(stream, 2, 100, 10 * 12_500, (1, 2)))
    assert est.value > 1
    assert abs(est.value - g_true) <= 3 * np.hypot(est.sigma, s_true)


@pytest.mark.parametrize("kwargs", [
    dict(pulse_area=-1.0), dict(pulse_duration=0.0), dict(pulse_duration=2000.0),
    dict(pulse_shape="sech"), dict(lifetime=0.0), dict(n_pulses=-1),
])
def test_emitter_validation(kwargs):
    with pytest.raises(ValidationError):
        EmitterConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(eta_t=1.5), dict(n_detectors=5), dict(splitting=(0.5, 0.6, 0.0, 0.0)),
    dict(splitting=(0.5, 0.5)), dict(jitter_sigma=-1.0),
])
def test_detection_validation(kwargs):
    with pytest.raises(ValidationError):
        DetectionConfig(**kwargs)


def test_reference_validation():
    with pytest.raises(ValidationError):
        reference_emissions("laser", 1, 10)
    with pytest.raises(ValidationError):
        reference_emissions("fock", 1.5, 10)
