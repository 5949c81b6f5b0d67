import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distbeam.chirp_detect import (
    ChirpArrival,
    MicDetection,
    detect_chirps,
    detect_in_buffer,
    detection_mae,
    first_consistent_arrivals,
)
from distbeam.errors import InsufficientDataError
from distbeam.experiments import chirp_cell
from distbeam.scenarios import chirp_grid_scenario, chirp_snr_db
from distbeam.scene import simulate
from distbeam.signal_core import ChirpSpec, SampleBuffer, synth_chirp

RATE = 44100.0
SPEC = ChirpSpec(2000.0, 20000.0, 0.01, 1.0, 1.0)


def _distance_for_snr(snr_db):
    # chirp_grid_scenario at noise 0.01, level 1: SNR = 36.71 - 20 log10(d)
    ref = chirp_snr_db(chirp_grid_scenario(0.01, 1.0, n_chirps=2))
    return 10 ** ((ref - snr_db) / 20)


def _buffer_with_chirp(at, n=4410 * 2, gain=1.0, noise=0.0, seed=0):
    x = np.zeros(n)
    c = synth_chirp(SPEC, RATE).samples
    x[at:at + len(c)] = gain * c
    if noise:
        x = x + noise * np.random.default_rng(seed).standard_normal(n)
    return SampleBuffer(x, RATE)


def test_noiseless_single_chirp_timestamp():
    det = detect_chirps([_buffer_with_chirp(1000)], SPEC)[0]
    assert len(det.arrivals) == 1
    assert det.arrivals[0].t_n * RATE == pytest.approx(1000, abs=0.1)
    assert det.arrivals[0].score == pytest.approx(1.0, abs=1e-9)


def test_snr_helper_consistency():
    scn = chirp_grid_scenario(0.01, _distance_for_snr(30.0), n_chirps=2)
    assert chirp_snr_db(scn) == pytest.approx(30.0, abs=1e-9)


def test_mae_at_30db_with_one_second_period():
    d = _distance_for_snr(30.0)
    scn = chirp_grid_scenario(0.01, d, n_chirps=30, period=1.0, seed=11)
    rec = simulate(scn, keep_components=False)
    det = detect_chirps(rec, scn.chirp_device.waveform.spec)[0]
    assert len(det.arrivals) == 30
    assert detection_mae(det.arrivals, 1.0, RATE) < 1.5


def test_mae_at_25db():
    cell = chirp_cell(0.01, _distance_for_snr(25.0), seed=3)
    assert not cell["failed"]
    assert cell["mae_samples"] <= 1.5


def test_quality_gate_fires_at_15db():
    scn = chirp_grid_scenario(0.01, _distance_for_snr(15.0), n_chirps=30, seed=4)
    rec = simulate(scn, keep_components=False)
    det = detect_chirps(rec, scn.chirp_device.waveform.spec)[0]
    assert det.missing
    assert det.rejected, "peaks above the score threshold should be gated, not silently lost"


class TestDetectionMae:
    def test_exact_spacing(self):
        arr = [ChirpArrival(0, k * 0.25, 1.0, 40.0) for k in range(5)]
        assert detection_mae(arr, 0.25, RATE) == pytest.approx(0.0, abs=1e-9)

    def test_alternating_plus_minus_one(self):
        t, times = 0.0, []
        for k in range(7):
            times.append(t)
            t += (0.25 * RATE + (1 if k % 2 == 0 else -1)) / RATE
        arr = [ChirpArrival(0, x, 1.0, 40.0) for x in times]
        assert detection_mae(arr, 0.25, RATE) == pytest.approx(1.0, abs=1e-9)

    def test_needs_two(self):
        with pytest.raises(InsufficientDataError):
            detection_mae([ChirpArrival(0, 0.0, 1.0, 40.0)], 0.25, RATE)


@given(st.integers(0, 3000))
def test_shift_equivariance(k):
    template = synth_chirp(SPEC, RATE).samples
    base = detect_in_buffer(_buffer_with_chirp(1000, noise=0.002, seed=1), template, SPEC.period)
    x = _buffer_with_chirp(1000, noise=0.002, seed=1).samples
    shifted = SampleBuffer(np.concatenate((np.zeros(k), x)), RATE)
    moved = detect_in_buffer(shifted, template, SPEC.period)
    assert (moved.arrivals[0].t_n - base.arrivals[0].t_n) * RATE == pytest.approx(k, abs=0.1)


@given(st.floats(1e-3, 1e3))
def test_gain_invariance(g):
    template = synth_chirp(SPEC, RATE).samples
    a = detect_in_buffer(_buffer_with_chirp(1500, noise=0.002, seed=2), template, SPEC.period)
    b = detect_in_buffer(_buffer_with_chirp(1500, gain=g, noise=0.002 * g, seed=2), template,
                         SPEC.period)
    assert b.arrivals[0].t_n == pytest.approx(a.arrivals[0].t_n, abs=1e-9)
    assert b.arrivals[0].score == pytest.approx(a.arrivals[0].score, abs=1e-9)


@pytest.mark.slow
def test_false_detection_rate_on_pure_noise():
    template = synth_chirp(SPEC, RATE).samples
    false = 0
    for t in range(1000):
        x = np.random.default_rng([99, t]).standard_normal(4410)
        det = detect_in_buffer(SampleBuffer(x, RATE), template, SPEC.period)
        false += bool(det.arrivals)
    assert false / 1000 < 1e-3


def test_missing_mic_is_reported_not_raised():
    dets = detect_chirps([_buffer_with_chirp(1000), SampleBuffer(np.zeros(8820), RATE)], SPEC)
    assert not dets[0].missing and dets[1].missing


def test_first_consistent_arrivals_avoids_period_slip():
    p = 0.25
    dets = [
        MicDetection(0, [ChirpArrival(0, 0.10, 1, 40), ChirpArrival(0, 0.35, 1, 40)], [], 0.5),
        # mic 1 missed its first chirp: its earliest detection belongs to emission 2
        MicDetection(1, [ChirpArrival(1, 0.42, 1, 40)], [], 0.5),
        MicDetection(2, [ChirpArrival(2, 0.18, 1, 40), ChirpArrival(2, 0.43, 1, 40)], [], 0.5),
    ]
    chosen = first_consistent_arrivals(dets, p)
    assert set(chosen) == {0, 1, 2}
    assert max(a.t_n for a in chosen.values()) - min(a.t_n for a in chosen.values()) < p
