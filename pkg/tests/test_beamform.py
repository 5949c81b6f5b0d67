import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distbeam.beamform import (
    AlignmentSolution,
    check_uniform_linear,
    delay_and_sum,
    dsb_baseline,
    enhance_all_groups,
    solve_weights,
    ula_steering_delay,
)
from distbeam.coarse_align import PairWindow
from distbeam.errors import InvalidBaselineError, InvalidInputError, NothingToEnhanceError
from distbeam.fine_align import DelayAssignment, Status, correlate_pairs, resolve
from distbeam.pipeline import run_pipeline
from distbeam.scenarios import (
    chirp_device,
    interferer_near_mic_scenario,
    random_scenario,
    ring_scenario,
)
from distbeam.scene import BandNoiseWave, MicSpec, Role, Scenario, SourceSpec, simulate
from distbeam.signal_core import SampleBuffer

RATE = 44100.0
WIDE = BandNoiseWave(80.0, 8000.0)


def _scene(mics, sources, noise=0.0, seed=4, duration=0.5):
    return Scenario(
        mics=tuple(MicSpec(p) for p in mics),
        sources=tuple(SourceSpec(p, Role.DESIRED if i == 0 else Role.INTERFERER, WIDE)
                      for i, p in enumerate(sources)),
        chirp_device=chirp_device((0.0, 9.0), level=0.0),
        c_true=343.0, noise_rms=noise, duration=duration, rng_seed=seed,
    ).validate()


def _truth_windows(rec, half=30, source=0):
    return [PairWindow(a, b, rec.pair_delay(a, b, source), half / RATE)
            for a, b in combinations(range(rec.n_mics), 2)]


def _sol(shifts, weights):
    n = len(shifts)
    return AlignmentSolution(0, np.asarray(shifts, float), np.asarray(weights, float),
                             np.ones(n, bool), [[] for _ in range(n)])


class TestSolveWeights:
    def test_amplitude_ratios_4_2_1(self):
        # source at the origin, mics at 1, 2 and 4 m: amplitudes 1, 1/2, 1/4
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0), (-4.0, 0.0)], [(0.0, 0.0)]))
        ps = correlate_pairs(rec, _truth_windows(rec))
        sol = solve_weights(resolve(ps), ps, rate=RATE)
        w = sol.weights
        assert w[0] / w[2] == pytest.approx(4.0, rel=0.1)
        assert w[1] / w[2] == pytest.approx(2.0, rel=0.1)
        assert w.sum() == pytest.approx(1.0)
        assert sol.shifts[0] == 0.0

    def test_equidistant_mics_uniform(self):
        res = run_pipeline(ring_scenario(8, seed=2))
        np.testing.assert_allclose(res.solution.weights, 1 / 8, rtol=0.1)

    def test_shifts_match_truth(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0), (-4.0, 0.0), (3.0, 3.0)], [(0.5, 0.5)]))
        ps = correlate_pairs(rec, _truth_windows(rec))
        sol = solve_weights(resolve(ps), ps, rate=RATE, reference=1)
        for m in range(4):
            assert sol.shifts[m] * RATE == pytest.approx(rec.pair_delay(m, 1, 0) * RATE, abs=0.5)

    def test_requires_resolved(self):
        with pytest.raises(InvalidInputError):
            solve_weights(DelayAssignment(Status.GROUPED_ONLY), rate=RATE)
        with pytest.raises(NothingToEnhanceError):
            solve_weights(DelayAssignment(Status.RESOLVED), rate=RATE)

    def test_disconnected_graph_uses_largest_component(self):
        asg = DelayAssignment(Status.RESOLVED, lags={(0, 1): 3.0, (2, 3): 1.0, (2, 4): 2.0, (3, 4): 1.0},
                              values={(0, 1): 1.0, (2, 3): 1.0, (2, 4): 1.0, (3, 4): 1.0})
        sol = solve_weights(asg, rate=RATE, reference=0)
        assert sol.reference_mic == 2
        assert not np.isfinite(sol.shifts[0]) and not sol.selected[0]
        assert any("disconnected" in w for w in sol.warnings)

    def test_everything_deselected(self):
        asg = DelayAssignment(Status.RESOLVED, lags={(0, 1): 3.0}, values={(0, 1): 1.0})
        with pytest.raises(NothingToEnhanceError):
            solve_weights(asg, rate=RATE, selection_threshold=1.5)

    def test_mic_next_to_interferer_is_deselected(self):
        scn = interferer_near_mic_scenario(near=8)
        res = run_pipeline(scn)
        sol = res.solution
        assert not sol.selected[8] or sol.weights[8] < 0.1 * sol.weights.max()
        uniform = delay_and_sum(res.cleaned, sol.with_uniform_weights(), desired=res.desired)
        assert res.enhanced.sinr_db >= uniform.sinr_db


class TestDelayAndSum:
    def test_identical_copies(self, rng):
        x = rng.standard_normal(2000)
        rec = simulate(_scene([(1.0, 0.0)] * 3, [(0.0, 0.0)]))
        rec = replace(rec, buffers=[SampleBuffer(x.copy(), RATE) for _ in range(3)],
                      components=None, noise=None)
        out = delay_and_sum(rec, _sol([0, 0, 0], [1 / 3] * 3))
        np.testing.assert_allclose(out.output.samples, x, atol=1e-12)

    def test_combining_gain_independent_noise(self):
        # same desired power everywhere, independent noise, exact alignment
        ang = 2 * np.pi * np.arange(8) / 8
        mics = [(3 * math.cos(a), 3 * math.sin(a)) for a in ang]
        rec = simulate(_scene(mics, [(0.0, 0.0)], noise=0.01, duration=1.0))
        shifts = [rec.pair_delay(m, 0, 0) for m in range(8)]
        out = delay_and_sum(rec, _sol(shifts, [1 / 8] * 8), desired=0)
        assert out.snr_gain_db == pytest.approx(10 * math.log10(8), abs=1.0)

    def test_misalignment_reduces_snr(self):
        res = run_pipeline(ring_scenario(6, seed=4))
        sol = res.solution
        bad = sol.without_extra_paths()
        bad.shifts[3] += 20 / RATE
        worse = delay_and_sum(res.cleaned, bad, desired=res.desired)
        assert worse.snr_db < res.enhanced.snr_db

    def test_alignment_necessity(self):
        res = run_pipeline(ring_scenario(6, seed=4))
        flat = res.solution.without_extra_paths()
        flat.shifts[:] = 0.0
        unaligned = delay_and_sum(res.cleaned, flat, desired=res.desired)
        d = res.desired
        assert unaligned.source_powers[d] < res.enhanced.source_powers[d]

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, k):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0), (-3.0, 0.0)], [(0.2, 0.1), (4.0, 4.0)],
                              noise=0.01, duration=0.2))
        sol = _sol([0.0, 2.1 / RATE, -5.3 / RATE], [0.5, 0.3, 0.2])
        base = delay_and_sum(rec, sol, desired=0)
        scaled = replace(rec, buffers=[SampleBuffer(k * b.samples, RATE) for b in rec.buffers],
                         components=k * rec.components, noise=k * rec.noise)
        out = delay_and_sum(scaled, sol, desired=0)
        np.testing.assert_allclose(out.output.samples, k * base.output.samples, rtol=1e-9, atol=1e-12)
        assert out.sinr_db == pytest.approx(base.sinr_db, abs=1e-6)

    def test_output_length(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0)], [(0.0, 0.0)], duration=0.1))
        out = delay_and_sum(rec, _sol([0.0, 3.0 / RATE], [0.5, 0.5]))
        assert len(out.output.samples) == rec.n_samples

    def test_out_of_range_shift_dropped(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0)], [(0.0, 0.0)], duration=0.1))
        out = delay_and_sum(rec, _sol([0.0, 10.0], [0.5, 0.5]))
        assert out.warnings and "out of range" in out.warnings[0]
        with pytest.raises(NothingToEnhanceError):
            delay_and_sum(rec, _sol([10.0, 10.0], [0.5, 0.5]))


class TestDsbBaseline:
    def test_steering_delay_arithmetic(self):
        assert ula_steering_delay(0.05, math.radians(60), 340.0) == pytest.approx(73.5e-6, abs=5e-8)
        assert ula_steering_delay(0.05, math.pi / 2, 340.0) == pytest.approx(0.0, abs=1e-20)

    def test_broadside_zero_shifts(self):
        rec = simulate(_scene([(x, 0.0) for x in (0.0, 0.05, 0.1)], [(0.05, 8.0)], duration=0.1))
        out = dsb_baseline(rec, math.pi / 2, 0.05, 343.0)
        np.testing.assert_allclose(out.solution.shifts, 0.0, atol=1e-18)

    def test_geometry_checks(self):
        check_uniform_linear(np.array([[0, 0], [0.05, 0], [0.1, 0]]), 0.05)
        with pytest.raises(InvalidBaselineError):
            check_uniform_linear(np.array([[0, 0], [0.05, 0], [0.12, 0]]), 0.05)
        with pytest.raises(InvalidBaselineError):
            check_uniform_linear(np.array([[0, 0], [0.05, 0], [0.05, 0.05]]), 0.05)

    def test_single_mic_identity(self):
        rec = simulate(_scene([(0.0, 0.0)], [(2.0, 1.0)], noise=0.01, duration=0.1))
        out = dsb_baseline(rec, 0.3, 0.05, 343.0)
        np.testing.assert_allclose(out.output.samples, rec.buffers[0].samples, atol=1e-12)

    def test_endfire_alignment(self):
        # far source along +x: mic n hears it n*d/c earlier
        rec = simulate(_scene([(x, 0.0) for x in (0.0, 0.05, 0.1, 0.15)], [(40.0, 0.0)],
                              noise=0.001, duration=0.3))
        steered = dsb_baseline(rec, 0.0, 0.05, 343.0, desired=0)
        wrong = dsb_baseline(rec, math.pi, 0.05, 343.0, desired=0)
        assert steered.source_powers[0] > wrong.source_powers[0]


class TestEnhanceAllGroups:
    def test_two_groups_two_distinct_sources(self):
        mics = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)]
        rec = simulate(_scene(mics, [(-4.0, -3.0), (-4.0, -2.5)]))
        ws = _truth_windows(rec, half=60)
        ps = correlate_pairs(rec, ws)
        asg = resolve(ps, ws)
        assert asg.status is Status.GROUPED_ONLY
        outs = enhance_all_groups(rec, asg, ps)
        assert len(outs) == 2
        assert {o.dominant_source() for o in outs} == {0, 1}

    def test_resolved_is_single_output(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0), (-4.0, 0.0)], [(0.0, 0.0)]))
        ps = correlate_pairs(rec, _truth_windows(rec))
        asg = resolve(ps)
        outs = enhance_all_groups(rec, asg, ps, desired=0)
        direct = delay_and_sum(rec, solve_weights(asg, ps, n_mics=3, rate=RATE), desired=0)
        assert len(outs) == 1
        np.testing.assert_array_equal(outs[0].output.samples, direct.output.samples)

    def test_empty(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0)], [(0.0, 0.0)], duration=0.1))
        with pytest.raises(NothingToEnhanceError):
            enhance_all_groups(rec, DelayAssignment(Status.GROUPED_ONLY))

    def test_all_deselected(self):
        rec = simulate(_scene([(1.0, 0.0), (0.0, 2.0)], [(0.0, 0.0)], duration=0.1))
        asg = DelayAssignment(Status.GROUPED_ONLY, groups=[{(0, 1): 1.0}], group_values=[{(0, 1): 1.0}])
        with pytest.raises(NothingToEnhanceError):
            enhance_all_groups(rec, asg, selection_threshold=1.5)


@pytest.mark.slow
def test_weighted_beats_uniform_on_heterogeneous_snr():
    wins = trials = 0
    for i in range(200):
        scn = random_scenario(np.random.default_rng([21, i]), n_mics=6, n_interferers=0, noise_rms=0.02)
        res = run_pipeline(scn)
        if res.enhanced is None:
            continue
        uniform = delay_and_sum(res.cleaned, res.solution.with_uniform_weights(), desired=res.desired)
        trials += 1
        wins += res.enhanced.snr_db >= uniform.snr_db
    assert trials >= 190
    assert wins / trials >= 0.95
