import math
import random
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distbeam.coarse_align import PairWindow
from distbeam.errors import ConsistencyError, InvalidInputError
from distbeam.fine_align import (
    CLOSURE_TOL,
    PeakSet,
    Status,
    correlate_pairs,
    extract_peaks,
    resolve,
    spatial_resolution,
)
from distbeam.scene import BandNoiseWave, Echo, MicSpec, Role, Scenario, SourceSpec, simulate
from distbeam.scenarios import chirp_device

RATE = 44100.0
WIDE = BandNoiseWave(80.0, 8000.0)


def _ps(a, b, inside, extra=()):
    peaks = sorted(list(inside) + list(extra), key=lambda p: -p[1])
    return PeakSet(a, b, peaks, sorted(inside, key=lambda p: -p[1]))


def _three_mic_scene(sources, echoes=()):
    srcs = [SourceSpec(p, Role.DESIRED if i == 0 else Role.INTERFERER, WIDE,
                       echoes=tuple(echoes) if i == 0 else ())
            for i, p in enumerate(sources)]
    scn = Scenario(
        mics=(MicSpec((0.0, 0.0)), MicSpec((6.0, 0.0)), MicSpec((0.0, 6.0))),
        sources=tuple(srcs),
        chirp_device=chirp_device((3.0, 3.0), level=0.0),
        c_true=343.0, duration=0.5, noise_rms=0.0, rng_seed=8,
    ).validate()
    return scn, simulate(scn)


def _windows(rec, half_widths, source=0):
    return [PairWindow(a, b, rec.pair_delay(a, b, source), half_widths[(a, b)] / RATE)
            for a, b in combinations(range(rec.n_mics), 2)]


class TestCorrelatePairs:
    def test_single_source_one_dominant_peak(self):
        _, rec = _three_mic_scene([(2.0, 3.0)])
        ps = correlate_pairs(rec, _windows(rec, {p: 40 for p in combinations(range(3), 2)}))
        for s in ps:
            truth = rec.pair_delay(s.mic_a, s.mic_b, 0) * RATE
            assert abs(s.peaks[0][0] - truth) <= 1.0
            assert all(v < 0.5 * s.peaks[0][1] for _, v in s.peaks[1:])

    def test_two_equal_sources_two_dominant_peaks(self):
        # mirror images across the mics' symmetry axis: comparable received power
        _, rec = _three_mic_scene([(2.0, 3.5), (3.5, 2.0)])
        ps = correlate_pairs(rec, _windows(rec, {p: 40 for p in combinations(range(3), 2)}), max_lag=1000)
        for s in ps:
            top = sorted(lag for lag, _ in s.peaks[:2])
            truth = sorted(rec.pair_delay(s.mic_a, s.mic_b, k) * RATE for k in range(2))
            assert np.allclose(top, truth, atol=1.0)

    def test_echo_adds_path_difference_peaks(self):
        _, rec = _three_mic_scene([(2.0, 3.0)], echoes=[Echo(0.004, 0.7)])
        ps = correlate_pairs(rec, _windows(rec, {p: 400 for p in combinations(range(3), 2)}))
        for s in ps:
            oracle = [(ta - tb) * RATE for ta, _ in rec.paths[s.mic_a][0] for tb, _ in rec.paths[s.mic_b][0]]
            found = [lag for lag, _ in s.peaks]
            for o in oracle:
                assert min(abs(f - o) for f in found) <= 1.0

    def test_in_window_subset(self):
        _, rec = _three_mic_scene([(2.0, 3.0), (7.0, 5.0)])
        ws = _windows(rec, {p: 5 for p in combinations(range(3), 2)})
        for w, s in zip(ws, correlate_pairs(rec, ws)):
            lo, hi = w.window
            assert all(lo * RATE <= lag <= hi * RATE for lag, _ in s.in_window)
            assert set(s.in_window) <= set(s.peaks)

    def test_max_lag_too_small(self):
        _, rec = _three_mic_scene([(2.0, 3.0)])
        with pytest.raises(InvalidInputError):
            correlate_pairs(rec, _windows(rec, {p: 40 for p in combinations(range(3), 2)}), max_lag=3)

    def test_extract_peaks_threshold(self):
        lags = np.arange(-50, 51)
        v = np.zeros(101)
        v[[20, 50, 80]] = [1.0, 0.25, 0.15]
        got = [round(lag) for lag, _ in extract_peaks(lags, v)]
        assert got == [-30, 0]


class TestResolve:
    def test_prediction_from_two_sides(self):
        t_ac, t_bc = 3e-3 * RATE, 1e-3 * RATE
        ps = [_ps(0, 2, [(t_ac, 1.0)]), _ps(1, 2, [(t_bc, 1.0)]),
              _ps(0, 1, [(2e-3 * RATE + 0.4, 0.6), (2e-3 * RATE + 25, 0.9)])]
        asg = resolve(ps)
        assert asg.status is Status.RESOLVED
        assert asg.lag(0, 1) == pytest.approx(2e-3 * RATE + 0.4)
        assert asg.anchors == [(0, 2), (1, 2)]

    def test_anchor_resolves_two_ambiguous_pairs(self):
        _, rec = _three_mic_scene([(-4.0, -3.0), (-4.0, -2.5)])
        ws = _windows(rec, {(0, 1): 30, (0, 2): 30, (1, 2): 30})
        ps = correlate_pairs(rec, ws)
        counts = {(s.mic_a, s.mic_b): len(s.in_window) for s in ps}
        assert counts == {(0, 1): 2, (0, 2): 2, (1, 2): 1}
        asg = resolve(ps, ws)
        assert asg.status is Status.RESOLVED and asg.anchors == [(1, 2)]
        for (a, b), lag in asg.lags.items():
            assert lag == pytest.approx(rec.pair_delay(a, b, 0) * RATE, abs=1.0)

    def test_no_anchor_groups_both_sources(self):
        _, rec = _three_mic_scene([(-4.0, -3.0), (-4.0, -2.5)])
        ws = _windows(rec, {p: 60 for p in combinations(range(3), 2)})
        asg = resolve(correlate_pairs(rec, ws), ws)
        assert asg.status is Status.GROUPED_ONLY
        assert len(asg.groups) == 2
        truths = [{p: rec.pair_delay(*p, k) * RATE for p in combinations(range(3), 2)} for k in range(2)]
        for g in asg.groups:
            view = asg.groups.index(g)
            assert all(r <= CLOSURE_TOL for _, r in asg.group(view).closure_residuals())
            assert any(all(abs(g[p] - t[p]) <= 1.0 for p in t) for t in truths)
        matched = {min(range(2), key=lambda k: sum(abs(g[p] - truths[k][p]) for p in g)) for g in asg.groups}
        assert matched == {0, 1}

    def test_contradicting_anchors_raise(self):
        ps = [_ps(0, 1, [(10.0, 1.0)]), _ps(0, 2, [(30.0, 1.0)]), _ps(1, 2, [(5.0, 1.0)])]
        with pytest.raises(ConsistencyError) as err:
            resolve(ps)
        assert err.value.triple == (0, 1, 2)
        assert err.value.residual == pytest.approx(15.0)

    def test_prune_demotes_the_offending_anchor(self):
        # 4 mics, true arrivals r = (0, -10, -30, -50): anchor (1, 2) is wrong
        r = [0.0, -10.0, -30.0, -50.0]
        good = {p: r[p[0]] - r[p[1]] for p in combinations(range(4), 2)}
        ps = [_ps(a, b, [(good[(a, b)], 1.0)]) for a, b in good if (a, b) != (1, 2)]
        ps.append(_ps(1, 2, [(good[(1, 2)] + 12.0, 0.3)]))
        asg = resolve(ps, on_conflict="prune")
        assert asg.demoted == [(1, 2)]
        assert not asg.has(1, 2) and asg.unresolved == [(1, 2)]
        for p in good:
            if p != (1, 2):
                assert asg.lag(*p) == pytest.approx(good[p])

    def test_empty_window_unresolvable(self):
        ps = [_ps(0, 1, [(10.0, 1.0)]), _ps(0, 2, [(30.0, 1.0)]), _ps(1, 2, [], extra=[(70.0, 1.0)])]
        asg = resolve(ps)
        assert asg.unresolvable == [(1, 2)]
        assert not asg.has(1, 2)

    def test_tie_goes_to_higher_value(self):
        ps = [_ps(0, 2, [(20.0, 1.0)]), _ps(1, 2, [(10.0, 1.0)]),
              _ps(0, 1, [(9.0, 0.4), (11.0, 0.8)])]
        assert resolve(ps).lag(0, 1) == pytest.approx(11.0)

    def test_bad_mode(self):
        with pytest.raises(InvalidInputError):
            resolve([], on_conflict="vote")

    def test_reversed_peaksets_equivalent(self):
        ps = [_ps(0, 2, [(20.0, 1.0)]), _ps(1, 2, [(10.0, 1.0)]), _ps(0, 1, [(10.5, 0.4), (40.0, 0.8)])]
        a = resolve(ps)
        b = resolve([p.reversed() for p in ps])
        assert a.lags == b.lags


def _geometric_peaksets(seed, n_mics=6, n_src=4, e=25.0):
    """Ideal peaks from random arrival times; windows of +-e samples around source 0."""
    rng = np.random.default_rng(seed)
    arr = rng.uniform(-300, 300, (n_mics, n_src))
    out, truth = [], {}
    for a, b in combinations(range(n_mics), 2):
        lags = arr[a] - arr[b]
        vals = rng.uniform(0.2, 1.0, n_src)
        center = lags[0] + rng.uniform(-0.5, 0.5) * e
        peaks = sorted(zip(lags.tolist(), vals.tolist()), key=lambda p: -p[1])
        out.append(PeakSet(a, b, peaks, [p for p in peaks if abs(p[0] - center) <= e]))
        truth[(a, b)] = lags[0]
    return out, truth


@given(st.integers(0, 2**31 - 1), st.integers(0, 1000))
def test_order_independence(seed, shuffle_seed):
    ps, _ = _geometric_peaksets(seed)
    try:
        base = resolve(ps, on_conflict="prune")
    except ConsistencyError:
        return
    shuffled = list(ps)
    random.Random(shuffle_seed).shuffle(shuffled)
    again = resolve(shuffled, on_conflict="prune")
    assert again.status == base.status
    assert again.lags == base.lags
    assert again.groups == base.groups or len(again.groups) == len(base.groups)


@given(st.integers(0, 2**31 - 1))
def test_resolved_assignments_close(seed):
    ps, _ = _geometric_peaksets(seed)
    asg = resolve(ps, on_conflict="prune")
    if asg.status is Status.RESOLVED:
        assert all(r <= CLOSURE_TOL + 1e-9 for _, r in asg.closure_residuals())


@given(st.integers(0, 2**31 - 1))
def test_anchor_sufficiency(seed):
    """A single correct anchor plus unambiguous closure resolves every pair."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(-200, 200, 5)
    # decoy offsets 5 samples apart, so no decoy combination closes a triangle
    offsets = rng.permutation(8.0 + 5.0 * np.arange(10)) * rng.choice([-1, 1], 10)
    ps = []
    for k, (a, b) in enumerate(combinations(range(5), 2)):
        true = r[a] - r[b]
        inside = [(true, 1.0)] if (a, b) == (0, 1) else [(true, 1.0), (true + offsets[k], 0.9)]
        ps.append(_ps(a, b, inside))
    asg = resolve(ps)
    assert asg.status is Status.RESOLVED
    for (a, b), lag in asg.lags.items():
        assert lag == pytest.approx(r[a] - r[b])
    assert len(asg.lags) == 10


class TestSpatialResolution:
    def test_examples(self):
        assert spatial_resolution([PairWindow(0, 1, 0.0, 4.7e-3)], 342.5) == pytest.approx(1.61, abs=5e-3)
        assert spatial_resolution([PairWindow(0, 1, 0.0, 0.0)], 342.5) == 0.0
        assert spatial_resolution([PairWindow(0, 1, 0.0, 1e-3), PairWindow(0, 2, 0.0, 0.5e-3)], 340.0) == \
            pytest.approx(0.34)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            spatial_resolution([], 340.0)


def test_lag_sign_convention():
    """Positive lag means the first mic hears the source later."""
    _, rec = _three_mic_scene([(5.5, 0.0)])  # close to mic 1
    ws = _windows(rec, {p: 40 for p in combinations(range(3), 2)})
    asg = resolve(correlate_pairs(rec, ws), ws)
    assert asg.lag(0, 1) > 0
    assert math.isclose(asg.lag(0, 1), -asg.lag(1, 0))
