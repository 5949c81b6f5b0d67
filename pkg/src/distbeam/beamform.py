"""Weighted delay-and-sum combination of aligned recordings."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBaselineError, InvalidInputError, NothingToEnhanceError
from .fine_align import CLOSURE_TOL, DelayAssignment, PeakSet, Status
from .scene import RecordingSet
from .signal_core import SampleBuffer, delay_array

log = logging.getLogger(__name__)

SELECTION_THRESHOLD = 0.1
MIN_PATH_SUPPORT = 2  # partner pairs that must agree on a multipath offset


@dataclass
class AlignmentSolution:
    """Per-mic alignment for one target.

    ``shifts[n]`` is mic n's arrival delay relative to the reference mic, in
    seconds; aligning means reading ``x_n(t + shifts[n])``. Weights of the
    selected mics sum to one. ``extra_paths[n]`` lists further
    ``(shift, weight)`` copies of mic n for retained multipath arrivals.
    """

    reference_mic: int
    shifts: np.ndarray
    weights: np.ndarray
    selected: np.ndarray
    extra_paths: list[list[tuple[float, float]]]
    amplitudes: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_mics(self) -> int:
        return self.shifts.shape[0]

    def without_extra_paths(self) -> AlignmentSolution:
        return AlignmentSolution(self.reference_mic, self.shifts.copy(), self.weights.copy(),
                                 self.selected.copy(), [[] for _ in range(self.n_mics)],
                                 self.amplitudes, list(self.warnings))

    def with_uniform_weights(self) -> AlignmentSolution:
        """Same alignment, every aligned mic kept at equal weight, no extras."""
        usable = np.isfinite(self.shifts)
        w = usable / usable.sum()
        return AlignmentSolution(self.reference_mic, self.shifts.copy(), w, usable.copy(),
                                 [[] for _ in range(self.n_mics)], self.amplitudes,
                                 list(self.warnings))


@dataclass
class EnhancedSignal:
    output: SampleBuffer
    source_powers: list[float] | None = None
    noise_power: float | None = None
    sinr_db: float | None = None
    snr_db: float | None = None
    snr_gain_db: float | None = None
    solution: AlignmentSolution | None = None
    warnings: list[str] = field(default_factory=list)

    def dominant_source(self) -> int | None:
        if not self.source_powers:
            return None
        return int(np.argmax(self.source_powers))


def _components(graph_pairs, nodes):
    parent = {m: m for m in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in graph_pairs:
        parent[find(a)] = find(b)
    comps: dict[int, list[int]] = {}
    for m in nodes:
        comps.setdefault(find(m), []).append(m)
    return sorted(comps.values(), key=lambda c: (-len(c), c[0]))


def _extra_paths(n_mics, comp, arrival, assignment, peaksets, tol):
    """Multipath offsets (samples) and amplitude ratios per mic.

    An offset ``e > tol`` for mic n is kept when enough of n's partners
    show an in-window peak at ``lag(n, m) + e``: at least two, and at least
    a third of the partners whose direct-path peak was found. Agreement
    across independent pairs is what ties the extra peak to mic n rather
    than to another source.
    """
    table: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for ps in peaksets:
        table[(ps.mic_a, ps.mic_b)] = ps.in_window
        table[(ps.mic_b, ps.mic_a)] = [(-l, v) for l, v in ps.in_window]
    out: list[list[tuple[float, float]]] = [[] for _ in range(n_mics)]
    for n in comp:
        partners = [m for m in comp if m != n and (n, m) in table]
        if not partners:
            continue
        offsets = []
        confirmed = 0
        for m in partners:
            direct = arrival[n] - arrival[m]
            d_val = max((v for l, v in table[(n, m)] if abs(l - direct) <= tol), default=None)
            if d_val is None or d_val <= 0:
                continue
            confirmed += 1
            for l, v in table[(n, m)]:
                e = l - direct
                if e > tol:
                    offsets.append((e, v / d_val, m))
        offsets.sort()
        used = set()
        for i, (e, _, _) in enumerate(offsets):
            if i in used:
                continue
            cluster = [j for j, (e2, _, _) in enumerate(offsets) if abs(e2 - e) <= tol and j not in used]
            support = {offsets[j][2] for j in cluster}
            if len(support) < max(MIN_PATH_SUPPORT, math.ceil(confirmed / 3)):
                continue
            used.update(cluster)
            e_mean = float(np.mean([offsets[j][0] for j in cluster]))
            ratio = float(np.mean([offsets[j][1] for j in cluster]))
            out[n].append((e_mean, ratio))
    return out


def solve_weights(assignment: DelayAssignment, peaksets: list[PeakSet] | None = None, *,
                  n_mics: int | None = None, rate: float, reference: int = 0,
                  selection_threshold: float = SELECTION_THRESHOLD,
                  multipath: bool = True, closure_tol: float = CLOSURE_TOL) -> AlignmentSolution:
    """Turn pairwise lags and peak heights into per-mic shifts and weights.

    Shifts come from a least-squares fit of per-mic arrivals to every
    resolved lag. Peak heights behave like ``amp_a * amp_b * power``, so
    per-mic amplitudes are fitted in the log domain over the same pair graph;
    weights are those amplitudes normalised to sum to one after dropping mics
    below ``selection_threshold`` of the strongest.
    """
    if assignment.status is not Status.RESOLVED:
        raise InvalidInputError("solve_weights needs a resolved assignment (pick a group first)")
    pairs = sorted(assignment.lags)
    if not pairs:
        raise NothingToEnhanceError("no resolved pairs")
    nodes = sorted({m for p in pairs for m in p})
    if n_mics is None:
        n_mics = max(nodes) + 1
    notes = []
    comps = _components(pairs, nodes)
    comp = next((c for c in comps if reference in c), None)
    if comp is None or len(comp) < len(comps[0]):
        comp = comps[0]
        notes.append(f"reference mic {reference} not in largest aligned group; using mic {comp[0]}")
        reference = comp[0]
    if len(comps) > 1:
        notes.append(f"pair graph disconnected; using mics {comp}")
    for msg in notes:
        log.warning(msg)
    cpairs = [p for p in pairs if p[0] in comp]
    index = {m: i for i, m in enumerate(comp)}

    # arrivals relative to the reference: r_a - r_b = lag_ab, r_ref = 0
    k = len(comp)
    A = np.zeros((len(cpairs) + 1, k))
    y = np.zeros(len(cpairs) + 1)
    for row, (a, b) in enumerate(cpairs):
        A[row, index[a]] = 1
        A[row, index[b]] = -1
        y[row] = assignment.lags[(a, b)]
    A[-1, index[reference]] = 1
    arr_c = np.linalg.lstsq(A, y, rcond=None)[0]
    arr_c -= arr_c[index[reference]]  # pin the reference exactly
    arrival = np.full(n_mics, np.nan)
    for m in comp:
        arrival[m] = arr_c[index[m]]

    # log-amplitudes: x_a + x_b = log(value_ab)
    B = np.zeros((len(cpairs), k))
    z = np.zeros(len(cpairs))
    for row, (a, b) in enumerate(cpairs):
        B[row, index[a]] = 1
        B[row, index[b]] = 1
        z[row] = math.log(max(assignment.values.get((a, b), 1.0), 1e-300))
    logamp = np.linalg.lstsq(B, z, rcond=None)[0]
    amp = np.zeros(n_mics)
    for m in comp:
        amp[m] = math.exp(logamp[index[m]] - logamp.max())

    selected = amp >= selection_threshold * amp.max()
    if not selected.any():
        raise NothingToEnhanceError("every microphone fell below the selection threshold")
    weights = np.where(selected, amp, 0.0)
    weights = weights / weights.sum()

    extras: list[list[tuple[float, float]]] = [[] for _ in range(n_mics)]
    if multipath and peaksets:
        for n, paths in enumerate(_extra_paths(n_mics, comp, arrival, assignment, peaksets, closure_tol)):
            if selected[n]:
                extras[n] = [((arrival[n] + e) / rate, weights[n] * ratio) for e, ratio in paths]

    return AlignmentSolution(reference, arrival / rate, weights, selected, extras, amp, notes)


def _power(x: np.ndarray) -> float:
    return float(np.mean(x * x))


def delay_and_sum(rec: RecordingSet, solution: AlignmentSolution, *,
                  desired: int | None = None, reference_snr_mic: int | None = None) -> EnhancedSignal:
    """Shift every selected mic onto the reference timeline and add.

    Mic n contributes ``weight_n * x_n(t + shift_n)`` plus one weighted copy
    per extra path. When the recording set carries per-source components the
    same linear operation is applied to each of them, giving exact output
    powers; ``desired`` picks the source counted as signal. Interferers and
    noise count against it; the reference chirp does not.
    """
    rate = rec.rate
    x = rec.data()
    n = x.shape[1]
    notes: list[str] = []
    taps: list[tuple[int, float, float]] = []  # (mic, shift in samples, weight)
    for m in range(min(solution.n_mics, x.shape[0])):
        if not solution.selected[m] or solution.weights[m] == 0:
            continue
        copies = [(solution.shifts[m], solution.weights[m])] + list(solution.extra_paths[m])
        for shift, w in copies:
            s = shift * rate
            if not np.isfinite(s) or abs(s) >= n:
                notes.append(f"mic {m}: shift {shift:.6f} s out of range, dropped")
                continue
            taps.append((m, s, w))
    for msg in notes:
        log.warning(msg)
    if not taps:
        raise NothingToEnhanceError("no microphone left to combine")

    def combine(arr: np.ndarray) -> np.ndarray:
        acc = np.zeros(n)
        for m, s, w in taps:
            acc += w * delay_array(arr[m], -s)
        return acc

    out = combine(x)
    result = EnhancedSignal(SampleBuffer(out, rate), solution=solution, warnings=notes)
    if rec.components is not None and rec.noise is not None:
        comps, noise = rec.components, rec.noise
        powers = [_power(combine(comps[:, s])) for s in range(comps.shape[1])]
        p_noise = _power(combine(noise))
        result.source_powers = powers
        result.noise_power = p_noise
        if desired is not None:
            p_d = powers[desired]
            p_i = sum(p for s, p in enumerate(powers) if s != desired)
            result.sinr_db = _db(p_d, p_i + p_noise)
            result.snr_db = _db(p_d, p_noise)
            ref = solution.reference_mic if reference_snr_mic is None else reference_snr_mic
            single = _db(_power(comps[ref, desired]), _power(noise[ref]))
            result.snr_gain_db = result.snr_db - single
    return result


def _db(num: float, den: float) -> float:
    if den <= 0:
        return math.inf
    if num <= 0:
        return -math.inf
    return 10 * math.log10(num / den)


def single_mic_metrics(rec: RecordingSet, mic: int, desired: int) -> tuple[float, float]:
    """(SINR, SNR) in dB of one raw microphone."""
    comps = rec.components[mic]
    p_d = _power(comps[desired])
    p_i = sum(_power(comps[s]) for s in range(comps.shape[0]) if s != desired)
    p_n = _power(rec.noise[mic])
    return _db(p_d, p_i + p_n), _db(p_d, p_n)


def ula_steering_delay(spacing: float, theta: float, c: float) -> float:
    """Far-field inter-mic delay ``d cos(theta) / c`` of a uniform linear array."""
    return spacing * math.cos(theta) / c


def check_uniform_linear(positions: np.ndarray, spacing: float, tol: float = 1e-6) -> np.ndarray:
    """Unit axis of a uniform linear array, or raise if the geometry is not one."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] < 2:
        return np.zeros(positions.shape[1])
    steps = np.diff(positions, axis=0)
    lengths = np.linalg.norm(steps, axis=1)
    if np.any(np.abs(lengths - spacing) > tol * max(1.0, spacing)):
        raise InvalidBaselineError("microphones are not equally spaced at the given spacing")
    axis = steps[0] / lengths[0]
    if np.any(np.linalg.norm(steps / lengths[:, None] - axis, axis=1) > 1e-6):
        raise InvalidBaselineError("microphones are not collinear")
    return axis


def dsb_baseline(rec: RecordingSet, theta: float, spacing: float, c: float,
                 positions: np.ndarray | None = None, desired: int | None = None) -> EnhancedSignal:
    """Classic far-field delay-and-sum on a uniform linear array.

    ``theta`` is the steering angle from the array axis (mic 0 towards mic
    N-1). A plane wave from that direction reaches mic n earlier by
    ``n * d * cos(theta) / c``; those delays are compensated and the mics
    are averaged.
    """
    n_m = rec.n_mics
    if positions is not None:
        if len(positions) != n_m:
            raise InvalidBaselineError("positions do not match the recordings")
        check_uniform_linear(positions, spacing)
    tau = ula_steering_delay(spacing, theta, c)
    shifts = -np.arange(n_m) * tau
    sol = AlignmentSolution(0, shifts, np.full(n_m, 1.0 / n_m), np.ones(n_m, bool),
                            [[] for _ in range(n_m)])
    return delay_and_sum(rec, sol, desired=desired)


def enhance_all_groups(rec: RecordingSet, grouped: DelayAssignment, peaksets: list[PeakSet] | None = None,
                       *, desired: int | None = None,
                       reference: int = 0, **weight_kw) -> list[EnhancedSignal]:
    """One enhanced output per source hypothesis of a grouped assignment."""
    if grouped.status is Status.RESOLVED:
        views = [grouped]
    else:
        views = [grouped.group(k) for k in range(len(grouped.groups))]
    if not views:
        raise NothingToEnhanceError("no source groups to enhance")
    outs = []
    for view in views:
        sol = solve_weights(view, peaksets, n_mics=rec.n_mics, rate=rec.rate,
                            reference=reference, **weight_kw)
        if not sol.selected.any():
            raise NothingToEnhanceError("every microphone of the group was deselected")
        outs.append(delay_and_sum(rec, sol, desired=desired))
    return outs
