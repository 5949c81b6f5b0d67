"""End-to-end composition of the alignment and enhancement stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamform import AlignmentSolution, EnhancedSignal, delay_and_sum, solve_weights
from .chirp_detect import MIN_SNR_DB, MicDetection, detect_chirps, first_consistent_arrivals
from .coarse_align import PairWindow, build_windows
from .errors import ConsistencyError, DistbeamError, InsufficientMicsError, StageError
from .fine_align import CLOSURE_TOL, DelayAssignment, PeakSet, Status, correlate_pairs, resolve
from .scene import RecordingSet, Scenario, simulate
from .signal_core import FRACDELAY_TAPS, SampleBuffer

BLANK_GUARD = FRACDELAY_TAPS  # samples blanked either side of a detected chirp


@dataclass
class PipelineResult:
    recordings: RecordingSet
    cleaned: RecordingSet
    detections: list[MicDetection]
    windows: list[PairWindow]
    peaksets: list[PeakSet]
    assignment: DelayAssignment
    solution: AlignmentSolution | None = None
    enhanced: EnhancedSignal | None = None
    desired: int | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def missing_mics(self) -> list[int]:
        return [d.mic_index for d in self.detections if d.missing]


def blank_chirps(rec: RecordingSet, detections: list[MicDetection], chirp_len: int,
                 guard: int = BLANK_GUARD) -> RecordingSet:
    """Zero every detected reference chirp (accepted or gated) in all tracks."""
    n = rec.n_samples
    keep = np.ones((rec.n_mics, n))
    for det in detections:
        for arr in det.arrivals + det.rejected:
            i0 = int(np.floor(arr.t_n * rec.rate)) - guard
            keep[det.mic_index, max(i0, 0):max(0, min(n, i0 + chirp_len + 2 * guard))] = 0.0
    data = rec.data() * keep
    return RecordingSet(
        buffers=[SampleBuffer(row, rec.rate) for row in data],
        rate=rec.rate,
        delays=rec.delays,
        attenuation=rec.attenuation,
        chirp_delays=rec.chirp_delays,
        chirp_attenuation=rec.chirp_attenuation,
        components=None if rec.components is None else rec.components * keep[:, None, :],
        chirp_component=None if rec.chirp_component is None else rec.chirp_component * keep,
        noise=None if rec.noise is None else rec.noise * keep,
        paths=rec.paths,
        warnings=list(rec.warnings),
    )


def nearest_source(scn: Scenario, target) -> int:
    target = np.asarray(target, dtype=float)
    d = [np.linalg.norm(np.asarray(s.position) - target) for s in scn.sources]
    return int(np.argmin(d))


def align(scn: Scenario, rec: RecordingSet, target, *, min_snr_db: float = MIN_SNR_DB,
          closure_tol: float = CLOSURE_TOL, timing_margin: float = 0.0,
          on_conflict: str = "prune") -> PipelineResult:
    """Chirp detection through disambiguation, each failure labelled by stage."""
    spec = scn.chirp_device.waveform.spec
    try:
        detections = detect_chirps(rec, spec, min_snr_db=min_snr_db)
        arrivals = first_consistent_arrivals(detections, spec.period)
        if len(arrivals) < 2:
            missing = [d.mic_index for d in detections if d.missing]
            raise InsufficientMicsError(
                f"reference chirp found on {len(arrivals)} mic(s); missing on {missing}")
    except DistbeamError as exc:
        raise StageError("chirp_detect", exc) from exc
    chirp_len = int(round(spec.duration * rec.rate))
    cleaned = blank_chirps(rec, detections, chirp_len)
    try:
        windows = build_windows(scn.assumed_view(), target, arrivals, timing_margin=timing_margin)
    except DistbeamError as exc:
        raise StageError("coarse_align", exc) from exc
    try:
        peaksets = correlate_pairs(cleaned, windows)
        assignment = resolve(peaksets, windows, closure_tol=closure_tol, on_conflict=on_conflict)
    except (DistbeamError, ConsistencyError) as exc:
        raise StageError("fine_align", exc) from exc
    notes = [f"mic {d.mic_index}: reference chirp missing, excluded" for d in detections if d.missing]
    notes += [f"pair {p}: no peak inside its window, excluded" for p in assignment.unresolvable]
    notes += [f"pair {p}: anchor contradicted closure, demoted" for p in assignment.demoted]
    notes += [f"pair {p}: no closure-consistent peak, excluded" for p in assignment.unresolved
              if p not in assignment.demoted]
    return PipelineResult(rec, cleaned, detections, windows, peaksets, assignment, notes=notes)


def run_pipeline(scn: Scenario, target=None, *, rec: RecordingSet | None = None,
                 multipath: bool = True, **kw) -> PipelineResult:
    """Simulate (unless ``rec`` is given), align, and enhance the target.

    ``target`` defaults to the first desired source's true position. The
    output metrics count the source nearest the target as signal.
    """
    if target is None:
        target = scn.sources[scn.desired_indices[0]].position
    if rec is None:
        try:
            rec = simulate(scn)
        except DistbeamError as exc:
            raise StageError("scene_sim", exc) from exc
    res = align(scn, rec, target, **kw)
    res.desired = nearest_source(scn, target)
    if res.assignment.status is not Status.RESOLVED:
        res.notes.append(f"no anchor pair: {len(res.assignment.groups)} source group(s) found")
        return res
    try:
        res.solution = solve_weights(res.assignment, res.peaksets, n_mics=rec.n_mics, rate=rec.rate,
                                     reference=min(m for p in res.assignment.lags for m in p),
                                     multipath=multipath)
        res.enhanced = delay_and_sum(res.cleaned, res.solution, desired=res.desired)
    except DistbeamError as exc:
        raise StageError("beamform", exc) from exc
    res.notes += res.solution.warnings + res.enhanced.warnings
    return res


def fine_errors(res: PipelineResult, source: int | None = None) -> np.ndarray:
    """Per-mic |estimated - true| relative delay to the reference mic (samples)."""
    source = res.desired if source is None else source
    sol = res.solution
    rec = res.recordings
    ref = sol.reference_mic
    err = np.full(rec.n_mics, np.nan)
    for m in range(rec.n_mics):
        if np.isfinite(sol.shifts[m]):
            truth = rec.pair_delay(m, ref, source)
            err[m] = abs(sol.shifts[m] - truth) * rec.rate
    return err


def coarse_errors(res: PipelineResult, reference: int, source: int | None = None) -> np.ndarray:
    """Per-mic |tau_hat - truth| against ``reference`` (samples); NaN if no window."""
    source = res.desired if source is None else source
    rec = res.recordings
    err = np.full(rec.n_mics, np.nan)
    err[reference] = 0.0
    for w in res.windows:
        if reference not in (w.mic_a, w.mic_b):
            continue
        ww = w if w.mic_b == reference else w.reversed()
        truth = rec.pair_delay(ww.mic_a, reference, source)
        err[ww.mic_a] = abs(ww.tau_hat - truth) * rec.rate
    return err
