"""Reference-chirp timestamping by template matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import InsufficientDataError
from .scene import RecordingSet
from .signal_core import ChirpSpec, SampleBuffer, matched_filter_array, refine_peak, synth_chirp

SCORE_THRESHOLD = 0.5
FLOOR_FACTOR = 10.0
MIN_SNR_DB = 24.5  # quality gate (dB); chirps estimated below it are rejected


@dataclass(frozen=True)
class ChirpArrival:
    mic_index: int
    t_n: float  # seconds, on the mic's own clock
    score: float
    snr_estimate: float  # dB, chirp power over background within the sweep


@dataclass
class MicDetection:
    """Everything found on one microphone.

    ``arrivals`` holds the accepted chirps in time order. ``rejected`` are
    peaks that cleared the score threshold but failed the SNR quality gate.
    """

    mic_index: int
    arrivals: list[ChirpArrival]
    rejected: list[ChirpArrival]
    threshold: float

    @property
    def missing(self) -> bool:
        return not self.arrivals


def detect_in_buffer(buf: SampleBuffer, template: np.ndarray, period: float, mic_index: int = 0,
                     min_snr_db: float = MIN_SNR_DB) -> MicDetection:
    x = buf.samples
    m = template.shape[0]
    scores = matched_filter_array(x, template)
    floor = float(np.median(np.abs(scores)))
    threshold = max(SCORE_THRESHOLD, FLOOR_FACTOR * floor)
    distance = max(1, int(0.5 * period * buf.rate))
    idx, _ = find_peaks(scores, height=threshold, distance=distance)

    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    seg_power = (csum[m:] - csum[:-m]) / m
    background = float(np.median(seg_power))

    accepted, rejected = [], []
    for i in idx:
        pos, height = refine_peak(scores, int(i))
        p_sig = seg_power[i] - background
        if background <= 0:
            snr = np.inf
        elif p_sig <= 0:
            snr = -np.inf
        else:
            snr = 10 * np.log10(p_sig / background)
        arr = ChirpArrival(mic_index, pos / buf.rate, float(min(height, 1.0)), float(snr))
        (accepted if snr >= min_snr_db else rejected).append(arr)
    return MicDetection(mic_index, accepted, rejected, threshold)


def detect_chirps(rec: RecordingSet | list[SampleBuffer], spec: ChirpSpec,
                  min_snr_db: float = MIN_SNR_DB) -> list[MicDetection]:
    """Timestamp every reference chirp on every microphone.

    Scores come from normalised template matching against the synthesised
    sweep; a peak is accepted when it clears ``max(0.5, 10 x median |score|)``
    and its estimated SNR reaches ``min_snr_db``. Arrival times are refined
    by a three-point parabola. Mics where nothing passes are reported with
    ``missing == True`` rather than raising.
    """
    buffers = rec.buffers if isinstance(rec, RecordingSet) else rec
    if not buffers:
        return []
    template = synth_chirp(spec, buffers[0].rate).samples
    return [detect_in_buffer(b, template, spec.period, i, min_snr_db) for i, b in enumerate(buffers)]


def first_consistent_arrivals(detections: list[MicDetection], period: float) -> dict[int, ChirpArrival]:
    """Pick one arrival per mic belonging to the same emission.

    Takes the earliest arrival set whose members all lie within one period of
    each other; mics with no compatible chirp are left out.
    """
    usable = [d for d in detections if not d.missing]
    if not usable:
        return {}
    candidates = sorted(a.t_n for d in usable for a in d.arrivals)
    best: dict[int, ChirpArrival] = {}
    for start in candidates:
        chosen = {}
        for d in usable:
            hits = [a for a in d.arrivals if start - 1e-12 <= a.t_n < start + period]
            if hits:
                chosen[d.mic_index] = hits[0]
        if len(chosen) > len(best):
            best = chosen
        if len(best) == len(usable):
            break
    return best


def detection_mae(arrivals: list[ChirpArrival], period: float, rate: float) -> float:
    """Mean absolute deviation (samples) of chirp spacing from ``period * rate``."""
    if len(arrivals) < 2:
        raise InsufficientDataError("need at least two arrivals to measure spacing")
    t = np.sort([a.t_n for a in arrivals])
    gaps = np.diff(t) * rate
    return float(np.mean(np.abs(gaps - period * rate)))
