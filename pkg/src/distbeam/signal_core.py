"""Elementary signal types and operations.

Everything here is a pure function of its inputs. Correlations are always
evaluated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import (
    IncompatibleBuffersError,
    InvalidInputError,
    InvalidSpecError,
    OutOfRangeError,
)

FRACDELAY_TAPS = 64
CHIRP_TAPER = 0.10  # Tukey alpha: 5% of the sweep tapered at each edge


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    """Uniformly sampled real signal on a local clock (index i is time i / rate)."""

    samples: np.ndarray
    rate: float

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError("samples must be one-dimensional")
        if not self.rate > 0:
            raise InvalidInputError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.rate

    def __eq__(self, other):
        if not isinstance(other, SampleBuffer):
            return NotImplemented
        return self.rate == other.rate and np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash((self.rate, self.samples.tobytes()))


@dataclass(frozen=True)
class ChirpSpec:
    f_start: float
    f_end: float
    duration: float = 0.01
    period: float = 1.0
    amplitude: float = 1.0

    def validate(self, rate: float | None = None) -> None:
        if not self.duration > 0:
            raise InvalidSpecError(f"chirp duration must be positive, got {self.duration}")
        if not self.duration < self.period:
            raise InvalidSpecError("chirp duration must be shorter than its period")
        if not 0 < self.f_start <= self.f_end:
            raise InvalidSpecError(
                f"need 0 < f_start <= f_end, got {self.f_start}, {self.f_end}"
            )
        if rate is not None and not self.f_end < rate / 2:
            raise InvalidSpecError(
                f"f_end={self.f_end} Hz violates Nyquist at rate {rate} Hz"
            )


def _require_same_rate(a: SampleBuffer, b: SampleBuffer) -> None:
    if a.rate != b.rate:
        raise IncompatibleBuffersError(f"rate mismatch: {a.rate} vs {b.rate}")


def synth_chirp(spec: ChirpSpec, rate: float) -> SampleBuffer:
    """One linear up-sweep of ``round(duration * rate)`` samples.

    The instantaneous frequency runs from ``f_start`` to ``f_end`` across the
    sweep; a Tukey taper softens both edges.
    """
    spec.validate(rate)
    n = int(round(spec.duration * rate))
    if n < 2:
        raise InvalidSpecError(f"chirp of {spec.duration} s is shorter than 2 samples")
    t = np.arange(n) / rate
    k = (spec.f_end - spec.f_start) / spec.duration
    phase = 2 * np.pi * (spec.f_start * t + 0.5 * k * t**2)
    taper = sps.windows.tukey(n, alpha=CHIRP_TAPER)
    return SampleBuffer(spec.amplitude * taper * np.sin(phase), rate)


def fractional_delay_taps(frac: float, taps: int = FRACDELAY_TAPS) -> np.ndarray:
    """Hann-windowed sinc interpolator for a delay of ``frac`` samples.

    Tap j applies to input offset ``j - (taps // 2 - 1)``.
    """
    half = taps // 2
    k = np.arange(-(half - 1), half + 1) - frac
    h = np.sinc(k) * (0.5 + 0.5 * np.cos(np.pi * k / half))
    return h / h.sum()


def delay_array(x: np.ndarray, delay_samples: float, taps: int = FRACDELAY_TAPS) -> np.ndarray:
    """Array-level worker for :func:`delay_fractional`; delay in samples."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if abs(delay_samples) >= n:
        raise OutOfRangeError(f"delay of {delay_samples:.3f} samples exceeds buffer of {n}")
    shift = int(np.floor(delay_samples))
    frac = delay_samples - shift
    if frac < 1e-12:
        z = x
    elif frac > 1 - 1e-12:
        shift += 1
        z = x
    else:
        h = fractional_delay_taps(frac, taps)
        lead = taps // 2 - 1
        z = np.convolve(x, h)[lead:lead + n]
    y = np.zeros(n)
    if shift >= 0:
        y[shift:] = z[:n - shift]
    else:
        y[:n + shift] = z[-shift:]
    return y


def delay_fractional(x: SampleBuffer, delay: float) -> SampleBuffer:
    """Shift ``x`` later by ``delay`` seconds, keeping its length.

    Integer-sample delays are pure index shifts; everything else goes through a
    64-tap windowed-sinc interpolator. Vacated samples are zero.
    """
    return SampleBuffer(delay_array(x.samples, delay * x.rate), x.rate)


def scale(x: SampleBuffer, k: float) -> SampleBuffer:
    return SampleBuffer(k * x.samples, x.rate)


def mix(buffers: list[SampleBuffer]) -> SampleBuffer:
    """Sample-wise sum of equal-rate, equal-length buffers."""
    if not buffers:
        raise InvalidInputError("nothing to mix")
    first = buffers[0]
    for b in buffers[1:]:
        _require_same_rate(first, b)
        if len(b) != len(first):
            raise IncompatibleBuffersError("length mismatch in mix")
    return SampleBuffer(np.sum([b.samples for b in buffers], axis=0), first.rate)


def _xcorr_raw(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    full = sps.correlate(a, b, mode="full")
    zero = b.shape[0] - 1
    return full[zero - max_lag:zero + max_lag + 1] / max(a.shape[0], b.shape[0])


def xcorr_array(a: np.ndarray, b: np.ndarray, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Cross-correlation of raw arrays; see :func:`xcorr`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    max_lag = int(max_lag)
    if max_lag < 0 or max_lag >= min(a.shape[0], b.shape[0]):
        raise InvalidInputError(
            f"max_lag={max_lag} must be in [0, {min(a.shape[0], b.shape[0])})"
        )
    lags = np.arange(-max_lag, max_lag + 1)
    # Evaluate in a canonical argument order so that swapping the inputs
    # yields exactly the mirrored sequence.
    key_a = (a.shape[0], a.tobytes())
    key_b = (b.shape[0], b.tobytes())
    if key_a == key_b:
        v = _xcorr_raw(a, a, max_lag)
        return lags, 0.5 * (v + v[::-1])
    if key_a < key_b:
        return lags, _xcorr_raw(a, b, max_lag)
    return lags, _xcorr_raw(b, a, max_lag)[::-1].copy()


def xcorr(a: SampleBuffer, b: SampleBuffer, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Biased cross-correlation estimate ``E[a(t + p) b(t)]``.

    Parameters
    ----------
    a, b : SampleBuffer
        Equal-rate signals.
    max_lag : int
        Lags ``-max_lag .. +max_lag`` (samples) are returned.

    Returns
    -------
    lags, values : np.ndarray
        ``values[i]`` is the correlation at ``lags[i]``, normalised by the
        longer buffer length. A positive lag means ``a`` lags ``b``.
    """
    _require_same_rate(a, b)
    return xcorr_array(a.samples, b.samples, max_lag)


def matched_filter_array(x: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Normalised correlation of ``template`` against every window of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    m = template.shape[0]
    if m == 0 or m > x.shape[0]:
        raise InvalidInputError(
            f"template of {m} samples does not fit signal of {x.shape[0]}"
        )
    num = sps.correlate(x, template, mode="valid")
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    energy = csum[m:] - csum[:-m]
    t_norm = np.sqrt(np.dot(template, template))
    floor = 1e-12 * max(energy.max(initial=0.0), 1e-300)
    ok = energy > floor
    scores = np.zeros_like(num)
    scores[ok] = num[ok] / (np.sqrt(energy[ok]) * t_norm)
    return np.clip(scores, -1.0, 1.0)


def matched_filter(x: SampleBuffer, template: SampleBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Template-matching scores in [-1, 1].

    Returns ``(index, score)`` arrays where ``score[i]`` is the normalised
    correlation of the template with ``x[i : i + len(template)]``.
    """
    _require_same_rate(x, template)
    if len(template) >= len(x):
        raise InvalidInputError("template must be shorter than the signal")
    scores = matched_filter_array(x.samples, template.samples)
    return np.arange(scores.shape[0]), scores


def parabolic_offset(y_left: float, y_mid: float, y_right: float) -> float:
    """Vertex offset in (-0.5, 0.5) of the parabola through three samples."""
    denom = y_left - 2.0 * y_mid + y_right
    if denom >= 0:
        return 0.0
    off = 0.5 * (y_left - y_right) / denom
    return float(np.clip(off, -0.5, 0.5))


def refine_peak(values: np.ndarray, i: int) -> tuple[float, float]:
    """Sub-sample location and height of the local maximum at ``i``."""
    if i <= 0 or i >= values.shape[0] - 1:
        return float(i), float(values[i])
    yl, y0, yr = values[i - 1], values[i], values[i + 1]
    off = parabolic_offset(yl, y0, yr)
    height = y0 - 0.25 * (yl - yr) * off
    return i + off, float(height)


def snr_to_noise_rms(signal_rms: float, snr_db: float) -> float:
    """Noise RMS giving ``snr_db`` against a signal of RMS ``signal_rms``."""
    return signal_rms / 10 ** (snr_db / 20)
