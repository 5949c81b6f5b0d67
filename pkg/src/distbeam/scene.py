"""Acoustic scene simulator.

A :class:`Scenario` holds the ground-truth world (positions, clock offsets,
speed of sound, echoes, obstacles, noise) together with the error-bearing
geometry that the alignment pipeline is allowed to see. :func:`simulate`
renders one recording per microphone on that microphone's own clock.
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import tomli_w
from scipy.io import wavfile

if sys.version_info >= (3, 11):
    import tomllib as tomli
else:
    import tomli

from .errors import ParseError, ValidationError
from .signal_core import (
    FRACDELAY_TAPS,
    ChirpSpec,
    SampleBuffer,
    delay_array,
    synth_chirp,
)

D_FLOOR = 0.1  # meters; spherical spreading is clamped below this distance
DEFAULT_RATE = 44100.0
DEFAULT_C_MIN = 337.0
DEFAULT_C_MAX = 348.0
DEFAULT_C_TRUE = 343.0


class Role(str, Enum):
    DESIRED = "desired"
    INTERFERER = "interferer"
    REFERENCE = "reference"


@dataclass(frozen=True)
class Echo:
    extra_delay: float
    relative_gain: float


@dataclass(frozen=True)
class ChirpWave:
    """Chirp train: first sweep emitted at global time ``start``."""

    spec: ChirpSpec
    start: float = 0.05
    count: int | None = None


@dataclass(frozen=True)
class BandNoiseWave:
    """Gaussian noise confined to ``[f_low, f_high]`` Hz, unit RMS before level."""

    f_low: float = 100.0
    f_high: float = 6000.0


@dataclass(frozen=True)
class FileWave:
    path: str


Waveform = ChirpWave | BandNoiseWave | FileWave


@dataclass(frozen=True)
class MicSpec:
    true_position: tuple[float, ...]
    measured_position: tuple[float, ...] | None = None
    clock_offset: float = 0.0
    gain: float = 1.0

    @property
    def assumed_position(self) -> tuple[float, ...]:
        return self.true_position if self.measured_position is None else self.measured_position


@dataclass(frozen=True)
class SourceSpec:
    position: tuple[float, ...]
    role: Role
    waveform: Waveform
    level: float = 1.0
    echoes: tuple[Echo, ...] = ()
    measured_position: tuple[float, ...] | None = None

    @property
    def assumed_position(self) -> tuple[float, ...]:
        return self.position if self.measured_position is None else self.measured_position


@dataclass(frozen=True)
class Obstacle:
    source: int
    mic: int
    gain: float


@dataclass(frozen=True)
class MicEcho:
    """Echo tap that only reaches one microphone."""

    source: int
    mic: int
    extra_delay: float
    relative_gain: float


@dataclass(frozen=True)
class Scenario:
    mics: tuple[MicSpec, ...]
    sources: tuple[SourceSpec, ...]
    chirp_device: SourceSpec
    c_true: float = DEFAULT_C_TRUE
    c_assumed_min: float = DEFAULT_C_MIN
    c_assumed_max: float = DEFAULT_C_MAX
    pos_error_bound: float = 0.0
    noise_rms: float = 0.0
    duration: float = 1.0
    rate: float = DEFAULT_RATE
    rng_seed: int = 0
    obstacles: tuple[Obstacle, ...] = ()
    mic_echoes: tuple[MicEcho, ...] = ()
    room: tuple[float, ...] | None = None  # extent of the placement area (m), informational
    base_dir: str | None = field(default=None, compare=False)

    def validate(self) -> Scenario:
        if not self.rate > 0:
            raise ValidationError("rate must be positive")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")
        if self.noise_rms < 0:
            raise ValidationError("noise_rms must be non-negative")
        if self.pos_error_bound < 0:
            raise ValidationError("pos_error_bound must be non-negative")
        if not 0 < self.c_assumed_min <= self.c_true <= self.c_assumed_max:
            raise ValidationError(
                f"c_true={self.c_true} outside [{self.c_assumed_min}, {self.c_assumed_max}]"
            )
        if len(self.mics) < 1:
            raise ValidationError("scenario needs at least one microphone")
        dim = len(self.mics[0].true_position)
        if dim not in (2, 3):
            raise ValidationError("positions must be 2D or 3D")
        tol = self.pos_error_bound + 1e-9
        for i, m in enumerate(self.mics):
            for p in (m.true_position, m.assumed_position):
                if len(p) != dim:
                    raise ValidationError(f"mics[{i}] position dimension mismatch")
            if not m.gain > 0:
                raise ValidationError(f"mics[{i}].gain must be positive")
            if _dist(m.true_position, m.assumed_position) > tol:
                raise ValidationError(f"mics[{i}] measured position error exceeds pos_error_bound")
        if self.chirp_device.role is not Role.REFERENCE:
            raise ValidationError("chirp_device must have role=reference")
        if not isinstance(self.chirp_device.waveform, ChirpWave):
            raise ValidationError("chirp_device waveform must be a chirp")
        self.chirp_device.waveform.spec.validate(self.rate)
        if _dist(self.chirp_device.position, self.chirp_device.assumed_position) > tol:
            raise ValidationError("chirp_device measured position error exceeds pos_error_bound")
        if any(s.role is Role.REFERENCE for s in self.sources):
            raise ValidationError("exactly one reference source (the chirp_device) is allowed")
        if not any(s.role is Role.DESIRED for s in self.sources):
            raise ValidationError("at least one source must have role=desired")
        for j, s in enumerate(self.sources + (self.chirp_device,)):
            if len(s.position) != dim or len(s.assumed_position) != dim:
                raise ValidationError(f"sources[{j}] position dimension mismatch")
            for e in s.echoes:
                _check_echo(e.extra_delay, e.relative_gain, f"sources[{j}].echoes")
        if self.room is not None and (len(self.room) != dim or min(self.room) <= 0):
            raise ValidationError(f"room must list {dim} positive extents")
        for o in self.obstacles:
            self._check_pair(o.source, o.mic, "obstacles")
            if o.gain < 0:
                raise ValidationError("obstacle gain must be non-negative")
        for e in self.mic_echoes:
            self._check_pair(e.source, e.mic, "mic_echoes")
            _check_echo(e.extra_delay, e.relative_gain, "mic_echoes")
        return self

    def _check_pair(self, s: int, m: int, where: str) -> None:
        if not 0 <= s < len(self.sources) or not 0 <= m < len(self.mics):
            raise ValidationError(f"{where}: (source={s}, mic={m}) out of range")

    @property
    def c_nominal(self) -> float:
        return 0.5 * (self.c_assumed_min + self.c_assumed_max)

    @property
    def desired_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.sources) if s.role is Role.DESIRED]

    def assumed_view(self) -> AssumedGeometry:
        """What the alignment pipeline is permitted to know."""
        return AssumedGeometry(
            mic_positions=np.array([m.assumed_position for m in self.mics], dtype=float),
            chirp_position=np.array(self.chirp_device.assumed_position, dtype=float),
            c_min=self.c_assumed_min,
            c_max=self.c_assumed_max,
            e_d=self.pos_error_bound,
            rate=self.rate,
        )

    def with_mics(self, idx) -> Scenario:
        """Sub-scenario keeping only the microphones in ``idx`` (order kept)."""
        idx = list(idx)
        remap = {old: new for new, old in enumerate(idx)}
        return replace(
            self,
            mics=tuple(self.mics[i] for i in idx),
            obstacles=tuple(replace(o, mic=remap[o.mic]) for o in self.obstacles if o.mic in remap),
            mic_echoes=tuple(replace(e, mic=remap[e.mic]) for e in self.mic_echoes if e.mic in remap),
        )


@dataclass(frozen=True)
class AssumedGeometry:
    mic_positions: np.ndarray
    chirp_position: np.ndarray
    c_min: float
    c_max: float
    e_d: float
    rate: float

    @property
    def c_nominal(self) -> float:
        return 0.5 * (self.c_min + self.c_max)


@dataclass(eq=False)
class RecordingSet:
    """Per-microphone recordings plus the simulator's ground truth.

    ``delays[m, s]`` is the direct-path arrival delay of source ``s`` at mic
    ``m`` in seconds on that mic's clock (clock offset included);
    ``attenuation[m, s]`` the matching spreading factor. Index ``s`` runs over
    ``Scenario.sources``; the chirp device is kept in ``chirp_delays``.
    ``components[m, s]`` holds each source's isolated contribution and
    ``noise[m]`` the additive noise, so that output metrics can be computed
    exactly.
    """

    buffers: list[SampleBuffer]
    rate: float
    delays: np.ndarray
    attenuation: np.ndarray
    chirp_delays: np.ndarray
    chirp_attenuation: np.ndarray
    components: np.ndarray | None = None
    chirp_component: np.ndarray | None = None
    noise: np.ndarray | None = None
    paths: list[list[list[tuple[float, float]]]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_mics(self) -> int:
        return len(self.buffers)

    @property
    def n_samples(self) -> int:
        return len(self.buffers[0])

    def data(self) -> np.ndarray:
        return np.stack([b.samples for b in self.buffers])

    def pair_delay(self, a: int, b: int, source: int) -> float:
        """Ground-truth relative delay (arrival at ``a`` minus arrival at ``b``)."""
        return float(self.delays[a, source] - self.delays[b, source])

    def subset(self, idx) -> RecordingSet:
        idx = list(idx)
        pick = lambda arr: None if arr is None else arr[idx]  # noqa: E731
        return RecordingSet(
            buffers=[self.buffers[i] for i in idx],
            rate=self.rate,
            delays=self.delays[idx],
            attenuation=self.attenuation[idx],
            chirp_delays=self.chirp_delays[idx],
            chirp_attenuation=self.chirp_attenuation[idx],
            components=pick(self.components),
            chirp_component=pick(self.chirp_component),
            noise=pick(self.noise),
            paths=[self.paths[i] for i in idx] if self.paths else [],
            warnings=list(self.warnings),
        )


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _check_echo(extra_delay: float, gain: float, where: str) -> None:
    if not extra_delay > 0:
        raise ValidationError(f"{where}: extra_delay must be positive")
    if not 0 < gain <= 1:
        raise ValidationError(f"{where}: relative_gain must lie in (0, 1]")


# ---------------------------------------------------------------------------
# rendering


def _render_waveform(wave: Waveform, level: float, n_total: int, t0: float, rate: float,
                     rng: np.random.Generator, base_dir: str | None) -> np.ndarray:
    """Waveform sampled on global time ``t0 + i / rate`` for ``i < n_total``."""
    out = np.zeros(n_total)
    if isinstance(wave, ChirpWave):
        sweep = synth_chirp(wave.spec, rate).samples
        t_end = t0 + n_total / rate
        k = 0
        while wave.count is None or k < wave.count:
            t_emit = wave.start + k * wave.spec.period
            if t_emit >= t_end:
                break
            i0 = int(round((t_emit - t0) * rate))
            lo, hi = max(i0, 0), min(i0 + sweep.shape[0], n_total)
            if hi > lo:
                out[lo:hi] += sweep[lo - i0:hi - i0]
            k += 1
        return level * out
    if isinstance(wave, BandNoiseWave):
        white = rng.standard_normal(n_total)
        spec = np.fft.rfft(white)
        f = np.fft.rfftfreq(n_total, 1 / rate)
        spec[(f < wave.f_low) | (f > wave.f_high)] = 0
        band = np.fft.irfft(spec, n_total)
        rms = np.sqrt(np.mean(band**2))
        return level * band / rms if rms > 0 else band
    if isinstance(wave, FileWave):
        path = Path(wave.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        fs, data = wavfile.read(path)
        if fs != int(rate):
            raise ValidationError(f"{path}: sample rate {fs} != scenario rate {rate}")
        data = np.asarray(data, dtype=np.float64)
        if data.ndim > 1:
            data = data[:, 0]
        i0 = int(round(-t0 * rate))
        hi = min(i0 + data.shape[0], n_total)
        out[i0:hi] = data[:hi - i0]
        return level * out
    raise ValidationError(f"unknown waveform {wave!r}")


def _paths_for(scn: Scenario, s_idx: int, m_idx: int) -> list[tuple[float, float]]:
    """(extra delay, relative gain) of every path from source to mic, direct first."""
    src = scn.sources[s_idx]
    paths = [(0.0, 1.0)] + [(e.extra_delay, e.relative_gain) for e in src.echoes]
    paths += [(e.extra_delay, e.relative_gain) for e in scn.mic_echoes
              if e.source == s_idx and e.mic == m_idx]
    return paths


def _obstacle_gain(scn: Scenario, s_idx: int, m_idx: int) -> float:
    g = 1.0
    for o in scn.obstacles:
        if o.source == s_idx and o.mic == m_idx:
            g *= o.gain
    return g


def simulate(scn: Scenario, keep_components: bool = True) -> RecordingSet:
    """Render every microphone's recording and the matching ground truth.

    Each source waveform is propagated with delay ``d / c_true`` and spherical
    attenuation ``1 / max(d, D_FLOOR)``, echo taps add delayed scaled copies,
    and the whole mixture is read on the mic's own clock (shifted by its
    ``clock_offset``). White Gaussian noise is drawn per mic from
    ``(rng_seed, mic index)`` so the result is bit-reproducible.
    """
    scn.validate()
    rate = scn.rate
    n = int(round(scn.duration * rate))
    n_m, n_s = len(scn.mics), len(scn.sources)
    emitters = list(scn.sources) + [scn.chirp_device]

    dist = np.array([[_dist(m.true_position, s.position) for s in emitters] for m in scn.mics])
    notes: list[str] = []
    for mi, si in zip(*np.nonzero(dist < D_FLOOR)):
        notes.append(f"source {si} within {D_FLOOR} m of mic {mi}: distance clamped")
    for note in notes:
        warnings.warn(note, stacklevel=2)
    atten = 1.0 / np.maximum(dist, D_FLOOR)
    offsets = np.array([m.clock_offset for m in scn.mics])
    delays = dist / scn.c_true + offsets[:, None]

    all_paths = [[_paths_for(scn, s, m) for s in range(n_s)] + [[(0.0, 1.0)]]
                 for m in range(n_m)]
    extra = max((p[0] for row in all_paths for ps in row for p in ps), default=0.0)
    pad = int(math.ceil((max(np.abs(delays).max(), 0.0) + extra) * rate)) + FRACDELAY_TAPS + 2
    n_ext = n + 2 * pad
    t0 = -pad / rate

    comp = np.zeros((n_m, n_s + 1, n))
    for s_idx, src in enumerate(emitters):
        rng = np.random.default_rng([scn.rng_seed, 1, s_idx])
        wave = _render_waveform(src.waveform, src.level, n_ext, t0, rate, rng, scn.base_dir)
        for m_idx, mic in enumerate(scn.mics):
            g = mic.gain * atten[m_idx, s_idx]
            if s_idx < n_s:
                g *= _obstacle_gain(scn, s_idx, m_idx)
            if g == 0:
                continue
            acc = np.zeros(n_ext)
            for extra_d, rel in all_paths[m_idx][s_idx]:
                acc += rel * delay_array(wave, (delays[m_idx, s_idx] + extra_d) * rate)
            comp[m_idx, s_idx] = g * acc[pad:pad + n]

    noise = np.zeros((n_m, n))
    if scn.noise_rms > 0:
        for m_idx in range(n_m):
            rng = np.random.default_rng([scn.rng_seed, 2, m_idx])
            noise[m_idx] = scn.noise_rms * rng.standard_normal(n)

    mixed = comp.sum(axis=1) + noise
    paths = [[[(delays[m, s] + e, g) for e, g in all_paths[m][s]] for s in range(n_s)]
             for m in range(n_m)]
    return RecordingSet(
        buffers=[SampleBuffer(mixed[m], rate) for m in range(n_m)],
        rate=rate,
        delays=delays[:, :n_s].copy(),
        attenuation=atten[:, :n_s].copy(),
        chirp_delays=delays[:, n_s].copy(),
        chirp_attenuation=atten[:, n_s].copy(),
        components=comp[:, :n_s].copy() if keep_components else None,
        chirp_component=comp[:, n_s].copy() if keep_components else None,
        noise=noise if keep_components else None,
        paths=paths,
        warnings=notes,
    )


# ---------------------------------------------------------------------------
# export


def _sig9(x: float) -> float:
    return float(f"{x:.9g}")


def ground_truth_json(rec: RecordingSet) -> dict:
    n_m = rec.n_mics
    pairs = [(a, b) for a in range(n_m) for b in range(a + 1, n_m)]
    out = {
        "rate": rec.rate,
        "arrival_delays": [[_sig9(v) for v in row] for row in rec.delays.tolist()],
        "chirp_arrival_delays": [_sig9(v) for v in rec.chirp_delays.tolist()],
        "pair_delays": {
            f"source{s}": {f"{a}-{b}": _sig9(rec.pair_delay(a, b, s)) for a, b in pairs}
            for s in range(rec.delays.shape[1])
        },
        "chirp_pair_delays": {
            f"{a}-{b}": _sig9(rec.chirp_delays[a] - rec.chirp_delays[b]) for a, b in pairs
        },
    }
    return out


def write_wav(path: str | Path, buf: SampleBuffer) -> None:
    wavfile.write(str(path), int(round(buf.rate)), buf.samples.astype(np.float32))


def export_recordings(rec: RecordingSet, out_dir: str | Path) -> list[Path]:
    """One 32-bit float WAV per mic plus ``ground_truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, buf in enumerate(rec.buffers):
        p = out / f"mic{i:02d}.wav"
        write_wav(p, buf)
        written.append(p)
    gt = out / "ground_truth.json"
    gt.write_text(json.dumps(ground_truth_json(rec), indent=2, sort_keys=True))
    written.append(gt)
    return written


# ---------------------------------------------------------------------------
# scenario files (TOML)


def _req(table: dict, key: str, where: str):
    if key not in table:
        raise ParseError(f"{where}.{key}" if where else key, "missing required field")
    return table[key]


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(where, f"expected a number, got {value!r}")
    return float(value)


def _pos(value, where: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) not in (2, 3):
        raise ParseError(where, "expected [x, y] or [x, y, z]")
    return tuple(_num(v, f"{where}[{i}]") for i, v in enumerate(value))


def _opt_pos(table: dict, key: str, where: str):
    name = f"{where}.{key}" if where else key
    return _pos(table[key], name) if key in table else None


def _parse_chirp(t: dict, where: str) -> ChirpSpec:
    return ChirpSpec(
        f_start=_num(t.get("f_start", 2000.0), f"{where}.f_start"),
        f_end=_num(t.get("f_end", 20000.0), f"{where}.f_end"),
        duration=_num(t.get("duration", 0.01), f"{where}.duration"),
        period=_num(t.get("period", 1.0), f"{where}.period"),
        amplitude=_num(t.get("amplitude", 1.0), f"{where}.amplitude"),
    )


def _parse_waveform(t, where: str) -> Waveform:
    if not isinstance(t, dict):
        raise ParseError(where, "expected a table")
    kind = _req(t, "kind", where)
    if kind == "chirp":
        count = t.get("count")
        if count is not None and (not isinstance(count, int) or count < 1):
            raise ParseError(f"{where}.count", "expected a positive integer")
        return ChirpWave(_parse_chirp(t, where), _num(t.get("start", 0.05), f"{where}.start"), count)
    if kind == "band_noise":
        return BandNoiseWave(
            _num(t.get("f_low", 100.0), f"{where}.f_low"),
            _num(t.get("f_high", 6000.0), f"{where}.f_high"),
        )
    if kind == "file":
        path = _req(t, "path", where)
        if not isinstance(path, str):
            raise ParseError(f"{where}.path", "expected a string")
        return FileWave(path)
    raise ParseError(f"{where}.kind", f"unknown waveform kind {kind!r}")


def _parse_echoes(items, where: str) -> tuple[Echo, ...]:
    if not isinstance(items, list):
        raise ParseError(where, "expected an array of tables")
    return tuple(
        Echo(_num(_req(e, "extra_delay", f"{where}[{i}]"), f"{where}[{i}].extra_delay"),
             _num(_req(e, "relative_gain", f"{where}[{i}]"), f"{where}[{i}].relative_gain"))
        for i, e in enumerate(items)
    )


def _parse_source(t, where: str, default_role: str | None = None) -> SourceSpec:
    if not isinstance(t, dict):
        raise ParseError(where, "expected a table")
    role_name = t.get("role", default_role)
    if role_name is None:
        raise ParseError(f"{where}.role", "missing required field")
    try:
        role = Role(role_name)
    except ValueError:
        raise ParseError(f"{where}.role", f"unknown role {role_name!r}") from None
    return SourceSpec(
        position=_pos(_req(t, "position", where), f"{where}.position"),
        role=role,
        waveform=_parse_waveform(_req(t, "waveform", where), f"{where}.waveform"),
        level=_num(t.get("level", 1.0), f"{where}.level"),
        echoes=_parse_echoes(t.get("echoes", []), f"{where}.echoes"),
        measured_position=_opt_pos(t, "measured_position", where),
    )


def scenario_from_dict(doc: dict, base_dir: str | None = None) -> Scenario:
    mics_raw = _req(doc, "mics", "")
    if not isinstance(mics_raw, list):
        raise ParseError("mics", "expected an array of tables")
    mics = tuple(
        MicSpec(
            true_position=_pos(_req(m, "true_position", f"mics[{i}]"), f"mics[{i}].true_position"),
            measured_position=_opt_pos(m, "measured_position", f"mics[{i}]"),
            clock_offset=_num(m.get("clock_offset", 0.0), f"mics[{i}].clock_offset"),
            gain=_num(m.get("gain", 1.0), f"mics[{i}].gain"),
        )
        for i, m in enumerate(mics_raw)
    )
    sources_raw = _req(doc, "sources", "")
    if not isinstance(sources_raw, list):
        raise ParseError("sources", "expected an array of tables")
    sources = tuple(_parse_source(s, f"sources[{i}]") for i, s in enumerate(sources_raw))
    chirp = _parse_source(_req(doc, "chirp_device", ""), "chirp_device", default_role="reference")
    seed = doc.get("rng_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ParseError("rng_seed", "expected an integer")
    obstacles = tuple(
        Obstacle(int(_req(o, "source", f"obstacles[{i}]")), int(_req(o, "mic", f"obstacles[{i}]")),
                 _num(_req(o, "gain", f"obstacles[{i}]"), f"obstacles[{i}].gain"))
        for i, o in enumerate(doc.get("obstacles", []))
    )
    mic_echoes = tuple(
        MicEcho(int(_req(e, "source", f"mic_echoes[{i}]")), int(_req(e, "mic", f"mic_echoes[{i}]")),
                _num(_req(e, "extra_delay", f"mic_echoes[{i}]"), f"mic_echoes[{i}].extra_delay"),
                _num(_req(e, "relative_gain", f"mic_echoes[{i}]"), f"mic_echoes[{i}].relative_gain"))
        for i, e in enumerate(doc.get("mic_echoes", []))
    )
    scn = Scenario(
        mics=mics,
        sources=sources,
        chirp_device=chirp,
        c_true=_num(doc.get("c_true", DEFAULT_C_TRUE), "c_true"),
        c_assumed_min=_num(doc.get("c_assumed_min", DEFAULT_C_MIN), "c_assumed_min"),
        c_assumed_max=_num(doc.get("c_assumed_max", DEFAULT_C_MAX), "c_assumed_max"),
        pos_error_bound=_num(doc.get("pos_error_bound", 0.0), "pos_error_bound"),
        noise_rms=_num(doc.get("noise_rms", 0.0), "noise_rms"),
        duration=_num(doc.get("duration", 1.0), "duration"),
        rate=_num(doc.get("rate", DEFAULT_RATE), "rate"),
        rng_seed=seed,
        obstacles=obstacles,
        mic_echoes=mic_echoes,
        room=_opt_pos(doc, "room", ""),
        base_dir=base_dir,
    )
    return scn.validate()


def scenario_from_file(path: str | Path) -> Scenario:
    """Load and validate a TOML scenario file."""
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ParseError("<file>", str(exc)) from exc
    return scenario_from_dict(doc, base_dir=str(path.parent))


def _wave_dict(w: Waveform) -> dict:
    if isinstance(w, ChirpWave):
        d = {"kind": "chirp", "f_start": w.spec.f_start, "f_end": w.spec.f_end,
             "duration": w.spec.duration, "period": w.spec.period,
             "amplitude": w.spec.amplitude, "start": w.start}
        if w.count is not None:
            d["count"] = w.count
        return d
    if isinstance(w, BandNoiseWave):
        return {"kind": "band_noise", "f_low": w.f_low, "f_high": w.f_high}
    return {"kind": "file", "path": w.path}


def _source_dict(s: SourceSpec) -> dict:
    d = {"position": list(s.position), "role": s.role.value, "level": s.level,
         "waveform": _wave_dict(s.waveform)}
    if s.measured_position is not None:
        d["measured_position"] = list(s.measured_position)
    if s.echoes:
        d["echoes"] = [{"extra_delay": e.extra_delay, "relative_gain": e.relative_gain}
                       for e in s.echoes]
    return d


def scenario_to_dict(scn: Scenario) -> dict:
    mics = []
    for m in scn.mics:
        d = {"true_position": list(m.true_position), "clock_offset": m.clock_offset, "gain": m.gain}
        if m.measured_position is not None:
            d["measured_position"] = list(m.measured_position)
        mics.append(d)
    doc = {
        "rate": scn.rate,
        "duration": scn.duration,
        "c_true": scn.c_true,
        "c_assumed_min": scn.c_assumed_min,
        "c_assumed_max": scn.c_assumed_max,
        "pos_error_bound": scn.pos_error_bound,
        "noise_rms": scn.noise_rms,
        "rng_seed": scn.rng_seed,
        "mics": mics,
        "sources": [_source_dict(s) for s in scn.sources],
        "chirp_device": _source_dict(scn.chirp_device),
    }
    if scn.room is not None:
        doc["room"] = list(scn.room)
    if scn.obstacles:
        doc["obstacles"] = [{"source": o.source, "mic": o.mic, "gain": o.gain} for o in scn.obstacles]
    if scn.mic_echoes:
        doc["mic_echoes"] = [{"source": e.source, "mic": e.mic, "extra_delay": e.extra_delay,
                              "relative_gain": e.relative_gain} for e in scn.mic_echoes]
    return doc


def serialize(scn: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(scn))


def save_scenario(scn: Scenario, path: str | Path) -> None:
    Path(path).write_text(serialize(scn), encoding="utf-8")
