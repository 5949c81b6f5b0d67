"""Scenario builders used by the CLI, the tests and the bundled example files.

The 12-microphone room layout only approximates the deployment figure it is
modelled on; exact coordinates were never published.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .scene import (
    BandNoiseWave,
    ChirpWave,
    Echo,
    MicEcho,
    MicSpec,
    Obstacle,
    Role,
    Scenario,
    SourceSpec,
)
from .signal_core import ChirpSpec

ROOM = (10.0, 14.0)

# 12 scattered microphones in a 10 x 14 m room
DEMO_MICS = [
    (0.8, 1.2), (4.6, 0.7), (9.1, 1.5), (1.3, 5.2), (5.4, 4.1), (8.7, 5.8),
    (0.6, 9.4), (4.2, 8.3), (9.3, 9.9), (1.9, 13.2), (5.8, 12.6), (8.9, 13.4),
]
DEMO_DESIRED = (3.0, 10.8)
DEMO_INTERFERER = (7.5, 7.0)
DEMO_CHIRP = (5.0, 7.0)
BASELINE_CENTER = (5.0, 1.6)

SOURCE_BAND = BandNoiseWave(80.0, 1900.0)
REFERENCE_CHIRP = ChirpSpec(2000.0, 20000.0, 0.01, 1.0, 1.0)


def _disk(rng: np.random.Generator, radius: float, dim: int = 2) -> np.ndarray:
    """Uniform point in a disk (or ball) of the given radius."""
    if radius <= 0:
        return np.zeros(dim)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1 / dim)


def _tuple(p) -> tuple[float, ...]:
    return tuple(float(v) for v in p)


def chirp_device(position, measured=None, level: float = 500.0, start: float = 0.05,
                 count: int | None = 1, spec: ChirpSpec = REFERENCE_CHIRP) -> SourceSpec:
    return SourceSpec(_tuple(position), Role.REFERENCE, ChirpWave(spec, start, count), level,
                      measured_position=None if measured is None else _tuple(measured))


def perturbed_mics(positions, rng: np.random.Generator, e_d: float, max_offset: float) -> tuple[MicSpec, ...]:
    mics = []
    for p in positions:
        p = np.asarray(p, dtype=float)
        mics.append(MicSpec(_tuple(p), _tuple(p + _disk(rng, e_d, p.shape[0])),
                            float(rng.uniform(-max_offset, max_offset)), 1.0))
    return tuple(mics)


def demo_scenario(seed: int = 7, e_d: float = 0.2, max_offset: float = 0.25,
                  noise_rms: float = 0.005, duration: float = 1.0) -> Scenario:
    """12 mics, one desired talker, one interferer, one chirp beacon."""
    rng = np.random.default_rng(seed)
    mics = perturbed_mics(DEMO_MICS, rng, e_d, max_offset)
    chirp_meas = np.asarray(DEMO_CHIRP) + _disk(rng, e_d)
    c_true = float(rng.uniform(337.0, 348.0))
    return Scenario(
        mics=mics,
        sources=(
            SourceSpec(DEMO_DESIRED, Role.DESIRED, SOURCE_BAND, 1.0),
            SourceSpec(DEMO_INTERFERER, Role.INTERFERER, SOURCE_BAND, 1.0),
        ),
        chirp_device=chirp_device(DEMO_CHIRP, chirp_meas, start=0.3 + max_offset),
        c_true=c_true,
        pos_error_bound=e_d,
        noise_rms=noise_rms,
        duration=duration,
        rng_seed=seed,
        room=ROOM,
    ).validate()


def baseline_array_scenario(scn: Scenario, n: int = 12, spacing: float = 0.05,
                            center=BASELINE_CENTER) -> Scenario:
    """Same sources, but recorded by a synchronised uniform linear array."""
    center = np.asarray(center, dtype=float)
    xs = (np.arange(n) - (n - 1) / 2) * spacing
    mics = tuple(MicSpec((float(center[0] + x), float(center[1]))) for x in xs)
    return replace(scn, mics=mics, pos_error_bound=0.0, obstacles=(), mic_echoes=(),
                   chirp_device=replace(scn.chirp_device, measured_position=None)).validate()


def steering_angle(center, axis, source) -> float:
    """Angle between the array axis and the direction towards ``source``."""
    v = np.asarray(source, dtype=float) - np.asarray(center, dtype=float)
    return float(math.acos(np.clip(np.dot(v, axis) / np.linalg.norm(v), -1.0, 1.0)))


def random_scenario(rng: np.random.Generator, n_mics: int = 8, room=(20.0, 20.0), e_d: float = 0.2,
                    c_range=(337.0, 348.0), max_offset: float = 0.1, n_interferers: int = 1,
                    noise_rms: float = 0.002, duration: float = 0.6,
                    sources: bool = True, seed: int | None = None) -> Scenario:
    """Random placement honouring the position-error and speed-of-sound bounds."""
    room = np.asarray(room, dtype=float)
    pts = lambda k: [rng.uniform(0, 1, 2) * room for _ in range(k)]  # noqa: E731
    mics = perturbed_mics(pts(n_mics), rng, e_d, max_offset)
    chirp = pts(1)[0]
    srcs = []
    if sources:
        srcs.append(SourceSpec(_tuple(pts(1)[0]), Role.DESIRED, SOURCE_BAND, 1.0))
        for p in pts(n_interferers):
            srcs.append(SourceSpec(_tuple(p), Role.INTERFERER, SOURCE_BAND, 1.0))
    else:
        srcs.append(SourceSpec(_tuple(pts(1)[0]), Role.DESIRED, SOURCE_BAND, 0.0))
    return Scenario(
        mics=mics,
        sources=tuple(srcs),
        chirp_device=chirp_device(chirp, chirp + _disk(rng, e_d), start=max_offset + 0.12),
        c_true=float(rng.uniform(*c_range)),
        c_assumed_min=float(c_range[0]),
        c_assumed_max=float(c_range[1]),
        pos_error_bound=e_d,
        noise_rms=noise_rms,
        duration=duration,
        rng_seed=int(rng.integers(2**31)) if seed is None else seed,
    ).validate()


def ring_scenario(n_mics: int = 12, radius: float = 3.0, seed: int = 3, noise_rms: float = 0.02,
                  max_offset: float = 0.1, e_d: float = 0.1, duration: float = 1.0) -> Scenario:
    """Mics on a circle around the only source: equal signal power, independent noise."""
    rng = np.random.default_rng(seed)
    center = np.array([6.0, 6.0])
    ang = 2 * np.pi * np.arange(n_mics) / n_mics
    pos = [center + radius * np.array([math.cos(a), math.sin(a)]) for a in ang]
    mics = perturbed_mics(pos, rng, e_d, max_offset)
    chirp = center + np.array([1.0, -0.5])
    return Scenario(
        mics=mics,
        sources=(SourceSpec(_tuple(center), Role.DESIRED, SOURCE_BAND, 1.0),),
        chirp_device=chirp_device(chirp, chirp + _disk(rng, e_d), start=max_offset + 0.1),
        c_true=float(rng.uniform(337.0, 348.0)),
        pos_error_bound=e_d,
        noise_rms=noise_rms,
        duration=duration,
        rng_seed=seed,
    ).validate()


def nlos_scenario(transmissivity: float = 1.0, seed: int = 11, nlos_mic: int = 7,
                  echo_delay: float = 0.0015, echo_gain: float = 0.8) -> Scenario:
    """Demo room with an obstacle between the desired source and one mic.

    The obstacle scales every path from the desired source to ``nlos_mic``;
    a reflection reaches only that mic, ``echo_delay`` after the direct path.
    """
    base = demo_scenario(seed)
    return replace(
        base,
        obstacles=(Obstacle(0, nlos_mic, transmissivity),) if transmissivity != 1.0 else (),
        mic_echoes=(MicEcho(0, nlos_mic, echo_delay, echo_gain),) if echo_gain > 0 else (),
    ).validate()


def chirp_grid_scenario(chirp_duration: float, distance: float, *, n_chirps: int = 30,
                        period: float = 0.25, noise_rms: float = 0.01, level: float = 1.0,
                        seed: int = 0) -> Scenario:
    """One mic listening to a periodic beacon at ``distance`` meters."""
    spec = ChirpSpec(2000.0, 20000.0, chirp_duration, period, 1.0)
    return Scenario(
        mics=(MicSpec((0.0, 0.0)),),
        sources=(SourceSpec((50.0, 50.0), Role.DESIRED, SOURCE_BAND, 0.0),),
        chirp_device=chirp_device((distance, 0.0), None, level, start=0.05, count=n_chirps, spec=spec),
        noise_rms=noise_rms,
        duration=0.1 + n_chirps * period,
        rng_seed=seed,
    ).validate()


def chirp_snr_db(scn: Scenario, mic: int = 0) -> float:
    """In-sweep chirp power over noise power at ``mic`` (dB)."""
    from .scene import D_FLOOR
    d = max(float(np.linalg.norm(np.subtract(scn.mics[mic].true_position, scn.chirp_device.position))),
            D_FLOOR)
    amp = scn.chirp_device.level * scn.chirp_device.waveform.spec.amplitude / d
    # Tukey(0.1) sine sweep: mean square = amp^2 / 2 * 0.9375
    p = 0.5 * amp**2 * 0.9375
    return 10 * math.log10(p / scn.noise_rms**2)


def with_echo(scn: Scenario, source: int, echoes) -> Scenario:
    srcs = list(scn.sources)
    srcs[source] = replace(srcs[source], echoes=tuple(Echo(*e) for e in echoes))
    return replace(scn, sources=tuple(srcs))


def interferer_near_mic_scenario(near: int = 8, seed: int = 5, n_mics: int = 12,
                                 interferer_level: float = 0.3, noise_rms: float = 0.002,
                                 e_d: float = 0.1, max_offset: float = 0.1) -> Scenario:
    """Mics clustered around the talker except mic ``near``, which sits far
    away next to a weak interferer.

    Uniformly weighting that mic imports the interferer; its inferred
    desired-signal amplitude falls under the selection threshold.
    """
    rng = np.random.default_rng(seed)
    talker = np.array([5.0, 6.0])
    far = np.array([17.0, 6.0])
    pos = []
    for i in range(n_mics):
        if i == near:
            pos.append(far)
            continue
        ang = 2 * np.pi * i / n_mics + rng.uniform(-0.2, 0.2)
        r = rng.uniform(1.0, 2.5)
        pos.append(talker + r * np.array([math.cos(ang), math.sin(ang)]))
    mics = perturbed_mics(pos, rng, e_d, max_offset)
    chirp = talker + np.array([3.0, 0.5])
    return Scenario(
        mics=mics,
        sources=(
            SourceSpec(_tuple(talker), Role.DESIRED, SOURCE_BAND, 1.0),
            SourceSpec(_tuple(far + np.array([0.5, 0.3])), Role.INTERFERER, SOURCE_BAND,
                       interferer_level),
        ),
        chirp_device=chirp_device(chirp, chirp + _disk(rng, e_d), start=max_offset + 0.1),
        pos_error_bound=e_d,
        noise_rms=noise_rms,
        duration=1.0,
        rng_seed=seed,
        room=(30.0, 12.0),
    ).validate()
