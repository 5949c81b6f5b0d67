"""Coarse delay estimates and their error bound (the Possible Delay Window).

Sign convention used throughout the package: the relative delay of pair
``(a, b)`` is *arrival at a minus arrival at b*, measured on the two mics'
own clocks. A positive value means ``a`` hears the source later.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .chirp_detect import ChirpArrival
from .errors import InsufficientMicsError
from .scene import AssumedGeometry


@dataclass(frozen=True)
class PairWindow:
    mic_a: int
    mic_b: int
    tau_hat: float  # seconds
    e_delta: float  # seconds
    spatial_resolution: float = 0.0  # meters

    @property
    def window(self) -> tuple[float, float]:
        return (self.tau_hat - self.e_delta, self.tau_hat + self.e_delta)

    def contains(self, tau: float, slack: float = 0.0) -> bool:
        lo, hi = self.window
        return lo - slack <= tau <= hi + slack

    def reversed(self) -> PairWindow:
        return PairWindow(self.mic_b, self.mic_a, -self.tau_hat, self.e_delta,
                          self.spatial_resolution)


def _d(p, q) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)))


def distance_term(target, chirp_pos, mic_a, mic_b) -> float:
    """``d_A^D - d_B^D - d_A^C + d_B^C`` in meters."""
    return _d(mic_a, target) - _d(mic_b, target) - _d(mic_a, chirp_pos) + _d(mic_b, chirp_pos)


def pair_offset_delta(target, chirp_pos, mic_a, mic_b, c_nominal: float) -> float:
    """Delay correction (s) turning the chirp's relative delay into the target's."""
    return distance_term(target, chirp_pos, mic_a, mic_b) / c_nominal


def coarse_tau(t_a: float | ChirpArrival, t_b: float | ChirpArrival, delta: float) -> float:
    """Coarse relative delay of the target: ``(t_a - t_b) + delta``.

    Both timestamps are read on their own mic's clock, so the unknown clock
    offset between the mics is carried by the chirp difference and cancels
    out of the target delay.
    """
    if isinstance(t_a, ChirpArrival):
        t_a = t_a.t_n
    if isinstance(t_b, ChirpArrival):
        t_b = t_b.t_n
    return (t_a - t_b) + delta


def error_bound(target, chirp_pos, mic_a, mic_b, e_d: float, c_min: float, c_max: float) -> float:
    """Worst-case error (s) of :func:`pair_offset_delta`.

    ``4 e_d / c_min`` covers the four error-bearing distances; the second
    term covers the unknown speed of sound within ``[c_min, c_max]``.
    """
    if e_d < 0 or not 0 < c_min <= c_max:
        raise ValueError("need e_d >= 0 and 0 < c_min <= c_max")
    span = abs(distance_term(target, chirp_pos, mic_a, mic_b))
    return 4 * e_d / c_min + span * (1 / c_min - 1 / c_max)


def build_windows(view: AssumedGeometry, target, arrivals: dict[int, ChirpArrival],
                  timing_margin: float = 0.0) -> list[PairWindow]:
    """One :class:`PairWindow` per unordered pair of mics with an accepted chirp.

    ``arrivals`` maps mic index to the chirp arrival chosen for that mic;
    mics absent from it are silently skipped. ``timing_margin`` (s) widens
    every window, e.g. to absorb chirp timestamp error.
    """
    usable = sorted(arrivals)
    if len(usable) < 2:
        raise InsufficientMicsError(f"{len(usable)} mic(s) with chirp arrivals; need 2")
    target = np.asarray(target, dtype=float)
    c_nom = view.c_nominal
    out = []
    for a, b in combinations(usable, 2):
        pa, pb = view.mic_positions[a], view.mic_positions[b]
        delta = pair_offset_delta(target, view.chirp_position, pa, pb, c_nom)
        tau = coarse_tau(arrivals[a], arrivals[b], delta)
        e = error_bound(target, view.chirp_position, pa, pb, view.e_d, view.c_min, view.c_max)
        e += timing_margin
        e = max(e, 1e-12)
        out.append(PairWindow(a, b, tau, e, c_nom * e))
    return out


def window_lookup(windows: list[PairWindow]) -> dict[tuple[int, int], PairWindow]:
    """Both orientations of every window, keyed by ``(mic_a, mic_b)``."""
    table = {}
    for w in windows:
        table[(w.mic_a, w.mic_b)] = w
        table[(w.mic_b, w.mic_a)] = w.reversed()
    return table
