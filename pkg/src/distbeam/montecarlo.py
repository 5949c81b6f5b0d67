"""Geometric Monte-Carlo estimate of how often the desired source is separable.

No audio is rendered. Each trial places sources at random (subject to a
minimum pairwise separation), computes every pair's true relative delays and
the coarse window from perturbed geometry, and hands the resulting idealised
cross-correlation peaks to :func:`~distbeam.fine_align.resolve`. A trial
succeeds when the desired source's lag is recovered, within tolerance, on
pairs connecting every microphone.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import binomtest

from .coarse_align import error_bound, pair_offset_delta
from .errors import ConsistencyError, InvalidInputError, PlacementError
from .fine_align import PeakSet, Status, resolve
from .scene import D_FLOOR


@dataclass(frozen=True)
class MonteCarloConfig:
    """Parameters of the separability experiment.

    Attributes
    ----------
    n_sources : int
        Sources per trial; source 0 is the desired one.
    min_separation : float
        Minimum pairwise source distance (m).
    e_d : float
        Position error bound applied to mics and chirp device (m).
    merge_width : float
        Peaks closer than this (samples) cannot be told apart and merge
        into the larger one.
    lag_tol : float
        Success tolerance on every resolved lag (samples).
    """

    n_sources: int = 8
    min_separation: float = 0.5
    e_d: float = 0.2
    c_min: float = 337.0
    c_max: float = 348.0
    rate: float = 44100.0
    merge_width: float = 1.0
    lag_tol: float = 2.0
    max_attempts: int = 10_000

    def validate(self) -> MonteCarloConfig:
        if self.n_sources < 1:
            raise InvalidInputError("n_sources must be >= 1")
        if self.min_separation < 0 or self.e_d < 0 or self.merge_width < 0:
            raise InvalidInputError("separation, e_d and merge_width must be non-negative")
        if not 0 < self.c_min <= self.c_max:
            raise InvalidInputError("need 0 < c_min <= c_max")
        return self


@dataclass
class TrialOutcome:
    success: bool
    status: str
    n_anchors: int
    n_resolved: int
    wrong: int


def place_sources(rng: np.random.Generator, room, n: int, min_sep: float,
                  max_attempts: int = 10_000) -> np.ndarray:
    """Uniform positions in ``room`` with pairwise distances >= ``min_sep``.

    Raises
    ------
    PlacementError
        If a valid placement is not found within ``max_attempts`` draws.
    """
    room = np.asarray(room, dtype=float)
    pts: list[np.ndarray] = []
    for _ in range(max_attempts):
        p = rng.uniform(0.0, 1.0, room.shape[0]) * room
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
            if len(pts) == n:
                return np.array(pts)
    raise PlacementError(f"could not place {n} sources {min_sep} m apart in a {tuple(room)} room "
                         f"after {max_attempts} attempts")


def _disk(rng: np.random.Generator, radius: float, shape) -> np.ndarray:
    n, dim = shape
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(size=(n, 1)) ** (1 / dim)


def _merge(peaks: list[tuple[float, float]], width: float) -> list[tuple[float, float]]:
    """Collapse peaks closer than ``width`` into the largest of each cluster."""
    peaks = sorted(peaks)
    out: list[tuple[float, float]] = []
    cluster: list[tuple[float, float]] = []
    for p in peaks:
        if cluster and p[0] - cluster[-1][0] >= width:
            out.append(max(cluster, key=lambda q: q[1]))
            cluster = []
        cluster.append(p)
    if cluster:
        out.append(max(cluster, key=lambda q: q[1]))
    return out


def run_trial(mics: np.ndarray, room, rng: np.random.Generator, cfg: MonteCarloConfig) -> TrialOutcome:
    """One random placement pushed through window filtering and :func:`resolve`."""
    mics = np.asarray(mics, dtype=float)
    n_m, dim = mics.shape
    src = place_sources(rng, room, cfg.n_sources, cfg.min_separation, cfg.max_attempts)
    chirp = rng.uniform(0.0, 1.0, dim) * np.asarray(room, dtype=float)
    mic_meas = mics + _disk(rng, cfg.e_d, (n_m, dim))
    chirp_meas = chirp + _disk(rng, cfg.e_d, (1, dim))[0]
    c = float(rng.uniform(cfg.c_min, cfg.c_max))
    c_nom = 0.5 * (cfg.c_min + cfg.c_max)

    d_src = np.linalg.norm(mics[:, None, :] - src[None, :, :], axis=2)  # (mic, source)
    d_chirp = np.linalg.norm(mics - chirp, axis=1)
    amp = 1.0 / np.maximum(d_src, D_FLOOR)
    rate = cfg.rate

    peaksets, truth = [], {}
    for a, b in combinations(range(n_m), 2):
        lags = (d_src[a] - d_src[b]) / c * rate
        vals = amp[a] * amp[b]
        delta = pair_offset_delta(src[0], chirp_meas, mic_meas[a], mic_meas[b], c_nom)
        tau = (d_chirp[a] - d_chirp[b]) / c + delta
        e = error_bound(src[0], chirp_meas, mic_meas[a], mic_meas[b], cfg.e_d, cfg.c_min, cfg.c_max)
        lo, hi = (tau - e) * rate, (tau + e) * rate
        peaks = _merge(list(zip(lags.tolist(), vals.tolist())), cfg.merge_width)
        peaks.sort(key=lambda p: -p[1])
        peaksets.append(PeakSet(a, b, peaks, [p for p in peaks if lo <= p[0] <= hi]))
        truth[(a, b)] = float(lags[0])

    try:
        asg = resolve(peaksets)
    except ConsistencyError:
        return TrialOutcome(False, "inconsistent", 0, 0, 0)
    if asg.status is not Status.RESOLVED:
        return TrialOutcome(False, asg.status.value, 0, 0, 0)
    wrong = sum(abs(lag - truth[p]) > cfg.lag_tol for p, lag in asg.lags.items())
    covered = {m for p in asg.lags for m in p}
    ok = wrong == 0 and len(covered) == n_m
    return TrialOutcome(ok, asg.status.value, len(asg.anchors), len(asg.lags), wrong)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per (master seed, trial index)."""
    return np.random.default_rng([seed, trial])


def binomial_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact (Clopper-Pearson) confidence interval for a success fraction."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def separability(mics, room, cfg: MonteCarloConfig, trials: int, seed: int = 0) -> dict:
    """Success fraction of :func:`run_trial` over ``trials`` seeded placements."""
    cfg.validate()
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    outcomes = [run_trial(mics, room, trial_rng(seed, t), cfg) for t in range(trials)]
    k = sum(o.success for o in outcomes)
    lo, hi = binomial_ci(k, trials)
    return {
        "trials": trials,
        "successes": k,
        "success_rate": k / trials,
        "ci_low": lo,
        "ci_high": hi,
        "grouped_only": sum(o.status == "grouped_only" for o in outcomes),
        "wrong_lag_trials": sum(o.wrong > 0 for o in outcomes),
        "mean_anchors": float(np.mean([o.n_anchors for o in outcomes])),
        "min_separation": cfg.min_separation,
        "n_sources": cfg.n_sources,
        "e_d": cfg.e_d,
    }

