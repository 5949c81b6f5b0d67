"""Cross-correlation peaks, window filtering, and successive disambiguation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np
from scipy.signal import find_peaks

from .coarse_align import PairWindow
from .errors import ConsistencyError, InvalidInputError
from .scene import RecordingSet
from .signal_core import refine_peak, xcorr_array

log = logging.getLogger(__name__)

PEAK_REL_THRESHOLD = 0.2
PEAK_FLOOR_FACTOR = 5.0
CLOSURE_TOL = 2.0  # samples
MAX_GROUPS = 64

Pair = tuple[int, int]


@dataclass
class PeakSet:
    """Local maxima of one pair's cross-correlation, lags in samples.

    ``peaks`` is sorted by descending value; ``in_window`` keeps the subset
    whose lag falls inside the pair's window.
    """

    mic_a: int
    mic_b: int
    peaks: list[tuple[float, float]]
    in_window: list[tuple[float, float]]

    def reversed(self) -> PeakSet:
        flip = lambda ps: [(-lag, v) for lag, v in ps]  # noqa: E731
        return PeakSet(self.mic_b, self.mic_a, flip(self.peaks), flip(self.in_window))


class Status(str, Enum):
    RESOLVED = "resolved"
    GROUPED_ONLY = "grouped_only"


@dataclass
class DelayAssignment:
    """Resolved desired-source lag per pair (samples, ``arrival_a - arrival_b``).

    Keys of ``lags`` and ``values`` are ``(a, b)`` with ``a < b``. When no
    anchor pair exists ``status`` is ``GROUPED_ONLY`` and ``groups`` holds one
    triangle-consistent lag table per hypothesised source.
    """

    status: Status
    lags: dict[Pair, float] = field(default_factory=dict)
    values: dict[Pair, float] = field(default_factory=dict)
    groups: list[dict[Pair, float]] = field(default_factory=list)
    group_values: list[dict[Pair, float]] = field(default_factory=list)
    anchors: list[Pair] = field(default_factory=list)
    unresolvable: list[Pair] = field(default_factory=list)
    unresolved: list[Pair] = field(default_factory=list)
    demoted: list[Pair] = field(default_factory=list)

    def lag(self, a: int, b: int) -> float:
        return self.lags[(a, b)] if a < b else -self.lags[(b, a)]

    def has(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.lags

    def group(self, k: int) -> DelayAssignment:
        """A Resolved view of hypothesis ``k`` of a grouped assignment."""
        return DelayAssignment(Status.RESOLVED, dict(self.groups[k]), dict(self.group_values[k]))

    def closure_residuals(self) -> list[tuple[tuple[int, int, int], float]]:
        mics = sorted({m for p in self.lags for m in p})
        out = []
        for a, b, c in combinations(mics, 3):
            if self.has(a, b) and self.has(a, c) and self.has(b, c):
                out.append(((a, b, c), abs(self.lag(a, b) - (self.lag(a, c) - self.lag(b, c)))))
        return out


def default_max_lag(windows: list[PairWindow], rate: float, margin: int = 8) -> int:
    reach = max(abs(w.tau_hat) + w.e_delta for w in windows)
    return int(math.ceil(reach * rate)) + margin


def extract_peaks(lags: np.ndarray, values: np.ndarray) -> list[tuple[float, float]]:
    """Refined local maxima passing both the relative and the noise-floor test."""
    vmax = float(values.max())
    if vmax <= 0:
        return []
    floor = float(np.median(np.abs(values)))
    height = max(PEAK_REL_THRESHOLD * vmax, PEAK_FLOOR_FACTOR * floor)
    idx, _ = find_peaks(values, height=height)
    peaks = []
    for i in idx:
        pos, h = refine_peak(values, int(i))
        peaks.append((float(lags[0] + pos), h))
    peaks.sort(key=lambda p: -p[1])
    return peaks


def correlate_pairs(rec: RecordingSet, windows: list[PairWindow], max_lag: int | None = None,
                    data: np.ndarray | None = None) -> list[PeakSet]:
    """Cross-correlate every windowed pair and collect its peaks.

    ``data`` may override the recordings (e.g. with reference chirps blanked).
    """
    if not windows:
        return []
    rate = rec.rate
    if data is None:
        data = rec.data()
    n = data.shape[1]
    if max_lag is None:
        max_lag = default_max_lag(windows, rate)
    max_lag = min(max_lag, n - 1)
    need = max(abs(w.tau_hat) + w.e_delta for w in windows) * rate
    if max_lag < need:
        raise InvalidInputError(f"max_lag={max_lag} cannot reach windows up to {need:.1f} samples")
    out = []
    for w in windows:
        lags, values = xcorr_array(data[w.mic_a], data[w.mic_b], max_lag)
        peaks = extract_peaks(lags, values)
        lo, hi = w.window
        inside = [p for p in peaks if lo * rate <= p[0] <= hi * rate]
        out.append(PeakSet(w.mic_a, w.mic_b, peaks, inside))
    return out


def _canonical(peaksets: list[PeakSet]) -> dict[Pair, list[tuple[float, float]]]:
    table = {}
    for ps in peaksets:
        if ps.mic_a < ps.mic_b:
            table[(ps.mic_a, ps.mic_b)] = list(ps.in_window)
        else:
            table[(ps.mic_b, ps.mic_a)] = [(-lag, v) for lag, v in ps.in_window]
    return table


def _nearest(cands: list[tuple[float, float]], target: float, tol: float):
    """Candidate nearest ``target`` within ``tol``; ties go to the larger value."""
    best, best_key = None, None
    for lag, v in cands:
        d = abs(lag - target)
        if d > tol:
            continue
        key = (round(d, 9), -v)
        if best_key is not None and key[0] == best_key[0]:
            log.info("tie between in-window peaks at %.3f and %.3f", best[0], lag)
        if best_key is None or key < best_key:
            best, best_key = (lag, v), key
    return best


def resolve(peaksets: list[PeakSet], windows: list[PairWindow] | None = None,
            closure_tol: float = CLOSURE_TOL, on_conflict: str = "raise") -> DelayAssignment:
    """Pick the desired source's peak on every pair.

    Pairs whose window holds exactly one peak are anchors. Unresolved pairs
    are then filled in rounds: a pair closing a triangle with two resolved
    pairs takes the in-window peak nearest the predicted lag, provided every
    such prediction points at the same peak; failing that, a resolved pair
    lets the two other sides of its triangle be chosen jointly when exactly
    one peak combination closes. Each round only reads the state from before
    the round, so the result does not depend on pair order. Pairs still
    breaking closure at the end are dropped, most violations first, so the
    returned lags close on every triple. Without any anchor the in-window
    peaks are grouped into triangle-consistent hypotheses instead.

    ``on_conflict="prune"`` drops anchors that break closure (most
    violations first) and lists them in ``demoted`` instead of raising.

    Raises
    ------
    ConsistencyError
        If three anchor pairs violate closure and ``on_conflict="raise"``.
    """
    if on_conflict not in ("raise", "prune"):
        raise InvalidInputError(f"on_conflict must be 'raise' or 'prune', not {on_conflict!r}")
    table = _canonical(peaksets)
    unresolvable = sorted(p for p, c in table.items() if not c)
    cands = {p: c for p, c in table.items() if c}
    anchors = sorted(p for p, c in cands.items() if len(c) == 1)
    if not anchors:
        groups = group_peaks(cands, closure_tol)
        return DelayAssignment(
            Status.GROUPED_ONLY,
            groups=[{p: lag for p, (lag, _) in g.items()} for g in groups],
            group_values=[{p: v for p, (_, v) in g.items()} for g in groups],
            unresolvable=unresolvable,
            unresolved=sorted(cands),
        )

    mics = sorted({m for p in cands for m in p})
    demoted: list[Pair] = []
    while True:
        bad = _anchor_violations({p: cands[p][0] for p in anchors}, mics, closure_tol)
        if not bad:
            break
        if on_conflict == "raise":
            triple, r = bad[0]
            raise ConsistencyError(triple, r)
        counts: dict[Pair, int] = {}
        for (a, b, c), _ in bad:
            for p in ((a, b), (a, c), (b, c)):
                counts[p] = counts.get(p, 0) + 1
        worst = max(sorted(counts), key=lambda p: (counts[p], -cands[p][0][1]))
        anchors.remove(worst)
        demoted.append(worst)
        log.warning("anchor %s dropped: breaks closure on %d triangle(s)", worst, counts[worst])
    if not anchors:
        return DelayAssignment(Status.RESOLVED, anchors=[], unresolvable=unresolvable,
                               unresolved=sorted(cands), demoted=sorted(demoted))
    resolved: dict[Pair, tuple[float, float]] = {p: cands[p][0] for p in anchors}

    def lag(x: int, y: int) -> float | None:
        if x < y:
            hit = resolved.get((x, y))
            return None if hit is None else hit[0]
        hit = resolved.get((y, x))
        return None if hit is None else -hit[0]

    def signed(p: Pair, x: int) -> list[tuple[float, float]]:
        # candidates of pair p oriented with x first
        return cands[p] if p[0] == x else [(-l, v) for l, v in cands[p]]

    def predictions(a: int, b: int) -> list[float]:
        out = []
        for c in mics:
            if c in (a, b):
                continue
            lac, lbc = lag(a, c), lag(b, c)
            if lac is not None and lbc is not None:
                out.append(lac - lbc)
        return out

    while True:
        pending = sorted(p for p in cands if p not in resolved)
        if not pending:
            break
        # predictions from two resolved sides; every one must land on the same peak
        found: dict[Pair, tuple[float, float]] = {}
        for a, b in pending:
            preds = predictions(a, b)
            if not preds:
                continue
            picks = {_nearest(cands[(a, b)], pr, closure_tol) for pr in preds}
            if len(picks) == 1 and None not in picks:
                found[(a, b)] = picks.pop()
        if not found:
            found = {p: hit for p, hit in
                     _joint_round(cands, resolved, pending, mics, lag, signed, closure_tol).items()
                     if all(abs(hit[0] - pr) <= closure_tol for pr in predictions(*p))}
        if not found:
            break
        resolved.update(found)

    # pairs resolved in the same round can still add up past the tolerance
    while True:
        bad = _anchor_violations(resolved, mics, closure_tol)
        if not bad:
            break
        counts = {}
        for (a, b, c), _ in bad:
            for p in ((a, b), (a, c), (b, c)):
                if on_conflict == "prune" or p not in anchors:
                    counts[p] = counts.get(p, 0) + 1
        worst = max(sorted(counts), key=lambda p: (counts[p], p not in anchors, -resolved[p][1]))
        del resolved[worst]
        if worst in anchors:
            anchors.remove(worst)
            demoted.append(worst)
        log.warning("pair %s dropped: breaks closure on %d triangle(s)", worst, counts[worst])

    return DelayAssignment(
        Status.RESOLVED,
        lags={p: lv[0] for p, lv in resolved.items()},
        values={p: lv[1] for p, lv in resolved.items()},
        anchors=anchors,
        unresolvable=unresolvable,
        unresolved=sorted(p for p in cands if p not in resolved),
        demoted=sorted(demoted),
    )


def _anchor_violations(anchor_peaks, mics, tol):
    out = []
    for a, b, c in combinations(mics, 3):
        if (a, b) in anchor_peaks and (a, c) in anchor_peaks and (b, c) in anchor_peaks:
            r = anchor_peaks[(a, b)][0] - (anchor_peaks[(a, c)][0] - anchor_peaks[(b, c)][0])
            if abs(r) > tol:
                out.append(((a, b, c), abs(r)))
    return out


def _joint_round(cands, resolved, pending, mics, lag, signed, tol):
    """Resolve the two open sides of triangles that have one resolved side."""
    proposals: dict[Pair, set] = {}
    pend = set(pending)
    for (b, c) in sorted(resolved):
        tbc = lag(b, c)
        for a in mics:
            if a in (b, c):
                continue
            pab, pac = (min(a, b), max(a, b)), (min(a, c), max(a, c))
            if pab not in pend or pac not in pend:
                continue
            combos = []
            for lab, vab in signed(pab, a):
                for lac, vac in signed(pac, a):
                    if abs(lab - (lac - tbc)) <= tol:
                        combos.append(((lab, vab), (lac, vac)))
            if len(combos) != 1:
                continue
            (lab, vab), (lac, vac) = combos[0]
            proposals.setdefault(pab, set()).add((lab if pab[0] == a else -lab, vab))
            proposals.setdefault(pac, set()).add((lac if pac[0] == a else -lac, vac))
    return {p: next(iter(s)) for p, s in proposals.items() if len(s) == 1}


def group_peaks(cands: dict[Pair, list[tuple[float, float]]], tol: float = CLOSURE_TOL,
                max_groups: int = MAX_GROUPS) -> list[dict[Pair, tuple[float, float]]]:
    """Partition in-window peaks into triangle-consistent hypotheses.

    Each hypothesis assigns every mic an arrival time (samples, relative to
    the first mic) such that every pair's arrival difference matches one of
    that pair's in-window peaks. Returns one ``{pair: (lag, value)}`` table
    per complete hypothesis.
    """
    mics = sorted({m for p in cands for m in p})
    if len(mics) < 2:
        return []

    def peaks_for(x: int, y: int):
        p = (min(x, y), max(x, y))
        c = cands.get(p)
        if c is None:
            return None
        return c if p[0] == x else [(-l, v) for l, v in c]

    hyps: list[dict[int, float]] = [{mics[0]: 0.0}]
    for m in mics[1:]:
        nxt = []
        for h in hyps:
            linked = [s for s in h if peaks_for(s, m) is not None]
            if not linked:
                nxt.append(h)  # no constraint yet; keep hypothesis open
                continue
            s0 = linked[0]
            for lag0, _ in peaks_for(s0, m):
                r_m = h[s0] - lag0  # lag(s0, m) = r_s0 - r_m
                ok = True
                for s in linked[1:]:
                    if _nearest(peaks_for(s, m), h[s] - r_m, tol) is None:
                        ok = False
                        break
                if ok:
                    g = dict(h)
                    g[m] = r_m
                    nxt.append(g)
        hyps = nxt[:max_groups]
        if not hyps:
            return []

    groups = []
    for h in hyps:
        g = {}
        for p in cands:
            a, b = p
            if a not in h or b not in h:
                continue
            hit = _nearest(cands[p], h[a] - h[b], tol)
            if hit is not None:
                g[p] = hit
        if g and all(not _same_group(g, other, tol) for other in groups):
            groups.append(g)
    return groups


def _same_group(g1, g2, tol) -> bool:
    common = set(g1) & set(g2)
    return bool(common) and all(abs(g1[p][0] - g2[p][0]) <= tol for p in common)


def spatial_resolution(windows: list[PairWindow], c_nominal: float) -> float:
    """Source separation below which two sources may share a window (m)."""
    if not windows:
        raise InvalidInputError("no windows")
    return c_nominal * max(w.e_delta for w in windows)
