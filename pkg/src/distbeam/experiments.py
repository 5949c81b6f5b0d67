"""Experiment drivers behind the command-line interface.

Every driver returns an :class:`ExperimentReport`. Reports are pure
functions of their inputs and seed: wall-clock runtime is kept on the object
but never written, so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .beamform import delay_and_sum, dsb_baseline, enhance_all_groups, single_mic_metrics
from .chirp_detect import detect_chirps
from .errors import InvalidInputError, StageError
from .fine_align import Status
from .montecarlo import MonteCarloConfig, binomial_ci, run_trial, trial_rng
from .pipeline import coarse_errors, fine_errors, nearest_source, run_pipeline
from .scenarios import baseline_array_scenario, chirp_grid_scenario, chirp_snr_db, steering_angle
from .scene import Scenario, export_recordings, scenario_from_file, simulate, write_wav

BUNDLED = ("demo", "ring", "nlos", "interferer_near_mic9")


def _sig9(x):
    """Round reals to 9 significant digits; non-finite values become None."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.9g}")
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _sig9(obj)


@dataclass
class ExperimentReport:
    """Parameters, per-trial records and summary statistics of one experiment.

    Every record carries the seed that reproduces it. ``runtime`` (seconds)
    is informational and excluded from the written files.
    """

    experiment: str
    params: dict
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "params": self.params,
            "summary": self.summary,
            "notes": self.notes,
            "records": self.records,
        })

    def write(self, out_dir: str | Path, fmt: str = "json") -> list[Path]:
        """Write ``<experiment>.json``, or records CSV plus summary JSON."""
        if fmt not in ("json", "csv"):
            raise InvalidInputError(f"unknown format {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = self.to_dict()
        if fmt == "json":
            p = out / f"{self.experiment}.json"
            p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            return [p]
        rec_path = out / f"{self.experiment}_records.csv"
        keys: list[str] = []
        for r in doc["records"]:
            keys += [k for k in r if k not in keys]
        with rec_path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for r in doc["records"]:
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
        doc.pop("records")
        sum_path = out / f"{self.experiment}_summary.json"
        sum_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return [rec_path, sum_path]


def load_scenario(spec: str | Path | Scenario) -> Scenario:
    """A :class:`Scenario`, a TOML path, or the name of a bundled scenario."""
    if isinstance(spec, Scenario):
        return spec
    name = str(spec)
    if name in BUNDLED:
        ref = resources.files("distbeam") / "data" / f"{name}.toml"
        with resources.as_file(ref) as path:
            return scenario_from_file(path)
    return scenario_from_file(name)


def _derived_seed(seed: int, *parts: int) -> int:
    return int(np.random.default_rng([seed, *parts]).integers(2**31))


def _percentiles(values) -> dict:
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "p05": None, "p50": None, "p95": None, "max": None}
    return {"mean": float(v.mean()), "p05": float(np.percentile(v, 5)),
            "p50": float(np.percentile(v, 50)), "p95": float(np.percentile(v, 95)),
            "max": float(v.max())}


# ---------------------------------------------------------------------------
# run


BASELINE_INSET = 1.6  # m from the wall
BASELINE_MICS = 12
BASELINE_SPACING = 0.05  # m


def baseline_center(scn: Scenario, target) -> np.ndarray | None:
    """Where the comparison array sits: inset from the wall farthest from ``target``.

    Only defined for 2-D scenarios that declare their room.
    """
    if scn.room is None or len(scn.room) != 2:
        return None
    room = np.asarray(scn.room, dtype=float)
    target = np.asarray(target, dtype=float)[:2]
    walls = [(abs(target[1]), np.array([room[0] / 2, BASELINE_INSET])),
             (abs(room[1] - target[1]), np.array([room[0] / 2, room[1] - BASELINE_INSET]))]
    return max(walls, key=lambda w: w[0])[1]


def dsb_comparison(scn: Scenario, target) -> float | None:
    """SINR (dB) of a steered uniform linear array recording the same sound field.

    The array replaces the scattered mics (same sources, noise level and
    seed), is synchronised, and is steered at ``target`` with the nominal
    speed of sound. Returns None when no placement is defined.
    """
    center = baseline_center(scn, target)
    if center is None:
        return None
    base = baseline_array_scenario(scn, BASELINE_MICS, BASELINE_SPACING, center)
    rec = simulate(base)
    theta = steering_angle(center, (1.0, 0.0), np.asarray(target, dtype=float)[:2])
    positions = np.array([m.true_position for m in base.mics])
    enh = dsb_baseline(rec, theta, BASELINE_SPACING, scn.c_nominal, positions=positions,
                       desired=nearest_source(scn, target))
    return enh.sinr_db


def cmd_run(scenario, target=None, out_dir: str | Path | None = None,
            seed: int | None = None) -> ExperimentReport:
    """Simulate, align and enhance; optionally write WAVs and metrics."""
    t0 = time.perf_counter()
    scn = load_scenario(scenario)
    if seed is not None:
        scn = replace(scn, rng_seed=int(seed))
    res = run_pipeline(scn, target)
    rec, desired = res.recordings, res.desired
    asg = res.assignment
    records = []
    for m in range(rec.n_mics):
        sinr, snr = single_mic_metrics(res.cleaned, m, desired)
        r = {"mic": m, "seed": scn.rng_seed, "chirp_detected": m not in res.missing_mics,
             "single_sinr_db": sinr, "single_snr_db": snr}
        if res.solution is not None:
            r["weight"] = float(res.solution.weights[m])
            r["shift_samples"] = float(res.solution.shifts[m] * rec.rate)
        records.append(r)
    summary = {
        "status": asg.status.value,
        "n_pairs": len(res.windows),
        "n_anchors": len(asg.anchors),
        "n_resolved": len(asg.lags),
        "n_excluded_pairs": len(asg.unresolvable) + len(asg.demoted),
        "best_single_sinr_db": max(r["single_sinr_db"] for r in records),
        "seed": scn.rng_seed,
    }
    aim = scn.sources[desired].position if target is None else target
    dsb = dsb_comparison(scn, aim)
    if dsb is not None:
        summary["dsb_baseline_sinr_db"] = dsb
    outputs = []
    if res.enhanced is not None:
        fe = fine_errors(res)
        for m, r in enumerate(records):
            r["fine_error_samples"] = float(fe[m])
        summary.update(sinr_db=res.enhanced.sinr_db, snr_db=res.enhanced.snr_db,
                       snr_gain_db=res.enhanced.snr_gain_db,
                       max_fine_error_samples=float(np.nanmax(fe)))
        outputs = [("enhanced.wav", res.enhanced.output)]
    else:
        groups = enhance_all_groups(res.cleaned, asg, res.peaksets, desired=desired)
        summary["n_groups"] = len(groups)
        for k, g in enumerate(groups):
            summary[f"group{k}_sinr_db"] = g.sinr_db
            outputs.append((f"enhanced_group{k}.wav", g.output))
    if out_dir is not None:
        out = Path(out_dir)
        export_recordings(rec, out)
        for name, buf in outputs:
            write_wav(out / name, buf)
        (out / "metrics.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    target = scn.sources[desired].position if target is None else target
    params = {"target": [float(v) for v in target], "seed": scn.rng_seed, "n_mics": rec.n_mics}
    return ExperimentReport("run", params, records, summary, list(res.notes),
                            time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# monte-carlo


def _room_of(scn: Scenario) -> tuple[float, ...]:
    if scn.room is not None:
        return tuple(scn.room)
    hi = np.max([m.true_position for m in scn.mics], axis=0)
    return tuple(float(v) for v in hi)


def _mc_chunk(args):
    mics, room, cfg, seed, idx = args
    return [run_trial(mics, room, trial_rng(seed, t), cfg) for t in idx]


def cmd_monte_carlo_disambiguation(layout, min_separation: float, trials: int, seed: int = 0, *,
                                   n_sources: int = MonteCarloConfig.n_sources,
                                   e_d: float | None = None, jobs: int = 1) -> ExperimentReport:
    """Fraction of random source placements whose desired lags resolve correctly.

    Microphone positions (and the room extent) come from ``layout``; its
    sources are ignored. ``e_d`` defaults to the layout's position error
    bound. Trial ``t`` always uses the stream seeded by ``(seed, t)``, so
    ``jobs`` does not change the result.
    """
    t0 = time.perf_counter()
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    scn = load_scenario(layout)
    cfg = MonteCarloConfig(
        n_sources=n_sources, min_separation=min_separation,
        e_d=scn.pos_error_bound if e_d is None else e_d,
        c_min=scn.c_assumed_min, c_max=scn.c_assumed_max, rate=scn.rate,
    ).validate()
    mics = np.array([m.true_position for m in scn.mics], dtype=float)
    room = _room_of(scn)
    if jobs > 1:
        chunks = [(mics, room, cfg, seed, range(i, trials, jobs)) for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_mc_chunk, chunks))
        outcomes = [None] * trials
        for i, part in enumerate(parts):
            for t, o in zip(range(i, trials, jobs), part):
                outcomes[t] = o
    else:
        outcomes = _mc_chunk((mics, room, cfg, seed, range(trials)))
    records = [{"trial": t, "seed": seed, "success": o.success, "status": o.status,
                "n_anchors": o.n_anchors, "n_resolved": o.n_resolved, "wrong_lags": o.wrong}
               for t, o in enumerate(outcomes)]
    k = sum(o.success for o in outcomes)
    lo, hi = binomial_ci(k, trials)
    summary = {"success_rate": k / trials, "successes": k, "trials": trials,
               "ci95_low": lo, "ci95_high": hi,
               "grouped_only": sum(o.status == Status.GROUPED_ONLY.value for o in outcomes),
               "wrong_lag_trials": sum(o.wrong > 0 for o in outcomes)}
    params = {"min_separation": min_separation, "trials": trials, "seed": seed,
              "n_sources": cfg.n_sources, "e_d": cfg.e_d, "room": list(room),
              "c_min": cfg.c_min, "c_max": cfg.c_max, "merge_width": cfg.merge_width,
              "lag_tol": cfg.lag_tol}
    return ExperimentReport("monte_carlo", params, records, summary, [], time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# align-error


def cmd_alignment_error(scenario, trials: int = 1, seed: int = 0,
                        max_offset: float = 0.25) -> ExperimentReport:
    """Coarse and fine per-mic delay errors against simulator ground truth.

    Each trial re-draws the clock offsets (uniform in ``±max_offset`` s) and
    the simulator seed from ``(seed, trial)``.
    """
    t0 = time.perf_counter()
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    base = load_scenario(scenario)
    records, notes = [], []
    for t in range(trials):
        rng = trial_rng(seed, t)
        mics = tuple(replace(m, clock_offset=float(rng.uniform(-max_offset, max_offset)))
                     for m in base.mics)
        scn = replace(base, mics=mics, rng_seed=_derived_seed(seed, t))
        res = run_pipeline(scn)
        if res.solution is None:
            notes.append(f"trial {t}: no anchor pair, skipped")
            continue
        ref = res.solution.reference_mic
        ce, fe = coarse_errors(res, ref), fine_errors(res)
        half = {m: 0.0 for m in range(res.recordings.n_mics)}
        for w in res.windows:
            if ref in (w.mic_a, w.mic_b):
                half[w.mic_b if w.mic_a == ref else w.mic_a] = w.e_delta * scn.rate
        for m in range(res.recordings.n_mics):
            records.append({
                "trial": t, "seed": seed, "sim_seed": scn.rng_seed, "mic": m, "reference": ref,
                "coarse_error_samples": float(ce[m]), "pdw_half_width_samples": half[m],
                "within_pdw": bool(np.isfinite(ce[m]) and ce[m] <= half[m]),
                "fine_error_samples": float(fe[m]),
            })
        notes += [f"trial {t}: {n}" for n in res.notes]
    coarse = [r["coarse_error_samples"] for r in records if r["mic"] != r["reference"]]
    fine = [r["fine_error_samples"] for r in records if r["mic"] != r["reference"]]
    summary = {
        "coarse": _percentiles(coarse),
        "fine": _percentiles(fine),
        "all_within_pdw": all(r["within_pdw"] for r in records if np.isfinite(r["coarse_error_samples"])),
        "trials_completed": len({r["trial"] for r in records}),
    }
    params = {"trials": trials, "seed": seed, "max_offset": max_offset, "n_mics": len(base.mics)}
    return ExperimentReport("align_error", params, records, summary, notes, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# snr-sweep


def cmd_snr_vs_miccount(scenario, counts, seed: int | None = None) -> ExperimentReport:
    """SNR gain over mic 0 when combining the first N mics, for each N.

    Both the correlation-proportional weights (with mic selection) and
    uniform weights over the same alignment are reported. One recording is
    simulated and every N uses a prefix of its tracks.
    """
    t0 = time.perf_counter()
    scn = load_scenario(scenario)
    if seed is not None:
        scn = replace(scn, rng_seed=int(seed))
    counts = [int(n) for n in counts]
    if not counts or min(counts) < 1 or max(counts) > len(scn.mics):
        raise InvalidInputError(f"counts must lie in [1, {len(scn.mics)}]")
    rec = simulate(scn)
    desired = scn.desired_indices[0]
    sinr0, snr0 = single_mic_metrics(rec, 0, desired)
    records, notes = [], []
    for n in counts:
        r = {"n_mics": n, "seed": scn.rng_seed}
        if n == 1:
            r.update(gain_weighted_db=0.0, gain_uniform_db=0.0, sinr_weighted_db=sinr0,
                     sinr_uniform_db=sinr0, n_selected=1)
            records.append(r)
            continue
        idx = list(range(n))
        res = run_pipeline(scn.with_mics(idx), rec=rec.subset(idx))
        if res.solution is None:
            notes.append(f"N={n}: no anchor pair")
            continue
        weighted = delay_and_sum(res.cleaned, res.solution, desired=desired, reference_snr_mic=0)
        uniform = delay_and_sum(res.cleaned, res.solution.with_uniform_weights(), desired=desired,
                                reference_snr_mic=0)
        r.update(gain_weighted_db=weighted.snr_gain_db, gain_uniform_db=uniform.snr_gain_db,
                 sinr_weighted_db=weighted.sinr_db, sinr_uniform_db=uniform.sinr_db,
                 n_selected=int(res.solution.selected.sum()))
        records.append(r)
        notes += [f"N={n}: {x}" for x in res.notes]
    summary = {"single_mic_snr_db": snr0, "single_mic_sinr_db": sinr0}
    for r in records:
        summary[f"gain_weighted_db_N{r['n_mics']}"] = r["gain_weighted_db"]
        summary[f"gain_uniform_db_N{r['n_mics']}"] = r["gain_uniform_db"]
    params = {"counts": counts, "seed": scn.rng_seed}
    return ExperimentReport("snr_sweep", params, records, summary, notes, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# chirp-grid


def chirp_cell(duration: float, distance: float, seed: int, *, n_chirps: int = 30,
               noise_rms: float = 0.01, period: float = 0.25) -> dict:
    """Detection accuracy of one (chirp duration, distance) cell.

    The cell fails when fewer than 90% of the emitted chirps are accepted.
    MAE compares accepted timestamps with the simulator's true arrivals.
    """
    scn = chirp_grid_scenario(duration, distance, n_chirps=n_chirps, period=period,
                              noise_rms=noise_rms, seed=seed)
    rec = simulate(scn, keep_components=False)
    spec = scn.chirp_device.waveform.spec
    det = detect_chirps(rec, spec)[0]
    start = scn.chirp_device.waveform.start
    truth = start + np.arange(n_chirps) * period + rec.chirp_delays[0]
    t = np.array([a.t_n for a in det.arrivals])
    errs = [float(np.min(np.abs(truth - x))) * scn.rate for x in t]
    matched = sum(e < 0.25 * period * scn.rate for e in errs)
    failed = matched < 0.9 * n_chirps
    mae = float(np.mean([e for e in errs if e < 0.25 * period * scn.rate])) if matched else math.nan
    return {"duration": duration, "distance": distance, "snr_db": chirp_snr_db(scn), "seed": seed,
            "accepted": len(det.arrivals), "rejected": len(det.rejected), "matched": matched,
            "failed": failed, "mae_samples": None if failed else mae}


def cmd_chirp_grid(durations, distances, seed: int = 0, *, n_chirps: int = 30,
                   noise_rms: float = 0.01) -> ExperimentReport:
    """Chirp timestamp MAE (or a failure marker) over duration x distance."""
    t0 = time.perf_counter()
    durations, distances = list(durations), list(distances)
    if not durations or not distances:
        raise InvalidInputError("durations and distances must be non-empty")
    records = []
    for i, dur in enumerate(durations):
        for j, dist in enumerate(distances):
            records.append(chirp_cell(float(dur), float(dist), _derived_seed(seed, i, j),
                                      n_chirps=n_chirps, noise_rms=noise_rms))
    ok = [r for r in records if not r["failed"]]
    summary = {"cells": len(records), "failed_cells": len(records) - len(ok),
               "max_mae_samples": max((r["mae_samples"] for r in ok), default=None)}
    params = {"durations": durations, "distances": distances, "seed": seed, "n_chirps": n_chirps,
              "noise_rms": noise_rms}
    return ExperimentReport("chirp_grid", params, records, summary, [], time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# nlos


def cmd_nlos(scenario, transmissivities=None, seed: int | None = None) -> ExperimentReport:
    """SNR gain of multipath combining over direct-path-only enhancement.

    ``transmissivities`` overrides the gain of the scenario's first obstacle;
    without it the scenario is evaluated as given.
    """
    t0 = time.perf_counter()
    base = load_scenario(scenario)
    if seed is not None:
        base = replace(base, rng_seed=int(seed))
    if transmissivities is None:
        settings = [(None, base)]
    else:
        if not base.obstacles:
            raise InvalidInputError("scenario has no obstacle to vary")
        first = base.obstacles[0]
        settings = [(float(g), replace(base, obstacles=(replace(first, gain=float(g)),)
                                       + base.obstacles[1:]).validate())
                    for g in transmissivities]
    records, notes = [], []
    for g, scn in settings:
        res = run_pipeline(scn, multipath=True)
        if res.solution is None:
            raise StageError("fine_align", InvalidInputError("no anchor pair; cannot enhance"))
        d = res.desired
        multi = res.enhanced
        direct = delay_and_sum(res.cleaned, res.solution.without_extra_paths(), desired=d)
        n_extra = sum(len(p) for p in res.solution.extra_paths)
        records.append({
            "transmissivity": g if g is not None else (base.obstacles[0].gain if base.obstacles else 1.0),
            "seed": scn.rng_seed, "n_extra_paths": n_extra,
            "snr_multipath_db": multi.snr_db, "snr_direct_db": direct.snr_db,
            "sinr_multipath_db": multi.sinr_db, "sinr_direct_db": direct.sinr_db,
            "multipath_gain_db": multi.snr_db - direct.snr_db,
        })
        notes += res.notes
    summary = {"gains_db": [r["multipath_gain_db"] for r in records]}
    params = {"transmissivities": None if transmissivities is None else [float(g) for g in transmissivities],
              "seed": base.rng_seed}
    return ExperimentReport("nlos", params, records, summary, notes, time.perf_counter() - t0)
