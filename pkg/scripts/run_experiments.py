"""Run every experiment on the bundled scenarios and write the reports.

Usage::

    python scripts/run_experiments.py --out results [--quick] [--jobs 4]

``--quick`` shrinks trial counts so the whole batch finishes in about a
minute; the full batch (10,000 Monte-Carlo trials per separation) takes
several minutes on one core.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
from pathlib import Path

from distbeam.experiments import (
    cmd_alignment_error,
    cmd_chirp_grid,
    cmd_monte_carlo_disambiguation,
    cmd_nlos,
    cmd_run,
    cmd_snr_vs_miccount,
)

log = logging.getLogger("run_experiments")


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--quick", action="store_true", help="small trial counts")
    ap.add_argument("--jobs", type=int, default=min(8, os.cpu_count() or 1))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    logging.getLogger("distbeam").setLevel(logging.WARNING)

    mc_trials = 500 if args.quick else 10_000
    jobs = [
        ("run", lambda: cmd_run("demo", out_dir=args.out / "run")),
        ("align-error", lambda: cmd_alignment_error("demo", 2 if args.quick else 10, args.seed)),
        ("snr-sweep", lambda: cmd_snr_vs_miccount("ring", [1, 2, 4, 8, 12])),
        ("chirp-grid", lambda: cmd_chirp_grid([0.005, 0.01, 0.02, 0.04], [1, 2, 4, 8, 16],
                                              args.seed, n_chirps=10 if args.quick else 30)),
        ("nlos", lambda: cmd_nlos("nlos", [0.1, 0.3, 0.5, 0.7, 0.9])),
    ]
    for sep in (0.5, 1.0, 1.5):
        jobs.append((f"monte-carlo {sep} m",
                     lambda sep=sep: cmd_monte_carlo_disambiguation("demo", sep, mc_trials, args.seed,
                                                                    jobs=args.jobs)))

    index = {}
    for name, fn in jobs:
        rep = fn()
        sub = args.out / name.replace(" ", "_")
        paths = rep.write(sub, args.format)
        index[name] = {"files": [str(p) for p in paths], "summary": rep.to_dict()["summary"]}
        log.info("%-22s %6.1f s  %s", name, rep.runtime, json.dumps(index[name]["summary"], sort_keys=True)[:160])
    (args.out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
