"""Command-line entry point: ``distbeam <subcommand> [options]``.

Exit codes: 0 success, 2 usage error, 3 invalid input (scenario file,
parameters), 4 a pipeline stage failed, 1 anything else. Failures print a
one-line JSON diagnostic on stderr naming the stage when there is one.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import DistbeamError, ParseError, StageError, ValidationError
from .experiments import (
    BUNDLED,
    cmd_alignment_error,
    cmd_chirp_grid,
    cmd_monte_carlo_disambiguation,
    cmd_nlos,
    cmd_run,
    cmd_snr_vs_miccount,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INPUT, EXIT_STAGE = 0, 1, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _target(text: str) -> list[float]:
    vals = _floats(text)
    if len(vals) not in (2, 3):
        raise argparse.ArgumentTypeError("target must be 'x,y' or 'x,y,z'")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distbeam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings from the pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    scen_help = f"scenario TOML path or bundled name ({', '.join(BUNDLED)})"

    def common(sp, scenario=True, scenario_default="demo"):
        if scenario:
            sp.add_argument("--scenario", default=scenario_default, help=scen_help)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory (report is printed if omitted)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("run", help="simulate, align and enhance one scenario")
    common(sp)
    sp.add_argument("--target", type=_target, default=None, help="target position 'x,y[,z]'")

    sp = sub.add_parser("monte-carlo", help="separability of the desired source over random placements")
    common(sp)
    sp.add_argument("--min-separation", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--sources", type=int, default=None, help="sources per trial")
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("align-error", help="coarse and fine delay errors per mic")
    common(sp)
    sp.add_argument("--trials", type=int, default=5)

    sp = sub.add_parser("snr-sweep", help="SNR gain versus number of microphones")
    common(sp, scenario_default="ring")
    sp.add_argument("--counts", type=_ints, default=[1, 2, 4, 8, 12])

    sp = sub.add_parser("chirp-grid", help="chirp detection MAE over duration x distance")
    common(sp, scenario=False)
    sp.add_argument("--durations", type=_floats, default=[0.005, 0.01, 0.02, 0.04])
    sp.add_argument("--distances", type=_floats, default=[1, 2, 4, 8, 16])

    sp = sub.add_parser("nlos", help="multipath combining gain per obstacle setting")
    common(sp, scenario_default="nlos")
    sp.add_argument("--transmissivities", type=_floats, default=[0.3, 0.5, 0.8])
    return p


def _dispatch(args):
    seed = args.seed
    if args.command == "run":
        return cmd_run(args.scenario, args.target, args.out, seed=seed)
    if args.command == "monte-carlo":
        kw = {} if args.sources is None else {"n_sources": args.sources}
        return cmd_monte_carlo_disambiguation(args.scenario, args.min_separation, args.trials,
                                              0 if seed is None else seed, jobs=args.jobs, **kw)
    if args.command == "align-error":
        return cmd_alignment_error(args.scenario, args.trials, 0 if seed is None else seed)
    if args.command == "snr-sweep":
        return cmd_snr_vs_miccount(args.scenario, args.counts, seed)
    if args.command == "chirp-grid":
        return cmd_chirp_grid(args.durations, args.distances, 0 if seed is None else seed)
    if args.command == "nlos":
        return cmd_nlos(args.scenario, args.transmissivities, seed)
    raise AssertionError(args.command)


def _fail(code: int, exc: BaseException, stage: str | None = None) -> int:
    diag = {"error": type(exc).__name__, "message": str(exc)}
    if stage is not None:
        diag["stage"] = stage
    print(json.dumps(diag, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = _dispatch(args)
    except StageError as exc:
        return _fail(EXIT_STAGE, exc.cause, exc.stage)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        return _fail(EXIT_INPUT, exc)
    except DistbeamError as exc:
        return _fail(EXIT_INPUT if isinstance(exc, ValueError) else EXIT_FAIL, exc)
    if args.out is not None:
        for path in report.write(args.out, args.format):
            print(path)
    else:
        print(json.dumps({k: v for k, v in report.to_dict().items() if k != "records"},
                         indent=2, sort_keys=True))
    print(f"runtime {report.runtime:.2f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
