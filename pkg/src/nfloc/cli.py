"""Command-line entry point: ``nfloc {simulate,estimate,mc-rmse,bench}``.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .array_model import FresnelRegionError, SourcePosition, coupling_matrix
from .estimators import PeakSearchError, SearchGrid, algorithm1, algorithm2, music_known_coupling
from .harness import (
    METHODS,
    MonteCarloAbort,
    load_config,
    run_monte_carlo,
    run_timing,
    write_bench_csv,
    write_mc_csv,
)
from .signal_sim import (
    SimulationConfig,
    SourceTruth,
    generate_coupling,
    read_snapshots_csv,
    simulate_snapshots,
    write_snapshots_csv,
)
from .subspace import noise_subspace, sample_covariance

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
ESTIMATE_COLUMNS = ["method", "source", "doa_deg", "range_wl", "peak_value", "iterations",
                    "converged", "wall_time_s"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _complex_list(text: str) -> list[complex]:
    try:
        return [complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated complex numbers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file or bundled profile name (example1, example2)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--method", choices=[*METHODS, "all"], help="estimator(s) to run")
    p.add_argument("--snr-db", type=_float_list, help="comma-separated SNR list in dB")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per cell")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--doa-step", type=float, help="DOA grid step in degrees")
    p.add_argument("--range-step", type=float, help="range grid step in wavelengths")
    p.add_argument("--threads", type=int, help="worker threads (fallback: NFLOC_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nfloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one snapshot matrix and write it as CSV")
    _common(p)
    p.add_argument("--doa", type=float, default=30.0, help="source DOA in degrees")
    p.add_argument("--range", type=float, default=3.3, help="source range in wavelengths")
    p.add_argument("--coupling", type=_complex_list,
                   help="coupling vector, e.g. '1,0.3+0.2j,0.1' (default: random from seed)")
    p.add_argument("--snapshots", type=int)
    p.add_argument("--noise-var", type=float, help="noise variance override (0 = noiseless)")
    p.add_argument("--coupling-out", help="write the coupling vector used to this JSON file")

    p = sub.add_parser("estimate", help="estimate source positions from a snapshot CSV")
    _common(p)
    p.add_argument("input", help="snapshot CSV written by 'simulate'")
    p.add_argument("--sources", type=int, default=1)
    p.add_argument("--coupling", type=_complex_list,
                   help="true coupling vector; required for the music baseline")
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("mc-rmse", help="RMSE-versus-SNR Monte-Carlo sweep to CSV")
    _common(p)
    p.add_argument("--doas", type=_float_list, help="comma-separated true DOAs in degrees")

    p = sub.add_parser("bench", help="median-of-N timing of each method on one grid")
    _common(p)
    p.add_argument("--repeats", type=int, default=5)
    return parser


def _config_from_args(args):
    cfg = load_config(args.config or ("example2" if args.command == "bench" else "example1"))
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.method:
        over["methods"] = list(METHODS) if args.method == "all" else [args.method]
    if args.snr_db:
        over["snr_db"] = args.snr_db
    if args.trials is not None:
        over["trials"] = args.trials
    if getattr(args, "doas", None):
        over["doas_deg"] = args.doas
    if args.doa_step or args.range_step:
        g = cfg.grid
        over["grid"] = SearchGrid.for_array(
            cfg.array, doa_step=args.doa_step or g.doa_step,
            range_step=args.range_step or g.range_step, doa_range=(g.doa_start, g.doa_stop),
            coarse_doa_step=g.coarse_doa_step, coarse_range_step=g.coarse_range_step)
    return replace(cfg, **over) if over else cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    rng = np.random.default_rng(cfg.master_seed)
    P = cfg.array.coupling_support
    c = np.asarray(args.coupling, dtype=complex) if args.coupling else generate_coupling(
        P, rng, cfg.coupling_decay)
    if len(c) != P:
        raise UsageError(f"--coupling needs {P} entries")
    snr = cfg.snr_db[0]
    sim = SimulationConfig(cfg.array, [SourceTruth(SourcePosition(args.doa, args.range), c)],
                           args.snapshots or cfg.snapshots, snr, rng, noise_var=args.noise_var)
    Y = simulate_snapshots(sim)
    buf = io.StringIO()
    write_snapshots_csv(buf, Y)
    _emit(buf.getvalue(), args.out)
    if args.coupling_out:
        with open(args.coupling_out, "w") as fh:
            json.dump({"coupling": [[z.real, z.imag] for z in c], "doa_deg": args.doa,
                       "range_wl": args.range, "snr_db": snr, "noise_var": sim.sigma2}, fh)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config_from_args(args)
    Y = read_snapshots_csv(args.input)
    if Y.shape[0] != cfg.array.num_elements:
        raise UsageError(f"snapshot file has {Y.shape[0]} rows, array has "
                         f"{cfg.array.num_elements} elements")
    Uw = noise_subspace(sample_covariance(Y), args.sources).noise_basis
    records = []
    for m in cfg.methods:
        if m == "music":
            if not args.coupling:
                if args.method == "music":
                    raise UsageError("the music baseline needs --coupling")
                continue
            C = coupling_matrix(cfg.array, args.coupling)
            records.append(music_known_coupling(cfg.array, Uw, C, cfg.grid, args.sources))
        elif m == "alg1":
            records.append(algorithm1(cfg.array, Uw, cfg.grid, args.sources))
        else:
            records.append(algorithm2(cfg.array, Uw, cfg.grid, args.sources, cfg.q_deg,
                                      cfg.max_iter, n_starts=cfg.n_starts))
    if args.format == "json":
        payload = [{"method": r.method, "estimates": [list(e) for e in r.estimates],
                    "peak_values": r.peak_values, "iterations": r.iterations,
                    "converged": r.converged, "wall_time_s": r.wall_time,
                    "grid_points": list(r.grid_points)} for r in records]
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
        return EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_COLUMNS)
    for r in records:
        for n, ((th, rr), val) in enumerate(zip(r.estimates, r.peak_values)):
            w.writerow([r.method, n, repr(th), repr(rr), repr(val), r.iterations,
                        int(r.converged), repr(r.wall_time)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_mc_rmse(args) -> int:
    if args.seed is None:
        raise UsageError("mc-rmse requires --seed")
    cfg = _config_from_args(args)
    rows = run_monte_carlo(cfg, args.threads)
    buf = io.StringIO()
    write_mc_csv(rows, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    rows = run_timing(cfg, args.repeats)
    buf = io.StringIO()
    write_bench_csv(rows, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mc-rmse": cmd_mc_rmse,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except (UsageError, FileNotFoundError, ValueError, json.JSONDecodeError,
            FresnelRegionError) as err:
        print(f"nfloc: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (PeakSearchError, MonteCarloAbort, np.linalg.LinAlgError) as err:
        print(f"nfloc: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
