"""Command-line front end: `mc ccr`, `mc ser`, and `mc ops`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (too many
decomposition failures during a sweep).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, MimomcError, NumericalFailure
from .harness import (
    count_ops_report,
    load_config,
    parse_snr_grid,
    rows_to_csv,
    run_ccr_experiment,
    run_ser_experiment,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--n", type=int, help="antenna count (M = N)")
    parser.add_argument("--snr-db", help="grid as start:stop:step or comma list")
    parser.add_argument("--seed", type=int, help="64-bit experiment seed")
    parser.add_argument("--frames", type=int, help="frames per SNR point")
    parser.add_argument("--t", type=int, help="observations per frame")
    parser.add_argument("--hypotheses", help="comma list of modulation types")
    parser.add_argument("--classifiers", help="comma list of classifier names")
    parser.add_argument("--rho", type=float, help="antenna correlation factor")
    parser.add_argument("--slice-const", help="dense slicing constellation")
    parser.add_argument("--out", help="CSV output path (default: stdout)")
    parser.add_argument("--threads", type=int, help="worker process count")
    parser.add_argument(
        "--channel-blocks", type=int,
        help="quasi-static channel blocks per classification decision",
    )
    parser.add_argument("--trace", help="write per-frame JSON-lines debug log here")


def _overrides(args: argparse.Namespace) -> dict:
    values = {
        "n": args.n,
        "seed": args.seed,
        "frames_per_point": args.frames,
        "t": args.t,
        "rho": args.rho,
        "slice_const": args.slice_const,
        "output_path": args.out,
        "threads": args.threads,
        "channel_blocks": args.channel_blocks,
        "trace_path": args.trace,
    }
    if args.snr_db is not None:
        values["snr_grid_db"] = parse_snr_grid(args.snr_db)
    if args.hypotheses is not None:
        values["hypothesis_set"] = tuple(
            p.strip() for p in args.hypotheses.split(",") if p.strip()
        )
    if args.classifiers is not None:
        values["classifiers"] = tuple(
            p.strip() for p in args.classifiers.split(",") if p.strip()
        )
    if getattr(args, "layer_mt", None) is not None:
        values["layer_mt"] = args.layer_mt
    if getattr(args, "layer_index", None) is not None:
        values["layer_index"] = args.layer_index
    if getattr(args, "detectors", None) is not None:
        values["detectors"] = tuple(p.strip() for p in args.detectors.split(",") if p.strip())
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mc",
        description="Seeded Monte-Carlo experiments for per-layer MIMO "
        "modulation classification and subspace detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ccr = sub.add_parser("ccr", help="correct-classification-ratio sweep")
    _add_common(ccr)

    ser = sub.add_parser("ser", help="uncoded symbol-error-rate sweep")
    _add_common(ser)
    ser.add_argument("--layer-mt", help="fixed MT on the layer of interest")
    ser.add_argument("--layer-index", type=int, help="layer of interest (0-based)")
    ser.add_argument("--detectors", help="comma list from: subspace, lord")

    ops = sub.add_parser("ops", help="operation-count report against the bounds")
    _add_common(ops)
    return parser


def _emit(rows, out_path: str | None) -> None:
    if out_path:
        print(f"wrote {out_path}", file=sys.stderr)
    else:
        sys.stdout.write(rows_to_csv(rows))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "ccr":
            rows = run_ccr_experiment(cfg)
            _emit(rows, cfg.output_path)
        elif args.command == "ser":
            rows = run_ser_experiment(cfg)
            _emit(rows, cfg.output_path)
        else:
            report = count_ops_report(cfg)
            header = f"{'classifier':<22} {'dist/obs':>12} {'exp/obs':>12} {'log/obs':>10} " \
                     f"{'bound(dist,exp,log)':>26} {'ok':>4}"
            print(header)
            for row in report:
                d, e, l = row.per_obs
                print(
                    f"{row.classifier:<22} {d:>12.1f} {e:>12.1f} {l:>10.1f} "
                    f"{str(row.bound):>26} {'yes' if row.within else 'NO':>4}"
                )
            if not all(r.within for r in report):
                print("measured counts exceed the bounds", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except MimomcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
