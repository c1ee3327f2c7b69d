"""Command line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentSpec, SystemConfig, load_config
from .experiments import ResultTable, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("hybridbeam")


def parse_int_list(text: str) -> list[int]:
    """Parse ``"4"``, ``"1,2,4"``, ``"1..16"`` or ``"64..1024:64"``.

    A range without a step counts in multiples of its start value (at least 1).
    """
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            span, _, step = part.partition(":")
            lo, hi = (int(v) for v in span.split(".."))
            step_v = int(step) if step else max(lo, 1)
            if step_v < 1 or hi < lo:
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            if not step and lo == 1:
                step_v = 1
            out.extend(range(lo, hi + 1, step_v))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def parse_float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _int_list(text):
    try:
        return parse_int_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML (or .json) file with [system] and [experiment] tables")
    common.add_argument("--seed", type=_seed, help="base seed (overrides the config)")
    common.add_argument("--out", type=Path, help="write the table here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--trials", type=int, help="Monte Carlo trials (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (capped by HYBRIDBEAM_THREADS)")
    common.add_argument("--gt", type=int, help="transmit grid size G_t (overrides the config)")
    common.add_argument("--gr", type=int, help="receive grid size G_r (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hybridbeam", description="Hybrid mmWave receiver simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("power", parents=[common], help="receiver power per architecture and RF chain count")
    p.add_argument("--nr", type=int, help="receive antennas N_r")
    p.add_argument("--lr", type=_int_list, help="RF chains, e.g. 4, 1,2,4 or 1..16")

    p = sub.add_parser("coherence", parents=[common], help="coherence of training versus measurements")
    p.add_argument("--m", type=_int_list, default=None, help="measurement counts, e.g. 64..1024")
    p.add_argument("--design", choices=("random", "greedy"), default="random")
    p.add_argument("--arch-tx", default="A5")
    p.add_argument("--arch-rx", default="A5")
    p.add_argument("--lr", type=int, help="combiners per snapshot")

    p = sub.add_parser("estimate", parents=[common], help="channel estimation NMSE")
    p.add_argument("--snr-db", type=parse_float_list, help="SNR values in dB, comma separated")
    p.add_argument("--steps", type=int, default=256, help="training steps")
    p.add_argument("--method", action="append", choices=("omp", "ls", "exhaustive"))
    p.add_argument("--arch-tx", default="A1")
    p.add_argument("--arch-rx", default="A1")
    p.add_argument("--unquantized", action="store_true", help="off-grid cluster channel with 6 rays per cluster")

    p = sub.add_parser("combine", parents=[common], help="spectral efficiency of hybrid combiners")
    p.add_argument("--lr", type=_int_list, help="RF chains (N_s = L_r)")
    p.add_argument("--arch", action="append", choices=("A1", "A2", "A3", "A4", "A5", "A6"))
    p.add_argument("--snr-db", type=float)
    p.add_argument("--power", action="store_true", help="add power and bit-rate columns")

    sub.add_parser("sweep", parents=[common], help="run the [experiment] table of --config")
    return parser


def _system(args) -> SystemConfig:
    cfg, _ = load_config(args.config) if args.config else (SystemConfig(), None)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.gt is not None:
        changes["G_t"] = args.gt
    if args.gr is not None:
        changes["G_r"] = args.gr
    if getattr(args, "nr", None) is not None:
        changes["N_r"] = args.nr
    if getattr(args, "snr_db", None) is not None and args.command == "combine":
        changes["snr_db"] = args.snr_db
    return cfg.replace(**changes) if changes else cfg


def _spec(args, cfg: SystemConfig) -> ExperimentSpec:
    cmd = args.command
    if cmd == "sweep":
        if not args.config:
            raise ConfigError("sweep needs --config")
        _, spec = load_config(args.config)
        if spec is None:
            raise ConfigError(f"{args.config} has no [experiment] table")
        return spec
    if cmd == "power":
        lr = args.lr or list(range(1, cfg.N_r + 1))
        return ExperimentSpec("PowerTable", sweep=tuple(lr))
    if cmd == "coherence":
        m = args.m or parse_int_list("64..1024")
        extra = {"L_r": args.lr} if args.lr else {}
        return ExperimentSpec(
            "CoherenceVsM", sweep=tuple(m), tx_arch=args.arch_tx, rx_arch=args.arch_rx,
            training=args.design, extra=extra,
        )
    if cmd == "estimate":
        snrs = args.snr_db or [cfg.snr_db]
        return ExperimentSpec(
            "NmseVsSnr", sweep=tuple(snrs), methods=tuple(args.method or ("omp", "ls")),
            tx_arch=args.arch_tx, rx_arch=args.arch_rx, quantized=not args.unquantized,
            n_rays=6 if args.unquantized else 1, extra={"training_steps": args.steps},
        )
    if cmd == "combine":
        lr = args.lr or [cfg.L_r]
        archs = tuple(args.arch or ("A1", "A2", "A3", "A4", "A5", "A6"))
        return ExperimentSpec(
            "RateVsPower" if args.power else "SeVsRfChains", sweep=tuple(lr), architectures=archs,
            quantized=False, n_rays=6,
        )
    raise ConfigError(f"unknown command {cmd!r}")


def _emit(table: ResultTable, fmt: str, out: Path | None) -> None:
    text = table.to_csv() if fmt == "csv" else json.dumps(table.to_json(), indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage and exits 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _system(args)
        spec = _spec(args, cfg)
        table = run_experiment(spec, cfg, threads=args.threads)
        _emit(table, args.format, args.out)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
