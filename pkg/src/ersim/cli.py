"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration errors, 3 when the exact
density-matrix engine is asked for more qubits than it supports.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .bench import FAMILIES, BenchmarkSpec
from .circuit import CircuitError
from .noise import NoiseError, NoiseSpec
from .oracle import OracleCapacityError
from .pipeline import MODES, ConfigError, RunConfig, dumps_report, emit_report, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tusq", description="Noisy circuit sampling with realization tallying, commutation and tree reuse.")
    src = p.add_argument_group("circuit")
    src.add_argument("--circuit", metavar="FILE", help="circuit text file, one gate per line")
    src.add_argument("--benchmark", metavar="NAME", choices=FAMILIES, help="built-in family: " + ", ".join(FAMILIES))
    src.add_argument("--qubits", type=int, help="qubit count (qaoa, adder, ghz, bv)")
    src.add_argument("--layers", type=int, default=2, help="QAOA layers (default 2)")
    src.add_argument("--distance", type=int, help="code distance (bitcode, phasecode)")
    src.add_argument("--secret", help="BV secret, most significant bit first")
    src.add_argument("--bench-seed", type=int, default=0, help="seed for QAOA angles (default 0)")

    run = p.add_argument_group("run")
    run.add_argument("--config", metavar="JSON", help="JSON file with run settings; flags given explicitly override it")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--shots", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--gate-error", type=float, help="depolarizing probability after each gate (default 0.01)")
    run.add_argument("--meas-error", type=float, help="bit-flip probability before each measurement (default 0.01)")
    run.add_argument("--alpha", type=float, help="pruning threshold fraction (default 0.01)")
    run.add_argument("--beta", type=int, help="insignificant circuits kept after pruning (default 100)")
    run.add_argument("--workers", type=int, help="worker processes for subtree traversal (default 1)")
    run.add_argument("--no-commute", action="store_true", help="skip realization commutation")
    run.add_argument("--no-prune", action="store_true", help="skip pruning")

    out = p.add_argument_group("output")
    out.add_argument("--out", metavar="FILE", help="write the JSON report here plus a .csv distribution sidecar")
    out.add_argument("--dump-tally", metavar="CSV", help="write the reduced realization tally as CSV")
    out.add_argument("--reproducible", action="store_true", help="omit wall-clock and worker-dependent report fields")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")

    if args.benchmark:
        bench = BenchmarkSpec(
            family=args.benchmark,
            n_qubits=args.qubits,
            distance=args.distance,
            layers=args.layers,
            seed=args.bench_seed,
            secret=args.secret,
        )
        base["benchmark"] = bench.to_dict()
        base.pop("circuit_path", None)
    if args.circuit:
        base["circuit_path"] = args.circuit
        base.pop("benchmark", None)

    noise = dict(base.get("noise") or NoiseSpec().to_dict())
    if args.gate_error is not None:
        noise["gate_error_p"] = args.gate_error
    if args.meas_error is not None:
        noise["meas_error_p"] = args.meas_error
    base["noise"] = noise

    for flag, key in (("mode", "mode"), ("shots", "shots"), ("seed", "seed"), ("alpha", "alpha"),
                      ("beta", "beta"), ("workers", "workers"), ("out", "out"), ("dump_tally", "dump_tally")):
        value = getattr(args, flag)
        if value is not None:
            base[key] = value
    if args.no_commute:
        base["commute"] = False
    if args.no_prune:
        base["prune"] = False
    return RunConfig.from_dict(base)


def _setup_logging():
    name = os.environ.get("TUSQ_LOG", "WARNING").strip().upper()
    level = int(name) if name.isdigit() else logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_pipeline(cfg)
    except OracleCapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, CircuitError, NoiseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out:
        emit_report(report, cfg.out, reproducible=args.reproducible)
    else:
        sys.stdout.write(dumps_report(report, reproducible=args.reproducible))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
