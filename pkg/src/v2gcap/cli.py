"""Command-line entry point: ``v2gcap --scenario FILE --out DIR [...]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .engine import BACKENDS
from .errors import ConfigurationError
from .experiment import SUMMARY_COLUMNS, run_experiment
from .scenario import ScenarioConfig, SweepSpec, dumps_scenario, load_scenario


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="v2gcap",
        description="Simulate an EV aggregator and compare its regulation capacities with the "
        "closed-form M/M/inf network.",
    )
    parser.add_argument("--scenario", help="scenario file (TOML); defaults to the built-in reference")
    parser.add_argument("--seed", type=_u64, default=1, help="master seed (default: 1)")
    parser.add_argument("--horizon", type=float, help="simulated minutes per replication")
    parser.add_argument("--warmup", type=float, help="minutes discarded before averaging")
    parser.add_argument("--replications", type=_positive_int, help="replications per configuration")
    parser.add_argument("--sweep", type=SweepSpec.parse, metavar="MU=V1,V2,...",
                        help="sweep mu1, mu2 or mu3 over the listed rates, e.g. mu1=1/30,1/50,1/70")
    parser.add_argument("--out", help="output directory for CSV files")
    parser.add_argument("--sample-interval", type=float, help="minutes between trace samples")
    parser.add_argument("--backend", choices=BACKENDS, help="simulation backend (default: fastest)")
    parser.add_argument("--workers", type=_positive_int, default=1, help="parallel processes")
    parser.add_argument("--no-traces", action="store_true", help="skip per-replication trace CSVs")
    parser.add_argument("--print-scenario", action="store_true",
                        help="print the effective scenario file and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_scenario(args.scenario) if args.scenario else ScenarioConfig.reference()
        overrides = {
            k: v for k, v in (
                ("horizon", args.horizon),
                ("warmup", args.warmup),
                ("replications", args.replications),
                ("sample_interval", args.sample_interval),
            ) if v is not None
        }
        config = config.with_overrides(**overrides)
    except ConfigurationError as exc:
        print(f"v2gcap: {exc}", file=sys.stderr)
        return 2

    if args.print_scenario:
        sys.stdout.write(dumps_scenario(config))
        return 0

    result = run_experiment(
        config,
        args.seed,
        sweep=args.sweep,
        out_dir=args.out,
        backend=args.backend,
        workers=args.workers,
        write_traces=not args.no_traces,
    )
    print("\t".join(SUMMARY_COLUMNS))
    for row in result.rows:
        print("\t".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.as_csv()))
    if result.all_failed:
        print("v2gcap: every replication failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
