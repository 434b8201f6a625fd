"""Command line entry point: ``specflow run | selftest | sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import acceptance
from .errors import SpecflowError
from .scenarios import ConfigError, expand_sweep, load_config, parse_config, run_all, write_outputs

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_PARSE = 2

log = logging.getLogger("specflow")


def _execute(config: dict, out_dir: str, threads, csv_name: str) -> int:
    scenarios = parse_config(config)
    if not scenarios:
        print("PASS: 0 scenarios (warning: empty scenario list)")
        write_outputs([], out_dir, csv_name)
        return EXIT_OK
    outcomes = run_all(scenarios, threads)
    write_outputs(outcomes, out_dir, csv_name)
    for o in outcomes:
        status = "PASS" if o.passed else "FAIL"
        print(f"{status} {o.scenario.id} ({o.scenario.kind})")
        for f in o.failures:
            print(f"    violated: {f}")
    failed = sum(not o.passed for o in outcomes)
    print(f"{len(outcomes) - failed}/{len(outcomes)} scenarios passed; reports in {out_dir}")
    return EXIT_OK if failed == 0 else EXIT_CONTRACT


def cmd_run(args) -> int:
    return _execute(load_config(args.config), args.out, args.threads, "results.csv")


def cmd_sweep(args) -> int:
    config = expand_sweep(load_config(args.config), args.param)
    return _execute(config, args.out, args.threads, "sweep.csv")


def cmd_selftest(args) -> int:
    results = acceptance.run_acceptance(args.filter, emit=lambda line: print(line, flush=True))
    if not results:
        print("PASS: 0 criteria selected (warning: nothing to check)")
        return EXIT_OK
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return EXIT_OK if failed == 0 else EXIT_CONTRACT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specflow", description="Spectral flow estimators and checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the scenarios of a config file")
    run.add_argument("config")
    run.add_argument("--out", default="specflow-out")
    run.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    run.set_defaults(func=cmd_run)

    st = sub.add_parser("selftest", help="run the acceptance suite")
    st.add_argument("--filter", default=None, help="criterion number or name substring")
    st.set_defaults(func=cmd_selftest)

    sw = sub.add_parser("sweep", help="run a config over a parameter grid")
    sw.add_argument("config")
    sw.add_argument("--param", action="append", required=True, help="path=a:b:n or path=v1,v2,...")
    sw.add_argument("--out", default="specflow-sweep")
    sw.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SpecflowError as exc:
        print(f"contract violation: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
