"""Command line entry point: ``mullw run``, ``mullw dryrun``, ``mullw report``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import CACHE_ENV_VAR, parse_config
from .errors import MullwError
from .reporting import generate_html, mutation_score
from .session import run_session

DEFAULT_DB = "mullw.sqlite"

EPILOG = f"""\
exit codes:
  0  session completed (surviving mutants are findings, not failures)
  1  internal error
  2  invalid configuration, or unknown custom test function
  3  no tests found, or duplicate test names
  4  missing or invalid module file
  5  results database or report could not be read or written

environment:
  {CACHE_ENV_VAR}  overrides cache_directory from the config file
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mullw", description="Mutation testing for WebAssembly modules.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("run", "run a mutation testing session"),
                       ("dryrun", "enumerate tests and mutants and estimate the worst case")):
        p = sub.add_parser(name, help=text, epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="session configuration (YAML)")
        p.add_argument("--db", default=DEFAULT_DB,
                       help=f"results database to write (default: {DEFAULT_DB})")

    p = sub.add_parser("report", help="render an HTML report from a results database",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("db", help="results database")
    p.add_argument("-o", "--output", required=True, help="HTML file to write")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "report":
            generate_html(args.db, args.output)
            try:
                summary = mutation_score(args.db)
                print(f"mutation score: {summary.score_text} "
                      f"({summary.killed} killed, {summary.survived} survived)")
            except MullwError:
                print("mutation score: n/a")
            print(f"report written to {args.output}")
            return 0

        config = parse_config(args.config)
        if args.command == "dryrun":
            config = config.with_overrides(dry_run=True)
        record = run_session(config, args.db)
        if record.dry_run:
            est = record.estimate
            print(f"tests: {est.n_tests}  mutants: {est.n_mutants}  "
                  f"planned runs: {est.planned_runs}  worst case: {est.worst_case_ms} ms")
        print(f"results written to {args.db}")
        return 0
    except MullwError as exc:
        logging.getLogger("mullw").error("error: %s", exc)
        return exc.exit_code
    except Exception:  # noqa: BLE001 - last-resort guard for the exit code contract
        logging.getLogger("mullw").exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
