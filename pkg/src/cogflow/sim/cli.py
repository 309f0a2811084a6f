from __future__ import annotations

import argparse
import logging
import sys

from cogflow.config import EXPERIMENTS, load_config, resolve_log_level
from cogflow.errors import ConfigError

from . import runner


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogflow",
        description="Gradient-flow cognition experiments with CSV/SVG artifacts and verdicts.",
    )
    parser.add_argument("experiment", choices=(*EXPERIMENTS, "all"), help="Experiment to run.")
    parser.add_argument("--config", help="TOML configuration file.")
    parser.add_argument("--out", help="Output directory (overrides output_dir).")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. --set integrator.dt=0.005 (repeatable).",
    )
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=resolve_log_level(), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(
            args.config,
            args.overrides,
            forced={"experiment": args.experiment, "output_dir": args.out},
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    result = runner.run_experiments(config)
    if result.exit_code == runner.EXIT_CONFIG:
        print(f"config error: {result.error}", file=sys.stderr)
    elif result.error:
        print(f"run error: {result.error}", file=sys.stderr)
    elif result.failed:
        print("failing criteria: " + ", ".join(result.failed), file=sys.stderr)
    return result.exit_code


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
