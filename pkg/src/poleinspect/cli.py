"""Command-line entry point: ``poleinspect <stage> --config cfg.yaml --out dir``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import InvalidParams, StageError
from .pipeline import CONFIG_EXIT_CODE, STAGES, PipelineConfig, default_stages, run_stages


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poleinspect", description="Pole cap inspection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        help_ = "run every stage" if name == "run" else f"run the {name} stage"
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--out", help="output directory (overrides output_dir in the config)")
        p.add_argument("--verbose", action="store_true", help="log progress and write cascade diagnostics")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = PipelineConfig.from_yaml(args.config)
        stages = default_stages(config) if args.command == "run" else [args.command]
        manifest = run_stages(config, stages, args.out, args.verbose, fresh=args.command == "run")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except InvalidParams as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT_CODE
    print(f"completed: {', '.join(manifest.completed_stages)}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
