"""Command-line orchestration.

    advrep <synth|train|attribute|embed|score|leiden|stratify|report>
           --config <json> [--out <dir>] [--seed N]

Exit codes: 0 ok, 2 config error, 3 missing upstream artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, MissingArtifactError, NumericalError
from .pipeline import STAGES, PipelineConfig, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advrep",
        description="domain-adversarial training with attribution-manifold analysis",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_json(args.config, seed_override=args.seed)
        out = args.out or cfg.out_dir
        if out is None:
            raise ConfigError("no output directory: pass --out or set out_dir in the config")
        written = run_stage(args.stage, cfg, out)
    except ConfigError as exc:
        print(f"advrep {args.stage}: config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"advrep {args.stage}: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"advrep {args.stage}: numerical failure: {exc}", file=sys.stderr)
        return 4
    for path in written:
        print(path)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
