"""Command-line entry point: ``suggestaudit <subcommand> --config run.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from filelock import FileLock, Timeout

from . import pipeline
from .config import load_config
from .exceptions import AuditError

logger = logging.getLogger("suggestaudit")

STAGES = {
    "crawl": lambda cfg, args: pipeline.stage_crawl(cfg, resume=args.resume),
    "prune": lambda cfg, args: pipeline.stage_prune(cfg),
    "preprocess": lambda cfg, args: pipeline.stage_preprocess(cfg),
    "vectorize": lambda cfg, args: pipeline.stage_vectorize(cfg),
    "cluster": lambda cfg, args: pipeline.stage_cluster(cfg),
    "analyze": lambda cfg, args: pipeline.stage_analyze(cfg),
    "report": lambda cfg, args: pipeline.stage_render_report(cfg, significant_only=not args.all_rows),
    "run": lambda cfg, args: pipeline.run_all(cfg, resume=args.resume, significant_only=not args.all_rows),
}


@contextmanager
def output_lock(output_dir: Path):
    output_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(output_dir / ".lock"), timeout=0)
    try:
        with lock:
            yield
    except Timeout:
        raise AuditError(f"another suggestaudit process holds {output_dir}/.lock") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="suggestaudit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="run configuration (YAML)")
        p.add_argument("--resume", action="store_true", help="continue crawls from checkpoints")
        p.add_argument("--mode", choices=("univariate", "multivariate"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", type=Path, help="override output_dir")
        return p

    for name in STAGES:
        p = common(sub.add_parser(name))
        if name in ("report", "run"):
            p.add_argument("--all-rows", action="store_true",
                           help="list every attribute, not only those with a significant effect")
    p = common(sub.add_parser("record-fixture", help="crawl through a recorder and save a replay fixture"))
    p.add_argument("--out", required=True, type=Path, help="fixture file to write")

    demo = sub.add_parser("demo-workspace", help="write a synthetic audit setup")
    demo.add_argument("directory", type=Path)
    demo.add_argument("--seed", type=int, default=7)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "demo-workspace":
            from .synthetic import write_demo_workspace

            print(write_demo_workspace(args.directory, seed=args.seed))
            return 0
        overrides = {"mode": args.mode, "alpha": args.alpha, "seed": args.seed}
        if args.output_dir is not None:
            overrides["output_dir"] = str(args.output_dir.resolve())
        cfg = load_config(args.config, overrides)
        with output_lock(Path(cfg.output_dir)):
            if args.command == "record-fixture":
                print(pipeline.record_fixture_crawl(cfg, args.out))
                return 0
            result = STAGES[args.command](cfg, args)
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, str):
        sys.stdout.write(result)
    elif isinstance(result, dict):
        print(json.dumps(result, ensure_ascii=False, indent=1))
    elif isinstance(result, tuple) and isinstance(result[-1], dict):
        print(json.dumps(result[-1], ensure_ascii=False, indent=1))
    else:
        print(f"{args.command}: done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
