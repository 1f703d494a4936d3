"""Batch command-line driver.

Subcommands mirror the pipeline stages: ``gen``, ``ingest``, ``index``,
``worksets``, ``retrieve``, ``train-merge``, ``merge``, ``train-rerank``,
``rerank``, ``eval`` and ``pipeline`` (everything end to end).  All tunables
live in a key = value config file; ``--set key=value`` and the convenience
flags override file values.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import PriorArtError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workspace", "-w", required=True,
                        help="directory holding all pipeline artifacts")
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config value")
    parser.add_argument("--seed", type=int, help="override the corpus seed")
    parser.add_argument("--threads", type=int, help="override the thread count")
    parser.add_argument("--monolingual", choices=["en", "fr", "de"],
                        help="restrict the task to one language")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering in report stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priorart",
        description="Patent prior-art retrieval pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("gen", "generate a synthetic corpus into the workspace"),
        ("ingest", "validate the corpus and materialize citations/statistics"),
        ("index", "build the per-analyzer indexes (and the phrase vocabulary)"),
        ("worksets", "build per-topic working sets and the validation set"),
        ("retrieve", "run every retrieval model over every topic"),
        ("train-merge", "fit the per-model confidence regressors"),
        ("merge", "fuse the per-model runs into one ranked list per topic"),
        ("train-rerank", "fit the metadata boost regressor"),
        ("rerank", "re-rank the merged run and write the final run"),
        ("eval", "score runs against judgments and write the report"),
        ("pipeline", "run every stage in order"),
    ]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "ingest":
            p.add_argument("--corpus", help="corpus file to copy into the workspace")
        if name == "index":
            p.add_argument("--stats", action="store_true",
                           help="print the accounting identities per index")
        if name == "eval":
            p.add_argument("--run", action="append", dest="runs",
                           help="run file to evaluate (repeatable; default: all)")
            p.add_argument("--qrels", help="judgments file (default: workspace qrels)")
            p.add_argument("--grade", choices=["all", "very"], default="all",
                           help="relevance grade filter")
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: Dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise PriorArtError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    if args.monolingual is not None:
        overrides["monolingual"] = args.monolingual
    if args.no_figures:
        overrides["figures"] = "false"
    return load_config(args.config, overrides)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        ws = pipeline.Workspace(args.workspace)
        command = args.command
        if command == "gen":
            pipeline.run_stage("gen", cfg, ws, pipeline.stage_gen)
        elif command == "ingest":
            pipeline.run_stage("ingest", cfg, ws, pipeline.stage_ingest,
                               corpus_file=args.corpus)
        elif command == "index":
            pipeline.run_stage("index", cfg, ws, pipeline.stage_index,
                               stats=args.stats)
        elif command == "worksets":
            pipeline.run_stage("worksets", cfg, ws, pipeline.stage_worksets)
        elif command == "retrieve":
            pipeline.run_stage("retrieve", cfg, ws, pipeline.stage_retrieve)
        elif command == "train-merge":
            pipeline.run_stage("train-merge", cfg, ws, pipeline.stage_train_merge)
        elif command == "merge":
            pipeline.run_stage("merge", cfg, ws, pipeline.stage_merge)
        elif command == "train-rerank":
            pipeline.run_stage("train-rerank", cfg, ws, pipeline.stage_train_rerank)
        elif command == "rerank":
            pipeline.run_stage("rerank", cfg, ws, pipeline.stage_rerank)
        elif command == "eval":
            pipeline.run_stage("eval", cfg, ws, pipeline.stage_eval,
                               run_files=args.runs, qrels_file=args.qrels,
                               grade=args.grade)
        elif command == "pipeline":
            pipeline.stage_pipeline(cfg, ws)
    except PriorArtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
