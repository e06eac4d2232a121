"""Command-line surface wrapping every pipeline.

Subcommands: ``validate``, ``synth``, ``score``, ``rollout-score``,
``evaluate``, ``best-of-n``, ``serve``. Exit codes: 0 success, 1 usage,
2 validation failure, 3 judge failure. Output is deterministic given
``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import bench
from .annotations import validate_annotation_file
from .config import load_config, parse_judge_spec, with_overrides
from .engine import Engine
from .errors import ConfigError, DomainError, JudgeError
from .synth import generate_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_JUDGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vidsentry", description=__doc__)
    parser.add_argument("--config", help="engine config path (or CAC_ENGINE_CONFIG)")
    parser.add_argument("--seed", type=int, default=None, help="request-scoped seed")
    parser.add_argument("--parse-mode", choices=["strict", "lenient"], default=None)
    parser.add_argument("--format", choices=["json", "csv", "md"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate annotation files")
    p.add_argument("paths", nargs="+", help="annotation files or directories")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--normal", type=int, default=10)
    p.add_argument("--abnormal", type=int, default=10)

    p = sub.add_parser("score", help="two-turn verdicts for corpus videos")
    p.add_argument("--corpus", required=True)
    p.add_argument("--video-id", action="append", default=None)
    p.add_argument("--all", action="store_true", help="score every corpus video")
    p.add_argument("--judge", default=None, help="scripted:<behavior> | http:<url> | cmd:<argv>")
    p.add_argument("--prompt", default="")
    p.add_argument("--predictions-out", default=None, help="also write a JSONL prediction file")

    p = sub.add_parser("rollout-score", help="sample and score a rollout group")
    p.add_argument("--corpus", required=True)
    p.add_argument("--video-id", required=True)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--judge", default=None)
    p.add_argument("--prompt", default="")

    p = sub.add_parser("evaluate", help="benchmark a prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--corpus", required=True, help="annotation directory")
    p.add_argument("--type-matched", action="store_true")
    p.add_argument("--extent-mode", choices=["mean", "max"], default="mean")

    p = sub.add_parser("best-of-n", help="pick the best candidate video")
    p.add_argument("--corpus", required=True)
    p.add_argument("--video-ids", required=True, help="comma-separated candidate ids")
    p.add_argument("--judge", default=None)
    p.add_argument("--prompt", default="")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--corpus", default=None)

    return parser


def _engine(args: argparse.Namespace, corpus: str | None = None) -> Engine:
    config = load_config(args.config)
    judge = parse_judge_spec(args.judge) if getattr(args, "judge", None) else None
    config = with_overrides(
        config,
        parse_mode=args.parse_mode,
        judge=judge,
        report_format=args.format,
        corpus_dir=corpus,
    )
    return Engine(config=config)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    files: list[Path] = []
    for raw in args.paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(p for p in path.glob("*.json") if p.name != "manifest.json"))
        else:
            files.append(path)
    if not files:
        print("no annotation files found", file=sys.stderr)
        return EXIT_VALIDATION
    failures = 0
    report = {}
    for file in files:
        violations = validate_annotation_file(file, config.annotation_fps)
        report[str(file)] = [str(v) for v in violations]
        failures += bool(violations)
    _emit({"files": report, "invalid_files": failures})
    return EXIT_VALIDATION if failures else EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    world = generate_corpus(seed, args.normal, args.abnormal)
    out = world.save(args.out)
    _emit({"out": str(out), "videos": len(world.ids), "seed": seed})
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    engine = _engine(args, corpus=args.corpus)
    assert engine.world is not None
    if args.all:
        ids = engine.world.ids
    elif args.video_id:
        ids = args.video_id
    else:
        print("choose --video-id or --all", file=sys.stderr)
        return EXIT_USAGE
    verdicts = [engine.reward(v, args.prompt, args.seed) for v in ids]
    if args.predictions_out:
        records = engine.predictions_for_corpus(ids, args.prompt, args.seed)
        bench.save_predictions(records, args.predictions_out)
    _emit(verdicts[0] if len(verdicts) == 1 else verdicts)
    return EXIT_OK


def _cmd_rollout_score(args: argparse.Namespace) -> int:
    engine = _engine(args, corpus=args.corpus)
    result = engine.score_rollouts(
        args.video_id, None, args.group_size, seed=args.seed, prompt=args.prompt
    )
    _emit(result)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    engine = _engine(args, corpus=args.corpus)
    predictions = bench.load_predictions(args.predictions)
    docs = engine.load_documents(None, args.corpus)
    report = engine.evaluate(
        predictions, docs, type_matched=args.type_matched, extent_mode=args.extent_mode
    )
    fmt = args.format or engine.config.report_format
    sys.stdout.write(bench.emit_report(report, fmt))
    return EXIT_OK


def _cmd_best_of_n(args: argparse.Namespace) -> int:
    engine = _engine(args, corpus=args.corpus)
    ids = [v for v in args.video_ids.split(",") if v]
    result = engine.select_best(ids, args.prompt, args.seed)
    _emit(result)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    config = load_config(args.config)
    judge = parse_judge_spec(args.judge) if getattr(args, "judge", None) else None
    config = with_overrides(config, parse_mode=args.parse_mode, judge=judge, corpus_dir=args.corpus)
    serve(config, args.host, args.port)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "synth": _cmd_synth,
    "score": _cmd_score,
    "rollout-score": _cmd_rollout_score,
    "evaluate": _cmd_evaluate,
    "best-of-n": _cmd_best_of_n,
    "serve": _cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except JudgeError as exc:
        print(f"judge failure: {exc}", file=sys.stderr)
        return EXIT_JUDGE
    except (DomainError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
