"""Sidecar CLI: batch-score shard files or serve the line protocol on stdio.

Exit codes: 0 success, 1 usage error, 2 data error, 3 environment error
(including model load failure).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .heuristic import HeuristicBackend
from .protocol import manifest_record, score_stream

logger = logging.getLogger("score_sidecar")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENV = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="score-sidecar", description="Document-quality scoring sidecar.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=["heuristic", "model"], default="heuristic")
    common.add_argument("--model-path", default=None, help="model name or path (model backend)")
    common.add_argument("--batch-size", type=int, default=64)
    common.add_argument("--manifest-out", default=None, help="write backend metadata here")

    p = sub.add_parser("score", parents=[common], help="score a shard file into a score file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    sub.add_parser("serve", parents=[common], help="stream requests on stdin, responses on stdout")
    sub.add_parser("manifest", parents=[common], help="print backend metadata")

    return parser


def _make_backend(args):
    if args.backend == "heuristic":
        return HeuristicBackend()
    from .model import ModelBackend, ModelLoadError

    if not args.model_path:
        raise _UsageError("--backend model requires --model-path")
    try:
        return ModelBackend(args.model_path, batch_size=args.batch_size)
    except ModelLoadError as exc:
        raise EnvironmentError(str(exc)) from exc


def _write_manifest(backend, path: str | None) -> None:
    if path is None:
        return
    Path(path).write_text(
        json.dumps(manifest_record(backend), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _cmd_score(args) -> int:
    input_path = Path(args.input)
    if not input_path.is_file():
        raise FileNotFoundError(f"input file not found: {input_path}")
    backend = _make_backend(args)
    _write_manifest(backend, args.manifest_out)
    output_path = Path(args.output)
    tmp = output_path.with_name(output_path.name + ".tmp")
    count = 0
    errors = 0
    try:
        with open(input_path, "r", encoding="utf-8") as src, \
                open(tmp, "w", encoding="utf-8", newline="\n") as dst:
            for record in score_stream(src, backend, batch_size=args.batch_size):
                dst.write(json.dumps(record, ensure_ascii=False))
                dst.write("\n")
                if "error" in record:
                    errors += 1
                else:
                    count += 1
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, output_path)
    logger.info("scored %d documents (%d malformed lines) -> %s", count, errors, output_path)
    return EXIT_OK


def _cmd_serve(args) -> int:
    backend = _make_backend(args)
    _write_manifest(backend, args.manifest_out)
    # batch size 1 keeps the stream responsive for interactive callers
    for record in score_stream(sys.stdin, backend, batch_size=1):
        sys.stdout.write(json.dumps(record, ensure_ascii=False))
        sys.stdout.write("\n")
        sys.stdout.flush()
    return EXIT_OK


def _cmd_manifest(args) -> int:
    backend = _make_backend(args)
    print(json.dumps(manifest_record(backend), indent=2, sort_keys=True))
    _write_manifest(backend, args.manifest_out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    commands = {"score": _cmd_score, "serve": _cmd_serve, "manifest": _cmd_manifest}
    try:
        return commands[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, EnvironmentError) as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
