"""Command-line frontend.

Exit codes: 0 success, 1 usage error, 2 data error (malformed or
contradictory inputs), 3 environment error (missing files, I/O failures,
unreachable services). Progress goes to stderr; machine-readable output
goes to files or stdout only.

The environment variable ``CORPUS_DISTILL_SEED`` overrides the config
seed; an explicit ``--seed`` flag overrides both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .corpus import CorpusManifest, IngestStats, ingest_shard
from .errors import DataError, ResourceError
from .filtering import POLICY_KINDS
from .fingerprint import minhash_text, write_signature_cache
from .cluster import plot_histogram, read_histogram
from .pipeline import (
    STAGE_CROSS,
    STAGE_EDU,
    STAGE_INTRA,
    STAGE_QUALITY,
    EduFilterConfig,
    PipelineConfig,
    QualityFilterConfig,
    load_config,
    run_pipeline,
)
from .report import (
    compute_mixture,
    equalized_targets,
    load_accounting,
    render_accounting,
)

logger = logging.getLogger("corpus_distill")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENV = 3

SEED_ENV_VAR = "CORPUS_DISTILL_SEED"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we map usage errors to 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="corpus-distill",
        description="Cross-dataset fuzzy dedup, quality filtering, and token accounting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="validate and normalize manifest shards")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fail-fast", action="store_true", help="stop at the first malformed record")

    p = sub.add_parser("fingerprint", help="write per-source signature cache files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=25, help="shingle size in characters")
    p.add_argument("--num-perms", type=int, default=128)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("dedup", help="fuzzy dedup over the manifest sources")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--intra", action="store_true", help="dedup within each source")
    p.add_argument("--cross", action="store_true", help="dedup across sources by rank")
    p.add_argument("--threshold-verify", type=float, default=None, metavar="J",
                   help="verify candidate pairs at this exact Jaccard threshold")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=1)

    p = sub.add_parser("filter", help="quality or edu filtering over manifest sources")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", required=True, choices=sorted(POLICY_KINDS))
    p.add_argument("--score-dir", default=None, help="directory of <source>.scores.jsonl files")
    p.add_argument("--score-file", action="append", default=[], metavar="SOURCE=PATH")
    p.add_argument("--applies-to", action="append", default=None, metavar="SOURCE")
    p.add_argument("--min-edu-score", type=int, default=3)
    p.add_argument("--top-fraction", type=float, default=None)
    p.add_argument("--on-missing", choices=["fail", "passthrough"], default="fail")

    p = sub.add_parser("report", help="render a stage accounting export")
    p.add_argument("--accounting", required=True, help="accounting.json from a run")
    p.add_argument("--unit", choices=["auto", "tokens", "billions"], default="auto")

    p = sub.add_parser("histogram", help="summarize a cluster-size histogram export")
    p.add_argument("--input", required=True, help="two-column TSV (cluster_size, count)")
    p.add_argument("--plot", default=None, metavar="SVG", help="write a log-log plot")

    p = sub.add_parser("mixture", help="compute mixture weights from token counts")
    p.add_argument("--counts", required=True, help="JSON file: {source: native_tokens}")
    p.add_argument("--targets", default=None, help="JSON file: {source: proportion}")
    p.add_argument("--equalize", default=None, metavar="BOOST:MATCH",
                   help="upweight BOOST to MATCH's proportion, others natural")
    p.add_argument("--json-out", default=None)

    p = sub.add_parser("run", help="run the full configured pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)

    return parser


def _resolve_seed(config_seed: int, flag_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return config_seed


def _cmd_ingest(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    config = PipelineConfig(
        manifest=str(Path(args.manifest).resolve()),
        stages=[],
        on_malformed="fail" if args.fail_fast else "skip",
    )
    result = run_pipeline(config, args.out)
    for source, info in result.stats["ingest"].items():
        logger.info("%s: %d documents, %d malformed", source, info["documents"], info["malformed"])
    print(json.dumps(result.stats["ingest"], sort_keys=True))
    return EXIT_OK


def _cmd_fingerprint(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(0, args.seed)
    for ms in manifest.sources:
        def entries():
            stats = IngestStats()
            seen: set[str] = set()
            for shard in ms.shards:
                logger.info("fingerprint %s: %s", ms.source.name, shard.name)
                for doc in ingest_shard(shard, ms.source, tokenizer=manifest.tokenizer,
                                        stats=stats, seen_ids=seen):
                    sig = minhash_text(doc.text, k=args.k, num_perms=args.num_perms, seed=seed)
                    if sig is not None:
                        yield doc.id, sig

        cache = out / f"{ms.source.name}.sigs.bin"
        count = write_signature_cache(entries(), cache)
        logger.info("%s: %d signatures -> %s", ms.source.name, count, cache.name)
    return EXIT_OK


def _cmd_dedup(args) -> int:
    stages = []
    if args.intra:
        stages.append(STAGE_INTRA)
    if args.cross:
        stages.append(STAGE_CROSS)
    if not stages:
        stages = [STAGE_INTRA, STAGE_CROSS]
    config = PipelineConfig(
        manifest=str(Path(args.manifest).resolve()),
        stages=stages,
        seed=_resolve_seed(0, args.seed),
        verify_threshold=args.threshold_verify,
        parallelism=args.parallelism,
    )
    result = run_pipeline(config, args.out)
    print(render_accounting(result.accounting), end="")
    return EXIT_OK


def _cmd_filter(args) -> int:
    score_files = {}
    for item in args.score_file:
        if "=" not in item:
            raise DataError(f"--score-file expects SOURCE=PATH, got {item!r}")
        source, path = item.split("=", 1)
        score_files[source] = path
    if args.policy == "edu_threshold":
        config = PipelineConfig(
            manifest=str(Path(args.manifest).resolve()),
            stages=[STAGE_EDU],
            edu=EduFilterConfig(
                min_score=args.min_edu_score,
                applies_to=args.applies_to,
                on_missing=args.on_missing,
            ),
        )
    else:
        config = PipelineConfig(
            manifest=str(Path(args.manifest).resolve()),
            stages=[STAGE_QUALITY],
            quality=QualityFilterConfig(
                policy=args.policy,
                top_fraction=args.top_fraction,
                applies_to=args.applies_to,
                score_files=score_files,
                score_dir=args.score_dir,
                on_missing=args.on_missing,
            ),
        )
    result = run_pipeline(config, args.out)
    print(render_accounting(result.accounting), end="")
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.accounting)
    if not path.is_file():
        raise ResourceError(f"accounting file not found: {path}")
    acc = load_accounting(path)
    print(render_accounting(acc, unit=args.unit), end="")
    return EXIT_OK


def _cmd_histogram(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise ResourceError(f"histogram file not found: {path}")
    hist = read_histogram(path)
    total_clusters = sum(hist.values())
    total_docs = sum(size * count for size, count in hist.items())
    print(f"clusters: {total_clusters}")
    print(f"documents in clusters: {total_docs}")
    if hist:
        print(f"largest cluster: {max(hist)}")
    if args.plot:
        plot_histogram(hist, args.plot)
        logger.info("wrote plot to %s", args.plot)
    return EXIT_OK


def _cmd_mixture(args) -> int:
    counts_path = Path(args.counts)
    if not counts_path.is_file():
        raise ResourceError(f"counts file not found: {counts_path}")
    native = json.loads(counts_path.read_text(encoding="utf-8"))
    if args.targets and args.equalize:
        raise DataError("pass either --targets or --equalize, not both")
    if args.targets:
        targets_path = Path(args.targets)
        if not targets_path.is_file():
            raise ResourceError(f"targets file not found: {targets_path}")
        targets = json.loads(targets_path.read_text(encoding="utf-8"))
    elif args.equalize:
        if ":" not in args.equalize:
            raise DataError(f"--equalize expects BOOST:MATCH, got {args.equalize!r}")
        boost, match = args.equalize.split(":", 1)
        targets = equalized_targets(native, boost, match)
    else:
        total = sum(native.values())
        targets = {s: n / total for s, n in native.items()}
    spec = compute_mixture(native, targets)
    print(spec.render(), end="")
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _cmd_run(args) -> int:
    config_path = Path(args.config)
    if not config_path.is_file():
        raise ResourceError(f"config file not found: {config_path}")
    config = load_config(config_path)
    config = replace(config, seed=_resolve_seed(config.seed, args.seed))
    if args.parallelism is not None:
        config = replace(config, parallelism=args.parallelism)
    result = run_pipeline(config, args.out)
    logger.info("run complete; outputs under %s", result.out_dir)
    print(render_accounting(result.accounting), end="")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "fingerprint": _cmd_fingerprint,
    "dedup": _cmd_dedup,
    "filter": _cmd_filter,
    "report": _cmd_report,
    "histogram": _cmd_histogram,
    "mixture": _cmd_mixture,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ResourceError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except OSError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
