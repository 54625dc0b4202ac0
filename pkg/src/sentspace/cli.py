"""Command-line entry point.

Every subcommand reads an optional TOML config (``--config``) and accepts
any config key as a dotted flag, e.g. ``--kmeans.k 3`` or
``--graph.enabled false``. Lists are comma separated.

Exit codes: 0 success, 1 at least one analysis recorded an error,
2 invalid configuration or unreadable input.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import extract, read_corpus
from .embed import EmbeddingSet, read_word_vectors, save_embedding_set
from .exceptions import SentspaceError
from .pipeline import (
    REPORT_FILE,
    RunConfig,
    apply_overrides,
    embed_tag,
    emit_plot_data,
    load_config,
    only_analyses,
    read_report,
    run_pipeline,
    validate_config,
)

logger = logging.getLogger("sentspace")

ANALYSIS_COMMANDS = {
    "run": ("tendency", "cluster_eval", "graph"),
    "tendency": ("tendency",),
    "cluster-eval": ("cluster_eval",),
    "graph": ("graph",),
}


def parse_overrides(tokens):
    """``["--a.b", "1", "--c=x"]`` -> ``{"a.b": "1", "c": "x"}``."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise SentspaceError(f"unexpected argument {tok!r}")
        name = tok[2:]
        if "=" in name:
            name, value = name.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise SentspaceError(f"{tok} needs a value")
            i += 1
            value = tokens[i]
        out[name.replace("-", "_")] = value
        i += 1
    return out


def build_config(args, extra):
    config = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(config, parse_overrides(extra))


def _cmd_extract(config):
    if not config.corpus:
        raise SentspaceError("corpus is required")
    sentences = read_corpus(config.corpus)
    out = Path(config.out_dir) / "extract"
    out.mkdir(parents=True, exist_ok=True)
    for tag in config.extraction:
        with open(out / f"{tag}.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for s in sentences:
                sub = extract(s, tag)
                fh.write(json.dumps({"id": sub.source_id, "method": sub.method,
                                     "tokens": list(sub.tokens),
                                     "relation": sub.relation}) + "\n")
    return 0


def _cmd_embed(config):
    validate_config(config)
    if config.embedder.kind == "precomputed":
        raise SentspaceError("embed needs a word-vector embedder, not precomputed")
    sentences = read_corpus(config.corpus)
    table = read_word_vectors(config.word_vectors)
    out = Path(config.out_dir) / "embeddings"
    out.mkdir(parents=True, exist_ok=True)
    for tag in config.extraction:
        x, ids, labels, _ = embed_tag(config, sentences, tag, table)
        save_embedding_set(EmbeddingSet(ids, x, labels), out / f"{tag}.emb")
    return 0


def _cmd_analysis(config, names):
    report = run_pipeline(only_analyses(config, names))
    for r in report.errors:
        logger.error("%s/%s: %s", r.tag, r.analysis, r.reason)
    return report.exit_code


def _cmd_export_plots(config, report_path):
    path = Path(report_path) if report_path else Path(config.out_dir) / REPORT_FILE
    emit_plot_data(read_report(path), config.out_dir)
    return 0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="sentspace",
        description="Clusterability, clustering quality and similarity graphs "
                    "of sentence embedding spaces.",
        allow_abbrev=False,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "extract": "write sub-sentences for each extraction tag",
        "embed": "write one EMB1 embedding file per extraction tag",
        "tendency": "spatial-histogram clustering tendency only",
        "cluster-eval": "k-means and the eight evaluation metrics only",
        "graph": "similarity graph analyses only",
        "run": "full pipeline",
        "export-plots": "rewrite plot-data files from a saved report",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, parents=[common], allow_abbrev=False)
        if name == "export-plots":
            p.add_argument("--report", help=f"report file (default out_dir/{REPORT_FILE})")
    return parser


def main(argv=None):
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args, extra)
        if args.command == "extract":
            return _cmd_extract(config)
        if args.command == "embed":
            return _cmd_embed(config)
        if args.command == "export-plots":
            return _cmd_export_plots(config, args.report)
        return _cmd_analysis(config, ANALYSIS_COMMANDS[args.command])
    except (SentspaceError, OSError) as exc:
        print(f"sentspace: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
