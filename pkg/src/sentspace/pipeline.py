"""Configuration-driven analysis runs, their reports and plot-data files.

One run uses one embedder and loops over extraction tags. For every tag it
extracts sub-sentences, embeds them (or joins a precomputed embedding set
by sentence id), then runs the clustering-tendency, clustering-evaluation
and similarity-graph analyses. Each analysis ends up in the report exactly
once per tag: as a result, as a skip with a reason, or as an error record.
"""

import json
import logging
import platform
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np
import sklearn

from . import __version__
from .cluster import METRICS, evaluate_clustering, kmeans
from .corpus import EXTRACTION_TAGS, check_tag, extract, read_corpus
from .embed import (
    OOV_POLICIES,
    DCTEmbedder,
    GEMEmbedder,
    GemParams,
    MeanEmbedder,
    load_embedding_set,
    read_word_vectors,
)
from .exceptions import ParameterError
from .graph import analyze, build_sesg, estimate_threshold, node_link_records
from .tendency import SpatHistConfig, reduce_dimensions, spatial_histogram

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

ANALYSES = ("tendency", "cluster_eval", "graph")
EMBEDDERS = ("mean", "dct", "gem", "precomputed")
SAME_LABEL_MEAN = "same_label_mean"

REPORT_FILE = "report.jsonl"
SUMMARY_FILE = "summary.json"
TENDENCY_FILE = "tendency.tsv"
METRICS_FILE = "metrics.tsv"
SCATTER_FILE = "scatter.tsv"
HUBS_FILE = "hubs.jsonl"


@dataclass
class EmbedderConfig:
    kind: str = "mean"
    dct_k: int = 1
    window_size: int = 7
    corpus_components: int = 3
    power: float = 2.0
    oov_policy: str = "skip"


@dataclass
class KMeansConfig:
    enabled: bool = True
    k: int = 24
    seed: int = 42
    max_iter: int = 300
    tol: float = 1e-4


@dataclass
class TendencyConfig:
    enabled: bool = True
    bins_per_dim: int = 8
    samples: int = 500
    reduce_to: int = 2
    seed: int = 42


@dataclass
class GraphConfig:
    enabled: bool = True
    # "same_label_mean" or a fixed distance
    threshold: object = SAME_LABEL_MEAN
    # restrict the same-label mean to one relation ("" = all relations)
    relation: str = ""
    pair_cap: int = 10**8
    sample_fraction: float = 0.001
    n_hubs: int = 2
    neighbors_per_hub: int = 20
    top_components: int = 10
    seed: int = 42


@dataclass
class RunConfig:
    corpus: str = ""
    word_vectors: str = ""
    # EMB1 file; may contain "{tag}" to give one file per extraction tag
    embeddings: str = ""
    extraction: list = field(default_factory=lambda: list(EXTRACTION_TAGS))
    out_dir: str = "sentspace-out"
    threads: int = 1
    # echoed into the report; splitting is left to the caller
    split: str = ""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    tendency: TendencyConfig = field(default_factory=TendencyConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)

    def as_dict(self):
        return asdict(self)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(name, value, default):
    if name == "graph.threshold":
        # a distance, or the name of a threshold rule
        try:
            return float(value)
        except (TypeError, ValueError):
            return str(value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE | _FALSE:
            return text in _TRUE
        raise ParameterError(f"{name}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            number = float(value) if isinstance(value, str) else value
            if isinstance(number, bool) or float(number) != int(number):
                raise ValueError
            return int(number)
        except (TypeError, ValueError, OverflowError):
            raise ParameterError(f"{name}: expected an integer, got {value!r}")
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ParameterError(f"{name}: expected a number, got {value!r}")
    if isinstance(default, list):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        if isinstance(value, (list, tuple)):
            return [str(v) for v in value]
        raise ParameterError(f"{name}: expected a list, got {value!r}")
    if isinstance(value, (dict, list)):
        raise ParameterError(f"{name}: expected a scalar, got {value!r}")
    return str(value)


def _from_dict(cls, data, prefix=""):
    out = cls()
    known = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        name = prefix + key
        if key not in known:
            raise ParameterError(f"unknown config key {name!r}")
        current = getattr(out, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ParameterError(f"{name} must be a section")
            setattr(out, key, _from_dict(type(current), value, name + "."))
        else:
            setattr(out, key, _coerce(name, value, current))
    return out


def config_from_dict(data):
    return _from_dict(RunConfig, data)


def load_config(path):
    """Read a TOML run configuration."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParameterError(f"{path}: {exc}")
    return config_from_dict(data)


def apply_overrides(config, overrides):
    """Return a copy of ``config`` with dotted-name overrides applied."""
    config = config_from_dict(config.as_dict())
    for name, value in overrides.items():
        target = config
        parts = name.split(".")
        for part in parts[:-1]:
            sub = getattr(target, part, None)
            if not is_dataclass(sub):
                raise ParameterError(f"unknown config key {name!r}")
            target = sub
        key = parts[-1]
        if key not in {f.name for f in fields(target)}:
            raise ParameterError(f"unknown config key {name!r}")
        current = getattr(target, key)
        if is_dataclass(current):
            raise ParameterError(f"{name} is a section, not a value")
        setattr(target, key, _coerce(name, value, current))
    return config


def validate_config(config):
    emb = config.embedder
    if emb.kind not in EMBEDDERS:
        raise ParameterError(f"embedder.kind must be one of {EMBEDDERS}")
    if not config.corpus:
        raise ParameterError("corpus is required (labels come from it)")
    if emb.kind == "precomputed":
        if not config.embeddings or config.word_vectors:
            raise ParameterError(
                "precomputed embedder needs embeddings and no word_vectors"
            )
    elif not config.word_vectors or config.embeddings:
        raise ParameterError(
            f"{emb.kind} embedder needs word_vectors and no embeddings"
        )
    if emb.oov_policy not in OOV_POLICIES:
        raise ParameterError(f"embedder.oov_policy must be one of {OOV_POLICIES}")
    if emb.dct_k < 1:
        raise ParameterError("embedder.dct_k must be >= 1")
    GemParams(emb.window_size, emb.corpus_components, emb.power)
    if not config.extraction:
        raise ParameterError("extraction needs at least one tag")
    for tag in config.extraction:
        check_tag(tag)
    if len(set(config.extraction)) != len(config.extraction):
        raise ParameterError("extraction tags repeat")
    if config.kmeans.k < 1:
        raise ParameterError("kmeans.k must be >= 1")
    if config.threads < 1:
        raise ParameterError("threads must be >= 1")
    _spathist_config(config)
    g = config.graph
    if isinstance(g.threshold, str) and g.threshold != SAME_LABEL_MEAN:
        raise ParameterError(
            f"graph.threshold must be {SAME_LABEL_MEAN!r} or a number"
        )
    if not isinstance(g.threshold, str) and not g.threshold >= 0:
        raise ParameterError("graph.threshold must be >= 0")
    if not 0 < g.sample_fraction <= 1:
        raise ParameterError("graph.sample_fraction must be in (0, 1]")
    if g.pair_cap < 1 or g.n_hubs < 1 or g.neighbors_per_hub < 0:
        raise ParameterError("graph.pair_cap and graph.n_hubs must be >= 1")
    return config


def _spathist_config(config):
    t = config.tendency
    return SpatHistConfig(bins_per_dim=t.bins_per_dim, samples=t.samples,
                          seed=t.seed, reduce_to=t.reduce_to)


@dataclass
class AnalysisRecord:
    tag: str
    analysis: str
    status: str  # "ok", "skipped" or "error"
    result: dict = None
    reason: str = None

    def as_dict(self):
        rec = {"type": "analysis", "tag": self.tag, "analysis": self.analysis,
               "status": self.status}
        if self.result is not None:
            rec["result"] = self.result
        if self.reason is not None:
            rec["reason"] = self.reason
        return rec


@dataclass
class AnalysisReport:
    metadata: dict = field(default_factory=dict)
    tags: list = field(default_factory=list)
    sections: dict = field(default_factory=dict)  # tag -> embedding summary
    records: list = field(default_factory=list)
    scatter: dict = field(default_factory=dict)  # tag -> ids, pc1, pc2, labels
    hubs: dict = field(default_factory=dict)  # tag -> node-link records

    def record(self, tag, analysis):
        for r in self.records:
            if r.tag == tag and r.analysis == analysis:
                return r
        raise KeyError((tag, analysis))

    @property
    def errors(self):
        return [r for r in self.records if r.status == "error"]

    @property
    def exit_code(self):
        return 1 if self.errors else 0

    def summary(self):
        sections = {}
        for tag in self.tags:
            entry = dict(self.sections.get(tag, {}))
            for r in self.records:
                if r.tag != tag:
                    continue
                if r.status == "ok":
                    entry[r.analysis] = r.result
                else:
                    entry[r.analysis] = {"status": r.status, "reason": r.reason}
            sections[tag] = entry
        return {"run": self.metadata, "sections": sections,
                "errors": len(self.errors), "exit_code": self.exit_code}


def _error_reason(stage, exc):
    return f"{stage}: {type(exc).__name__}: {exc}"


def _run_metadata(config, corpus_info, vector_info):
    echo = config.as_dict()
    # thread count never changes results, so it stays out of the report
    echo.pop("threads")
    return {
        "config": echo,
        "seeds": {"kmeans": config.kmeans.seed, "tendency": config.tendency.seed,
                  "graph": config.graph.seed},
        "versions": {"sentspace": __version__, "numpy": np.__version__,
                     "scikit-learn": sklearn.__version__,
                     "python": platform.python_version()},
        "corpus": corpus_info,
        "word_vectors": vector_info,
    }


def _make_embedder(config, table):
    emb = config.embedder
    if emb.kind == "mean":
        return MeanEmbedder(table, oov_policy=emb.oov_policy)
    if emb.kind == "dct":
        return DCTEmbedder(table, k=emb.dct_k, oov_policy=emb.oov_policy)
    return GEMEmbedder(table, window_size=emb.window_size,
                       corpus_components=emb.corpus_components, power=emb.power,
                       oov_policy=emb.oov_policy)


def embed_tag(config, sentences, tag, table=None):
    """Embedding matrix, ids, labels and dropped ids for one extraction tag."""
    if config.embedder.kind == "precomputed":
        path = config.embeddings.replace("{tag}", tag)
        es = load_embedding_set(path, sentences)
        return es.vectors.astype(np.float64), es.ids, list(es.labels), []
    subs = [extract(s, tag) for s in sentences]
    # sub-sentences without a single known word cannot be embedded
    kept = [s for s in subs if any(t in table for t in s.tokens)]
    dropped = [s.source_id for s in subs if not any(t in table for t in s.tokens)]
    if dropped:
        logger.warning("%s: %d sub-sentences have no known word and are dropped",
                       tag, len(dropped))
    if not kept:
        raise ParameterError("no sub-sentence could be embedded")
    x = _make_embedder(config, table).fit_transform(kept)
    return x, [s.source_id for s in kept], [s.relation for s in kept], dropped


def _tendency(config, x):
    return spatial_histogram(x, _spathist_config(config)).as_dict()


def _cluster_eval(config, x, labels):
    km = config.kmeans
    a = kmeans(x, km.k, seed=km.seed, max_iter=km.max_iter, tol=km.tol)
    return {"k": km.k, "inertia": a.inertia, "n_iter": a.n_iter,
            "metrics": evaluate_clustering(a, labels).as_dict()}


def _graph(config, x, labels):
    gc = config.graph
    extra = {}
    if gc.threshold == SAME_LABEL_MEAN:
        est = estimate_threshold(x, labels, gc.pair_cap, gc.seed, gc.relation or None)
        threshold, mode = est.value, est.mode
        extra = {"threshold_pairs": est.pairs, "threshold_total_pairs": est.total_pairs}
    else:
        threshold, mode = float(gc.threshold), "given"
    g = build_sesg(x, threshold, n_jobs=config.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report, hood = analyze(g, labels, gc.sample_fraction, gc.seed, gc.n_hubs,
                               gc.neighbors_per_hub, gc.top_components, mode)
    for w in caught:
        logger.warning("%s", w.message)
    hubs = node_link_records(g, hood, labels) if hood is not None else []
    return {**report.as_dict(), **extra}, hubs


def _scatter(x, ids, labels):
    xy = reduce_dimensions(x, 2)
    if xy.shape[1] < 2:
        xy = np.hstack([xy, np.zeros((len(xy), 2 - xy.shape[1]))])
    return {"ids": list(ids), "pc1": xy[:, 0].tolist(), "pc2": xy[:, 1].tolist(),
            "labels": [str(v) for v in labels]}


def run_pipeline(config, write=True):
    """Run every requested analysis for every extraction tag.

    Input files that cannot be read raise ``OSError``; failures inside an
    analysis are caught and recorded. With ``write`` the report and plot
    data go to ``config.out_dir``.
    """
    validate_config(config)
    corpus_errors = []
    sentences = read_corpus(config.corpus, errors=corpus_errors)
    corpus_info = {"sentences": len(sentences), "skipped_lines": len(corpus_errors)}
    table = None
    vector_info = None
    if config.embedder.kind != "precomputed":
        table = read_word_vectors(config.word_vectors)
        vector_info = {"tokens": len(table), "dimension": table.dimension}

    report = AnalysisReport(_run_metadata(config, corpus_info, vector_info))
    enabled = {"tendency": config.tendency.enabled,
               "cluster_eval": config.kmeans.enabled,
               "graph": config.graph.enabled}
    for tag in config.extraction:
        logger.info("extraction %s", tag)
        report.tags.append(tag)
        try:
            x, ids, labels, dropped = embed_tag(config, sentences, tag, table)
        except Exception as exc:  # every analysis of the tag gets the error
            if isinstance(exc, OSError):
                raise
            reason = _error_reason("embed", exc)
            report.sections[tag] = {"rows": 0}
            for name in ANALYSES:
                status = "error" if enabled[name] else "skipped"
                report.records.append(AnalysisRecord(
                    tag, name, status,
                    reason=reason if enabled[name] else "disabled in config"))
            continue
        report.sections[tag] = {"rows": len(ids), "dimension": int(x.shape[1]),
                                "dropped": dropped}
        report.scatter[tag] = _scatter(x, ids, labels)

        for name in ANALYSES:
            if not enabled[name]:
                report.records.append(
                    AnalysisRecord(tag, name, "skipped", reason="disabled in config"))
                continue
            if name == "cluster_eval" and len(set(labels)) < 2:
                report.records.append(AnalysisRecord(
                    tag, name, "skipped",
                    reason="only one relation label; evaluation is undefined"))
                continue
            try:
                if name == "tendency":
                    result = _tendency(config, x)
                elif name == "cluster_eval":
                    result = _cluster_eval(config, x, labels)
                else:
                    result, report.hubs[tag] = _graph(config, x, labels)
            except Exception as exc:  # recorded, the run carries on
                logger.warning("%s/%s failed: %s", tag, name, exc)
                report.records.append(AnalysisRecord(
                    tag, name, "error", reason=_error_reason(name, exc)))
            else:
                report.records.append(AnalysisRecord(tag, name, "ok", result=result))
    if write:
        write_report(report, config.out_dir)
        emit_plot_data(report, config.out_dir)
    return report


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_report(report, out_dir):
    """Write ``report.jsonl`` (one record per line) and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / REPORT_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"type": "run", **report.metadata}) + "\n")
        for tag in report.tags:
            fh.write(_dumps({"type": "section", "tag": tag,
                             **report.sections.get(tag, {})}) + "\n")
            for r in report.records:
                if r.tag == tag:
                    fh.write(_dumps(r.as_dict()) + "\n")
            if tag in report.scatter:
                fh.write(_dumps({"type": "scatter", "tag": tag,
                                 **report.scatter[tag]}) + "\n")
            if tag in report.hubs:
                fh.write(_dumps({"type": "hubs", "tag": tag,
                                 "records": report.hubs[tag]}) + "\n")
    with open(out / SUMMARY_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report.summary(), sort_keys=True, indent=2,
                            ensure_ascii=False) + "\n")
    return [out / REPORT_FILE, out / SUMMARY_FILE]


def read_report(path):
    """Rebuild an :class:`AnalysisReport` from ``report.jsonl``."""
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    report = AnalysisReport()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "run":
                report.metadata = rec
            elif kind == "section":
                tag = rec.pop("tag")
                report.tags.append(tag)
                report.sections[tag] = rec
            elif kind == "analysis":
                report.records.append(AnalysisRecord(
                    rec["tag"], rec["analysis"], rec["status"], rec.get("result"),
                    rec.get("reason")))
            elif kind == "scatter":
                report.scatter[rec.pop("tag")] = rec
            elif kind == "hubs":
                report.hubs[rec["tag"]] = rec["records"]
    return report


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value).replace("\t", " ").replace("\n", " ")


def _write_tsv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _ok_results(report, analysis):
    for tag in report.tags:
        for r in report.records:
            if r.tag == tag and r.analysis == analysis and r.status == "ok":
                yield tag, r.result


def emit_plot_data(report, out_dir):
    """Tabular plot sources: tendency and metrics by extraction tag, a 2-D
    scatter of every embedding space, and the hub neighbourhoods."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_tsv(out / TENDENCY_FILE, ["tag", "mean_kl", "std_kl", "t", "b"],
               ([tag, r["mean_kl"], r["std_kl"], r["t"], r["b"]]
                for tag, r in _ok_results(report, "tendency")))
    _write_tsv(out / METRICS_FILE, ["tag", "metric", "value"],
               ([tag, name, r["metrics"][name]]
                for tag, r in _ok_results(report, "cluster_eval")
                for name in METRICS))
    _write_tsv(out / SCATTER_FILE, ["tag", "id", "pc1", "pc2", "label"],
               ([tag, *row]
                for tag in report.tags if tag in report.scatter
                for row in zip(*(report.scatter[tag][k]
                                 for k in ("ids", "pc1", "pc2", "labels")))))
    with open(out / HUBS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for tag in report.tags:
            for rec in report.hubs.get(tag, []):
                fh.write(_dumps({"tag": tag, **rec}) + "\n")
    return [out / f for f in (TENDENCY_FILE, METRICS_FILE, SCATTER_FILE, HUBS_FILE)]


def only_analyses(config, names):
    """Copy of ``config`` with every analysis outside ``names`` disabled."""
    return replace(
        config,
        tendency=replace(config.tendency, enabled="tendency" in names
                         and config.tendency.enabled),
        kmeans=replace(config.kmeans, enabled="cluster_eval" in names
                       and config.kmeans.enabled),
        graph=replace(config.graph, enabled="graph" in names and config.graph.enabled),
    )
