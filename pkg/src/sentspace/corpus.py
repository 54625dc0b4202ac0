"""Labeled sentences with two entity mentions, and sub-sentence extraction.

Input records are one JSON object per line::

    {"id": "s1", "tokens": [...], "m1": [start, end], "m2": [start, end],
     "relation": "contains"}

Spans are half-open token intervals. Tokens are used verbatim; nothing is
re-tokenised.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ParameterError, ValidationError

logger = logging.getLogger(__name__)

MAX_WINDOW = 20
EXTRACTION_TAGS = (
    ["original", "span"]
    + [f"spanBA{i}" for i in range(1, MAX_WINDOW + 1)]
    + [f"surroundings{j}" for j in range(1, MAX_WINDOW + 1)]
)


@dataclass(frozen=True)
class MentionSpan:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")


@dataclass(frozen=True)
class TokenizedSentence:
    id: str
    tokens: tuple
    mention1: MentionSpan
    mention2: MentionSpan
    relation: str

    def __post_init__(self):
        n = len(self.tokens)
        for m in (self.mention1, self.mention2):
            if m.end > n:
                raise ValidationError(
                    f"mention [{m.start}, {m.end}) out of bounds for "
                    f"{n} tokens in sentence {self.id!r}",
                    sentence_id=self.id,
                )
        if self.mention1.start > self.mention2.start:
            raise ValidationError(
                f"mentions not in textual order in sentence {self.id!r}",
                sentence_id=self.id,
            )

    @classmethod
    def create(cls, id, tokens, m1, m2, relation):
        """Build a sentence, normalising the two mentions to textual order."""
        try:
            a = MentionSpan(int(m1[0]), int(m1[1]))
            b = MentionSpan(int(m2[0]), int(m2[1]))
        except (ValueError, TypeError, IndexError) as exc:
            raise ValidationError(
                f"bad mention span in sentence {id!r}: {exc}", sentence_id=id
            ) from exc
        if (b.start, b.end) < (a.start, a.end):
            a, b = b, a
        return cls(str(id), tuple(tokens), a, b, str(relation))


@dataclass(frozen=True)
class SubSentence:
    source_id: str
    method: str
    tokens: tuple
    relation: str


def _parse_record(line, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})", line=lineno)
    if not isinstance(rec, dict):
        raise ValidationError(f"line {lineno}: record is not an object", line=lineno)
    missing = [k for k in ("id", "tokens", "m1", "m2", "relation") if k not in rec]
    if missing:
        raise ValidationError(
            f"line {lineno}: missing fields {missing}",
            sentence_id=rec.get("id"),
            line=lineno,
        )
    tokens = rec["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ValidationError(
            f"line {lineno}: tokens must be an array of strings",
            sentence_id=rec["id"],
            line=lineno,
        )
    for key in ("m1", "m2"):
        if not (isinstance(rec[key], list) and len(rec[key]) == 2):
            raise ValidationError(
                f"line {lineno}: {key} must be a [start, end] pair",
                sentence_id=rec["id"],
                line=lineno,
            )
    try:
        return TokenizedSentence.create(
            rec["id"], tokens, rec["m1"], rec["m2"], rec["relation"]
        )
    except ValidationError as exc:
        exc.line = lineno
        raise


def parse_corpus(stream, strict=False, errors=None):
    """Parse line-delimited sentence records.

    Malformed lines are logged with their line number and skipped; with
    ``strict=True`` the first one is raised. When ``errors`` is a list, the
    skipped :class:`ValidationError` objects are appended to it.
    """
    sentences = []
    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            sentences.append(_parse_record(line, lineno))
        except ValidationError as exc:
            if strict:
                raise
            logger.warning("skipping record: %s", exc)
            if errors is not None:
                errors.append(exc)
    return sentences


def read_corpus(path, strict=False, errors=None):
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, strict=strict, errors=errors)


def sentence_to_record(s):
    return {
        "id": s.id,
        "tokens": list(s.tokens),
        "m1": [s.mention1.start, s.mention1.end],
        "m2": [s.mention2.start, s.mention2.end],
        "relation": s.relation,
    }


def _span_bounds(s):
    return s.mention1.start, max(s.mention1.end, s.mention2.end)


def extract_span(s):
    start, end = _span_bounds(s)
    return SubSentence(s.id, "span", s.tokens[start:end], s.relation)


def _check_window(i):
    if not 1 <= i <= MAX_WINDOW:
        raise ParameterError(f"window must be in 1..{MAX_WINDOW}, got {i}")


def extract_span_ba(s, i):
    _check_window(i)
    start, end = _span_bounds(s)
    lo = max(0, start - i)
    hi = min(len(s.tokens), end + i)
    return SubSentence(s.id, f"spanBA{i}", s.tokens[lo:hi], s.relation)


def surroundings_windows(s, j):
    """Token windows around each mention, merged when they touch or overlap."""
    n = len(s.tokens)
    windows = [
        (max(0, m.start - j), min(n, m.end + j)) for m in (s.mention1, s.mention2)
    ]
    (a0, a1), (b0, b1) = windows
    if b0 <= a1:
        return [(a0, max(a1, b1))]
    return windows


def extract_surroundings(s, j):
    _check_window(j)
    tokens = []
    for lo, hi in surroundings_windows(s, j):
        tokens.extend(s.tokens[lo:hi])
    return SubSentence(s.id, f"surroundings{j}", tuple(tokens), s.relation)


def extract(s, tag):
    """Apply the extraction method named by ``tag`` (see ``EXTRACTION_TAGS``)."""
    if tag == "original":
        return SubSentence(s.id, "original", s.tokens, s.relation)
    if tag == "span":
        return extract_span(s)
    if tag.startswith("spanBA") and tag[6:].isdigit():
        return extract_span_ba(s, int(tag[6:]))
    if tag.startswith("surroundings") and tag[12:].isdigit():
        return extract_surroundings(s, int(tag[12:]))
    raise ParameterError(f"unknown extraction tag {tag!r}")


def check_tag(tag):
    if tag not in EXTRACTION_TAGS:
        raise ParameterError(f"unknown extraction tag {tag!r}")
    return tag


class SubSentenceExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping sentences to sub-sentences of one method."""

    def __init__(self, method="span"):
        self.method = method

    def fit(self, X, y=None):
        check_tag(self.method)
        return self

    def transform(self, X):
        check_tag(self.method)
        return [extract(s, self.method) for s in X]


def corpus_statistics(sentences, reference_relation="contains"):
    """Sentence-length, span-length and relation-frequency statistics."""
    if not sentences:
        return {"sentences": 0}
    lengths = np.array([len(s.tokens) for s in sentences])
    span_lengths = np.array([len(extract_span(s).tokens) for s in sentences])
    relations = Counter(s.relation for s in sentences)
    return {
        "sentences": len(sentences),
        "relations": len(relations),
        "mean_length": float(lengths.mean()),
        "std_length": float(lengths.std()),
        "max_length": int(lengths.max()),
        "min_length": int(lengths.min()),
        "mean_span_length": float(span_lengths.mean()),
        "std_span_length": float(span_lengths.std()),
        "max_span_length": int(span_lengths.max()),
        "min_span_length": int(span_lengths.min()),
        "relation_fraction": {
            r: c / len(sentences) for r, c in sorted(relations.items())
        },
        "reference_relation_fraction": relations.get(reference_relation, 0)
        / len(sentences),
    }
