"""Sentence embeddings from word vectors, and precomputed embedding files.

Three aggregation embedders are provided as sklearn-style transformers over
token sequences:

* :class:`MeanEmbedder` -- arithmetic mean of the word vectors.
* :class:`DCTEmbedder` -- first ``k`` DCT-II coefficients of every vector
  component, concatenated coefficient-major (output size ``k * d``).
* :class:`GEMEmbedder` -- QR-based novelty / significance / uniqueness
  weighting of the word vectors followed by removal of the dominant corpus
  directions.

Embeddings produced elsewhere enter through the ``EMB1`` binary format
(:func:`read_embedding_set` / :func:`write_embedding_set`).
"""

import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DegenerateColumnError,
    DimensionError,
    EmptyEmbeddingError,
    EmptyInputError,
    FormatError,
    JoinError,
    ParameterError,
)
from .linalg import dct_coefficients, qr_decompose, top_eigenvectors

logger = logging.getLogger(__name__)

OOV_POLICIES = ("skip", "zero")
EMB_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sQQ")


class WordVectorTable:
    """Read-only token -> vector lookup backed by one ``(vocab, d)`` matrix."""

    def __init__(self, tokens, vectors, oov_policy="skip"):
        if oov_policy not in OOV_POLICIES:
            raise ParameterError(f"oov_policy must be one of {OOV_POLICIES}")
        vectors = np.asarray(vectors, dtype=np.float64)
        tokens = list(tokens)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise DimensionError("need one vector row per token")
        if len(tokens) and vectors.shape[1] == 0:
            raise DimensionError("word vectors must have d > 0")
        if not np.all(np.isfinite(vectors)):
            raise ParameterError("word vectors contain non-finite values")
        self.index = {t: i for i, t in enumerate(tokens)}
        self.vectors = vectors
        self.oov_policy = oov_policy

    @classmethod
    def from_dict(cls, mapping, oov_policy="skip"):
        tokens = list(mapping)
        if not tokens:
            return cls([], np.zeros((0, 0)), oov_policy)
        return cls(tokens, np.array([mapping[t] for t in tokens]), oov_policy)

    @property
    def dimension(self):
        return self.vectors.shape[1] if len(self.index) else None

    def __len__(self):
        return len(self.index)

    def __contains__(self, token):
        return token in self.index

    def with_policy(self, oov_policy):
        out = WordVectorTable.__new__(WordVectorTable)
        out.index, out.vectors = self.index, self.vectors
        if oov_policy not in OOV_POLICIES:
            raise ParameterError(f"oov_policy must be one of {OOV_POLICIES}")
        out.oov_policy = oov_policy
        return out

    def lookup(self, tokens, sentence_id=None):
        """Stack the vectors of ``tokens`` into an ``(n, d)`` matrix.

        Unknown tokens are dropped (``skip``) or contribute zero rows
        (``zero``). Raises :class:`EmptyEmbeddingError` when nothing resolves.
        """
        if self.dimension is None:
            raise EmptyInputError("word vector table is empty")
        rows = [self.index.get(t, -1) for t in tokens]
        if self.oov_policy == "skip":
            rows = [r for r in rows if r >= 0]
            if not rows:
                raise EmptyEmbeddingError(sentence_id)
            return self.vectors[rows]
        if not rows or all(r < 0 for r in rows):
            raise EmptyEmbeddingError(sentence_id)
        out = np.zeros((len(rows), self.dimension))
        known = np.array([r >= 0 for r in rows])
        out[known] = self.vectors[[r for r in rows if r >= 0]]
        return out


def load_word_vectors(stream, oov_policy="skip"):
    """Parse GloVe-style text (``token v1 ... vd`` per line)."""
    tokens, rows = [], []
    seen = set()
    dim = None
    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        parts = line.rstrip("\n").rstrip("\r").split(" ")
        parts = [p for p in parts if p != ""]
        if not parts:
            continue
        token, values = parts[0], parts[1:]
        if dim is None:
            if not values:
                raise FormatError("no vector components", line=lineno)
            dim = len(values)
        elif len(values) != dim:
            raise FormatError(
                f"expected {dim} components, found {len(values)}", line=lineno
            )
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from exc
        if token in seen:
            logger.warning("duplicate token %r on line %d ignored", token, lineno)
            continue
        seen.add(token)
        tokens.append(token)
        rows.append(vec)
    if not tokens:
        return WordVectorTable([], np.zeros((0, 0)), oov_policy)
    return WordVectorTable(tokens, np.array(rows), oov_policy)


def read_word_vectors(path, oov_policy="skip"):
    with open(path, encoding="utf-8") as fh:
        return load_word_vectors(fh, oov_policy)


def embed_mean(tokens, table, sentence_id=None):
    return table.lookup(tokens, sentence_id).mean(axis=0)


def embed_dct(tokens, table, k, sentence_id=None):
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    stacked = table.lookup(tokens, sentence_id)
    return dct_coefficients(stacked, k).ravel()


def _as_token_lists(X):
    # Accept token sequences or objects carrying ``.tokens``.
    return [getattr(x, "tokens", x) for x in X]


def _ids_of(X):
    return [getattr(x, "source_id", getattr(x, "id", i)) for i, x in enumerate(X)]


class _TableEmbedder(TransformerMixin, BaseEstimator):
    def fit(self, X=None, y=None):
        if self.table.dimension is None:
            raise EmptyInputError("word vector table is empty")
        self.n_features_in_ = self.table.dimension
        return self

    def _table(self):
        if self.oov_policy is None:
            return self.table
        return self.table.with_policy(self.oov_policy)


class MeanEmbedder(_TableEmbedder):
    def __init__(self, table, oov_policy=None):
        self.table = table
        self.oov_policy = oov_policy

    def transform(self, X):
        table = self._table()
        return np.array(
            [embed_mean(t, table, i) for t, i in zip(_as_token_lists(X), _ids_of(X))]
        ).reshape(len(X), -1)


class DCTEmbedder(_TableEmbedder):
    def __init__(self, table, k=1, oov_policy=None):
        self.table = table
        self.k = k
        self.oov_policy = oov_policy

    def transform(self, X):
        table = self._table()
        return np.array(
            [
                embed_dct(t, table, self.k, i)
                for t, i in zip(_as_token_lists(X), _ids_of(X))
            ]
        ).reshape(len(X), -1)


@dataclass(frozen=True)
class GemParams:
    window_size: int = 7
    corpus_components: int = 3
    power: float = 2.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.window_size < 1:
            raise ParameterError("window_size must be >= 1")
        if self.corpus_components < 0:
            raise ParameterError("corpus_components must be >= 0")


def _context_positions(i, n, window_size, max_context):
    lo = i - (window_size - 1) // 2
    hi = lo + window_size
    ctx = [p for p in range(max(0, lo), min(n, hi)) if p != i]
    if len(ctx) > max_context:
        keep = sorted(ctx, key=lambda p: (abs(p - i), p))[:max_context]
        ctx = sorted(keep)
    return ctx


def word_scores(vectors, i, window_size, directions, singular_values, power=2.0,
                epsilon=1e-12):
    """Novelty, significance and uniqueness scores of word ``i``.

    The context matrix holds the window's other vectors in textual order
    followed by the word's own vector. Context columns that are linearly
    dependent on earlier ones are dropped; ``None`` is returned when the
    word's own column is degenerate.
    """
    n, d = vectors.shape
    ctx = _context_positions(i, n, window_size, d - 1)
    while True:
        try:
            q, r = qr_decompose(vectors[ctx + [i]].T)
        except DegenerateColumnError as exc:
            if exc.column == len(ctx):
                return None
            del ctx[exc.column]
            continue
        break
    r_col = r[:, -1]
    r_last = r_col[-1]
    q_new = q[:, -1]
    novelty = np.exp(r_last / (np.sqrt(r_col @ r_col) + epsilon))
    significance = r_last / window_size
    weights = np.asarray(singular_values, dtype=np.float64) ** power
    if weights.size and weights.sum() > 0:
        overlap = (np.asarray(directions) @ q_new) ** 2
        uniqueness = np.exp(-(weights @ overlap) / weights.sum())
    else:
        uniqueness = 1.0
    return float(novelty), float(significance), float(uniqueness)


class GEMEmbedder(_TableEmbedder):
    """Geometric weighting of word vectors with corpus-direction removal.

    ``fit`` learns the corpus basis: the leading right singular vectors (and
    singular values) of the matrix of per-sentence mean vectors. ``transform``
    weights each word by ``novelty + significance + uniqueness`` computed
    from the QR factorisation of its context window, sums, and removes the
    component along the corpus directions.

    ``weighting="uniform"`` sets every weight to 1 (diagnostic mode).
    """

    def __init__(self, table, window_size=7, corpus_components=3, power=2.0,
                 epsilon=1e-12, weighting="gem", oov_policy=None):
        self.table = table
        self.window_size = window_size
        self.corpus_components = corpus_components
        self.power = power
        self.epsilon = epsilon
        self.weighting = weighting
        self.oov_policy = oov_policy

    @classmethod
    def from_params(cls, table, params, **kwargs):
        return cls(table, window_size=params.window_size,
                   corpus_components=params.corpus_components,
                   power=params.power, epsilon=params.epsilon, **kwargs)

    def fit(self, X, y=None):
        super().fit()
        GemParams(self.window_size, self.corpus_components, self.power, self.epsilon)
        if self.weighting not in ("gem", "uniform"):
            raise ParameterError(f"unknown weighting {self.weighting!r}")
        table = self._table()
        token_lists = _as_token_lists(X)
        if not token_lists:
            raise EmptyInputError("GEM needs a non-empty corpus")
        means = np.array(
            [embed_mean(t, table, i) for t, i in zip(token_lists, _ids_of(X))]
        )
        k = min(self.corpus_components, self.n_features_in_)
        if k > 0:
            vals, vecs = top_eigenvectors(means.T @ means, k)
            self.singular_values_ = np.sqrt(vals)
            self.components_ = vecs
        else:
            self.singular_values_ = np.zeros(0)
            self.components_ = np.zeros((0, self.n_features_in_))
        return self

    def sentence_weights(self, tokens, sentence_id=None):
        """Per-resolved-word weights and the stacked word vectors."""
        check_is_fitted(self, "components_")
        vectors = self._table().lookup(tokens, sentence_id)
        if self.weighting == "uniform":
            return np.ones(len(vectors)), vectors
        alphas = np.zeros(len(vectors))
        for i in range(len(vectors)):
            scores = word_scores(vectors, i, self.window_size, self.components_,
                                 self.singular_values_, self.power, self.epsilon)
            if scores is not None:
                alphas[i] = sum(scores)
        return alphas, vectors

    def transform(self, X):
        check_is_fitted(self, "components_")
        out = np.empty((len(X), self.n_features_in_))
        for row, (tokens, sid) in enumerate(zip(_as_token_lists(X), _ids_of(X))):
            alphas, vectors = self.sentence_weights(tokens, sid)
            v = alphas @ vectors
            if len(self.components_):
                v = v - self.components_.T @ (self.components_ @ v)
            out[row] = v
        return out


def embed_gem(corpus_tokens, table, params=GemParams()):
    return GEMEmbedder.from_params(table, params).fit_transform(corpus_tokens)


@dataclass
class EmbeddingSet:
    ids: list
    vectors: np.ndarray
    labels: list = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2:
            self.vectors = self.vectors.reshape(len(self.ids), -1)
        if self.vectors.shape[0] != len(self.ids):
            raise DimensionError("ids and vector rows differ in count")
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise DimensionError("labels and ids differ in count")
        if not np.all(np.isfinite(self.vectors)):
            raise ParameterError("embedding set contains non-finite values")

    def __len__(self):
        return len(self.ids)

    @property
    def dimension(self):
        return self.vectors.shape[1]

    def with_labels(self, labels):
        return EmbeddingSet(self.ids, self.vectors, list(labels), dict(self.provenance))


def write_embedding_set(es, stream):
    """Serialise to ``EMB1``: header, float32 LE row-major payload, ids."""
    vectors = np.ascontiguousarray(es.vectors, dtype="<f4")
    n, d = vectors.shape
    for i in es.ids:
        if "\n" in i:
            raise FormatError(f"id {i!r} contains a newline")
    stream.write(_HEADER.pack(EMB_MAGIC, n, d))
    stream.write(vectors.tobytes())
    stream.write("".join(f"{i}\n" for i in es.ids).encode("utf-8"))


def save_embedding_set(es, path):
    with open(path, "wb") as fh:
        write_embedding_set(es, fh)


def read_embedding_set(stream):
    header = stream.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise FormatError("truncated header")
    magic, n, d = _HEADER.unpack(header)
    if magic != EMB_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    nbytes = n * d * 4
    payload = stream.read(nbytes)
    if len(payload) < nbytes:
        raise FormatError(f"truncated payload: {len(payload)} of {nbytes} bytes")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    text = stream.read().decode("utf-8")
    ids = text.split("\n")
    if ids and ids[-1] == "":
        ids.pop()
    if len(ids) != n:
        raise FormatError(f"expected {n} ids, found {len(ids)}")
    return EmbeddingSet(ids, vectors.astype(np.float32))


def load_embedding_set(path_or_stream, sentences=None):
    """Read an ``EMB1`` file and, given sentences, attach labels by id."""
    if isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__"):
        with open(path_or_stream, "rb") as fh:
            es = read_embedding_set(fh)
    else:
        es = read_embedding_set(path_or_stream)
    if sentences is not None:
        es = join_labels(es, sentences)
    return es


def join_labels(es, sentences):
    by_id = {s.id: s.relation for s in sentences}
    missing = [i for i in es.ids if i not in by_id]
    if missing:
        raise JoinError(missing)
    return es.with_labels([by_id[i] for i in es.ids])


def embedding_set_bytes(es):
    buf = io.BytesIO()
    write_embedding_set(es, buf)
    return buf.getvalue()
