"""Threshold similarity graphs over embedding sets and their analyses.

Two embeddings are joined when their Euclidean distance is strictly below a
threshold, by default the mean distance between same-label embeddings.
Only rows that gain at least one edge become vertices. The graph is held in
compressed sparse row form (``indptr`` / 32-bit ``indices``) with sorted
neighbour lists, built strip by strip so memory stays proportional to the
edge count rather than to ``n**2``.
"""

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .exceptions import DegenerateLabelsError, DimensionError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_PAIR_CAP = 10**8
# Pairs whose matmul-based squared distance lies within this relative band of
# the decision boundary are recomputed from explicit differences.
_BAND = 1e-9
_STRIP_ELEMENTS = 4_000_000


@dataclass
class SimilarityGraph:
    vertex_rows: np.ndarray  # graph vertex -> embedding row, ascending
    indptr: np.ndarray
    indices: np.ndarray
    threshold: float
    n_rows: int

    @property
    def vertex_count(self):
        return len(self.vertex_rows)

    @property
    def edge_count(self):
        return len(self.indices) // 2

    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def iter_edges(self, chunk_vertices=65536):
        """Yield ``(u, v)`` arrays with ``u < v`` in lexicographic order."""
        for lo in range(0, self.vertex_count, chunk_vertices):
            hi = min(lo + chunk_vertices, self.vertex_count)
            seg = self.indices[self.indptr[lo]:self.indptr[hi]]
            src = np.repeat(np.arange(lo, hi, dtype=np.int64),
                            np.diff(self.indptr[lo:hi + 1]))
            keep = src < seg
            yield src[keep], seg[keep].astype(np.int64)

    def edge_array(self):
        parts = list(self.iter_edges())
        if not parts:
            return np.zeros((0, 2), dtype=np.int64)
        return np.column_stack([np.concatenate([p[0] for p in parts]),
                                np.concatenate([p[1] for p in parts])])


def _as_vectors(x):
    return check_array(getattr(x, "vectors", x), dtype=np.float64,
                       ensure_min_samples=0)


def _strip_rows(n):
    return int(min(1024, max(16, _STRIP_ELEMENTS // max(n, 1))))


def _strip_neighbors(x, sq, lo, hi, threshold):
    """Sorted neighbour columns of rows ``lo:hi`` (and per-row counts)."""
    t2 = threshold * threshold
    d2 = x[lo:hi] @ x.T
    d2 *= -2.0
    d2 += sq[None, :]
    d2 += sq[lo:hi, None]
    mask = d2 < t2
    tol = _BAND * (sq[lo:hi] + sq.max()) + 1e-300
    d2 -= t2
    np.abs(d2, out=d2)
    rows, cols = np.nonzero(d2 <= tol[:, None])
    del d2
    if len(rows):
        diff = x[lo + rows] - x[cols]
        exact = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        mask[rows, cols] = exact < threshold
    span = np.arange(hi - lo)
    mask[span, lo + span] = False
    counts = np.count_nonzero(mask, axis=1)
    cols = np.nonzero(mask)[1].astype(np.int32)
    return counts, cols


def build_sesg(x, threshold, n_jobs=1):
    """Graph with an edge for every pair at distance strictly below ``threshold``.

    Distances use 64-bit arithmetic; pairs close to the threshold are
    re-decided from explicit coordinate differences, which is symmetric in
    the pair, so the result does not depend on ``n_jobs`` or evaluation
    order.
    """
    if not threshold >= 0:
        raise ParameterError(f"threshold must be >= 0, got {threshold}")
    x = _as_vectors(x)
    n = len(x)
    if n >= 2**31:
        raise DimensionError("too many rows for 32-bit vertex ids")
    sq = np.einsum("ij,ij->i", x, x)
    step = _strip_rows(n)
    strips = [(lo, min(lo + step, n)) for lo in range(0, n, step)]

    def work(bounds):
        return _strip_neighbors(x, sq, bounds[0], bounds[1], threshold)

    counts = np.zeros(n, dtype=np.int64)
    pieces = []
    if n_jobs == 1 or len(strips) <= 1:
        results = map(work, strips)
        for (lo, hi), (c, cols) in zip(strips, results):
            counts[lo:hi] = c
            pieces.append(cols)
    else:
        workers = None if n_jobs in (None, -1) else n_jobs
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for (lo, hi), (c, cols) in zip(strips, pool.map(work, strips)):
                counts[lo:hi] = c
                pieces.append(cols)
    return _compact(counts, pieces, threshold, n)


def _compact(counts, pieces, threshold, n):
    indices = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int32)
    del pieces[:]
    vertex_rows = np.flatnonzero(counts > 0)
    remap = np.full(n, -1, dtype=np.int32)
    remap[vertex_rows] = np.arange(len(vertex_rows), dtype=np.int32)
    chunk = 1 << 24
    for lo in range(0, len(indices), chunk):
        indices[lo:lo + chunk] = remap[indices[lo:lo + chunk]]
    indptr = np.zeros(len(vertex_rows) + 1, dtype=np.int64)
    np.cumsum(counts[vertex_rows], out=indptr[1:])
    return SimilarityGraph(vertex_rows, indptr, indices, float(threshold), n)


@dataclass
class ThresholdEstimate:
    value: float
    mode: str  # "exact" or "sampled"
    pairs: int
    total_pairs: int


def _group_pair_distance_sum(xg):
    sq = np.einsum("ij,ij->i", xg, xg)
    m = len(xg)
    step = _strip_rows(m)
    total = 0.0
    for lo in range(0, m, step):
        hi = min(lo + step, m)
        d2 = sq[lo:hi, None] + sq[None, lo:] - 2.0 * (xg[lo:hi] @ xg[lo:].T)
        tiny = np.nonzero(d2 <= _BAND * (sq[lo:hi, None] + sq[None, lo:]))
        if len(tiny[0]):
            diff = xg[lo + tiny[0]] - xg[lo + tiny[1]]
            d2[tiny] = np.einsum("ij,ij->i", diff, diff)
        upper = np.triu(np.ones(d2.shape, dtype=bool), k=1)
        total += float(np.sqrt(np.maximum(d2[upper], 0.0)).sum())
    return total


def estimate_threshold(x, labels, pair_cap=DEFAULT_PAIR_CAP, seed=42, relation=None):
    """Mean distance over same-label pairs, exact or from ``pair_cap`` samples."""
    x = _as_vectors(x)
    labels = np.asarray(labels)
    if len(labels) != len(x):
        raise DimensionError("labels and vectors differ in length")
    values, inverse = np.unique(labels, return_inverse=True)
    groups = [np.flatnonzero(inverse == g) for g in range(len(values))]
    if relation is not None:
        groups = [g for g, v in zip(groups, values) if v == relation]
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    pair_counts = sizes * (sizes - 1) // 2
    total = int(pair_counts.sum())
    if total == 0:
        raise DegenerateLabelsError("no pair of embeddings shares a label")
    if total <= pair_cap:
        dist_sum = sum(_group_pair_distance_sum(x[g]) for g in groups if len(g) > 1)
        return ThresholdEstimate(dist_sum / total, "exact", total, total)

    rng = np.random.default_rng(seed)
    probs = pair_counts / total
    chunk = max(1, 20_000_000 // max(x.shape[1], 1))
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    flat = np.concatenate(groups)
    dist_sum = 0.0
    drawn = 0
    while drawn < pair_cap:
        m = min(chunk, pair_cap - drawn)
        which = rng.choice(len(groups), size=m, p=probs)
        size = sizes[which]
        i = rng.integers(0, size)
        j = rng.integers(0, size - 1)
        j = j + (j >= i)
        a = flat[starts[which] + i]
        b = flat[starts[which] + j]
        diff = x[a] - x[b]
        dist_sum += float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).sum())
        drawn += m
    return ThresholdEstimate(dist_sum / pair_cap, "sampled", pair_cap, total)


def same_label_mean_distance(x, labels, pair_cap=DEFAULT_PAIR_CAP, seed=42):
    return estimate_threshold(x, labels, pair_cap, seed).value


def density(g, n_basis=None):
    """Edges over possible edges among ``n_basis`` vertices."""
    if n_basis is None:
        n_basis = g.vertex_count
    if n_basis < 2:
        raise ParameterError(f"density needs n_basis >= 2, got {n_basis}")
    edges = g.edge_count if hasattr(g, "edge_count") else int(g)
    return edges / (n_basis * (n_basis - 1) / 2.0)


def degree_histogram(g):
    hist = np.bincount(g.degrees()) if g.vertex_count else np.zeros(0, dtype=np.int64)
    return {int(d): int(c) for d, c in enumerate(hist) if c}


def max_degree(g):
    """``(highest degree, number of vertices attaining it)``."""
    deg = g.degrees()
    if not len(deg):
        return 0, 0
    top = int(deg.max())
    return top, int(np.count_nonzero(deg == top))


@dataclass
class Components:
    component_of: np.ndarray  # per vertex: smallest vertex id in its component
    roots: np.ndarray  # component ids, largest component first
    sizes: np.ndarray

    def members(self, rank):
        return np.flatnonzero(self.component_of == self.roots[rank])


def _min_neighbor_label(g, label, chunk=1 << 22):
    out = np.empty(g.vertex_count, dtype=label.dtype)
    v = 0
    while v < g.vertex_count:
        # Grow the row range until it covers roughly ``chunk`` entries.
        hi = int(np.searchsorted(g.indptr, g.indptr[v] + chunk, side="right")) - 1
        hi = min(max(hi, v + 1), g.vertex_count)
        seg = label[g.indices[g.indptr[v]:g.indptr[hi]]]
        out[v:hi] = np.minimum.reduceat(seg, g.indptr[v:hi] - g.indptr[v])
        v = hi
    return out


def connected_components(g):
    """Components by union-find with min-root hooking and full path compression.

    Every round hooks each root under the smallest root seen across its
    vertices' edges, then compresses all paths; it stops once no edge joins
    two different roots. Each component is identified by its smallest vertex.
    """
    n = g.vertex_count
    parent = np.arange(n, dtype=np.int64)
    while n:
        nb = _min_neighbor_label(g, parent)
        if np.all(nb >= parent):
            break
        np.minimum.at(parent, parent.copy(), nb)
        np.minimum(parent, nb, out=parent)
        while True:
            jumped = parent[parent]
            if np.array_equal(jumped, parent):
                break
            parent = jumped
    roots, sizes = np.unique(parent, return_counts=True)
    order = np.lexsort((roots, -sizes))
    return Components(parent, roots[order], sizes[order])


@dataclass
class DistanceSample:
    sources: list
    histogram: dict  # distance -> count, source itself excluded
    unreachable: int
    max_distance: int

    def fraction_below(self, d):
        total = sum(self.histogram.values())
        if not total:
            return 0.0
        return sum(c for k, c in self.histogram.items() if k < d) / total


def bfs_distances(g, source):
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    level = 0
    while len(frontier):
        level += 1
        starts = g.indptr[frontier]
        lengths = g.indptr[frontier + 1] - starts
        total = int(lengths.sum())
        offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
        nb = g.indices[offsets + np.arange(total)]
        nb = nb[dist[nb] < 0]
        frontier = np.unique(nb).astype(np.int64)
        dist[frontier] = level
    return dist


def sample_shortest_paths(g, fraction=0.001, seed=42):
    """Unweighted shortest-path lengths from a seeded sample of sources."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    n = g.vertex_count
    if n == 0:
        return DistanceSample([], {}, 0, 0)
    count = max(1, math.ceil(fraction * n))
    rng = np.random.default_rng(seed)
    sources = np.sort(rng.choice(n, size=min(count, n), replace=False))
    hist = np.zeros(1, dtype=np.int64)
    unreachable = 0
    for s in sources:
        dist = bfs_distances(g, int(s))
        unreachable += int(np.count_nonzero(dist < 0))
        found = np.bincount(dist[dist > 0])
        if len(found) > len(hist):
            found[:len(hist)] += hist
            hist = found
        else:
            hist[:len(found)] += found
    histogram = {int(d): int(c) for d, c in enumerate(hist) if c and d > 0}
    return DistanceSample([int(s) for s in sources], histogram, unreachable,
                          max(histogram, default=0))


def label_distribution(component, labels):
    """Fraction of each label among the vertices of ``component``."""
    labels = np.asarray(labels)
    chosen = labels[np.asarray(component, dtype=np.int64)]
    if len(chosen) == 0:
        raise ParameterError("component is empty")
    values, counts = np.unique(chosen, return_counts=True)
    return {str(v): c / len(chosen) for v, c in zip(values, counts)}


@dataclass
class HubNeighborhood:
    hubs: list
    vertices: list
    edges: list
    density: float
    degree: int


def hub_neighborhood(g, n_hubs=2, neighbors_per_hub=20, seed=42):
    """Induced subgraph around randomly chosen maximum-degree vertices."""
    if g.vertex_count == 0:
        raise ParameterError("graph is empty")
    rng = np.random.default_rng(seed)
    deg = g.degrees()
    top = int(deg.max())
    tied = np.flatnonzero(deg == top)
    if n_hubs > len(tied):
        warnings.warn(
            f"only {len(tied)} vertices have the maximum degree; using all",
            stacklevel=2,
        )
        n_hubs = len(tied)
    hubs = np.sort(rng.choice(tied, size=n_hubs, replace=False))
    chosen = set(int(h) for h in hubs)
    for h in hubs:
        nbrs = g.neighbors(int(h))
        take = min(neighbors_per_hub, len(nbrs))
        chosen.update(int(v) for v in rng.choice(nbrs, size=take, replace=False))
    vertices = np.array(sorted(chosen), dtype=np.int64)
    edges = []
    for u in vertices:
        common = np.intersect1d(g.neighbors(int(u)), vertices, assume_unique=True)
        edges.extend((int(u), int(v)) for v in common if v > u)
    k = len(vertices)
    dens = len(edges) / (k * (k - 1) / 2.0) if k >= 2 else 0.0
    return HubNeighborhood([int(h) for h in hubs], vertices.tolist(), edges, dens, top)


def node_link_records(g, hood, labels=None):
    """Line-oriented node/link records of a hub neighbourhood for plotting."""
    deg = g.degrees()
    hubs = set(hood.hubs)
    records = []
    for v in hood.vertices:
        rec = {"type": "node", "id": v, "row": int(g.vertex_rows[v]),
               "degree": int(deg[v]), "hub": v in hubs}
        rec["label"] = None if labels is None else str(labels[g.vertex_rows[v]])
        records.append(rec)
    records.extend({"type": "link", "source": u, "target": v} for u, v in hood.edges)
    return records


def write_edge_list(g, stream):
    for u, v in g.iter_edges():
        stream.write("".join(f"{a}\t{b}\n" for a, b in zip(u.tolist(), v.tolist())))


def write_vertex_table(g, stream, labels=None):
    for v, row in enumerate(g.vertex_rows.tolist()):
        label = "" if labels is None else labels[row]
        stream.write(f"{v}\t{row}\t{label}\n")


def write_node_link(records, stream):
    for rec in records:
        stream.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class GraphReport:
    threshold: float
    threshold_mode: str
    vertex_count: int
    edge_count: int
    density: float
    density_all_rows: float
    degree_histogram: dict
    max_degree: int
    max_degree_count: int
    component_count: int
    component_sizes: list
    components: list = field(default_factory=list)
    largest_component_density: float = 0.0
    sampled_distances: dict = field(default_factory=dict)
    unreachable_pairs: int = 0
    max_sampled_distance: int = 0
    hub_neighborhood_density: float = 0.0

    def as_dict(self):
        d = asdict(self)
        d["degree_histogram"] = {str(k): v for k, v in self.degree_histogram.items()}
        d["sampled_distances"] = {str(k): v for k, v in self.sampled_distances.items()}
        return d


def _safe_density(edges, basis):
    return edges / (basis * (basis - 1) / 2.0) if basis >= 2 else 0.0


def analyze(g, row_labels=None, sample_fraction=0.001, seed=42, n_hubs=2,
            neighbors_per_hub=20, top_components=10, threshold_mode="given"):
    """Run the five network analyses; returns ``(GraphReport, HubNeighborhood)``."""
    vertex_labels = None
    if row_labels is not None:
        vertex_labels = np.asarray(row_labels)[g.vertex_rows]
    top, top_count = max_degree(g)
    comps = connected_components(g)
    described = []
    largest_density = 0.0
    for rank in range(min(top_components, len(comps.roots))):
        members = comps.members(rank)
        entry = {"id": int(comps.roots[rank]), "size": int(comps.sizes[rank])}
        if vertex_labels is not None:
            entry["label_distribution"] = label_distribution(members, vertex_labels)
        if rank == 0:
            edges = int(g.degrees()[members].sum() // 2)
            largest_density = _safe_density(edges, len(members))
            entry["edges"] = edges
        described.append(entry)
    hood = None
    distances = DistanceSample([], {}, 0, 0)
    if g.vertex_count:
        distances = sample_shortest_paths(g, sample_fraction, seed)
        hood = hub_neighborhood(g, n_hubs, neighbors_per_hub, seed)
    report = GraphReport(
        threshold=g.threshold,
        threshold_mode=threshold_mode,
        vertex_count=g.vertex_count,
        edge_count=g.edge_count,
        density=_safe_density(g.edge_count, g.vertex_count),
        density_all_rows=_safe_density(g.edge_count, g.n_rows),
        degree_histogram=degree_histogram(g),
        max_degree=top,
        max_degree_count=top_count,
        component_count=len(comps.roots),
        component_sizes=[int(s) for s in comps.sizes],
        components=described,
        largest_component_density=largest_density,
        sampled_distances=distances.histogram,
        unreachable_pairs=distances.unreachable,
        max_sampled_distance=distances.max_distance,
        hub_neighborhood_density=hood.density if hood else 0.0,
    )
    return report, hood


class SimilarityGraphBuilder(BaseEstimator):
    """Estimator that fits a :class:`SimilarityGraph` to an embedding matrix.

    ``threshold="same_label_mean"`` derives it from the labels passed as
    ``y``; a number is used as is.
    """

    def __init__(self, threshold="same_label_mean", pair_cap=DEFAULT_PAIR_CAP,
                 random_state=42, n_jobs=1):
        self.threshold = threshold
        self.pair_cap = pair_cap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        x = _as_vectors(X)
        if y is None:
            y = getattr(X, "labels", None)
        if isinstance(self.threshold, str):
            if self.threshold != "same_label_mean":
                raise ParameterError(f"unknown threshold mode {self.threshold!r}")
            if y is None:
                raise ParameterError("same_label_mean threshold needs labels")
            self.threshold_estimate_ = estimate_threshold(
                x, y, self.pair_cap, self.random_state
            )
            self.threshold_ = self.threshold_estimate_.value
            self.threshold_mode_ = self.threshold_estimate_.mode
        else:
            self.threshold_ = float(self.threshold)
            self.threshold_mode_ = "given"
        self.graph_ = build_sesg(x, self.threshold_, self.n_jobs)
        return self
