"""K-means clustering and label-aligned clustering-quality metrics."""

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionError, EmptyInputError, ParameterError

METRICS = (
    "purity",
    "f_measure",
    "rand_index",
    "homogeneity",
    "mutual_information",
    "completeness",
    "v_measure",
    "fowlkes_mallows",
)

# Which variant of each metric is reported.
METRIC_VARIANTS = {
    "purity": "sum of per-cluster majority counts / n",
    "f_measure": "pairwise F1 = 2TP/(2TP+FP+FN)",
    "rand_index": "unadjusted Rand index",
    "homogeneity": "1 - H(labels|clusters)/H(labels)",
    "mutual_information": "unnormalised mutual information, nats",
    "completeness": "1 - H(clusters|labels)/H(clusters)",
    "v_measure": "harmonic mean of homogeneity and completeness",
    "fowlkes_mallows": "TP/sqrt((TP+FP)(TP+FN))",
}

_ASSIGN_CHUNK = 4096


@dataclass
class ClusterAssignment:
    assignments: np.ndarray
    k: int
    inertia: float
    centers: np.ndarray = None
    n_iter: int = 0
    inertia_history: list = field(default_factory=list)


def _as_matrix(x):
    return check_array(getattr(x, "vectors", x), dtype=np.float64)


def _sq_distances(x, x_sq, centers):
    c_sq = np.einsum("ij,ij->i", centers, centers)
    d = x_sq[:, None] - 2.0 * (x @ centers.T) + c_sq[None, :]
    return np.maximum(d, 0.0)


def _assign(x, x_sq, centers):
    labels = np.empty(len(x), dtype=np.int64)
    dists = np.empty(len(x))
    for lo in range(0, len(x), _ASSIGN_CHUNK):
        hi = lo + _ASSIGN_CHUNK
        d = _sq_distances(x[lo:hi], x_sq[lo:hi], centers)
        labels[lo:hi] = np.argmin(d, axis=1)
        dists[lo:hi] = d[np.arange(len(d)), labels[lo:hi]]
    return labels, dists


def kmeans_plus_plus(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    first = rng.integers(n)
    centers[0] = x[first]
    closest = np.sum((x - x[first]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total,
                                      side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[c] = x[idx]
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return centers


def kmeans(x, k, seed=42, max_iter=300, tol=1e-4, init=None):
    """Lloyd's algorithm from a seeded k-means++ start.

    Iteration stops once the total squared centroid shift drops below
    ``tol`` times the mean per-feature variance, or after ``max_iter``
    rounds. An emptied cluster is re-seeded with the point lying farthest
    from its current centroid. ``init`` optionally fixes the starting
    centroids.
    """
    x = _as_matrix(x)
    n = len(x)
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    threshold = tol * float(np.mean(np.var(x, axis=0)))
    x_sq = np.einsum("ij,ij->i", x, x)

    if init is None:
        centers = kmeans_plus_plus(x, k, rng)
    else:
        centers = check_array(init, dtype=np.float64, copy=True)
        if centers.shape != (k, x.shape[1]):
            raise DimensionError(f"init must have shape {(k, x.shape[1])}")
    labels, dists = _assign(x, x_sq, centers)
    history = [float(dists.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            movable = counts[labels] > 1
            far = int(np.argmax(np.where(movable, dists, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = empty
            dists[far] = 0.0
            counts[empty] = 1
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        new_centers = sums / counts[:, None]
        shift = float(np.sum((new_centers - centers) ** 2))
        centers = new_centers
        labels, dists = _assign(x, x_sq, centers)
        history.append(float(dists.sum()))
        if shift <= threshold:
            break
    return ClusterAssignment(labels, k, float(dists.sum()), centers, n_iter, history)


class KMeans(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans`."""

    def __init__(self, n_clusters=24, random_state=42, max_iter=300, tol=1e-4):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        result = kmeans(X, self.n_clusters, self.random_state, self.max_iter, self.tol)
        self.labels_ = result.assignments
        self.cluster_centers_ = result.centers
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        self.inertia_history_ = result.inertia_history
        self.n_features_in_ = result.centers.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        x = _as_matrix(X)
        return _assign(x, np.einsum("ij,ij->i", x, x), self.cluster_centers_)[0]


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (clusters, labels)
    clusters: np.ndarray
    labels: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def cluster_sizes(self):
        return self.counts.sum(axis=1)

    @property
    def label_sizes(self):
        return self.counts.sum(axis=0)


def contingency(assignment, labels):
    """Cluster-by-label co-occurrence counts."""
    ids = np.asarray(getattr(assignment, "assignments", assignment))
    labels = np.asarray(labels)
    if ids.shape[0] != labels.shape[0]:
        raise DimensionError(
            f"{ids.shape[0]} assignments vs {labels.shape[0]} labels"
        )
    clusters, ci = np.unique(ids, return_inverse=True)
    values, li = np.unique(labels, return_inverse=True)
    counts = np.zeros((len(clusters), len(values)), dtype=np.int64)
    np.add.at(counts, (ci, li), 1)
    return ContingencyTable(counts, clusters, values)


@dataclass
class EvaluationReport:
    purity: float
    f_measure: float
    rand_index: float
    homogeneity: float
    mutual_information: float
    completeness: float
    v_measure: float
    fowlkes_mallows: float

    def as_dict(self):
        return asdict(self)


def _entropy(sizes, n):
    p = sizes[sizes > 0] / n
    return float(-np.sum(p * np.log(p)))


def _conditional_entropy(counts, given_sizes, n):
    # H(A | B) with B along axis 0 of ``counts``.
    nz = counts > 0
    given = np.broadcast_to(given_sizes[:, None], counts.shape)
    return float(-np.sum(counts[nz] / n * np.log(counts[nz] / given[nz])))


def _pairs(m):
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum(m * (m - 1) / 2.0))


def evaluate(table):
    """All eight clustering-quality metrics of a contingency table.

    Degenerate cases: homogeneity (completeness) is 1 when the labels
    (clusters) carry no entropy; the Rand index is 1 for fewer than two
    points; F1 and Fowlkes-Mallows are 1 when neither partition puts any
    pair together and 0 when only one of them does.
    """
    counts = np.asarray(table.counts, dtype=np.float64)
    n = counts.sum()
    if n < 1:
        raise EmptyInputError("empty contingency table")
    a = counts.sum(axis=1)
    b = counts.sum(axis=0)

    h_labels = _entropy(b, n)
    h_clusters = _entropy(a, n)
    h_labels_given_clusters = _conditional_entropy(counts, a, n)
    h_clusters_given_labels = _conditional_entropy(counts.T, b, n)
    homogeneity = 1.0 if h_labels == 0 else 1.0 - h_labels_given_clusters / h_labels
    completeness = (
        1.0 if h_clusters == 0 else 1.0 - h_clusters_given_labels / h_clusters
    )
    homogeneity = min(max(homogeneity, 0.0), 1.0)
    completeness = min(max(completeness, 0.0), 1.0)
    hc = homogeneity + completeness
    v_measure = 0.0 if hc == 0 else 2.0 * homogeneity * completeness / hc

    nz = counts > 0
    outer = np.outer(a, b)
    mi = float(np.sum(counts[nz] / n * np.log(n * counts[nz] / outer[nz])))
    mi = max(mi, 0.0)

    tp = _pairs(counts)
    same_cluster = _pairs(a)
    same_label = _pairs(b)
    fp = same_cluster - tp
    fn = same_label - tp
    total = n * (n - 1) / 2.0
    tn = total - tp - fp - fn
    rand = 1.0 if total == 0 else (tp + tn) / total
    if same_cluster == 0 and same_label == 0:
        fm = f1 = 1.0
    elif same_cluster == 0 or same_label == 0:
        fm = f1 = 0.0
    else:
        fm = tp / np.sqrt(same_cluster * same_label)
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)

    purity = float(counts.max(axis=1).sum() / n)
    return EvaluationReport(
        purity=purity,
        f_measure=float(f1),
        rand_index=float(rand),
        homogeneity=float(homogeneity),
        mutual_information=mi,
        completeness=float(completeness),
        v_measure=float(v_measure),
        fowlkes_mallows=float(fm),
    )


def evaluate_clustering(assignment, labels):
    return evaluate(contingency(assignment, labels))
