"""Spatial-histogram clustering tendency.

The data are reduced to a few principal components, binned on an
equi-width grid spanning their bounding box, and the resulting empirical
PMF is compared (KL divergence) with the PMFs of ``t`` uniform samples of
the same size drawn in that box. Larger mean divergence means the space is
further from uniform, i.e. more clusterable.
"""

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .exceptions import EmptyInputError, ParameterError
from .linalg import DEFAULT_KL_EPSILON, PCA, kl_divergence


@dataclass(frozen=True)
class SpatHistConfig:
    bins_per_dim: int = 8
    samples: int = 500
    seed: int = 42
    reduce_to: int = 2
    epsilon: float = DEFAULT_KL_EPSILON

    def __post_init__(self):
        if self.bins_per_dim < 2:
            raise ParameterError("bins_per_dim must be >= 2")
        if self.samples < 1:
            raise ParameterError("samples must be >= 1")
        if self.reduce_to < 1:
            raise ParameterError("reduce_to must be >= 1")


@dataclass
class SpatHistResult:
    mean_kl: float
    std_kl: float
    t: int
    b: int

    def as_dict(self):
        return asdict(self)


def bounding_box(points):
    points = np.asarray(points, dtype=np.float64)
    return points.min(axis=0), points.max(axis=0)


def cell_indices(points, b, bbox):
    """Flat row-major grid cell of every point (last bin closed on the right)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    lo, hi = (np.asarray(v, dtype=np.float64) for v in bbox)
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    idx = np.floor((points - lo) / safe * b).astype(np.int64)
    idx = np.clip(idx, 0, b - 1)
    idx[:, width <= 0] = 0
    flat = np.zeros(len(points), dtype=np.int64)
    for dim in range(points.shape[1]):
        flat = flat * b + idx[:, dim]
    return flat


def empirical_pmf(points, b, bbox=None):
    """Binned PMF over ``b ** dims`` equi-width cells of ``bbox``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) == 0:
        raise EmptyInputError("no points to bin")
    if bbox is None:
        bbox = bounding_box(points)
    cells = b ** points.shape[1]
    counts = np.bincount(cell_indices(points, b, bbox), minlength=cells)
    return counts / len(points)


def reduce_dimensions(x, reduce_to):
    """PCA to ``reduce_to`` dims; data already that small is left as is."""
    x = check_array(x, dtype=np.float64)
    if x.shape[1] <= reduce_to:
        return x
    return PCA(n_components=reduce_to).fit_transform(x)


def sample_rng(seed, index):
    # One independent stream per (seed, sample index).
    return np.random.default_rng([seed, index])


def spatial_histogram(x, config=SpatHistConfig()):
    x = check_array(getattr(x, "vectors", x), dtype=np.float64, ensure_min_samples=0)
    if len(x) < 2:
        raise EmptyInputError("spatial histogram needs at least 2 points")
    reduced = reduce_dimensions(x, config.reduce_to)
    return _spatial_histogram_reduced(reduced, config)[0]


def _spatial_histogram_reduced(reduced, config):
    n, dims = reduced.shape
    lo, hi = bounding_box(reduced)
    data_pmf = empirical_pmf(reduced, config.bins_per_dim, (lo, hi))
    divergences = np.empty(config.samples)
    for s in range(config.samples):
        sample = sample_rng(config.seed, s).uniform(lo, hi, size=(n, dims))
        sample_pmf = empirical_pmf(sample, config.bins_per_dim, (lo, hi))
        divergences[s] = kl_divergence(data_pmf, sample_pmf, config.epsilon)
    result = SpatHistResult(
        mean_kl=float(divergences.mean()),
        std_kl=float(divergences.std()),
        t=config.samples,
        b=config.bins_per_dim,
    )
    return result, divergences, (lo, hi)


class SpatialHistogram(BaseEstimator):
    """Estimator form of :func:`spatial_histogram`.

    After ``fit``: ``mean_kl_``, ``std_kl_``, ``divergences_`` (one per
    uniform sample), ``bbox_`` and ``embedding_`` (the reduced data).
    """

    def __init__(self, bins_per_dim=8, samples=500, reduce_to=2, random_state=42,
                 epsilon=DEFAULT_KL_EPSILON):
        self.bins_per_dim = bins_per_dim
        self.samples = samples
        self.reduce_to = reduce_to
        self.random_state = random_state
        self.epsilon = epsilon

    def _config(self):
        return SpatHistConfig(self.bins_per_dim, self.samples, self.random_state,
                              self.reduce_to, self.epsilon)

    def fit(self, X, y=None):
        config = self._config()
        x = check_array(getattr(X, "vectors", X), dtype=np.float64,
                        ensure_min_samples=0)
        if len(x) < 2:
            raise EmptyInputError("spatial histogram needs at least 2 points")
        self.embedding_ = reduce_dimensions(x, config.reduce_to)
        self.result_, self.divergences_, self.bbox_ = _spatial_histogram_reduced(
            self.embedding_, config
        )
        self.mean_kl_ = self.result_.mean_kl
        self.std_kl_ = self.result_.std_kl
        return self
