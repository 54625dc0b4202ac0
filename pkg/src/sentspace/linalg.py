"""Dense numerical kernels: distances, DCT-II, Gram-Schmidt QR, PCA and KL."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DegenerateColumnError,
    DimensionError,
    EmptyInputError,
    ParameterError,
)

PMF_SUM_TOL = 1e-9
DEFAULT_KL_EPSILON = 1e-10


def euclidean_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def dct_basis(n, k):
    """Orthonormal DCT-II basis as a ``(k, n)`` matrix; rows ``>= n`` are zero."""
    basis = np.zeros((k, n))
    m = min(k, n)
    idx = np.arange(n) + 0.5
    freqs = np.arange(m)[:, None]
    basis[:m] = np.sqrt(2.0 / n) * np.cos(np.pi / n * idx[None, :] * freqs)
    basis[0] = np.sqrt(1.0 / n)
    return basis


def dct_coefficients(series, k):
    """First ``k`` DCT-II coefficients of ``series`` along axis 0.

    ``coef[0] = sqrt(1/N) * sum(c)`` and
    ``coef[j] = sqrt(2/N) * sum(c[n] * cos(pi/N * (n + 1/2) * j))``.
    Coefficients with ``j >= N`` are zero. A 2-D input is transformed
    column by column and gives a ``(k, cols)`` result.
    """
    c = np.asarray(series, dtype=np.float64)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if c.ndim == 0 or c.shape[0] == 0:
        raise EmptyInputError("empty series")
    return dct_basis(c.shape[0], k) @ c


def qr_decompose(a, tol=1e-12):
    """Thin QR by modified Gram-Schmidt with one re-orthogonalisation pass.

    Returns ``q`` (rows x cols, orthonormal columns) and ``r`` (cols x cols,
    upper triangular, non-negative diagonal). A column whose residual after
    projection is below ``tol`` times its original norm raises
    :class:`DegenerateColumnError` carrying the column index.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError("qr_decompose expects a 2-D matrix")
    rows, cols = a.shape
    if rows < cols:
        raise DimensionError(f"need rows >= cols, got {rows}x{cols}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("matrix contains non-finite values")
    q = np.empty((rows, cols))
    r = np.zeros((cols, cols))
    for j in range(cols):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                c = q[:, i] @ v
                r[i, j] += c
                v -= c * q[:, i]
        norm = np.sqrt(v @ v)
        scale = np.sqrt(a[:, j] @ a[:, j])
        if norm <= tol * scale or norm == 0.0:
            raise DegenerateColumnError(j, norm)
        r[j, j] = norm
        q[:, j] = v / norm
    return q, r


def _fix_signs(vectors):
    # Make the largest-magnitude entry of each row positive.
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def top_eigenvectors(sym, n_components):
    """Leading eigenpairs of a symmetric PSD matrix, largest first.

    Eigenvalues are clipped at zero; eigenvector signs follow the
    largest-magnitude-positive convention so results are reproducible.
    """
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals, kind="stable")[::-1][:n_components]
    vals = np.clip(vals[order], 0.0, None)
    return vals, _fix_signs(vecs[:, order].T)


class PCA(TransformerMixin, BaseEstimator):
    """Principal component projection via the covariance eigendecomposition.

    Parameters
    ----------
    n_components : int
        Number of retained directions.

    Attributes
    ----------
    mean_ : ndarray of shape (n_features,)
    components_ : ndarray of shape (n_components, n_features)
        Orthonormal rows, sorted by decreasing variance.
    explained_variance_ : ndarray of shape (n_components,)
    explained_variance_ratio_ : ndarray of shape (n_components,)
    total_variance_ : float
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        if self.n_components < 1 or self.n_components > d:
            raise DimensionError(
                f"n_components={self.n_components} invalid for {d} features"
            )
        if n < 2:
            raise EmptyInputError("PCA needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = centered.T @ centered / (n - 1)
        cov = (cov + cov.T) / 2.0
        self.total_variance_ = float(np.trace(cov))
        vals, vecs = top_eigenvectors(cov, self.n_components)
        self.components_ = vecs
        self.explained_variance_ = vals
        if self.total_variance_ > 0:
            self.explained_variance_ratio_ = vals / self.total_variance_
        else:
            self.explained_variance_ratio_ = np.zeros_like(vals)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return (X - self.mean_) @ self.components_.T


def pca_project(x, n_components):
    """Project ``x`` onto its top principal directions.

    Returns ``(projected, explained_variance)``.
    """
    pca = PCA(n_components=n_components).fit(x)
    return pca.transform(x), pca.explained_variance_


def check_pmf(p, name="pmf"):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DimensionError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ParameterError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PMF_SUM_TOL:
        raise ParameterError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def kl_divergence(p, q, epsilon=DEFAULT_KL_EPSILON):
    """KL(p || q) in nats after additive ``epsilon`` smoothing of both sides."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    p = check_pmf(p, "p")
    q = check_pmf(q, "q")
    if p.shape != q.shape:
        raise DimensionError(f"cell count mismatch: {p.size} vs {q.size}")
    cells = p.size
    ps = (p + epsilon) / (1.0 + epsilon * cells)
    qs = (q + epsilon) / (1.0 + epsilon * cells)
    return float(max(np.sum(ps * np.log(ps / qs)), 0.0))
