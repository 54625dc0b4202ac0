"""Clusterability, clustering quality and similarity graphs of sentence
embedding spaces."""

__version__ = "0.1.0"

from .cluster import KMeans, evaluate_clustering, kmeans  # noqa: E402
from .corpus import EXTRACTION_TAGS, SubSentenceExtractor, TokenizedSentence, extract  # noqa: E402
from .embed import (  # noqa: E402
    DCTEmbedder,
    EmbeddingSet,
    GEMEmbedder,
    MeanEmbedder,
    WordVectorTable,
)
from .graph import SimilarityGraphBuilder, build_sesg  # noqa: E402
from .linalg import PCA, qr_decompose  # noqa: E402
from .tendency import SpatialHistogram, spatial_histogram  # noqa: E402

__all__ = [
    "DCTEmbedder",
    "EXTRACTION_TAGS",
    "EmbeddingSet",
    "GEMEmbedder",
    "KMeans",
    "MeanEmbedder",
    "PCA",
    "SimilarityGraphBuilder",
    "SpatialHistogram",
    "SubSentenceExtractor",
    "TokenizedSentence",
    "WordVectorTable",
    "build_sesg",
    "evaluate_clustering",
    "extract",
    "kmeans",
    "qr_decompose",
    "spatial_histogram",
]
