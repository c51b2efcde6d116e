"""motifcat: motif extraction, cataloguing, and corpus analytics.

The pipeline chunks a corpus of novels, extracts motif sentences per
chunk through a chat model, embeds and clusters them into a motif
catalog, and computes period-level frequency, similarity, and uniqueness
analyses with plot-ready exports. See the README for the CLI walkthrough.
"""

__version__ = "0.1.0"

from .errors import (
    AnalyticsError,
    BackendError,
    ClusteringError,
    ConfigError,
    CorpusError,
    ExtractionError,
    GatewayError,
    MotifcatError,
    ReportError,
    StageError,
)

__all__ = [
    "__version__",
    "MotifcatError",
    "ConfigError",
    "CorpusError",
    "GatewayError",
    "BackendError",
    "ExtractionError",
    "ClusteringError",
    "AnalyticsError",
    "ReportError",
    "StageError",
]
