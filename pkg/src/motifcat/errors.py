"""Exception hierarchy for the pipeline.

Every error raised by this package derives from MotifcatError. The CLI maps
ConfigError to exit code 2 and everything else to exit code 1.
"""


class MotifcatError(Exception):
    """Base class for all package errors."""


class ConfigError(MotifcatError):
    """Invalid, unknown, or missing configuration."""


class CorpusError(MotifcatError):
    """Corpus manifest or text file problems."""


class GatewayError(MotifcatError):
    """Backend transport or cache failure."""


class BackendError(GatewayError):
    """Non-success response or transport failure after bounded retries."""


class InvalidRequestError(GatewayError):
    """A request object violates its invariants."""


class ExtractionError(MotifcatError):
    """Motif extraction failed beyond the configured failure threshold."""


class ClusteringError(MotifcatError):
    """Embedding, reduction, or catalog construction failure."""


class AnalyticsError(MotifcatError):
    """Metric computation failure (zero rows, empty periods, bad threshold)."""


class ReportError(MotifcatError):
    """Report emission failure (e.g. unlabeled catalog)."""


class StageError(MotifcatError):
    """A CLI stage cannot run, typically a missing predecessor artifact."""
