"""Exception hierarchy shared by all granuscore modules."""


class GranuscoreError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(GranuscoreError, ValueError):
    """A point lies on or outside the Poincaré ball, or a metric is undefined."""


class SpaceMismatchError(GranuscoreError, ValueError):
    """Two embeddings (or an embedding and an index) live in different spaces."""


class UndefinedSimilarityError(GeometryError):
    """Cosine similarity requested for a zero vector."""


class BackendError(GranuscoreError, RuntimeError):
    """An embedding backend failed. Usually worth retrying."""

    retriable = True


class ConfigurationError(GranuscoreError, ValueError):
    pass


class DataError(GranuscoreError, ValueError):
    pass


class FeatureOrderError(GranuscoreError, ValueError):
    """Features were built for a different anchor layout than the model expects."""


class ArchiveError(GranuscoreError, IOError):
    """A model or index archive is truncated, incomplete, or from an unknown format version."""


class CalibrationError(GranuscoreError, RuntimeError):
    pass


class AnnotationError(GranuscoreError, RuntimeError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at character {offset})")
        self.offset = offset


class EmptyInputError(GranuscoreError, ValueError):
    pass


class UndefinedMetricError(GranuscoreError, ValueError):
    pass


class PairingError(GranuscoreError, ValueError):
    pass


class DegenerateTestError(GranuscoreError, ValueError):
    pass


class ResolutionError(GranuscoreError, FileNotFoundError):
    """A required external resource (taxonomy, corpus, model) could not be located."""


class IngestionError(GranuscoreError, ValueError):
    pass


class JudgeTransportError(GranuscoreError, RuntimeError):
    retriable = True
