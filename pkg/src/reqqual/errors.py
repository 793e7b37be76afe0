"""Exception hierarchy shared across the package."""


class ReqqualError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(ReqqualError, ValueError):
    """A caller-supplied argument or configuration violates a contract."""


class StructuralError(ReqqualError, ValueError):
    """Shapes, vocabularies, or headers do not line up with each other."""


class DatasetError(ReqqualError, ValueError):
    """A dataset file is malformed; the message carries line context."""


class TrainingError(ReqqualError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class ArtifactError(ReqqualError, ValueError):
    """A model file is corrupt, truncated, or has an unsupported version."""
