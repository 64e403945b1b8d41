class OccLabelError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class FormatError(OccLabelError):
    """A file does not match its binary or JSON layout."""

    exit_code = 2

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        parts = []
        if path is not None:
            parts.append(str(path))
        if offset is not None:
            parts.append(f"byte {offset}")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class IngestionError(OccLabelError):
    """A frame referenced by the manifest cannot be loaded."""

    exit_code = 2


class ConfigError(OccLabelError):
    exit_code = 3


class EvaluationError(OccLabelError):
    """Prediction and ground truth cannot be compared."""

    exit_code = 4
