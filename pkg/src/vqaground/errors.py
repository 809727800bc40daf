"""Exception types shared across the toolkit."""


class VqaGroundError(Exception):
    """Base class for all toolkit errors."""


# geometry
class ShapeMismatch(VqaGroundError):
    pass


class DegeneratePolygonWarning(UserWarning):
    """All polygon vertices are collinear; the fill is empty."""


# metrics
class InvalidCounts(VqaGroundError):
    pass


class UnknownSample(VqaGroundError):
    pass


class MissingImageSize(VqaGroundError):
    pass


# prompting
class EmptyField(VqaGroundError):
    pass


# backends
class BackendError(VqaGroundError):
    pass


class BackendTimeout(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class BackendUnavailable(BackendError):
    pass


class PromptParseError(BackendError):
    pass


class InvalidThreshold(VqaGroundError):
    pass


class UnknownImage(VqaGroundError):
    pass


# pipeline
class ConfigError(VqaGroundError):
    pass


class OutputNotWritable(VqaGroundError):
    pass


# datasets
class SchemaError(VqaGroundError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        loc = f" (line {line}" + (f", field {field!r})" if field else ")") if line else ""
        super().__init__(f"{message}{loc}")


class DuplicateId(SchemaError):
    pass


class SourceLayoutError(VqaGroundError):
    pass


class MappingDescriptorError(VqaGroundError):
    pass


# rendering
class ImageDecodeError(VqaGroundError):
    pass
