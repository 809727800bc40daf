"""Service-side exception types."""

from __future__ import annotations


class ModelServeError(Exception):
    """Base class for all service errors."""


class ConfigError(ModelServeError):
    """ServiceConfig is malformed (unknown role, bad field, missing model)."""


class ModelLoadError(ModelServeError):
    """A configured model identifier could not be resolved or loaded."""


class InferenceError(ModelServeError):
    """A model failed while handling an otherwise valid request."""


class TargetUnreachable(ModelServeError):
    """The conformance target did not answer its health check."""
