"""Reference model-backend service for the shared wire protocol."""

from .app import create_app
from .config import ROLES, ServiceConfig
from .conformance import CheckResult, ConformanceReport, conformance
from .errors import (
    ConfigError,
    InferenceError,
    ModelLoadError,
    ModelServeError,
    TargetUnreachable,
)
from .models import OvdOutput, SpyOVD, StubLLM, StubOVD, StubVQA, resolve_model

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "ConfigError",
    "ConformanceReport",
    "InferenceError",
    "ModelLoadError",
    "ModelServeError",
    "OvdOutput",
    "ROLES",
    "ServiceConfig",
    "SpyOVD",
    "StubLLM",
    "StubOVD",
    "StubVQA",
    "TargetUnreachable",
    "conformance",
    "create_app",
    "resolve_model",
]
