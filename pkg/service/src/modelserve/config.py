"""Service configuration: which model serves which protocol role."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

ROLES = ("vqa", "llm", "ovd")


@dataclass
class ServiceConfig:
    """Deployment choices for one service instance.

    `models` maps each protocol role to a model identifier understood by the
    model registry (for example ``stub:vqa`` or ``hf:Salesforce/blip-vqa-base``).
    Model identifiers live here, never in the wire protocol, so swapping a
    model stack is a config diff.
    """

    models: dict[str, str] = field(default_factory=dict)
    device: str = "cpu"
    max_concurrent: int = 4
    port: int = 8809

    def __post_init__(self):
        unknown = set(self.models) - set(ROLES)
        if unknown:
            raise ConfigError(f"unknown roles configured: {sorted(unknown)}")
        missing = set(ROLES) - set(self.models)
        if missing:
            raise ConfigError(f"every role needs a model; missing {sorted(missing)}")
        for role, ident in self.models.items():
            if not isinstance(ident, str) or not ident:
                raise ConfigError(f"model identifier for {role!r} must be a non-empty string")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be >= 1")
        if not 0 < self.port < 65536:
            raise ConfigError(f"port out of range: {self.port}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceConfig":
        known = {"models", "device", "max_concurrent", "port"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "models" not in raw:
            raise ConfigError("config missing 'models'")
        return cls(
            models=dict(raw["models"]),
            device=raw.get("device", "cpu"),
            max_concurrent=raw.get("max_concurrent", 4),
            port=raw.get("port", 8809),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)
