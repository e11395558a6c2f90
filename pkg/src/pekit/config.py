"""Application configuration: one JSON file plus flag overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .adapters import AdapterEndpoint, VisionToolbox
from .prompting import DEFAULT_TEMPLATE, PALETTE, ColorAssignment, palette_from_pairs
from .retrieval import DEFAULT_TAU, RetrievalConfig

ENV_VAR = "PEKIT_CONFIG"
ADAPTER_NAMES = ("segment", "propose", "embed", "generate")


class ConfigError(ValueError):
    """Raised when a config file is unreadable or malformed."""


@dataclass
class AppConfig:
    store_path: str = "pekit_store"
    adapters: dict[str, AdapterEndpoint] = field(
        default_factory=lambda: {name: AdapterEndpoint() for name in ADAPTER_NAMES}
    )
    tau: float = DEFAULT_TAU
    per_object_tau: dict[str, float] = field(default_factory=dict)
    template: str = DEFAULT_TEMPLATE
    palette: tuple[ColorAssignment, ...] = PALETTE

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

        def resolve(p):
            # relative paths are anchored at the config file's directory
            return None if p is None else str((path.parent / p).resolve())

        cfg = cls()
        cfg.store_path = resolve(raw.get("store_path")) or cfg.store_path
        for name, settings in raw.get("adapters", {}).items():
            if name not in ADAPTER_NAMES:
                raise ConfigError(f"unknown adapter name: {name}")
            try:
                cfg.adapters[name] = AdapterEndpoint(
                    base_url=settings.get("base_url", ""),
                    mode=settings.get("mode", "live"),
                    fixture_dir=resolve(settings.get("fixture_dir")),
                    timeout_ms=int(settings.get("timeout_ms", 30000)),
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"adapter '{name}': {exc}") from exc
        retrieval = raw.get("retrieval", {})
        cfg.tau = float(retrieval.get("tau", cfg.tau))
        cfg.per_object_tau = {
            str(k): float(v)
            for k, v in retrieval.get("per_object_tau", {}).items()
        }
        prompt = raw.get("prompt", {})
        cfg.template = prompt.get("template", cfg.template)
        if "palette" in prompt:
            try:
                cfg.palette = palette_from_pairs(prompt["palette"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"prompt.palette: {exc}") from exc
        return cfg

    @classmethod
    def resolve(cls, explicit_path: str | None = None) -> "AppConfig":
        """Load from --config, then $PEKIT_CONFIG, then built-in defaults."""
        path = explicit_path or os.environ.get(ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls()

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(tau=self.tau, per_object_tau=dict(self.per_object_tau))

    def toolbox(self) -> VisionToolbox:
        return VisionToolbox(
            segment=self.adapters["segment"],
            propose=self.adapters["propose"],
            embed=self.adapters["embed"],
            generate=self.adapters["generate"],
        )
