"""Run configuration for the evaluation harness and CLI."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .metrics import (
    DEFAULT_AGGREGATE_WEIGHTS,
    DEFAULT_CATEGORY_PENALTY,
    DEFAULT_UNMATCHED_CUTOFF,
)

__all__ = ["EvalConfig", "ConfigError", "load_config"]

DEFAULT_SIMILARITY_THRESHOLD = 0.85


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    judge: str = "mock"
    judge_base_url: str = ""
    judge_model: str = ""
    judge_max_tokens: int = 4096
    embedder: str = "test"
    embedder_url: str = ""
    workers: int = 4
    tokenizer: str = "fallback"
    tokenizer_vocab_path: Optional[str] = None
    category_penalty: float = DEFAULT_CATEGORY_PENALTY
    unmatched_cutoff: float = DEFAULT_UNMATCHED_CUTOFF
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    aggregate_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_AGGREGATE_WEIGHTS)
    )
    cache_dir: Optional[str] = None

    def validate(self) -> "EvalConfig":
        if self.judge not in ("mock", "http"):
            raise ConfigError(f"unknown judge backend {self.judge!r}")
        if self.judge == "http" and not (self.judge_base_url and self.judge_model):
            raise ConfigError("http judge needs judge_base_url and judge_model")
        if self.embedder not in ("test", "http"):
            raise ConfigError(f"unknown embedder backend {self.embedder!r}")
        if self.embedder == "http" and not self.embedder_url:
            raise ConfigError("http embedder needs embedder_url")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.tokenizer not in ("fallback", "vocab"):
            raise ConfigError(f"unknown tokenizer backend {self.tokenizer!r}")
        if self.tokenizer == "vocab" and not self.tokenizer_vocab_path:
            raise ConfigError("vocab tokenizer needs tokenizer_vocab_path")
        if not 0 <= self.similarity_threshold <= 1:
            raise ConfigError("similarity_threshold must be in [0, 1]")
        total = sum(self.aggregate_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"aggregate_weights sum to {total}, expected 1.0")
        return self


def load_config(path: Optional[str] = None, **overrides) -> EvalConfig:
    """Build a config from an optional JSON file plus keyword overrides.

    Unknown keys in the file are rejected rather than silently ignored.
    """
    config = EvalConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        known = set(EvalConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config = replace(config, **data)
    if overrides:
        config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    return config.validate()
