"""Pipeline configuration loaded from a JSON file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from perfprompt.errors import ConfigError

_PATH_FIELDS = ("rules", "roi_db", "problems", "fixtures")


@dataclass(frozen=True)
class GatewaySettings:
    base_url: str | None = None
    model_name: str = "mock"
    token_env: str = "PERFPROMPT_API_TOKEN"
    timeout: float = 120.0
    max_in_flight: int = 4


@dataclass(frozen=True)
class PipelineConfig:
    rules: Path | None = None
    roi_db: Path | None = None
    problems: Path | None = None
    fixtures: Path | None = None
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    k: int = 1
    top_k: int = 2
    reps: int = 5
    timeout: float = 2.0
    compiler: tuple[str, ...] = ("g++",)
    compiler_flags: tuple[str, ...] = ("-std=c++17", "-O3")
    temperature: float = 0.7
    max_input_tokens: int = 4096
    max_output_tokens: int = 8192
    embedding_dim: int = 512
    analysis: str = "model"  # "model" asks the gateway; "advisor" summarises diagnoses
    ngram_n: int = 4
    similarity_threshold: float = 0.9
    cap: int = 10
    max_keep: int = 10
    workers: int = 1

    def validate(self) -> PipelineConfig:
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name}: path {value} does not exist")
        checks = {
            "k": self.k >= 1,
            "top_k": 1 <= self.top_k <= 2,
            "reps": self.reps >= 3 and self.reps % 2 == 1,
            "timeout": self.timeout > 0,
            "temperature": self.temperature >= 0,
            "max_input_tokens": self.max_input_tokens > 0,
            "max_output_tokens": self.max_output_tokens > 0,
            "embedding_dim": self.embedding_dim > 0,
            "analysis": self.analysis in ("model", "advisor"),
            "ngram_n": self.ngram_n >= 1,
            "similarity_threshold": 0 < self.similarity_threshold <= 1,
            "cap": self.cap >= 1,
            "max_keep": self.max_keep >= 1,
            "workers": self.workers >= 1,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ConfigError(f"out-of-range setting(s): {', '.join(bad)}")
        return self

    def with_overrides(self, **overrides: Any) -> PipelineConfig:
        clean = {k: v for k, v in overrides.items() if v is not None}
        for name in _PATH_FIELDS:
            if name in clean:
                clean[name] = Path(clean[name])
        return replace(self, **clean)


def config_from_mapping(data: Mapping[str, Any], base_dir: Path | None = None) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _PATH_FIELDS and value is not None:
            path = Path(value)
            kwargs[key] = path if path.is_absolute() or base_dir is None else base_dir / path
        elif key == "gateway":
            try:
                kwargs[key] = GatewaySettings(**value)
            except TypeError as exc:
                raise ConfigError(f"gateway: {exc}") from exc
        elif key in ("compiler", "compiler_flags"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Load and validate a config file; relative paths resolve against its folder."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_mapping(data, path.parent).validate()
