"""Numeric defaults and the file-level pipeline configuration."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import FormatError


@dataclass(frozen=True)
class ExtractionConfig:
    rollouts: int = 4
    temperature: float = 0.9
    step_cap: int = 40
    summary_token_limit: int = 1500
    tokenizer: str = "whitespace"  # or "bpe-estimate"

    def __post_init__(self) -> None:
        if self.rollouts < 1 or self.step_cap < 1 or self.summary_token_limit < 1:
            raise ValueError("extraction counts must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.tokenizer not in ("whitespace", "bpe-estimate"):
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}")


@dataclass(frozen=True)
class RefinementConfig:
    cluster_sim_threshold: float = 0.9
    cluster_cap: int = 15
    max_iterations: int = 3
    min_cluster_points: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.cluster_sim_threshold <= 1.0:
            raise ValueError("cluster_sim_threshold must lie in (0, 1]")
        if self.cluster_cap < 1 or self.max_iterations < 0 or self.min_cluster_points < 1:
            raise ValueError("refinement caps must be >= 1")

    @property
    def eps(self) -> float:
        """DBSCAN radius in cosine distance (1 - similarity)."""
        return 1.0 - self.cluster_sim_threshold


@dataclass(frozen=True)
class RetrievalConfig:
    broad_k: int = 100
    min_similarity: float = 0.45
    best_match_band: float = 0.08
    dedup_threshold: float = 0.95
    mmr_lambda: float = 0.75
    final_cap: int = 8
    planning_cap: int = 3
    include_plans: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.min_similarity < self.dedup_threshold <= 1.0:
            raise ValueError("need 0 < min_similarity < dedup_threshold <= 1")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr_lambda must lie in [0, 1]")
        if self.best_match_band < 0.0:
            raise ValueError("best_match_band must be >= 0")
        if self.broad_k < 1 or self.final_cap < 1 or self.planning_cap < 1:
            raise ValueError("retrieval caps must be >= 1")


@dataclass(frozen=True)
class ExpansionConfig:
    temperature: float = 1.0
    rollouts_per_task: int = 1
    failure_rate_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.failure_rate_threshold <= 1.0:
            raise ValueError("failure_rate_threshold must lie in [0, 1]")
        if self.rollouts_per_task < 1:
            raise ValueError("rollouts_per_task must be >= 1")


@dataclass(frozen=True)
class IndexConfig:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 128


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a CLI run needs. Missing keys take their defaults."""

    library: str | None = None
    schemas: str | None = None
    tasks: str | None = None
    world: str | None = None
    trajectories: str | None = None
    mock_table: str | None = None
    out: str | None = None
    chat_model: str = "default"
    embed_model: str = "default"
    embedding_dimension: int = 1024
    seed: int = 0
    jobs: int = 1
    rounds: int = 3
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    index: IndexConfig = field(default_factory=IndexConfig)

    _SECTIONS = {
        "extraction": ExtractionConfig,
        "refinement": RefinementConfig,
        "retrieval": RetrievalConfig,
        "expansion": ExpansionConfig,
        "index": IndexConfig,
    }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise FormatError(f"unknown config key {key!r}")
            section = cls._SECTIONS.get(key)
            if section is not None:
                sub_known = {f.name for f in fields(section)}
                bad = set(value) - sub_known
                if bad:
                    raise FormatError(f"unknown keys in [{key}]: {sorted(bad)}")
                try:
                    value = section(**value)
                except (TypeError, ValueError) as exc:
                    raise FormatError(f"[{key}]: {exc}") from exc
            kw[key] = value
        cfg = cls(**kw)
        if cfg.embedding_dimension < 1 or cfg.jobs < 1 or cfg.rounds < 0:
            raise FormatError("embedding_dimension and jobs must be >= 1, rounds >= 0")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path}: {exc}") from exc
        return cls.from_dict(data)

    def override(self, **flags: Any) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in flags.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)


def count_tokens(text: str, tokenizer: str = "whitespace") -> int:
    if tokenizer == "whitespace":
        return len(text.split())
    # rough sub-word estimate: about four characters per token
    return math.ceil(len(text) / 4)
