"""Run configuration: one YAML document, overridable from the command line."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from repairkit.harness import DEFAULT_TEST_COMMAND, Sandbox
from repairkit.localize import DEFAULT_EXCLUDES, DEFAULT_TEST_GLOBS
from repairkit.repair import Budgets
from repairkit.skeleton import BudgetTokenizer, SkeletonConfig
from repairkit.trace import TraceRenderConfig


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    skeleton_budget: float = 1024
    trace_budget: float = 896
    tokenizer: str = "approximate"
    tokenizer_command: list[str] = field(default_factory=list)
    suite_timeout: float = 60.0
    validation_timeout: float = 10.0
    output_cap_bytes: int = 1_000_000
    per_test_timeout: float | None = None
    test_command: str = DEFAULT_TEST_COMMAND
    max_candidates: int = 100
    wall_clock_seconds: float = 60.0
    operator_weights: dict[str, float] = field(default_factory=dict)
    generator: str = "oracle"
    generator_command: list[str] = field(default_factory=list)
    exclude_globs: list[str] = field(default_factory=lambda: list(DEFAULT_EXCLUDES))
    test_globs: list[str] = field(default_factory=lambda: list(DEFAULT_TEST_GLOBS))
    k_values: list[int] = field(default_factory=lambda: [1, 10])
    max_suspects: int | None = 5
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("skeleton_budget", "trace_budget", "suite_timeout", "validation_timeout",
                     "output_cap_bytes", "max_candidates", "wall_clock_seconds", "jobs"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.per_test_timeout is not None and not self.per_test_timeout > 0:
            raise ConfigError("per_test_timeout must be positive")
        if self.tokenizer not in ("approximate", "external-command"):
            raise ConfigError(f"unknown tokenizer mode {self.tokenizer!r}")
        if self.tokenizer == "external-command" and not self.tokenizer_command:
            raise ConfigError("tokenizer 'external-command' needs tokenizer_command")
        ks = list(self.k_values)
        if not ks or any(not isinstance(k, int) or k < 1 for k in ks) or ks != sorted(set(ks)):
            raise ConfigError(f"k_values must be distinct positive integers in ascending order, got {ks}")
        if self.max_suspects is not None and self.max_suspects < 1:
            raise ConfigError("max_suspects must be at least 1")
        for op, weight in self.operator_weights.items():
            if not isinstance(weight, (int, float)) or weight < 0:
                raise ConfigError(f"weight for {op!r} must be a non-negative number")

    # -- loading

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> "Config":
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("skeleton_budget", "trace_budget"):
            if isinstance(data.get(key), str) and data[key].lower() in ("inf", "infinity"):
                data[key] = math.inf
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path | None) -> "Config":
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a mapping")
        return cls.from_mapping(data)

    def override(self, **changes: Any) -> "Config":
        """Copy with every non-None keyword applied (CLI flags win over the file)."""
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def dump(self) -> str:
        data = dataclasses.asdict(self)
        for key in ("skeleton_budget", "trace_budget"):
            if data[key] == math.inf:
                data[key] = "inf"
        return yaml.safe_dump(data, sort_keys=True)

    # -- views used by the pipeline

    def budget_tokenizer(self) -> BudgetTokenizer:
        return BudgetTokenizer(self.tokenizer, command=tuple(self.tokenizer_command))

    def skeleton_config(self) -> SkeletonConfig:
        return SkeletonConfig(self.skeleton_budget, tokenizer=self.budget_tokenizer())

    def trace_config(self) -> TraceRenderConfig:
        return TraceRenderConfig(self.trace_budget)

    def sandbox(self) -> Sandbox:
        return Sandbox(timeout_seconds=self.suite_timeout, output_cap_bytes=self.output_cap_bytes,
                       test_command=self.test_command, per_test_timeout=self.per_test_timeout)

    def budgets(self) -> Budgets:
        return Budgets(self.max_candidates, self.wall_clock_seconds, self.validation_timeout)
