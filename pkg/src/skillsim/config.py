"""Pipeline configuration: YAML file, then environment overrides, then CLI flags.

Environment variables look like ``SKILLSIM_LLM__MODE=replay``: the prefix,
then the key path joined with double underscores. Values are parsed as YAML
scalars, so numbers and booleans come through typed.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

ENV_PREFIX = "SKILLSIM_"


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    workdir: str = "runs/default"
    source: str = "sandbox"  # "sandbox" or "files"
    catalog: str | None = None
    taxonomy: str | None = None
    scripts_dir: str | None = None
    tests: str | None = None
    store_dir: str | None = None  # defaults to <workdir>/store
    transcript_dir: str | None = None  # defaults to <workdir>/transcripts


@dataclass
class LlmConfig:
    mode: str = "mock"
    endpoint: str | None = None
    model_id: str = "gpt-4o"
    api_key_env: str = "LLM_API_KEY"
    max_parallel: int = 4
    retries: int = 3
    timeout: float = 120.0


@dataclass
class EmbeddingConfig:
    model_id: str = "hash-trigram"
    dim: int = 256
    endpoint: str | None = None


@dataclass
class LinkpredConfig:
    epochs: int = 300
    learning_rate: float = 0.01
    hidden_dim: int = 128
    out_dim: int = 128
    train_frac: float = 0.85
    dev_frac: float = 0.05
    test_frac: float = 0.10


@dataclass
class TaskgenConfig:
    rounds: int = 3
    tasks_per_prompt: int = 10
    k: int = 5
    dedupe_threshold: float = 0.95
    workers: int = 1


@dataclass
class SkillgenConfig:
    max_trials: int = 3
    timeout: float = 30.0
    workers: int = 1
    executor: str = "sandbox"  # or "subprocess"
    adapter_command: list[str] = field(default_factory=list)
    judge: str = "oracle"  # or "llm"
    app: str = "MiniCanvas"
    language: str = "MiniCanvas script"
    method_rule: str = "command"


@dataclass
class EvalConfig:
    systems: list[str] = field(default_factory=lambda: ["baseline", "ro", "rag"])
    rag_r: int = 3


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    linkpred: LinkpredConfig = field(default_factory=LinkpredConfig)
    taskgen: TaskgenConfig = field(default_factory=TaskgenConfig)
    skillgen: SkillgenConfig = field(default_factory=SkillgenConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)


def _apply(obj: Any, tree: Mapping, where: str = "") -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in tree.items():
        if key not in known:
            raise ConfigError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}{key} must be a mapping")
            _apply(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def env_overrides(env: Mapping[str, str]) -> dict:
    tree: dict = {}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = yaml.safe_load(raw) if raw != "" else None
    return tree


def load_config(path: Path | str | None = None, env: Mapping[str, str] | None = None,
                overrides: Mapping | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError("config root must be a mapping")
        _apply(cfg, data)
    _apply(cfg, env_overrides(os.environ if env is None else env))
    if overrides:
        _apply(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    if cfg.llm.mode not in ("live", "replay", "mock"):
        raise ConfigError(f"llm.mode must be live, replay or mock, not {cfg.llm.mode!r}")
    if cfg.paths.source not in ("sandbox", "files"):
        raise ConfigError("paths.source must be sandbox or files")
    if cfg.skillgen.max_trials < 1:
        raise ConfigError("skillgen.max_trials must be >= 1")
    if cfg.taskgen.rounds < 1 or cfg.taskgen.k < 1 or cfg.taskgen.tasks_per_prompt < 1:
        raise ConfigError("taskgen.rounds, k and tasks_per_prompt must be >= 1")
    for s in cfg.eval.systems:
        if s not in ("baseline", "ro", "rag"):
            raise ConfigError(f"unknown eval system {s!r}")


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
