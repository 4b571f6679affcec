"""Run configuration: one JSON file describing a whole pipeline run.

Relative paths in the file are resolved against the config file's own
directory, so a fixture directory with its config travels as a unit. CLI
flags override individual fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .boxreg import TrainConfig
from .errors import ConfigError, ValidationError

_PATH_FIELDS = (
    "manifest",
    "output_dir",
    "features_train_dir",
    "features_test_dir",
    "pooled_train",
    "pooled_test",
    "classifier_weights",
    "scores",
)


@dataclass
class RunConfig:
    manifest: Path | None = None
    output_dir: Path | None = None
    features_train_dir: Path | None = None
    features_test_dir: Path | None = None
    pooled_train: Path | None = None
    pooled_test: Path | None = None
    method: str = "ddt"
    classifier_weights: Path | None = None
    scores: Path | None = None
    threads: int = 1
    joint_lambda: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    # train keys the user actually wrote (config file or flags), so commands
    # can apply different schedule defaults without clobbering explicit ones
    explicit_train_keys: frozenset = frozenset()

    def require(self, name: str, *, is_dir: bool = False, exists: bool = True) -> Path:
        """Fetch a configured path, failing with a config error when it is
        absent or (for inputs) does not exist."""
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"config field {name!r} is required for this command")
        path = Path(value)
        if exists:
            if is_dir and not path.is_dir():
                raise ConfigError(f"config field {name!r}: no such directory: {path}")
            if not is_dir and not path.is_file():
                raise ConfigError(f"config field {name!r}: no such file: {path}")
        return path

    def resolved_output_dir(self) -> Path:
        out = self.require("output_dir", exists=False)
        out.mkdir(parents=True, exist_ok=True)
        return out


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if overrides:
        train_overrides = overrides.pop("train", None)
        if train_overrides:
            raw.setdefault("train", {})
            if not isinstance(raw["train"], dict):
                raise ConfigError(f"{path}: 'train' must be a JSON object")
            raw["train"].update(train_overrides)
        raw.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(RunConfig)} - {"explicit_train_keys"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s): {sorted(unknown)}")

    train_raw = raw.pop("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigError(f"{path}: 'train' must be a JSON object")
    train_known = {f.name for f in fields(TrainConfig)}
    train_unknown = set(train_raw) - train_known
    if train_unknown:
        raise ConfigError(f"{path}: unknown train key(s): {sorted(train_unknown)}")
    try:
        train = TrainConfig(**train_raw)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"{path}: bad train config: {exc}") from exc

    base = path.parent
    kwargs: dict = {"train": train, "explicit_train_keys": frozenset(train_raw)}
    for name in _PATH_FIELDS:
        if raw.get(name) is not None:
            kwargs[name] = (base / raw.pop(name)).resolve()
        else:
            raw.pop(name, None)
    for name in ("method", "threads", "joint_lambda"):
        if name in raw:
            kwargs[name] = raw.pop(name)
    try:
        cfg = RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if cfg.method not in ("ddt", "cam"):
        raise ConfigError(f"{path}: method must be 'ddt' or 'cam', got {cfg.method!r}")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError(f"{path}: threads must be a positive integer")
    return cfg
