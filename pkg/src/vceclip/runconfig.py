"""Run configuration: YAML file plus command-line overrides.

Precedence is built-in defaults < config file < command-line flags. All
randomness comes from the top-level ``seed``; per-subsystem seeds (weight
init, shuffling, augmentation) are derived from it and cannot be set
individually.

Example file::

    seed: 7
    data_root: data
    train_manifest: data/train.csv
    val_manifest: data/validation.csv
    output_dir: runs/toy
    class_names: [Bleeding, Normal]
    model: {image_size: 32, vision_embed_dim: 16, vision_layers: 1, vision_heads: 2}
    train: {batch_size: 8, max_epochs: 20, learning_rate: 1.0e-3}
    augment: {rotations: [0, 90, 180, 270], horizontal_flip: 0.5}
"""

from __future__ import annotations

import argparse
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .config import DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, ModelConfig
from .errors import ConfigError
from .images import AugmentationPolicy
from .train import TrainConfig

SECTIONS: dict[str, type] = {"model": ModelConfig, "train": TrainConfig, "augment": AugmentationPolicy}
# seeds below are derived from the top-level seed
DERIVED_SEEDS = {"model": "init_seed", "train": "seed", "augment": "seed"}
TOP_LEVEL = {
    "seed": int,
    "data_root": str,
    "train_manifest": str,
    "val_manifest": str,
    "output_dir": str,
    "class_names": list,
    "prompt_template": str,
    "workers": int,
}


def derive_seed(seed: int, subsystem: str) -> int:
    index = {"init": 0, "shuffle": 1, "augment": 2}[subsystem]
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def section_fields(section: str) -> list[dataclasses.Field]:
    skip = DERIVED_SEEDS[section]
    return [f for f in dataclasses.fields(SECTIONS[section]) if f.name != skip]


@dataclass
class RunConfig:
    seed: int = 0
    data_root: str | None = None
    train_manifest: str | None = None
    val_manifest: str | None = None
    output_dir: str = "runs/default"
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))
    prompt_template: str = DEFAULT_TEMPLATE
    workers: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy)


def _coerce(name: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
                return value.lower() in ("true", "1", "yes")
            raise ValueError
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(int(v) for v in value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: invalid value {value!r}") from None
    return value


def build_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file values and flag overrides into a validated :class:`RunConfig`.

    Both inputs use the file's nested layout; unknown keys are rejected.
    """
    merged: dict[str, Any] = {}
    for source in (file_values or {}), (overrides or {}):
        if not isinstance(source, dict):
            raise ConfigError("config must be a mapping")
        for key, value in source.items():
            if key in SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                merged.setdefault(key, {}).update(value)
            elif key in TOP_LEVEL:
                merged[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")

    top = RunConfig()
    kwargs: dict[str, Any] = {}
    for key, typ in TOP_LEVEL.items():
        if key not in merged or merged[key] is None:
            continue
        value = merged[key]
        if typ is list:
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ConfigError("class_names must be a list of strings")
            if len(value) < 2 or len(set(value)) != len(value):
                raise ConfigError("class_names needs at least two distinct labels")
        else:
            value = _coerce(key, value, getattr(top, key) if getattr(top, key) is not None else "")
        kwargs[key] = value
    if kwargs.get("workers", 0) < 0:
        raise ConfigError("workers must be >= 0")
    seed = kwargs.get("seed", 0)
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    class_names = kwargs.get("class_names", top.class_names)

    for section, cls in SECTIONS.items():
        values = dict(merged.get(section, {}))
        allowed = {f.name: f for f in section_fields(section)}
        unknown = set(values) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        defaults = cls()
        sec_kwargs = {k: _coerce(f"{section}.{k}", v, getattr(defaults, k)) for k, v in values.items()}
        if section == "model":
            sec_kwargs.setdefault("num_classes", len(class_names))
            sec_kwargs["init_seed"] = derive_seed(seed, "init")
        elif section == "train":
            sec_kwargs["seed"] = derive_seed(seed, "shuffle")
        else:
            sec_kwargs["seed"] = derive_seed(seed, "augment")
        try:
            kwargs[section] = cls(**sec_kwargs)
        except TypeError as e:
            raise ConfigError(f"[{section}]: {e}") from None
    if kwargs["model"].num_classes != len(class_names):
        raise ConfigError(
            f"model.num_classes={kwargs['model'].num_classes} but {len(class_names)} class names configured"
        )
    return RunConfig(**kwargs)


def read_config_file(path: str | Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def add_override_flags(parser: argparse.ArgumentParser) -> None:
    """One ``--flag`` per configurable field; values are parsed later."""
    group = parser.add_argument_group("config overrides")
    for key in TOP_LEVEL:
        group.add_argument(_flag(key), dest=f"top:{key}", default=None, metavar="VALUE")
    for section in SECTIONS:
        for f in section_fields(section):
            group.add_argument(_flag(f.name), dest=f"{section}:{f.name}", default=None, metavar="VALUE")


def overrides_from_args(args: argparse.Namespace) -> dict:
    out: dict[str, Any] = {}
    for dest, value in vars(args).items():
        if value is None or ":" not in dest:
            continue
        section, key = dest.split(":", 1)
        if section == "top":
            out[key] = value
        else:
            out.setdefault(section, {})[key] = value
    return out


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    return build_run_config(file_values, overrides_from_args(args))
