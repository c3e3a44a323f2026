"""Experiment configuration: schema, validation, file loading.

Configs are YAML files with nested sections (see README for the schema).
Parsing is total: every invalid value produces a ConfigError naming the
offending key, never a traceback. All run randomness derives from the
per-run seed through named streams, so records are reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields as dc_fields

import yaml

from .data import SyntheticConfig, TaskDataset, generate_synthetic_tasks, load_feature_file
from .errors import ConfigError
from .seeds import sub_seed

_VALID_METHODS = ("finetune", "decor", "lwf", "simclr", "simclr+decor", "simclr+lwf")


@dataclass
class ExperimentConfig:
    """Full specification of one experiment (all seeds)."""

    method: str = "finetune"
    T: int = 5
    K: int = 32
    L: int = 2
    lam: float = 0.2
    epochs_per_task: int = 20
    lr: float = 0.02
    momentum: float = 0.9
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    encoder_hidden: tuple[int, ...] = (128,)
    encoder_out: int = 64
    predictor_hidden: int = 128
    projector_hidden: int = 128
    projector_out: int = 64

    noise_sigma: float = 0.1
    mask_fraction: float = 0.2
    nt_xent_temperature: float = 0.5
    lwf_temperature: float = 2.0
    lwf_weight: float = 1.0

    probe_mode: str = "LEP"
    probe_samples_per_task: int = 200
    probe_epochs: int = 50
    probe_lr: float = 0.2
    probe_batch_size: int = 64

    data_source: str = "synthetic"  # synthetic | file
    data_path: str = ""
    num_classes: int = 10
    feature_dim: int = 64
    samples_per_class: int = 200
    class_separation: float = 6.0
    within_class_sigma: float = 1.5
    drift_sigma: float = 2.0

    results_dir: str = "results"

    def validate(self) -> None:
        if self.method not in _VALID_METHODS:
            raise ConfigError(f"method: unknown value {self.method!r}")
        if self.T < 1:
            raise ConfigError(f"T: must be >= 1, got {self.T}")
        if "decor" in self.method:
            if self.K < 2:
                raise ConfigError(f"K: decor methods need K >= 2, got {self.K}")
            if self.L < 1:
                raise ConfigError(f"L: must be >= 1, got {self.L}")
        if self.lam < 0:
            raise ConfigError(f"lambda: must be >= 0, got {self.lam}")
        if self.epochs_per_task < 1:
            raise ConfigError(f"epochs_per_task: must be >= 1, got {self.epochs_per_task}")
        if self.lr <= 0:
            raise ConfigError(f"lr: must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum: must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds: must be non-negative")
        if self.encoder_out < 1:
            raise ConfigError(f"encoder.out_dim: must be >= 1, got {self.encoder_out}")
        if any(h < 1 for h in self.encoder_hidden):
            raise ConfigError("encoder.hidden_dims: entries must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError(f"augment.noise_sigma: must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.mask_fraction <= 1:
            raise ConfigError(
                f"augment.mask_fraction: must be in [0, 1], got {self.mask_fraction}"
            )
        if self.nt_xent_temperature <= 0:
            raise ConfigError("nt_xent_temperature: must be > 0")
        if self.lwf_temperature <= 0:
            raise ConfigError("lwf.temperature: must be > 0")
        if self.lwf_weight < 0:
            raise ConfigError("lwf.weight: must be >= 0")
        if self.probe_mode not in ("LEP", "SLEP"):
            raise ConfigError(f"probe.mode: must be LEP or SLEP, got {self.probe_mode!r}")
        if self.probe_samples_per_task < 1:
            raise ConfigError("probe.samples_per_task: must be >= 1")
        if self.probe_epochs < 1:
            raise ConfigError("probe.epochs: must be >= 1")
        if self.probe_lr <= 0:
            raise ConfigError("probe.lr: must be > 0")
        if self.probe_batch_size < 1:
            raise ConfigError("probe.batch_size: must be >= 1")
        if self.data_source not in ("synthetic", "file"):
            raise ConfigError(f"data.source: must be synthetic or file, got {self.data_source!r}")
        if self.data_source == "file" and not self.data_path:
            raise ConfigError("data.path: required when data.source is file")
        if self.data_source == "synthetic":
            if self.num_classes % self.T != 0:
                raise ConfigError(
                    f"data.num_classes: {self.num_classes} not divisible by T={self.T}"
                )
            # constructing the generator config re-checks its own ranges
            try:
                self._synthetic_config(0)
            except ConfigError as exc:
                raise ConfigError(f"data: {exc}") from exc

    def _synthetic_config(self, seed: int) -> SyntheticConfig:
        return SyntheticConfig(
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            samples_per_class=self.samples_per_class,
            class_separation=self.class_separation,
            within_class_sigma=self.within_class_sigma,
            drift_sigma=self.drift_sigma,
            seed=seed,
        )

    def tasks_for_seed(self, seed: int) -> list[TaskDataset]:
        """Build (or load) the task sequence this run trains on."""
        if self.data_source == "synthetic":
            return generate_synthetic_tasks(self._synthetic_config(sub_seed(seed, "data")), self.T)
        tasks = load_feature_file(self.data_path)
        if len(tasks) != self.T:
            raise ConfigError(f"T: config says {self.T} but {self.data_path} has {len(tasks)} tasks")
        return tasks

    def to_dict(self) -> dict:
        d = {}
        for f in dc_fields(self):
            value = getattr(self, f.name)
            d[f.name] = list(value) if isinstance(value, tuple) else value
        return d

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# config-file key -> dataclass field, grouped by section
_TOP_LEVEL_KEYS = {
    "method": "method",
    "T": "T",
    "K": "K",
    "L": "L",
    "lambda": "lam",
    "epochs_per_task": "epochs_per_task",
    "lr": "lr",
    "momentum": "momentum",
    "batch_size": "batch_size",
    "seeds": "seeds",
    "nt_xent_temperature": "nt_xent_temperature",
    "results_dir": "results_dir",
}
_SECTION_KEYS = {
    "encoder": {"hidden_dims": "encoder_hidden", "out_dim": "encoder_out"},
    "predictor": {"hidden_dim": "predictor_hidden"},
    "projector": {"hidden_dim": "projector_hidden", "out_dim": "projector_out"},
    "augment": {"noise_sigma": "noise_sigma", "mask_fraction": "mask_fraction"},
    "lwf": {"temperature": "lwf_temperature", "weight": "lwf_weight"},
    "probe": {
        "mode": "probe_mode",
        "samples_per_task": "probe_samples_per_task",
        "epochs": "probe_epochs",
        "lr": "probe_lr",
        "batch_size": "probe_batch_size",
    },
    "data": {
        "source": "data_source",
        "path": "data_path",
        "num_classes": "num_classes",
        "feature_dim": "feature_dim",
        "samples_per_class": "samples_per_class",
        "class_separation": "class_separation",
        "within_class_sigma": "within_class_sigma",
        "drift_sigma": "drift_sigma",
    },
}

_INT_FIELDS = {
    "T", "K", "L", "epochs_per_task", "batch_size", "encoder_out", "predictor_hidden",
    "projector_hidden", "projector_out", "probe_samples_per_task", "probe_epochs",
    "probe_batch_size", "num_classes", "feature_dim", "samples_per_class",
}
_FLOAT_FIELDS = {
    "lam", "lr", "momentum", "noise_sigma", "mask_fraction", "nt_xent_temperature",
    "lwf_temperature", "lwf_weight", "probe_lr", "class_separation",
    "within_class_sigma", "drift_sigma",
}


def _coerce(key: str, field_name: str, value):
    try:
        if field_name in _INT_FIELDS:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError("expected an integer")
            return int(value)
        if field_name in _FLOAT_FIELDS:
            return float(value)
        if field_name == "seeds":
            if not isinstance(value, (list, tuple)):
                raise ValueError("expected a list of integers")
            return tuple(int(v) for v in value)
        if field_name == "encoder_hidden":
            if not isinstance(value, (list, tuple)):
                raise ValueError("expected a list of integers")
            return tuple(int(v) for v in value)
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc} (got {value!r})") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config; unknown or ill-typed keys are named."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    kwargs = {}
    for key, value in raw.items():
        if key in _TOP_LEVEL_KEYS:
            field_name = _TOP_LEVEL_KEYS[key]
            kwargs[field_name] = _coerce(key, field_name, value)
        elif key in _SECTION_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping of settings")
            for sub, sub_value in value.items():
                if sub not in _SECTION_KEYS[key]:
                    raise ConfigError(f"{key}.{sub}: unknown key")
                field_name = _SECTION_KEYS[key][sub]
                kwargs[field_name] = _coerce(f"{key}.{sub}", field_name, sub_value)
        else:
            raise ConfigError(f"{key}: unknown key")
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    """Read a YAML config file; every failure is a ConfigError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw)
