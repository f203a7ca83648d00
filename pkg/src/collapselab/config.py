"""Experiment configuration: one flat dataclass, one flat key=value file format.

A config file holds ``key = value`` lines; blank lines and ``#`` comments are
ignored. Keys must belong to the schema below (unknown keys are rejected so a
typo cannot silently fall back to a default), values are coerced to the field
type, and every field has a default, so an empty file is a valid experiment.
``resolved_text`` serializes a config back into the same format with fields
in schema order; parsing that text reproduces the config exactly.

Schema (types and defaults live on TrainConfig):

  mode                  "allnc" or "ce" (plain cross-entropy baseline)
  dataset               "synthetic" or "csv"
  train_csv/test_csv    file paths when dataset = csv
  num_classes, input_dim, n_max, beta, n_test_per_class,
  mean_placement, mean_radius, noise_std, placement_seed
                        synthetic mixture shape
  view_noise_std, view_mask_prob
                        two-view augmentation strength
  hidden_dims, feature_dim, proj_dim, proj1_hidden, predictor_hidden
                        architecture (hidden_dims is comma-separated)
  lr, momentum, weight_decay, batch_size, t_max
                        optimization
  alpha, gamma, fixed_eta
                        loss mixing; fixed_eta applies when disable_gbbn
  disable_hycon, disable_p2p_mu, disable_p2p_w, disable_gbbn
                        ablation switches (allnc mode only)
  freeze_classifier_bias
                        keep the classifier bias at its initial zeros
  seed                  master seed; all streams derive from it
  out_dir               where run artifacts go (empty = no emission)
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

_MODES = ("allnc", "ce")
_DATASETS = ("synthetic", "csv")
_PLACEMENTS = ("etf", "random")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "allnc"
    dataset: str = "synthetic"
    train_csv: str = ""
    test_csv: str = ""
    num_classes: int = 10
    input_dim: int = 32
    n_max: int = 500
    beta: float = 100.0
    n_test_per_class: int = 100
    mean_placement: str = "etf"
    mean_radius: float = 4.0
    noise_std: float = 1.0
    placement_seed: int = 7
    view_noise_std: float = 0.5
    view_mask_prob: float = 0.1
    hidden_dims: tuple[int, ...] = (128, 64)
    feature_dim: int = 16
    proj_dim: int = 16
    proj1_hidden: int = 0
    predictor_hidden: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-3
    batch_size: int = 64
    t_max: int = 100
    alpha: float = 1.0
    gamma: float = 2.0
    fixed_eta: float = 0.5
    disable_hycon: bool = False
    disable_p2p_mu: bool = False
    disable_p2p_w: bool = False
    disable_gbbn: bool = False
    freeze_classifier_bias: bool = False
    seed: int = 0
    out_dir: str = ""

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.dataset not in _DATASETS:
            raise ConfigError(f"dataset must be one of {_DATASETS}, got {self.dataset!r}")
        if self.dataset == "csv" and (not self.train_csv or not self.test_csv):
            raise ConfigError("dataset = csv requires train_csv and test_csv")
        if self.mean_placement not in _PLACEMENTS:
            raise ConfigError(f"mean_placement must be one of {_PLACEMENTS}, got {self.mean_placement!r}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.beta < 1:
            raise ConfigError(f"beta must be >= 1, got {self.beta}")
        if min(self.input_dim, self.n_max, self.n_test_per_class, self.batch_size, self.t_max) < 1:
            raise ConfigError("input_dim, n_max, n_test_per_class, batch_size, t_max must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if not 0.0 <= self.fixed_eta <= 1.0:
            raise ConfigError(f"fixed_eta must be in [0, 1], got {self.fixed_eta}")
        if not 0.0 <= self.view_mask_prob < 1.0:
            raise ConfigError(f"view_mask_prob must be in [0, 1), got {self.view_mask_prob}")
        if self.view_noise_std < 0 or self.noise_std < 0:
            raise ConfigError("noise_std and view_noise_std must be >= 0")


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part.strip()) for part in text.split(","))


# Annotations are strings under `from __future__ import annotations`, so the
# parser table is keyed by the annotation text.
_PARSERS = {
    "str": lambda s: s,
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "tuple[int, ...]": _parse_int_tuple,
}


def _schema() -> dict[str, object]:
    return {f.name: _PARSERS[f.type] for f in fields(TrainConfig)}


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    """Parse flat key=value text into a validated TrainConfig."""
    values: dict[str, object] = {}
    schema = _schema()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {ln}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in schema:
            raise ConfigError(f"{source}: line {ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}: line {ln}: duplicate key {key!r}")
        try:
            values[key] = schema[key](val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: line {ln}: bad value for {key}: {exc}") from exc
    return TrainConfig(**values)


def parse_config_file(path: str | Path) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(p))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_text(cfg: TrainConfig) -> str:
    """Serialize every field in schema order; parses back to an equal config."""
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def with_overrides(cfg: TrainConfig, **overrides) -> TrainConfig:
    """A copy with the given fields replaced and validation re-run."""
    return replace(cfg, **overrides)
