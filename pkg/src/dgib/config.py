"""Run configuration: one flat JSON object with namespaced keys.

Example::

    {
      "data.n_nodes": 100, "data.n_snapshots": 6, "data.p_intra": 0.2,
      "model.dim": 16, "bounds.beta1": 0.01, "train.learning_rate": 0.01,
      "attack.mode": "feature_noise", "attack.lam": 1.0,
      "sweep.grid": [[100, 100], [10, 10]]
    }

``data.path`` selects a dataset on disk; otherwise the ``data.*`` keys
parametrize the synthetic generator. Unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .attacks import AttackSpec
from .bounds import BoundConfig
from .dyngraph import DynamicGraph, SplitSpec, generate_synthetic, load_dataset
from .harness import TrainConfig
from .model import ModelConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class SyntheticParams:
    n_nodes: int = 100
    n_snapshots: int = 6
    n_communities: int = 4
    p_intra: float = 0.2
    p_inter: float = 0.01
    drift: float = 0.1
    link_types: int = 3
    feature_noise: float = 0.1
    train_len: int | None = None
    val_len: int | None = None
    test_len: int | None = None

    def split(self) -> SplitSpec | None:
        lens = (self.train_len, self.val_len, self.test_len)
        if all(v is None for v in lens):
            return None
        if any(v is None for v in lens):
            raise ConfigError("data.train_len, data.val_len and data.test_len must be given together")
        return SplitSpec(*lens)

    def generate(self, seed: int) -> DynamicGraph:
        return generate_synthetic(
            self.n_nodes, self.n_snapshots, self.n_communities, self.p_intra, self.p_inter,
            self.drift, self.link_types, seed, self.feature_noise, self.split(),
        )


DEFAULT_LR = 1e-2
DEFAULT_MAX_EPOCHS = 200


@dataclass
class RunConfig:
    seed: int = 0
    dataset_path: str | None = None
    synthetic: SyntheticParams | None = field(default_factory=SyntheticParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    bounds: BoundConfig = field(default_factory=BoundConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=DEFAULT_LR, max_epochs=DEFAULT_MAX_EPOCHS))
    attack: AttackSpec | None = None
    sweep_grid: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def load_graph(self) -> DynamicGraph:
        if self.dataset_path is not None:
            return load_dataset(self.dataset_path)
        return self.synthetic.generate(self.seed)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed, bound_cfg=self.bounds)

    def model_config(self) -> ModelConfig:
        return replace(self.model, init_seed=self.seed, prior_kind=self.bounds.prior_kind)


_SECTIONS = {
    "data": SyntheticParams,
    "model": ModelConfig,
    "bounds": BoundConfig,
    "train": TrainConfig,
    "attack": AttackSpec,
}
_SKIP = {"model": {"init_seed", "prior_kind"}, "train": {"seed", "bound_cfg"}}


def _allowed(section: str) -> set:
    names = {f.name for f in fields(_SECTIONS[section])} - _SKIP.get(section, set())
    if section == "data":
        names |= {"path"}
    return names


def _coerce(value, current):
    if isinstance(current, bool) or isinstance(value, bool):
        return bool(value)
    if isinstance(current, int) and isinstance(value, (int, float)) and float(value).is_integer():
        return int(value)
    return value


def parse_config(raw: dict, seed: int | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a flat namespaced dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    groups: dict = {k: {} for k in _SECTIONS}
    cfg_seed = 0
    grid = []
    for key, value in raw.items():
        if key == "seed":
            cfg_seed = int(value)
            continue
        if key == "sweep.grid":
            grid = _parse_grid(value)
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in _allowed(section):
            raise ConfigError(f"unknown config key {key!r}")
        groups[section][name] = value

    data = dict(groups["data"])
    path = data.pop("path", None)
    if path is not None and data:
        raise ConfigError(f"data.path excludes synthetic keys: {sorted('data.' + k for k in data)}")
    try:
        synthetic = None if path is not None else replace(SyntheticParams(), **data)
        if synthetic is not None:
            for name in ("p_intra", "p_inter", "drift"):
                v = getattr(synthetic, name)
                if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                    raise ConfigError(f"data.{name} must be a probability in [0, 1], got {v!r}")
            synthetic.split()
        model = _build(ModelConfig(), groups["model"])
        bounds = _build(BoundConfig(), groups["bounds"])
        train = _build(TrainConfig(learning_rate=DEFAULT_LR, max_epochs=DEFAULT_MAX_EPOCHS), groups["train"])
        attack = None
        if groups["attack"]:
            a = dict(groups["attack"])
            if "mode" not in a:
                raise ConfigError("attack.mode is required when attack keys are given")
            attack = AttackSpec(**{k: _coerce(v, None) for k, v in a.items()})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        seed=cfg_seed if seed is None else seed,
        dataset_path=path,
        synthetic=synthetic,
        model=model,
        bounds=bounds,
        train=train,
        attack=attack,
        sweep_grid=grid,
        raw=dict(raw),
    )


def _build(default, values: dict):
    updates = {k: _coerce(v, getattr(default, k)) for k, v in values.items()}
    for k in ("time_indices_A", "time_indices_Z"):
        if k in updates and updates[k] is not None:
            updates[k] = frozenset(int(t) for t in updates[k])
    return replace(default, **updates)


def _parse_grid(value) -> list:
    try:
        grid = [(_inv(a), _inv(b)) for a, b in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep.grid must be a list of [1/beta1, 1/beta2] pairs: {exc}") from exc
    return grid


def _inv(x) -> float:
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    v = float(x)
    if not v > 0:
        raise ValueError("entries must be positive or 'inf'")
    return v


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON ({exc})") from exc
    return parse_config(raw, seed)
