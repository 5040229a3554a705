"""Simulation configuration: dataclasses plus JSON/YAML loading."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from ..adversary import AttackConfig
from ..baselines import AGGREGATOR_KINDS
from ..crypto import GROUPS
from ..errors import ConfigError


@dataclass(frozen=True)
class DatasetSpec:
    """``synthetic`` Gaussian blobs or a ``csv`` train/test pair."""

    kind: str = "synthetic"
    n_train: int = 4000
    n_test: int = 2000
    d: int = 10
    z: int = 2
    separation: float = 2.0
    seed: int = 0
    train_path: str | None = None
    test_path: str | None = None
    n_classes: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "csv" and not (self.train_path and self.test_path):
            raise ConfigError("csv datasets need train_path and test_path")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp1"
    hidden: int = 16

    def __post_init__(self) -> None:
        if self.kind not in ("softmax", "mlp1"):
            raise ConfigError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class SimConfig:
    K: int = 20
    C: float = 0.5
    T: int = 30
    E: int = 1
    BS: int = 32
    eta: float = 0.1
    momentum: float = 0.0
    alpha: float = 0.2
    defense: str = "ffl"
    trim_beta: float = 0.2
    krum_f: int | None = None
    krum_m: int | None = None
    attack: AttackConfig | None = None
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    dh_group: str = "modp2048-256"
    rsa_bits: int = 3072
    crypto_rng: str = "deterministic"
    eval_src: int = 1
    eval_tgt: int = 0
    force_unit_trust: bool = False

    def __post_init__(self) -> None:
        if self.K < 4:
            raise ConfigError("K must be >= 4")
        if not 0 < self.C <= 1:
            raise ConfigError("C must be in (0, 1]")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.E < 1 or self.BS < 1:
            raise ConfigError("E and BS must be >= 1")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must be in [0, 1]")
        if self.defense not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown defense {self.defense!r}; choose from {', '.join(AGGREGATOR_KINDS)}")
        if self.dh_group not in GROUPS:
            raise ConfigError(f"unknown DH group {self.dh_group!r}")
        if self.crypto_rng not in ("deterministic", "system"):
            raise ConfigError("crypto_rng must be 'deterministic' or 'system'")

    @property
    def src_class(self) -> int:
        if self.attack is not None and self.attack.kind == "label_flip":
            return self.attack.src
        return self.eval_src

    @property
    def tgt_class(self) -> int:
        if self.attack is not None and self.attack.kind == "label_flip":
            return self.attack.tgt
        return self.eval_tgt

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["attack"] = self.attack.to_dict() if self.attack else None
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SimConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if raw.get("attack") is not None:
                raw["attack"] = AttackConfig(**raw["attack"])
            if "dataset" in raw:
                raw["dataset"] = DatasetSpec(**raw["dataset"])
            if "model" in raw:
                raw["model"] = ModelConfig(**raw["model"])
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **changes: Any) -> "SimConfig":
        return replace(self, **changes)


def load_config(path: str | Path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    return SimConfig.from_dict(raw)
