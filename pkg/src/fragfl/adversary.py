"""Poisoning behaviours and the three fragment-exchange attack strategies.

Attackers run the cryptography honestly and only poison parameter content:

* Strategy 1 exchanges poisoned ciphertexts and submits the resulting mix.
* Strategy 2 exchanges poisoned ciphertexts and submits the whole poisoned
  update under a pad whose seed it encrypts to the server itself.
* Strategy 3 exchanges poisoned ciphertexts but mixes its own honest update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .params import ParamWords
from .training import Dataset

MAX_ATTACKER_FRACTION = 0.2


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "gaussian"  # gaussian | label_flip
    sigma: float = 0.5
    src: int = 1
    tgt: int = 0
    strategy: int = 1
    attacker_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "label_flip"):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.strategy not in (1, 2, 3):
            raise ConfigError("strategy must be 1, 2 or 3")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.kind == "label_flip" and self.src == self.tgt:
            raise ConfigError("label flip needs src != tgt")
        if not 0 <= self.attacker_fraction <= MAX_ATTACKER_FRACTION:
            raise ConfigError(f"attacker fraction must be in [0, {MAX_ATTACKER_FRACTION}]")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "src": self.src,
            "tgt": self.tgt,
            "strategy": self.strategy,
            "attacker_fraction": self.attacker_fraction,
            "seed": self.seed,
        }


def choose_attackers(participants: Sequence[str], fraction: float, rng: np.random.Generator) -> list[str]:
    n = math.floor(fraction * len(participants) + 1e-9)
    picked = rng.choice(len(participants), size=n, replace=False)
    return sorted(participants[i] for i in picked)


def poison_gaussian(W: ParamWords, sigma: float, seed: int | np.random.Generator) -> ParamWords:
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    if sigma == 0:
        return W
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=len(W))
    return ParamWords.from_floats(W.floats64() + noise, W.layout)


def flip_labels(data: Dataset, src: int, tgt: int) -> Dataset:
    if src == tgt:
        raise ConfigError("label flip needs src != tgt")
    labels = np.where(data.labels == src, tgt, data.labels)
    return data.with_labels(labels)


@dataclass(frozen=True)
class AttackerPlan:
    """What an attacker feeds into the exchange and what it submits.

    ``exchange_update`` builds the ciphertexts sent to the partner,
    ``mix_update`` is combined with the partner's fragment for the attacker's
    own mix, and ``direct_submission`` (Strategy 2) replaces that mix with a
    full update sent under a fresh pad.
    """

    exchange_update: ParamWords
    mix_update: ParamWords
    direct_submission: ParamWords | None = None


def attacker_behavior(strategy: int, W_honest: ParamWords, W_poisoned: ParamWords) -> AttackerPlan:
    if strategy == 1:
        return AttackerPlan(W_poisoned, W_poisoned)
    if strategy == 2:
        return AttackerPlan(W_poisoned, W_poisoned, direct_submission=W_poisoned)
    if strategy == 3:
        return AttackerPlan(W_poisoned, W_honest)
    raise ConfigError("strategy must be 1, 2 or 3")
