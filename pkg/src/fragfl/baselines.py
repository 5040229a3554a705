"""Plaintext comparison aggregators: FedAvg, median, trimmed mean, multi-Krum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .params import as_float64

AGGREGATOR_KINDS = ("fedavg", "median", "trimmed_mean", "multi_krum", "ffl")


@dataclass(frozen=True)
class AggregatorChoice:
    kind: str = "ffl"
    beta: float = 0.2
    f: int | None = None
    m_select: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator {self.kind!r}")
        if not 0 <= self.beta < 0.5:
            raise ConfigError("trimmed-mean beta must be in [0, 0.5)")


def _stack(updates: Sequence) -> np.ndarray:
    if len(updates) == 0:
        raise DomainError("no updates to aggregate")
    rows = [as_float64(u) for u in updates]
    if len({r.size for r in rows}) != 1:
        raise DomainError("updates have different shapes")
    return np.vstack(rows)


def fedavg(updates: Sequence, d: Sequence[float]) -> np.ndarray:
    X = _stack(updates)
    weights = np.asarray(d, dtype=np.float64)
    if weights.size != X.shape[0]:
        raise DomainError("one data count per update is required")
    total = weights.sum()
    if total <= 0:
        raise DomainError("total data count must be positive")
    return (weights / total) @ X


def coordinate_median(updates: Sequence) -> np.ndarray:
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates: Sequence, beta: float = 0.2) -> np.ndarray:
    X = np.sort(_stack(updates), axis=0)
    n = X.shape[0]
    cut = math.floor(beta * n)
    if n - 2 * cut <= 0:
        raise DomainError("trimming leaves no values")
    return X[cut : n - cut].mean(axis=0)


def default_krum_params(n: int) -> tuple[int, int]:
    f = math.ceil(0.2 * n)
    return f, n - f - 2


def krum_scores(updates: Sequence, f: int) -> np.ndarray:
    X = _stack(updates)
    n = X.shape[0]
    diff = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    closest = n - f - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(sq[i], i)
        scores[i] = np.sort(others)[:closest].sum()
    return scores


def multi_krum(updates: Sequence, f: int | None = None, m_select: int | None = None) -> np.ndarray:
    X = _stack(updates)
    n = X.shape[0]
    df, dm = default_krum_params(n)
    f = df if f is None else f
    m_select = dm if m_select is None else m_select
    if f < 0 or n < f + 3 or not 1 <= m_select <= n:
        raise DomainError(f"multi-Krum needs n >= f + 3 and 1 <= m <= n (n={n}, f={f}, m={m_select})")
    scores = krum_scores(X, f)
    chosen = np.argsort(scores, kind="stable")[:m_select]
    return X[np.sort(chosen)].mean(axis=0)


def aggregate(choice: AggregatorChoice, updates: Sequence, d: Sequence[float]) -> np.ndarray:
    """Dispatch a plaintext baseline.  Non-FedAvg rules expect unscaled updates."""
    if choice.kind == "fedavg":
        return fedavg(updates, d)
    if choice.kind == "median":
        return coordinate_median(updates)
    if choice.kind == "trimmed_mean":
        return trimmed_mean(updates, choice.beta)
    if choice.kind == "multi_krum":
        n = len(updates)
        f = choice.f if choice.f is not None else default_krum_params(n)[0]
        m = choice.m_select if choice.m_select is not None else n - f - 2
        return multi_krum(updates, f, m)
    raise ConfigError("the ffl defense is not a plaintext baseline")
