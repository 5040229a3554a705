"""Reputation-based scoring, selection and aggregation of mixed updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AggregationError, ConfigError, DomainError
from .params import LayerLayout, as_float64, coordinate_median

DEFAULT_ALPHA = 0.2


def quartile_q1(values: Sequence[float]) -> float:
    """First quartile by linear interpolation at fractional rank (n-1)/4."""
    xs = sorted(float(v) for v in values)
    if not xs:
        raise DomainError("Q1 of an empty sequence")
    rank = (len(xs) - 1) / 4.0
    lo = math.floor(rank)
    hi = min(lo + 1, len(xs) - 1)
    frac = rank - lo
    return xs[lo] + frac * (xs[hi] - xs[lo])


@dataclass
class ReputationState:
    """Server-held global reputations, per-participant local rows and trust."""

    gamma: dict[str, float]
    zeta: dict[str, dict[str, float]]
    trust: dict[str, float] = field(default_factory=dict)

    @classmethod
    def initial(cls, participants: Sequence[str]) -> "ReputationState":
        ids = list(participants)
        return cls(
            gamma={k: 0.0 for k in ids},
            zeta={k: {j: 0.0 for j in ids if j != k} for k in ids},
            trust={k: 0.0 for k in ids},
        )


def select_participants(C: float, gamma: Mapping[str, float], rng: np.random.Generator) -> list[str]:
    """Candidates at or above Q1 of gamma, then a random subset of max(floor(C|Sc|), 2)."""
    if not 0 < C <= 1:
        raise ConfigError("C must be in (0, 1]")
    q1 = quartile_q1(list(gamma.values()))
    candidates = sorted(k for k, g in gamma.items() if g >= q1)
    if len(candidates) < 2:
        raise ConfigError("fewer than 2 candidate participants")
    n = max(math.floor(C * len(candidates)), 2)
    picked = rng.choice(len(candidates), size=n, replace=False)
    return sorted(candidates[i] for i in picked)


def extract_mixed_gradient(W_t, mixed, eta: float) -> np.ndarray:
    if eta <= 0:
        raise DomainError("learning rate must be positive")
    return (as_float64(W_t) - as_float64(mixed)) / eta


@dataclass(frozen=True)
class SimilarityBreakdown:
    magnitude: np.ndarray
    ds: np.ndarray
    cs: np.ndarray
    sim: np.ndarray
    median_magnitude: float
    q1_sim: float


def compute_similarities(
    mixed_grads: Sequence[np.ndarray], layout: LayerLayout, alpha: float = DEFAULT_ALPHA
) -> SimilarityBreakdown:
    """Combined distance/cosine similarity of each mixed gradient, all in [0, 1].

    Distances are between each gradient norm and the median norm, inverted by
    the largest distance (all set to 1 when every distance is 0).  Cosines are
    taken between each last-layer slice and the coordinate-wise median of the
    slices; a zero-norm median or slice makes the cosine neutral (0).
    """
    if len(mixed_grads) < 2:
        raise DomainError("need at least two gradients")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must be in [0, 1]")
    grads = [as_float64(g) for g in mixed_grads]
    magnitude = np.array([np.linalg.norm(g) for g in grads])
    med = float(np.median(magnitude))
    raw_ds = np.abs(med - magnitude)
    top = raw_ds.max()
    ds = np.ones_like(raw_ds) if top == 0 else 1.0 - raw_ds / top

    off, length = layout.last_layer_range
    lasts = [g[off : off + length] for g in grads]
    med_last = coordinate_median(lasts)
    med_norm = np.linalg.norm(med_last)
    cos = np.zeros(len(grads))
    if med_norm > 0:
        for i, v in enumerate(lasts):
            nv = np.linalg.norm(v)
            if nv > 0:
                cos[i] = np.clip(np.dot(v, med_last) / (nv * med_norm), -1.0, 1.0)
    cs = (cos + 1.0) / 2.0
    sim = alpha * ds + (1.0 - alpha) * cs
    return SimilarityBreakdown(magnitude, ds, cs, sim, med, quartile_q1(sim))


def update_global_reputations(
    state: ReputationState, participants: Sequence[str], sim: Sequence[float]
) -> dict[str, float]:
    """Add ``sim_k - Q1(sim)`` to each gamma_k; returns those feedback deltas."""
    q1 = quartile_q1(sim)
    deltas = {k: float(s) - q1 for k, s in zip(participants, sim)}
    for k, d in deltas.items():
        state.gamma[k] += d
    return deltas


def update_local_reputation(zeta_k: dict[str, float], partner: str | None, delta: float) -> None:
    if partner is None:
        return
    zeta_k[partner] = zeta_k.get(partner, 0.0) + delta


def trust_vector(gamma: Mapping[str, float]) -> dict[str, float]:
    """nu_k = max(tanh(gamma_k - Q1(gamma)), 0) over the given reputations."""
    q1 = quartile_q1(list(gamma.values()))
    return {k: max(math.tanh(g - q1), 0.0) for k, g in gamma.items()}


def adaptive_aggregate(
    mixed: Sequence[np.ndarray], nu: Sequence[float], d: Sequence[float]
) -> np.ndarray:
    """Trust-weighted sum of pre-scaled mixes over the trust-weighted data count.

    Callers pass the mixes already sorted in a canonical order; the sum is
    taken strictly in that order.
    """
    if not (len(mixed) == len(nu) == len(d)) or not mixed:
        raise DomainError("mixed, nu and d must be non-empty and equally long")
    denom = 0.0
    for n_k, d_k in zip(nu, d):
        denom += n_k * d_k
    if denom <= 0:
        raise AggregationError("sum of trust-weighted data counts is zero")
    total = np.zeros_like(as_float64(mixed[0]))
    for n_k, w in zip(nu, mixed):
        if n_k:
            total = total + n_k * as_float64(w)
    return total / denom
