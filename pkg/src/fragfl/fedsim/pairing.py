"""Seeded matching of selected participants into exchange pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..defense import quartile_q1


@dataclass
class Pairing:
    pairs: list[tuple[str, str]] = field(default_factory=list)  # (initiator, acceptor)
    unmatched: list[str] = field(default_factory=list)
    rejections: list[tuple[str, str]] = field(default_factory=list)  # (proposer, refuser)

    def partner_of(self, k: str) -> str | None:
        for a, b in self.pairs:
            if a == k:
                return b
            if b == k:
                return a
        return None

    def as_map(self) -> dict[str, str]:
        return {a: b for a, b in self.pairs}


def pair_participants(
    S: Sequence[str], zeta: Mapping[str, Mapping[str, float]], rng: np.random.Generator
) -> Pairing:
    """Random proposals filtered by local reputations until nothing changes.

    k proposes only to unmatched board members j with zeta[k][j] >= Q1 of
    k's row, and j accepts only if zeta[j][k] >= Q1 of j's row.  A refused
    proposal is never repeated within the round.
    """
    q1 = {k: quartile_q1(list(zeta[k].values())) if zeta[k] else 0.0 for k in S}
    unmatched = set(S)
    refused: set[tuple[str, str]] = set()
    result = Pairing()
    progress = True
    while progress:
        progress = False
        order = sorted(unmatched)
        for i in rng.permutation(len(order)):
            k = order[i]
            if k not in unmatched:
                continue
            candidates = sorted(
                j for j in unmatched if j != k and (k, j) not in refused and zeta[k].get(j, 0.0) >= q1[k]
            )
            if not candidates:
                continue
            j = candidates[int(rng.integers(len(candidates)))]
            progress = True
            if zeta[j].get(k, 0.0) >= q1[j]:
                result.pairs.append((k, j))
                unmatched.discard(k)
                unmatched.discard(j)
            else:
                refused.add((k, j))
                result.rejections.append((k, j))
    result.unmatched = sorted(unmatched)
    return result
