"""Per-round communication-time model for FL, FFL and BREA.

Speeds are in Mbit/s, sizes in bits, latency in seconds.  Participant to
participant traffic is charged at the upload speed.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DomainError

DH_BITS = 2048
SEED_CT_BITS = 3072
SCALAR_BITS = 32
FRAMEWORKS = ("fl", "ffl", "brea")


@dataclass(frozen=True)
class CostModelInput:
    model_bits: float
    down_mbps: float
    up_mbps: float
    latency_s: float
    n_participants: int = 0
    framework: str = "ffl"


@dataclass(frozen=True)
class CommTime:
    sp_s: float
    pp_s: float
    latency_s: float

    @property
    def total_s(self) -> float:
        return self.sp_s + self.pp_s + self.latency_s

    def to_dict(self) -> dict:
        return {"sp_s": self.sp_s, "pp_s": self.pp_s, "latency_s": self.latency_s, "total_s": self.total_s}


def comm_time(inp: CostModelInput) -> CommTime:
    if inp.down_mbps <= 0 or inp.up_mbps <= 0:
        raise DomainError("link speeds must be positive")
    if inp.latency_s < 0 or inp.model_bits < 0:
        raise DomainError("latency and model size must be non-negative")
    down = inp.down_mbps * 1e6
    up = inp.up_mbps * 1e6
    D, lat, n = inp.model_bits, inp.latency_s, inp.n_participants
    if inp.framework == "fl":
        return CommTime(D / down + D / up, 0.0, 2 * lat)
    if inp.framework == "ffl":
        # model + reputation scalar down, mix + seed ciphertext up
        sp = (D + SCALAR_BITS) / down + (D + SEED_CT_BITS) / up
        pp = (4 * D + 2 * DH_BITS + 2 * SEED_CT_BITS) / up
        return CommTime(sp, pp, 6 * lat)
    if inp.framework == "brea":
        if n < 1:
            raise DomainError("BREA needs n_participants >= 1")
        sp = D / down + (D + SCALAR_BITS * n) / up
        pp = 2 * D * n / up
        return CommTime(sp, pp, (3 + 2 * n) * lat)
    raise DomainError(f"unknown framework {inp.framework!r}")
