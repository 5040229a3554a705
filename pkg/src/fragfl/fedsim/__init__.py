"""Round orchestration, message bus, cost model and configuration."""

from .bus import SERVER, Feedback, MessageBus, ModelBroadcast, PlainUpdate
from .commtime import CommTime, CostModelInput, comm_time
from .config import DatasetSpec, ModelConfig, SimConfig, load_config
from .pairing import Pairing, pair_participants
from .simulation import RoundReport, Simulation, SimulationReport, run_simulation

__all__ = [
    "SERVER",
    "CommTime",
    "CostModelInput",
    "DatasetSpec",
    "Feedback",
    "MessageBus",
    "ModelBroadcast",
    "ModelConfig",
    "Pairing",
    "PlainUpdate",
    "RoundReport",
    "SimConfig",
    "Simulation",
    "SimulationReport",
    "comm_time",
    "load_config",
    "pair_participants",
    "run_simulation",
]
