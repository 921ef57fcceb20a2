from .base import ENV_KINDS, Env, EnvDescriptor, State, StateBatch, Trajectory, TrajectoryBatch, dominated_by
from .hypergrid import HyperGrid
from .sequence import SequenceEnv


def make_env(desc: EnvDescriptor) -> Env:
    if desc.kind in ("hypergrid", "cosine-grid"):
        return HyperGrid(desc)
    return SequenceEnv(desc)


__all__ = [
    "ENV_KINDS",
    "Env",
    "EnvDescriptor",
    "HyperGrid",
    "SequenceEnv",
    "State",
    "StateBatch",
    "Trajectory",
    "TrajectoryBatch",
    "dominated_by",
    "make_env",
]
