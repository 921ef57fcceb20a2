from .boost import boost_sample
from .replay import ReplayBuffer, ReplayEntry, TrajectoryReplay, prt_sample
from .sampling import augment_backward, sample_trajectories, stream
from .trainer import LOG_COLUMNS, RunLog, Trainer, TrainPlan, TrainResult, env_fingerprint, train

__all__ = [
    "LOG_COLUMNS",
    "ReplayBuffer",
    "ReplayEntry",
    "RunLog",
    "TrainPlan",
    "TrajectoryReplay",
    "TrainResult",
    "Trainer",
    "augment_backward",
    "boost_sample",
    "env_fingerprint",
    "prt_sample",
    "sample_trajectories",
    "stream",
    "train",
]
