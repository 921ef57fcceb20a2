from .exact import mean_backward_kl, reachable_states, terminal_log_probs, terminal_log_rewards
from .losses import (
    LOSS_KINDS,
    PAIRINGS,
    LossConfig,
    composite_loss,
    db_loss,
    fm_loss,
    kl_reg,
    learned_log_reward,
    log_target,
    op_loss,
    op_loss_pairwise,
    op_loss_pareto,
    pareto_mask,
    scalarize_preference,
    subtb_loss,
    tb_loss,
)
from .model import FlowModel, ModelConfig, TrajEval

__all__ = [
    "FlowModel",
    "LOSS_KINDS",
    "LossConfig",
    "ModelConfig",
    "PAIRINGS",
    "TrajEval",
    "composite_loss",
    "db_loss",
    "fm_loss",
    "kl_reg",
    "learned_log_reward",
    "log_target",
    "mean_backward_kl",
    "op_loss",
    "op_loss_pairwise",
    "op_loss_pareto",
    "pareto_mask",
    "reachable_states",
    "scalarize_preference",
    "subtb_loss",
    "tb_loss",
    "terminal_log_probs",
    "terminal_log_rewards",
]
