from .adam import AdamState, adam_step, clip_by_norm
from .gradcheck import finite_difference, gradient_check, taped_gradient
from .net import LOGIT_CLIP, NetSpec, forward_eval, init_params
from .params import ParamStore, load_checkpoint, save_checkpoint
from .tape import MASKED_LOGPROB, Node, Tape, backward, softmax_masked

__all__ = [
    "AdamState",
    "LOGIT_CLIP",
    "MASKED_LOGPROB",
    "NetSpec",
    "Node",
    "ParamStore",
    "Tape",
    "adam_step",
    "backward",
    "clip_by_norm",
    "finite_difference",
    "forward_eval",
    "gradient_check",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "softmax_masked",
    "taped_gradient",
]
