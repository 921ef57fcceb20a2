from .diagnostics import (
    ExplorationRatios,
    all_objectives,
    exploration_ratios,
    l1_to_target,
    maximal_mask,
    reward_landscape,
    target_distribution,
)
from .indicators import (
    IndicatorReport,
    d_h,
    das_dennis,
    face_discretization,
    gd,
    gd_plus,
    hypervolume,
    igd,
    igd_plus,
    indicator_report,
    pc_entropy,
    r2_indicator,
    reference_front,
)
from .pareto import FrontSet, nondominated_mask, pareto_front

__all__ = [
    "ExplorationRatios",
    "FrontSet",
    "IndicatorReport",
    "all_objectives",
    "d_h",
    "das_dennis",
    "exploration_ratios",
    "face_discretization",
    "gd",
    "gd_plus",
    "hypervolume",
    "igd",
    "igd_plus",
    "indicator_report",
    "l1_to_target",
    "maximal_mask",
    "nondominated_mask",
    "pareto_front",
    "pc_entropy",
    "r2_indicator",
    "reference_front",
    "reward_landscape",
    "target_distribution",
]
