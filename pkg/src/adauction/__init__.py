"""Position-auction mechanisms: assignment, IC prices, rank rules, slotted model, audits."""
from .matching import CtrMatrix, Matching, check_ctr, max_weight_matching
from .pricing import AffineParams, Outcome, PaymentVector, PriceSchedule, affine_maximizer_outcome, vcg_outcome
from .thresholds import compute_prices, optmatch_thresholds, prices_from_thresholds
from .priors import GammaPrior, UniformPrior, clipped_virtual, empirical_virtual, iron, virtual_value
from .rank import crb_outcome, example2_analytics, optimize_rank_vector, rb_outcome
from .slotted import revenue_upper_bound, slotted_crb_outcome, slotted_heuristic_outcome

__all__ = [
    "CtrMatrix",
    "Matching",
    "check_ctr",
    "max_weight_matching",
    "AffineParams",
    "Outcome",
    "PaymentVector",
    "PriceSchedule",
    "affine_maximizer_outcome",
    "vcg_outcome",
    "compute_prices",
    "optmatch_thresholds",
    "prices_from_thresholds",
    "GammaPrior",
    "UniformPrior",
    "clipped_virtual",
    "empirical_virtual",
    "iron",
    "virtual_value",
    "crb_outcome",
    "example2_analytics",
    "optimize_rank_vector",
    "rb_outcome",
    "revenue_upper_bound",
    "slotted_crb_outcome",
    "slotted_heuristic_outcome",
]
