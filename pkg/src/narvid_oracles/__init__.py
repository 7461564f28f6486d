"""Brute-force reference implementations used only to cross-check the engine.

Everything here is deliberately naive: plain Python loops over lists of
floats, no numpy, and no imports from the engine package. Any disagreement
with the engine is a bug in one of the two.
"""

from .blocks import (
    oracle_co_attention,
    oracle_multi_head_attention,
    oracle_temporal,
)
from .filtering import oracle_nucleus, oracle_relevance_probs, oracle_topk
from .losses import (
    oracle_hard_info_nce,
    oracle_hard_rank_loss,
    oracle_hard_sets,
    oracle_info_nce,
    oracle_total_loss,
)
from .metrics import oracle_fuse_standardized, oracle_rank_metrics
from .scores import oracle_coarse_score, oracle_fine_score, oracle_pair_score

__all__ = [
    "oracle_co_attention",
    "oracle_multi_head_attention",
    "oracle_temporal",
    "oracle_nucleus",
    "oracle_relevance_probs",
    "oracle_topk",
    "oracle_hard_info_nce",
    "oracle_hard_rank_loss",
    "oracle_hard_sets",
    "oracle_info_nce",
    "oracle_total_loss",
    "oracle_fuse_standardized",
    "oracle_rank_metrics",
    "oracle_coarse_score",
    "oracle_fine_score",
    "oracle_pair_score",
]
