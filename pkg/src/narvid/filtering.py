"""Query-aware adaptive filtering over enhanced feature sequences.

Relevance of each row to the query's EOS vector is softmax-normalized, then
rows are kept in descending-probability order (ties to the lower index)
until the cumulative probability reaches the nucleus threshold p. The kept
index set is a hard, non-differentiable decision; gradients flow through
the softmax and the renormalized pooling weights only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


@dataclass
class FilterSelection:
    """Result of filtering one (query, sequence) pair."""

    raw_sims: np.ndarray      # cosine of EOS vs each of the K rows
    probs: ad.Tensor          # softmax_temp(raw_sims, tau), length K
    selected: list            # kept indices, descending probability
    weights: ad.Tensor        # probs over selected, renormalized to sum 1

    @property
    def count(self):
        return len(self.selected)


def relevance_scores(query_eos, features, tau):
    """Softmax-normalized cosine relevance of each feature row to the EOS."""
    query_eos = query_eos if isinstance(query_eos, ad.Tensor) else ad.Tensor(query_eos)
    features = features if isinstance(features, ad.Tensor) else ad.Tensor(features)
    d = query_eos.data.shape[0]
    unit_eos = ad.reshape(ad.normalize_rows(query_eos), (d, 1))
    sims = ad.reshape(ad.normalize_rows(features) @ unit_eos, (features.data.shape[0],))
    return sims, ad.softmax_temp(sims, tau)


def _descending_order(probs):
    # stable sort on the negated values: descending, lower index wins ties
    return np.argsort(-probs, kind="stable")


def _finish(raw_sims, probs, selected):
    kept = ad.take_rows(probs, selected)
    weights = kept / ad.tsum(kept)
    return FilterSelection(raw_sims=raw_sims, probs=probs,
                           selected=list(selected), weights=weights)


def nucleus_select(probs, p, raw_sims=None):
    """Keep rows until cumulative probability reaches p (always at least one)."""
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"nucleus threshold must be in (0, 1], got {p}")
    probs = probs if isinstance(probs, ad.Tensor) else ad.Tensor(probs)
    values = probs.data
    order = _descending_order(values)
    selected = []
    cumulative = 0.0
    for idx in order:
        selected.append(int(idx))
        cumulative += values[idx]
        if cumulative >= p:
            break
    sims = values if raw_sims is None else raw_sims
    return _finish(sims, probs, selected)


def topk_select(probs, k, raw_sims=None):
    """Fixed-count ablation of nucleus selection (same ordering rule)."""
    if k < 1:
        raise ConfigError(f"top-k needs k >= 1, got {k}")
    probs = probs if isinstance(probs, ad.Tensor) else ad.Tensor(probs)
    order = _descending_order(probs.data)[:k]
    sims = probs.data if raw_sims is None else raw_sims
    return _finish(sims, probs, [int(i) for i in order])


def select(probs, mode="nucleus", p=0.4, k=3, raw_sims=None):
    if mode == "nucleus":
        return nucleus_select(probs, p, raw_sims=raw_sims)
    if mode == "topk":
        return topk_select(probs, k, raw_sims=raw_sims)
    raise ConfigError(f"unknown filter mode {mode!r}")


def filter_sequence(query_eos, features, p, tau, mode="nucleus", k=3):
    sims, probs = relevance_scores(query_eos, features, tau)
    return select(probs, mode=mode, p=p, k=k, raw_sims=sims.data.copy())


def filter_pair(query_eos, v_check, n_check, p, tau, mode="nucleus", k=3):
    """Filter video and narration independently against the same EOS."""
    return (filter_sequence(query_eos, v_check, p, tau, mode=mode, k=k),
            filter_sequence(query_eos, n_check, p, tau, mode=mode, k=k))
