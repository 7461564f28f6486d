"""Multi-granularity scoring of a query against a candidate sequence.

Coarse: cosine between the query EOS and the filtering-weighted pooled
candidate rows. Fine: all-pairs cosine between kept rows and query words,
reduced by row-wise and word-wise maxima; the row direction is weighted by
the filter weights, the word direction by a trained softmax over a linear
map of the words. Rows are queries and columns are candidates throughout;
none of the matrices here are symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import UsageError
from .filtering import FilterSelection, filter_sequence

DEFAULT_P = 0.4
DEFAULT_TAU = 0.1


@dataclass
class PairScore:
    """Score components for one (query, candidate) pair; all scalar tensors."""

    s_coarse: ad.Tensor
    s_w2f: ad.Tensor
    s_f2w: ad.Tensor
    s_fine: ad.Tensor
    s_final: ad.Tensor
    selection: FilterSelection

    def as_floats(self):
        return {
            "s_coarse": self.s_coarse.item(),
            "s_w2f": self.s_w2f.item(),
            "s_f2w": self.s_f2w.item(),
            "s_fine": self.s_fine.item(),
            "s_final": self.s_final.item(),
        }


def coarse_score(query_eos, selection: FilterSelection, features):
    """Cosine of the EOS against the weight-pooled kept rows."""
    query_eos = query_eos if isinstance(query_eos, ad.Tensor) else ad.Tensor(query_eos)
    features = features if isinstance(features, ad.Tensor) else ad.Tensor(features)
    kept = ad.take_rows(features, selection.selected)
    pooled = ad.reshape(ad.reshape(selection.weights, (1, selection.count)) @ kept,
                        (features.data.shape[1],))
    return ad.cosine(query_eos, pooled)


def fine_score(query_words, selection: FilterSelection, features,
               word_weight, word_bias, tau=DEFAULT_TAU):
    """Row-to-word and word-to-row max-similarity scores over kept rows."""
    query_words = query_words if isinstance(query_words, ad.Tensor) \
        else ad.Tensor(query_words)
    features = features if isinstance(features, ad.Tensor) else ad.Tensor(features)
    n_words = query_words.data.shape[0]
    if n_words < 1:
        raise UsageError("fine matching needs at least one query word")
    kept = ad.take_rows(features, selection.selected)
    sim = ad.cosine_matrix(kept, query_words)  # (kept, words)
    s_w2f = ad.tsum(selection.weights * ad.tmax(sim, axis=1))
    d = query_words.data.shape[1]
    logits = ad.reshape(query_words @ ad.reshape(word_weight, (d, 1)), (n_words,)) \
        + word_bias
    word_probs = ad.softmax_temp(logits, tau)
    s_f2w = ad.tsum(word_probs * ad.tmax(sim, axis=0))
    return s_w2f, s_f2w


def pair_score(query_tokens, candidate, params, p=DEFAULT_P, tau=DEFAULT_TAU,
               filter_mode="nucleus", filter_k=3) -> PairScore:
    """Filter the candidate rows against the query, then average coarse and
    fine scores. Identical procedure for video and narration candidates."""
    tokens = query_tokens.data if isinstance(query_tokens, ad.Tensor) \
        else np.asarray(query_tokens, dtype=np.float64)
    eos = ad.Tensor(tokens[-1])
    words = ad.Tensor(tokens[:-1])
    selection = filter_sequence(eos, candidate, p, tau, mode=filter_mode, k=filter_k)
    s_coarse = coarse_score(eos, selection, candidate)
    s_w2f, s_f2w = fine_score(words, selection, candidate,
                              params.word_weight, params.word_bias, tau)
    s_fine = s_w2f + s_f2w
    s_final = 0.5 * (s_coarse + s_fine)
    return PairScore(s_coarse=s_coarse, s_w2f=s_w2f, s_f2w=s_f2w,
                     s_fine=s_fine, s_final=s_final, selection=selection)


def similarity_matrices(episodes, enhanced, params, p=DEFAULT_P, tau=DEFAULT_TAU,
                        filter_mode="nucleus", filter_k=3):
    """B x B query-video and query-narration score matrices.

    Enhancement is per-episode and passed in; filtering depends on the
    (query, candidate) pair so each of the B^2 entries re-filters.
    """
    rows_qv, rows_qn = [], []
    for ep in episodes:
        row_qv, row_qn = [], []
        for feats in enhanced:
            row_qv.append(pair_score(ep.query_tokens, feats.v_check, params,
                                     p=p, tau=tau, filter_mode=filter_mode,
                                     filter_k=filter_k).s_final)
            row_qn.append(pair_score(ep.query_tokens, feats.n_check, params,
                                     p=p, tau=tau, filter_mode=filter_mode,
                                     filter_k=filter_k).s_final)
        rows_qv.append(ad.stack(row_qv))
        rows_qn.append(ad.stack(row_qn))
    return ad.stack(rows_qv), ad.stack(rows_qn)
