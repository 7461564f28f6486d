"""Double-loop reference scoring: pooling cosine plus max-similarity sums."""

from .common import as_matrix, as_vector, cosine, dot, softmax_temp
from .filtering import oracle_nucleus, oracle_relevance_probs


def oracle_coarse_score(query_eos, weights, selected_rows):
    eos = as_vector(query_eos)
    rows = as_matrix(selected_rows)
    dim = len(eos)
    pooled = [0.0] * dim
    for w, row in zip(as_vector(weights), rows):
        for j in range(dim):
            pooled[j] += w * row[j]
    return cosine(eos, pooled)


def oracle_fine_score(words, selected_rows, weights, word_weight, word_bias, tau):
    words = as_matrix(words)
    rows = as_matrix(selected_rows)
    weights = as_vector(weights)
    sim = [[cosine(row, word) for word in words] for row in rows]
    s_w2f = 0.0
    for k, row_sims in enumerate(sim):
        s_w2f += weights[k] * max(row_sims)
    logits = [dot(as_vector(word_weight), word) + float(word_bias) for word in words]
    word_probs = softmax_temp(logits, tau)
    s_f2w = 0.0
    for l, a in enumerate(word_probs):
        best = sim[0][l]
        for k in range(1, len(rows)):
            if sim[k][l] > best:
                best = sim[k][l]
        s_f2w += a * best
    return s_w2f, s_f2w


def oracle_pair_score(query_tokens, candidate_rows, p, tau, word_weight, word_bias):
    """Full per-pair score: filter, coarse pooling, and both fine directions."""
    tokens = as_matrix(query_tokens)
    eos = tokens[-1]
    words = tokens[:-1]
    rows = as_matrix(candidate_rows)
    probs = oracle_relevance_probs(eos, rows, tau)
    selected, weights = oracle_nucleus(probs, p)
    kept = [rows[i] for i in selected]
    s_coarse = oracle_coarse_score(eos, weights, kept)
    s_w2f, s_f2w = oracle_fine_score(words, kept, weights, word_weight, word_bias, tau)
    s_fine = s_w2f + s_f2w
    return {
        "selected": selected,
        "weights": weights,
        "s_coarse": s_coarse,
        "s_w2f": s_w2f,
        "s_f2w": s_f2w,
        "s_fine": s_fine,
        "s_final": (s_coarse + s_fine) / 2.0,
    }
