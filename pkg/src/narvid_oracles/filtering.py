"""Descending-scan reference for relevance scoring and nucleus selection."""

from .common import as_matrix, as_vector, cosine, softmax_temp


def oracle_relevance_probs(query_eos, features, tau):
    eos = as_vector(query_eos)
    sims = [cosine(eos, row) for row in as_matrix(features)]
    return softmax_temp(sims, tau)


def oracle_nucleus(probs, p):
    """Pick highest-prob indices (ties: lower index) until the running sum
    reaches p; returns (selected order, renormalized weights)."""
    probs = as_vector(probs)
    remaining = list(range(len(probs)))
    selected = []
    cumulative = 0.0
    while remaining:
        best = remaining[0]
        for idx in remaining[1:]:
            if probs[idx] > probs[best]:
                best = idx
        remaining.remove(best)
        selected.append(best)
        cumulative += probs[best]
        if cumulative >= p:
            break
    total = 0.0
    for idx in selected:
        total += probs[idx]
    weights = [probs[idx] / total for idx in selected]
    return selected, weights


def oracle_topk(probs, k):
    probs = as_vector(probs)
    k = min(k, len(probs))
    remaining = list(range(len(probs)))
    selected = []
    for _ in range(k):
        best = remaining[0]
        for idx in remaining[1:]:
            if probs[idx] > probs[best]:
                best = idx
        remaining.remove(best)
        selected.append(best)
    total = 0.0
    for idx in selected:
        total += probs[idx]
    weights = [probs[idx] / total for idx in selected]
    return selected, weights
