"""Reference ranking metrics and standardized fusion."""

import math

from .common import as_matrix, mean, pstdev


def oracle_rank_metrics(s, ground_truth=None):
    """Pessimistic ranks: ties with the ground-truth score count against it."""
    s = as_matrix(s)
    n = len(s)
    gt = list(range(n)) if ground_truth is None else list(ground_truth)
    ranks = []
    for i in range(n):
        target = s[i][gt[i]]
        rank = 1
        for j in range(len(s[i])):
            if j != gt[i] and s[i][j] >= target:
                rank += 1
        ranks.append(rank)
    ordered = sorted(ranks)
    if n % 2 == 1:
        mdr = float(ordered[n // 2])
    else:
        mdr = (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    return {
        "r1": 100.0 * sum(1 for r in ranks if r <= 1) / n,
        "r5": 100.0 * sum(1 for r in ranks if r <= 5) / n,
        "r10": 100.0 * sum(1 for r in ranks if r <= 10) / n,
        "mdr": mdr,
        "mnr": mean([float(r) for r in ranks]),
        "ranks": ranks,
    }


def oracle_fuse_standardized(s_qv, s_qn, eps=1e-8):
    s_qv, s_qn = as_matrix(s_qv), as_matrix(s_qn)

    def standardize(m):
        flat = [x for row in m for x in row]
        mu = mean(flat)
        sigma = max(pstdev(flat), eps)
        return [[(x - mu) / sigma for x in row] for row in m]

    a = standardize(s_qv)
    b = standardize(s_qn)
    return [[a[i][j] + b[i][j] for j in range(len(a[0]))] for i in range(len(a))]
