"""Straight-line loss references: symmetric contrastive terms, gap-threshold
hard-negative sets, and the hinge rank loss."""

from .common import as_matrix, logsumexp, pstdev


def oracle_info_nce(s, tau):
    s = as_matrix(s)
    b = len(s)
    total = 0.0
    for i in range(b):
        row = [s[i][j] / tau for j in range(b)]
        col = [s[j][i] / tau for j in range(b)]
        total += (s[i][i] / tau - logsumexp(row)) + (s[i][i] / tau - logsumexp(col))
    return -total / (2.0 * b)


def oracle_hard_sets(s_qv, s_qn, lam):
    """Per-row and per-column hard sets from diagonal gaps vs lam * std."""
    s_qv, s_qn = as_matrix(s_qv), as_matrix(s_qn)
    b = len(s_qv)
    row_std_qv = [pstdev(s_qv[i]) for i in range(b)]
    row_std_qn = [pstdev(s_qn[i]) for i in range(b)]
    col_std_qv = [pstdev([s_qv[j][i] for j in range(b)]) for i in range(b)]
    col_std_qn = [pstdev([s_qn[j][i] for j in range(b)]) for i in range(b)]

    def sets_for(matrix, stds, transposed):
        out = []
        for i in range(b):
            members = set()
            for j in range(b):
                if j == i:
                    continue
                value = matrix[j][i] if transposed else matrix[i][j]
                if matrix[i][i] - value < lam * stds[i]:
                    members.add(j)
            out.append(members)
        return out

    h_qv = sets_for(s_qv, row_std_qv, False)
    h_qn = sets_for(s_qn, row_std_qn, False)
    h_qv_t = sets_for(s_qv, col_std_qv, True)
    h_qn_t = sets_for(s_qn, col_std_qn, True)
    unified = [h_qv[i] | h_qn[i] for i in range(b)]
    unified_t = [h_qv_t[i] | h_qn_t[i] for i in range(b)]
    return {
        "h_qv": h_qv, "h_qn": h_qn,
        "h": unified, "h_t": unified_t,
        "row_std_qv": row_std_qv, "row_std_qn": row_std_qn,
        "col_std_qv": col_std_qv, "col_std_qn": col_std_qn,
    }


def oracle_hard_rank_loss(s, unified, unified_t, row_std, col_std, lam, eta):
    s = as_matrix(s)
    b = len(s)
    total = 0.0
    for i in range(b):
        for j in unified[i]:
            total += max(0.0, s[i][j] - s[i][i] + eta * lam * row_std[i])
        for j in unified_t[i]:
            total += max(0.0, s[j][i] - s[i][i] + eta * lam * col_std[i])
    return total / (2.0 * b)


def oracle_total_loss(s_qv, s_qn, lam, eta, alpha, tau):
    nce = 0.5 * (oracle_info_nce(s_qv, tau) + oracle_info_nce(s_qn, tau))
    sets = oracle_hard_sets(s_qv, s_qn, lam)
    cvh = oracle_hard_rank_loss(s_qv, sets["h"], sets["h_t"],
                                sets["row_std_qv"], sets["col_std_qv"], lam, eta) \
        + oracle_hard_rank_loss(s_qn, sets["h"], sets["h_t"],
                                sets["row_std_qn"], sets["col_std_qn"], lam, eta)
    return nce + alpha * cvh


def oracle_hard_info_nce(s_qv, s_qn, unified, unified_t, tau):
    def one(matrix):
        m = as_matrix(matrix)
        b = len(m)
        total = 0.0
        for i in range(b):
            row = [m[i][i] / tau] + [m[i][j] / tau for j in sorted(unified[i])]
            col = [m[i][i] / tau] + [m[j][i] / tau for j in sorted(unified_t[i])]
            total += (m[i][i] / tau - logsumexp(row)) + (m[i][i] / tau - logsumexp(col))
        return -total / (2.0 * b)

    return 0.5 * (one(s_qv) + one(s_qn))
