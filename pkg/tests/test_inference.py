import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narvid.data import Dataset, Episode
from narvid.errors import ConfigError, ShapeError, UsageError
from narvid.inference import (
    FUSION_MODES,
    fuse,
    fusion_stats,
    rank_metrics,
    zero_shot_eval,
)
from narvid_oracles import oracle_fuse_standardized, oracle_rank_metrics


def test_fuse_affine_related_matrices_collapse():
    r = np.random.default_rng(0)
    s_qv = r.normal(size=(5, 5))
    s_qn = 3.0 * s_qv + 7.0
    fused = fuse(s_qv, s_qn, mode="standardized")
    z = (s_qv - s_qv.mean()) / s_qv.std()
    np.testing.assert_allclose(fused, 2.0 * z, atol=1e-10)
    assert (fused.argmax(axis=1) == s_qv.argmax(axis=1)).all()


def test_fuse_constant_matrix_standardizes_to_zero():
    const = np.full((3, 3), 4.2)
    fused = fuse(const, const, mode="standardized")
    np.testing.assert_array_equal(fused, np.zeros((3, 3)))


def test_fuse_modes_and_errors():
    r = np.random.default_rng(1)
    a, b = r.normal(size=(4, 4)), r.normal(size=(4, 4))
    np.testing.assert_array_equal(fuse(a, b, mode="sum"), a + b)
    np.testing.assert_array_equal(fuse(a, b, mode="qv"), a)
    np.testing.assert_array_equal(fuse(a, b, mode="qn"), b)
    with pytest.raises(ConfigError):
        fuse(a, b, mode="mystery")
    with pytest.raises(ShapeError):
        fuse(a, np.zeros((3, 4)))


def test_fuse_matches_oracle():
    r = np.random.default_rng(2)
    a, b = r.normal(size=(6, 6)), r.normal(size=(6, 6)) * 5 + 3
    fused = fuse(a, b, mode="standardized")
    expect = np.array(oracle_fuse_standardized(a.tolist(), b.tolist()))
    np.testing.assert_allclose(fused, expect, atol=1e-12)


@given(st.integers(0, 10 ** 9))
@settings(max_examples=60, deadline=None)
def test_fused_argmax_invariant_under_positive_affine(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 7))
    a, b = r.normal(size=(n, n)), r.normal(size=(n, n))
    base = fuse(a, b, mode="standardized")
    scale_a, shift_a = float(r.uniform(0.1, 10)), float(r.normal())
    scale_b, shift_b = float(r.uniform(0.1, 10)), float(r.normal())
    moved = fuse(scale_a * a + shift_a, scale_b * b + shift_b, mode="standardized")
    np.testing.assert_allclose(base, moved, atol=1e-9)


def test_fusion_stats_fields():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    stats = fusion_stats(a, 2 * a)
    assert stats.mu_qv == 2.5 and stats.mu_qn == 5.0
    assert abs(stats.sigma_qv - a.std()) <= 1e-15


def test_rank_metrics_identity_dominant():
    s = np.eye(4) + 0.01
    report = rank_metrics(s)
    assert report.r1 == 100.0 and report.mdr == 1.0 and report.mnr == 1.0
    assert report.n == 4


def test_rank_metrics_diagonal_worst():
    n = 4
    s = np.ones((n, n))
    np.fill_diagonal(s, 0.0)
    report = rank_metrics(s)
    assert report.r1 == 0.0
    assert report.mnr == 4.0
    assert report.mdr == 4.0


def test_rank_metrics_tie_counts_against():
    s = np.array([[1.0, 1.0, 0.0],
                  [0.0, 2.0, 0.0],
                  [0.0, 0.0, 2.0]])
    report = rank_metrics(s)
    # row 0 ties -> rank 2; others rank 1
    assert report.r1 == pytest.approx(100.0 * 2 / 3)
    assert report.mdr == 1.0


def test_rank_metrics_monotone_in_k():
    r = np.random.default_rng(3)
    s = r.normal(size=(12, 12))
    report = rank_metrics(s)
    assert report.r1 <= report.r5 <= report.r10


def test_rank_metrics_even_median_is_midpoint():
    s = np.array([[1.0, 0.0], [1.0, 0.0]])  # ranks: 1 and 2
    report = rank_metrics(s)
    assert report.mdr == 1.5


def test_rank_metrics_custom_mapping_and_errors():
    s = np.array([[0.1, 0.9], [0.8, 0.2], [0.7, 0.3]])
    report = rank_metrics(s, ground_truth=[1, 0, 0])
    assert report.r1 == 100.0
    with pytest.raises(UsageError):
        rank_metrics(s)  # non-square without mapping
    with pytest.raises(UsageError):
        rank_metrics(s, ground_truth=[0, 0, 5])


@given(st.integers(0, 10 ** 9))
@settings(max_examples=100, deadline=None)
def test_rank_metrics_match_oracle(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 9))
    s = r.normal(size=(n, n))
    report = rank_metrics(s)
    expect = oracle_rank_metrics(s.tolist())
    assert report.r1 == pytest.approx(expect["r1"])
    assert report.r5 == pytest.approx(expect["r5"])
    assert report.r10 == pytest.approx(expect["r10"])
    assert report.mdr == pytest.approx(expect["mdr"])
    assert report.mnr == pytest.approx(expect["mnr"])


def test_rank_metrics_permutation_scores():
    # scores built from a permutation matrix reproduce that permutation's ranks
    r = np.random.default_rng(4)
    n = 6
    perm = r.permutation(n)
    s = np.zeros((n, n))
    s[np.arange(n), perm] = 1.0
    report = rank_metrics(s, ground_truth=perm)
    assert report.r1 == 100.0
    # transpose direction: scores say column perm[i] belongs to row i
    v2t = rank_metrics(s.T, ground_truth=np.argsort(perm), direction="v2t")
    assert v2t.r1 == 100.0


def planted_dataset(n=6, k=3, l=2, d=16, seed=0, corrupt_captions=False):
    r = np.random.default_rng(seed)
    eps = []
    for i in range(n):
        t = r.normal(size=d)
        t /= np.linalg.norm(t)
        tokens = np.tile(t, (l + 1, 1))
        frames = np.tile(t, (k, 1))
        captions = r.normal(size=(k, d)) if corrupt_captions else frames.copy()
        eps.append(Episode(id=f"z{i}", query_tokens=tokens, frames=frames,
                           captions=captions))
    return Dataset(episodes=eps, dim=d)


def test_zero_shot_perfect_on_planted():
    reports = zero_shot_eval(planted_dataset())
    assert reports["qv"].r1 == 100.0
    assert set(reports) == set(FUSION_MODES)


def test_zero_shot_corrupted_captions_hurt_qn_mode():
    reports = zero_shot_eval(planted_dataset(corrupt_captions=True, seed=5))
    assert reports["qn"].r1 < reports["qv"].r1
    assert reports["qv"].r1 == 100.0


def test_zero_shot_single_episode_all_perfect():
    reports = zero_shot_eval(planted_dataset(n=1))
    for report in reports.values():
        assert report.r1 == 100.0 and report.mdr == 1.0


def test_zero_shot_rejects_unknown_pooling():
    with pytest.raises(ConfigError):
        zero_shot_eval(planted_dataset(), pooling="max")


def test_report_json_shape():
    report = rank_metrics(np.eye(3), direction="t2v", mode="qv")
    payload = report.to_dict()
    assert list(payload) == ["direction", "mode", "r1", "r5", "r10", "mdr", "mnr", "n"]
