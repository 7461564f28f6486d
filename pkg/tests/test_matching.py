import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narvid import autodiff as ad
from narvid.data import Episode
from narvid.errors import UsageError
from narvid.filtering import FilterSelection, nucleus_select
from narvid.matching import (
    coarse_score,
    fine_score,
    pair_score,
    similarity_matrices,
)
from narvid.model import enhance, init_params
from narvid_oracles import oracle_coarse_score, oracle_fine_score, oracle_pair_score


def one_hot_selection(k, index):
    probs = np.full(k, 1e-9)
    probs[index] = 1.0 - probs.sum() + 1e-9
    return nucleus_select(probs / probs.sum(), p=0.5)


def test_coarse_one_hot_is_plain_cosine():
    r = np.random.default_rng(0)
    eos = r.normal(size=4)
    feats = r.normal(size=(3, 4))
    sel = one_hot_selection(3, 1)
    assert sel.selected == [1]
    got = coarse_score(ad.Tensor(eos), sel, ad.Tensor(feats)).item()
    expect = ad.cosine(ad.Tensor(eos), ad.Tensor(feats[1])).item()
    assert abs(got - expect) <= 1e-12


def test_coarse_identical_selected_rows():
    r = np.random.default_rng(1)
    eos = r.normal(size=4)
    row = r.normal(size=4)
    feats = np.vstack([row, row, r.normal(size=4)])
    sel = nucleus_select(np.array([0.5, 0.4, 0.1]), p=0.8)
    assert sel.selected == [0, 1]
    got = coarse_score(ad.Tensor(eos), sel, ad.Tensor(feats)).item()
    expect = ad.cosine(ad.Tensor(eos), ad.Tensor(row)).item()
    assert abs(got - expect) <= 1e-12


def test_coarse_matches_oracle():
    r = np.random.default_rng(2)
    eos = r.normal(size=5)
    feats = r.normal(size=(6, 5))
    sel = nucleus_select(r.dirichlet(np.ones(6)), p=0.7)
    got = coarse_score(ad.Tensor(eos), sel, ad.Tensor(feats)).item()
    expect = oracle_coarse_score(eos.tolist(), sel.weights.data.tolist(),
                                 feats[sel.selected].tolist())
    assert abs(got - expect) <= 1e-12


def params_for(d, seed=0):
    return init_params(d, 2 if d % 2 == 0 else 1, 8, seed=seed)


def test_fine_single_row_single_word():
    r = np.random.default_rng(3)
    d = 4
    params = params_for(d)
    word = r.normal(size=(1, d))
    feat = r.normal(size=(1, d))
    sel = nucleus_select(np.array([1.0]), p=0.5)
    s_w2f, s_f2w = fine_score(ad.Tensor(word), sel, ad.Tensor(feat),
                              params.word_weight, params.word_bias, tau=0.1)
    c = ad.cosine(ad.Tensor(feat[0]), ad.Tensor(word[0])).item()
    assert abs(s_w2f.item() - c) <= 1e-12
    assert abs(s_f2w.item() - c) <= 1e-12


def test_fine_self_similarity_is_one():
    r = np.random.default_rng(4)
    d = 6
    params = params_for(d)
    rows = r.normal(size=(3, d))
    sel = nucleus_select(np.full(3, 1 / 3), p=1.0)
    s_w2f, s_f2w = fine_score(ad.Tensor(rows), sel, ad.Tensor(rows),
                              params.word_weight, params.word_bias, tau=0.1)
    assert abs(s_w2f.item() - 1.0) <= 1e-12
    assert abs(s_f2w.item() - 1.0) <= 1e-12


def test_fine_matches_oracle():
    r = np.random.default_rng(5)
    d = 5
    params = params_for(d, seed=6)
    words = r.normal(size=(3, d))
    feats = r.normal(size=(4, d))
    sel = nucleus_select(r.dirichlet(np.ones(4)), p=0.9)
    s_w2f, s_f2w = fine_score(ad.Tensor(words), sel, ad.Tensor(feats),
                              params.word_weight, params.word_bias, tau=0.1)
    ew2f, ef2w = oracle_fine_score(words.tolist(), feats[sel.selected].tolist(),
                                   sel.weights.data.tolist(),
                                   params.word_weight.data.tolist(),
                                   float(params.word_bias.data), tau=0.1)
    assert abs(s_w2f.item() - ew2f) <= 1e-12
    assert abs(s_f2w.item() - ef2w) <= 1e-12


def test_fine_rejects_empty_words():
    params = params_for(4)
    sel = nucleus_select(np.array([1.0]), p=0.5)
    with pytest.raises(UsageError):
        fine_score(ad.Tensor(np.zeros((0, 4))), sel, ad.Tensor(np.ones((1, 4))),
                   params.word_weight, params.word_bias)


def test_pair_score_all_rows_equal_eos():
    d = 4
    params = params_for(d, seed=7)
    eos = np.random.default_rng(8).normal(size=d)
    tokens = np.vstack([eos, eos])  # one word == EOS, then EOS
    candidate = np.tile(eos, (3, 1))
    score = pair_score(tokens, ad.Tensor(candidate), params, p=0.4, tau=0.1)
    assert abs(score.s_coarse.item() - 1.0) <= 1e-12
    assert abs(score.s_w2f.item() - 1.0) <= 1e-12
    assert abs(score.s_f2w.item() - 1.0) <= 1e-12
    assert abs(score.s_final.item() - 1.5) <= 1e-12


def test_pair_score_orthogonal_candidate_scores_zero():
    d = 6
    params = params_for(d, seed=9)
    tokens = np.zeros((3, d))
    tokens[:, 0] = [1.0, 1.0, 1.0]  # words and EOS on axis 0
    candidate = np.zeros((2, d))
    candidate[:, 3:5] = np.eye(2)   # orthogonal to every query row
    score = pair_score(tokens, ad.Tensor(candidate), params, p=0.4, tau=0.1)
    assert abs(score.s_coarse.item()) <= 1e-12
    assert abs(score.s_fine.item()) <= 1e-12
    assert abs(score.s_final.item()) <= 1e-12


@given(st.integers(0, 10 ** 9))
@settings(max_examples=60, deadline=None)
def test_pair_score_matches_composed_oracle(seed):
    r = np.random.default_rng(seed)
    d = int(r.integers(3, 8))
    l = int(r.integers(1, 5))
    k = int(r.integers(1, 7))
    params = params_for(d, seed=seed % 100)
    tokens = r.normal(size=(l + 1, d))
    candidate = r.normal(size=(k, d))
    score = pair_score(tokens, ad.Tensor(candidate), params, p=0.4, tau=0.1)
    expect = oracle_pair_score(tokens.tolist(), candidate.tolist(), 0.4, 0.1,
                               params.word_weight.data.tolist(),
                               float(params.word_bias.data))
    assert score.selection.selected == expect["selected"]
    for key in ("s_coarse", "s_w2f", "s_f2w", "s_final"):
        assert abs(score.as_floats()[key] - expect[key]) <= 1e-10, key


def test_pair_score_scale_invariant_per_row():
    r = np.random.default_rng(11)
    d = 5
    params = params_for(d, seed=12)
    tokens = r.normal(size=(3, d))
    candidate = r.normal(size=(4, d))
    scales = np.array([2.0, 0.5, 7.0, 1.25])[:, None]
    a = pair_score(tokens, ad.Tensor(candidate), params, p=0.4, tau=0.1)
    b = pair_score(tokens, ad.Tensor(candidate * scales), params, p=0.4, tau=0.1)
    assert a.selection.selected == b.selection.selected
    assert abs(a.s_final.item() - b.s_final.item()) <= 1e-9


def episode_from(r, l, k, d, ident):
    return Episode(id=ident, query_tokens=r.normal(size=(l + 1, d)),
                   frames=r.normal(size=(k, d)), captions=r.normal(size=(k, d)))


def test_similarity_matrices_single_episode():
    r = np.random.default_rng(13)
    params = params_for(4, seed=14)
    ep = episode_from(r, 2, 3, 4, "solo")
    feats = enhance(ep.frames, ep.captions, params)
    s_qv, s_qn = similarity_matrices([ep], [feats], params, p=0.4, tau=0.1)
    assert s_qv.data.shape == (1, 1) and s_qn.data.shape == (1, 1)
    direct = pair_score(ep.query_tokens, feats.v_check, params, p=0.4, tau=0.1)
    assert abs(s_qv.data[0, 0] - direct.s_final.item()) <= 1e-12


def test_similarity_matrices_entries_are_independent():
    r = np.random.default_rng(15)
    d = 6
    params = params_for(d, seed=16)
    eps = [episode_from(r, 2, 3, d, f"e{i}") for i in range(3)]
    enhanced = [enhance(ep.frames, ep.captions, params) for ep in eps]
    s_qv, s_qn = similarity_matrices(eps, enhanced, params, p=0.4, tau=0.1)
    for i, ep in enumerate(eps):
        for j, feats in enumerate(enhanced):
            direct_v = pair_score(ep.query_tokens, feats.v_check, params,
                                  p=0.4, tau=0.1).s_final.item()
            direct_n = pair_score(ep.query_tokens, feats.n_check, params,
                                  p=0.4, tau=0.1).s_final.item()
            assert abs(s_qv.data[i, j] - direct_v) <= 1e-12
            assert abs(s_qn.data[i, j] - direct_n) <= 1e-12


def test_planted_diagonal_dominates_before_training():
    # candidates built from the query's own topic rank first even untrained
    r = np.random.default_rng(17)
    d, n = 32, 8
    params = params_for(d, seed=18)
    topics = r.normal(size=(n, d))
    topics /= np.linalg.norm(topics, axis=1, keepdims=True)
    eps = []
    for i in range(n):
        tokens = np.tile(topics[i], (3, 1))
        frames = np.tile(topics[i], (4, 1))
        eps.append(Episode(id=f"p{i}", query_tokens=tokens, frames=frames,
                           captions=frames.copy()))
    enhanced = [enhance(ep.frames, ep.captions, params) for ep in eps]
    s_qv, _ = similarity_matrices(eps, enhanced, params, p=0.4, tau=0.1)
    assert (s_qv.data.argmax(axis=1) == np.arange(n)).all()


def test_matrices_not_assumed_symmetric():
    r = np.random.default_rng(19)
    d = 4
    params = params_for(d, seed=20)
    eps = [episode_from(r, 2, 3, d, f"s{i}") for i in range(2)]
    enhanced = [enhance(ep.frames, ep.captions, params) for ep in eps]
    s_qv, _ = similarity_matrices(eps, enhanced, params, p=0.4, tau=0.1)
    assert abs(s_qv.data[0, 1] - s_qv.data[1, 0]) > 1e-12
