"""Cosine ops and the corpus similarity map, checked against per-entry oracles."""

import numpy as np
import pytest

from prvr import autodiff as ad
from prvr.corpus import CorpusSpec, generate_synthetic
from prvr.encoder import EncoderDims, EncoderParams, encode_text, encode_video
from prvr.errors import NumericalError
from prvr.similarity import (build_corpus_map, cosine_pairs, frame_similarity,
                             retrieval_score)


def test_identical_unit_vectors():
    v = np.array([0.6, 0.8])
    assert frame_similarity(v, v) == pytest.approx(1.0)


def test_orthogonal_vectors():
    assert frame_similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(0.0)


def test_analytic_45_degree_value():
    q = np.array([1.0, 0.0])
    v = np.array([1.0, 1.0]) / np.sqrt(2.0)
    assert frame_similarity(q, v) == pytest.approx(0.70710678, abs=1e-8)


def test_symmetry_and_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=5), rng.normal(size=5)
        s = frame_similarity(a, b)
        assert s == frame_similarity(b, a)
        assert -1.0 <= s <= 1.0


def test_zero_vector_rejected():
    with pytest.raises(NumericalError):
        frame_similarity(np.zeros(3), np.ones(3))
    with pytest.raises(NumericalError):
        retrieval_score(np.ones(3), np.zeros((2, 3)))


def test_retrieval_score_max_and_argmax():
    q = np.array([1.0, 0.0])
    frames = np.array([[0.2, 1.0], [0.9, 0.1], [0.5, 0.5]])
    score, k = retrieval_score(q, frames)
    sims = [frame_similarity(q, f) for f in frames]
    assert score == max(sims)
    assert k == int(np.argmax(sims)) == 1


def test_retrieval_score_tie_breaks_low_index():
    q = np.array([1.0, 1.0])
    frames = np.tile([2.0, 2.0], (3, 1))  # identical frames -> exact ties
    score, k = retrieval_score(q, frames)
    assert score == pytest.approx(1.0)
    assert k == 0


def test_retrieval_score_single_frame():
    q = np.array([0.3, -0.7, 0.2])
    frames = np.array([[1.0, 0.5, -0.2]])
    score, k = retrieval_score(q, frames)
    assert k == 0
    assert score == frame_similarity(q, frames[0])


def test_exhaustive_max_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        l_v = int(rng.integers(1, 6))
        q = rng.normal(size=4)
        frames = rng.normal(size=(l_v, 4))
        score, k = retrieval_score(q, frames)
        sims = [frame_similarity(q, frames[z]) for z in range(l_v)]
        assert score == max(sims)
        assert k == sims.index(max(sims))


def make_tiny_corpus(n_q=3, n_v=2, l_q=2, l_v=3):
    spec = CorpusSpec(n_q=n_q, n_v=n_v, l_q=l_q, l_v=l_v, d_t=6, d_v=7, seed=3,
                      segments_per_video=1, ambiguity_rate=0.0, noise_scale=0.3)
    return generate_synthetic(spec)


def test_corpus_map_matches_per_entry_oracle_exactly():
    corpus = make_tiny_corpus()
    dims = EncoderDims(d_t=corpus.d_t, d_v=corpus.d_v, l_q=corpus.l_q,
                       l_v=corpus.l_v, d=8)
    params = EncoderParams.initialize(dims, seed=77)
    sim_map = build_corpus_map(params, corpus)
    assert sim_map.m.shape == (corpus.n_q, corpus.n_v, corpus.l_v)
    # literal brute-force loop through the public per-instance ops
    for x in range(corpus.n_q):
        q = encode_text(params, corpus.text_features[x])
        for y in range(corpus.n_v):
            v = encode_video(params, corpus.video_features[y])
            for z in range(corpus.l_v):
                assert sim_map.m[x, y, z] == frame_similarity(q, v[z]), (x, y, z)


def test_corpus_map_deterministic_and_bounded():
    corpus = make_tiny_corpus(n_q=4, n_v=3)
    dims = EncoderDims(corpus.d_t, corpus.d_v, corpus.l_q, corpus.l_v, 8)
    params = EncoderParams.initialize(dims, seed=1)
    m1 = build_corpus_map(params, corpus).m
    m2 = build_corpus_map(params, corpus).m
    np.testing.assert_array_equal(m1, m2)
    assert np.all(m1 <= 1.0) and np.all(m1 >= -1.0)


def test_cosine_pairs_traced_matches_untraced_and_scalar():
    rng = np.random.default_rng(9)
    q = rng.normal(size=(3, 5))
    f = rng.normal(size=(2, 4, 5))
    raw = cosine_pairs(q, f)
    traced = cosine_pairs(ad.Var(q), ad.Var(f))
    np.testing.assert_array_equal(raw, ad.val(traced))
    for x in range(3):
        for y in range(2):
            for z in range(4):
                assert raw[x, y, z] == frame_similarity(q[x], f[y, z])


def test_cosine_pairs_gradient():
    rng = np.random.default_rng(11)
    q = rng.normal(size=(2, 4))
    f = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(2, 2, 3))

    def build(qv):
        return ad.reduce_sum(ad.mul(cosine_pairs(qv, f), w))

    v = ad.Var(q)
    grads = ad.backward(build(v))
    got = grads[id(v)]

    h = 1e-6
    want = np.zeros_like(q)
    for i in range(q.shape[0]):
        for j in range(q.shape[1]):
            qp, qm = q.copy(), q.copy()
            qp[i, j] += h
            qm[i, j] -= h
            want[i, j] = (float(build(qp)) - float(build(qm))) / (2 * h)
    np.testing.assert_allclose(got, want, atol=1e-7)
