"""Synthetic generator contracts and .prvc round trips."""

import dataclasses

import numpy as np
import pytest

from prvr.corpus import CorpusSpec, FeatureCorpus, generate_synthetic, read_corpus, write_corpus
from prvr.errors import ConfigError, FormatError


def make_spec(**kw):
    base = dict(n_q=10, n_v=5, l_q=3, l_v=6, d_t=8, d_v=9, seed=11,
                segments_per_video=3, ambiguity_rate=0.5, noise_scale=0.1)
    base.update(kw)
    return CorpusSpec(**base)


def test_rate_zero_has_no_planted_pairs():
    corpus = generate_synthetic(make_spec(ambiguity_rate=0.0))
    assert corpus.planted_ambiguity == set()


def test_rate_one_single_segment_plants_all_other_videos():
    corpus = generate_synthetic(make_spec(n_q=9, n_v=3, segments_per_video=1,
                                          ambiguity_rate=1.0, l_v=4))
    for i in range(corpus.n_q):
        others = {(i, j) for j in range(3) if j != corpus.pairing[i]}
        assert {(q, v) for q, v in corpus.planted_ambiguity if q == i} == others


def test_same_spec_bit_identical():
    a = generate_synthetic(make_spec(seed=7))
    b = generate_synthetic(make_spec(seed=7))
    assert a == b
    assert a.text_features.tobytes() == b.text_features.tobytes()


def test_different_seed_differs():
    a = generate_synthetic(make_spec(seed=7))
    b = generate_synthetic(make_spec(seed=8))
    assert a != b


def test_splits_share_projections_but_not_content():
    a = generate_synthetic(make_spec(seed=7), split="train")
    b = generate_synthetic(make_spec(seed=7), split="test")
    assert b.split == "test"
    assert not np.array_equal(a.text_features, b.text_features)


def test_pairing_total_and_in_range():
    corpus = generate_synthetic(make_spec(n_q=13, n_v=4))
    assert corpus.pairing.shape == (13,)
    assert set(corpus.pairing) <= set(range(4))


def test_planted_never_contains_positive_pair():
    corpus = generate_synthetic(make_spec(ambiguity_rate=0.9))
    for (qi, vj) in corpus.planted_ambiguity:
        assert corpus.pairing[qi] != vj


def test_features_finite_and_float32():
    corpus = generate_synthetic(make_spec())
    assert corpus.text_features.dtype == np.float32
    assert corpus.video_features.dtype == np.float32
    assert np.all(np.isfinite(corpus.text_features))
    assert np.all(np.isfinite(corpus.video_features))


def test_invalid_spec_rejected():
    with pytest.raises(ConfigError):
        make_spec(n_q=0).validate()
    with pytest.raises(ConfigError):
        make_spec(ambiguity_rate=1.5).validate()
    with pytest.raises(ConfigError):
        make_spec(noise_scale=-0.1).validate()
    with pytest.raises(ConfigError):
        make_spec(l_v=2, segments_per_video=3).validate()
    with pytest.raises(ConfigError):
        generate_synthetic(make_spec(), split="validation")


def test_round_trip_exact(tmp_path):
    corpus = generate_synthetic(make_spec(ambiguity_rate=0.6))
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    loaded = read_corpus(path)
    assert loaded == corpus


def test_round_trip_test_split_and_empty_planted(tmp_path):
    corpus = generate_synthetic(make_spec(ambiguity_rate=0.0), split="test")
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    loaded = read_corpus(path)
    assert loaded.split == "test"
    assert loaded.planted_ambiguity == set()
    assert loaded == corpus


def test_round_trip_without_planted(tmp_path):
    corpus = generate_synthetic(make_spec())
    corpus = FeatureCorpus(corpus.text_features, corpus.video_features,
                           corpus.pairing, split="train", planted_ambiguity=None)
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    assert read_corpus(path).planted_ambiguity is None


def test_truncated_text_payload_names_field(tmp_path):
    corpus = generate_synthetic(make_spec())
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    data = path.read_bytes()
    # keep the header plus half a query row
    path.write_bytes(data[:36 + 2 * corpus.l_q * corpus.d_t])
    with pytest.raises(FormatError, match="text_features"):
        read_corpus(path)


def test_truncated_pairing_names_field(tmp_path):
    corpus = generate_synthetic(make_spec())
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    data = path.read_bytes()
    n_feat = 36 + 4 * (corpus.text_features.size + corpus.video_features.size)
    path.write_bytes(data[:n_feat + 2])
    with pytest.raises(FormatError, match="pairing"):
        read_corpus(path)


def test_empty_file_is_format_error(tmp_path):
    path = tmp_path / "corpus.prvc"
    path.write_bytes(b"")
    with pytest.raises(FormatError, match="header"):
        read_corpus(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "corpus.prvc"
    path.write_bytes(b"XXXX" + b"\x00" * 36)
    with pytest.raises(FormatError, match="magic"):
        read_corpus(path)


def test_trailing_bytes_rejected(tmp_path):
    corpus = generate_synthetic(make_spec())
    path = tmp_path / "corpus.prvc"
    write_corpus(corpus, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        read_corpus(path)


def test_planted_pairs_share_a_concept_geometrically():
    # with zero noise, frames of a segment equal the projected concept, so
    # a planted pair's two videos must contain bit-identical frame rows
    spec = make_spec(noise_scale=0.0, ambiguity_rate=0.7, n_q=12, n_v=6)
    corpus = generate_synthetic(spec)
    assert corpus.planted_ambiguity
    for (qi, vj) in corpus.planted_ambiguity:
        frames = {f.tobytes() for f in corpus.video_features[vj]}
        paired = {f.tobytes() for f in corpus.video_features[corpus.pairing[qi]]}
        assert frames & paired, f"pair {(qi, vj)} shares no identical segment"
