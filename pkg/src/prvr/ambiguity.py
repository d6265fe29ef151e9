"""Uncertainty estimation, per-epoch thresholds, and ambiguity detection.

An unpaired (query, video) pair is ambiguous when its retrieval score
exceeds tau_s AND its pair uncertainty exceeds tau_u (strict
inequalities; ties fall to negative). The same rule applies between a
query and the individual frames of its paired video, and between a
selected frame and the other queries of the batch.

Uncertainty of an instance is its average cosine to the whole other
modality over the train set; a pair's uncertainty is the mean of its two
instance values at the pair's best frame. Thresholds are recomputed every
epoch: tau_s as the mean positive-pair retrieval score, tau_u as the mean
pair uncertainty over all train pairs.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .similarity import CorpusSimilarityMap, map_retrieval_scores


@dataclass
class UncertaintyTables:
    u_q: np.ndarray          # (N_q,)
    u_v: np.ndarray          # (N_v, L_v)
    epoch: int


@dataclass
class Thresholds:
    tau_s: float
    tau_u: float
    epoch: int


@dataclass
class FrameSets:
    """Frame-level ambiguity for each positive pair of a batch.

    best_frame[p] is the positive frame of pair p; amb/neg frames
    partition the remaining frames of the paired video. amb/neg queries
    partition the non-positive batch slots relative to the selected
    frame.
    """

    best_frame: np.ndarray
    amb_frames: list
    neg_frames: list
    amb_queries: list
    neg_queries: list


@dataclass
class AmbiguitySets:
    """Per-slot ambiguous/negative index sets for one mini-batch.

    Slots are batch positions; batch[p] = (query index, video index).
    pos/amb are boolean slot matrices (pos by video identity, so
    duplicate captions of one video are never negatives of each other).
    """

    batch: list
    video_sets: list                 # A_i^q, slots of ambiguous videos per query slot
    query_sets: list                 # A_j^v, slots of ambiguous queries per video slot
    negative_video_sets: list
    negative_query_sets: list
    pos: np.ndarray = field(repr=False)
    amb: np.ndarray = field(repr=False)
    frames: FrameSets | None = None


def compute_uncertainty(sim_map: CorpusSimilarityMap) -> UncertaintyTables:
    """Average the similarity map into per-query and per-frame tables."""
    m = sim_map.m
    return UncertaintyTables(
        u_q=m.mean(axis=(1, 2)),
        u_v=m.mean(axis=0),
        epoch=sim_map.epoch,
    )


def _check_index(n, i, what):
    if not 0 <= i < n:
        raise IndexError(f"{what} index {i} out of range [0, {n})")


def pair_uncertainty(tables: UncertaintyTables, i: int, j: int, k_hat: int) -> float:
    """Uncertainty of pair (query i, video j) at its best frame k_hat."""
    return frame_uncertainty(tables, i, j, k_hat)


def frame_uncertainty(tables: UncertaintyTables, i: int, j: int, k: int) -> float:
    _check_index(tables.u_q.shape[0], i, "query")
    _check_index(tables.u_v.shape[0], j, "video")
    _check_index(tables.u_v.shape[1], k, "frame")
    return (tables.u_q[i] + tables.u_v[j, k]) / 2.0


def compute_thresholds(sim_map: CorpusSimilarityMap, pairing: np.ndarray,
                       tables: UncertaintyTables) -> Thresholds:
    """Per-epoch thresholds from the current map and tables."""
    if len(pairing) == 0:
        raise ConfigError("cannot compute thresholds on an empty train set")
    scores, best = map_retrieval_scores(sim_map)
    n_q, n_v = scores.shape
    tau_s = float(scores[np.arange(n_q), pairing].mean())
    u_best = tables.u_v[np.arange(n_v)[None, :], best]
    u_pairs = (tables.u_q[:, None] + u_best) / 2.0
    tau_u = float(u_pairs.mean())
    return Thresholds(tau_s=tau_s, tau_u=tau_u, epoch=sim_map.epoch)


def detect_video_ambiguity(batch, scores, best_frames,
                           tables: UncertaintyTables,
                           thresholds: Thresholds) -> AmbiguitySets:
    """Split each slot's non-positive batch members into ambiguous/negative.

    batch: list of (query, video) global index pairs (the positives).
    scores/best_frames: (b, b) retrieval scores and best-frame indices,
    rows = query slots, columns = video slots.
    """
    scores = np.asarray(scores, dtype=np.float64)
    best_frames = np.asarray(best_frames)
    q_idx = np.asarray([q for q, _ in batch])
    v_idx = np.asarray([v for _, v in batch])

    pos = v_idx[:, None] == v_idx[None, :]
    u = (tables.u_q[q_idx][:, None] + tables.u_v[v_idx[None, :], best_frames]) / 2.0
    amb = (~pos) & (scores > thresholds.tau_s) & (u > thresholds.tau_u)
    neg = (~pos) & (~amb)

    return AmbiguitySets(
        batch=list(batch),
        video_sets=[list(np.nonzero(amb[i])[0]) for i in range(len(batch))],
        query_sets=[list(np.nonzero(amb[:, j])[0]) for j in range(len(batch))],
        negative_video_sets=[list(np.nonzero(neg[i])[0]) for i in range(len(batch))],
        negative_query_sets=[list(np.nonzero(neg[:, j])[0]) for j in range(len(batch))],
        pos=pos,
        amb=amb,
    )


def detect_frame_ambiguity(batch, frame_sims, tables: UncertaintyTables,
                           thresholds: Thresholds) -> FrameSets:
    """Frame-level detection for each positive pair of the batch.

    frame_sims[x, p, k] = cosine(query slot x, frame k of pair p's video).
    For pair p the best frame is positive; other frames of that video are
    ambiguous when both thresholds pass. Query-side sets mirror the video
    rule across batch slots against the selected frame.
    """
    frame_sims = np.asarray(frame_sims, dtype=np.float64)
    b, _, l_v = frame_sims.shape
    q_idx = np.asarray([q for q, _ in batch])
    v_idx = np.asarray([v for _, v in batch])

    best = np.empty(b, dtype=np.int64)
    amb_frames, neg_frames, amb_queries, neg_queries = [], [], [], []
    for p in range(b):
        f = frame_sims[p, p]
        k_hat = int(np.argmax(f))
        best[p] = k_hat
        u_f = (tables.u_q[q_idx[p]] + tables.u_v[v_idx[p]]) / 2.0
        frame_ok = (f > thresholds.tau_s) & (u_f > thresholds.tau_u)
        frame_ok[k_hat] = False
        a = np.nonzero(frame_ok)[0]
        rest = np.setdiff1d(np.arange(l_v), np.append(a, k_hat))
        amb_frames.append(list(a))
        neg_frames.append(list(rest))

        g = frame_sims[:, p, k_hat]
        u_q = (tables.u_q[q_idx] + tables.u_v[v_idx[p], k_hat]) / 2.0
        pos_q = v_idx == v_idx[p]
        q_ok = (~pos_q) & (g > thresholds.tau_s) & (u_q > thresholds.tau_u)
        aq = np.nonzero(q_ok)[0]
        nq = np.nonzero((~pos_q) & (~q_ok))[0]
        amb_queries.append(list(aq))
        neg_queries.append(list(nq))

    return FrameSets(best_frame=best, amb_frames=amb_frames, neg_frames=neg_frames,
                     amb_queries=amb_queries, neg_queries=neg_queries)
