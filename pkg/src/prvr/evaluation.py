"""Retrieval metrics, fused dual-branch scoring, and training-set audits.

Ranking fuses the two branches by averaging their retrieval scores. The
audit rebuilds similarity/uncertainty over the train set from the final
parameters, splits both by positive vs unpaired pairs, and (for corpora
with planted ground truth) grades the detected ambiguous pairs.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import FeatureCorpus
from .encoder import encode_text, encode_video
from .errors import ConfigError
from .similarity import build_corpus_map, map_retrieval_scores, retrieval_score
from .trainer import DualBranchState

RECALL_KS = (1, 5, 10, 100)
HIST_BINS = 50


@dataclass
class RecallReport:
    r_at: dict
    sum_r: float


@dataclass
class AuditReport:
    tau_s: float
    tau_u: float
    mean_positive_similarity: float
    mean_unpaired_similarity: float
    mean_positive_uncertainty: float
    mean_unpaired_uncertainty: float
    sim_bin_edges: np.ndarray
    sim_hist_positive: np.ndarray
    sim_hist_unpaired: np.ndarray
    unc_bin_edges: np.ndarray
    unc_hist_positive: np.ndarray
    unc_hist_unpaired: np.ndarray
    detected_pairs: list
    precision: float
    recall: float
    f1: float
    lad_defined: bool
    planted_count: int = 0


def fused_score(theta_params, phi_params, q_features, v_features) -> float:
    """Average of the two branches' retrieval scores for one pair."""
    s_t, _ = retrieval_score(encode_text(theta_params, q_features),
                             encode_video(theta_params, v_features))
    s_p, _ = retrieval_score(encode_text(phi_params, q_features),
                             encode_video(phi_params, v_features))
    return (s_t + s_p) / 2.0


def _branch_scores(state: DualBranchState, corpus: FeatureCorpus):
    """Per-branch (scores, best, uncertainty) over all corpus pairs."""
    out = []
    for branch in (state.theta, state.phi):
        sim_map = build_corpus_map(branch.params, corpus, epoch=state.epoch)
        scores, best = map_retrieval_scores(sim_map)
        u_q = sim_map.m.mean(axis=(1, 2))
        u_v = sim_map.m.mean(axis=0)
        u = (u_q[:, None] + u_v[np.arange(corpus.n_v)[None, :], best]) / 2.0
        out.append((scores, best, u))
    return out


def fused_pair_scores(state: DualBranchState, corpus: FeatureCorpus):
    """Fused scores and fused pair uncertainties, (N_q, N_v) each."""
    (s_t, _, u_t), (s_p, _, u_p) = _branch_scores(state, corpus)
    return (s_t + s_p) / 2.0, (u_t + u_p) / 2.0


def _ranks(scores, pairing):
    n_q, n_v = scores.shape
    cols = np.arange(n_v)
    ranks = np.empty(n_q, dtype=np.int64)
    for i in range(n_q):
        j = pairing[i]
        s, s_pos = scores[i], scores[i, j]
        ranks[i] = 1 + int((s > s_pos).sum()) + int(((s == s_pos) & (cols < j)).sum())
    return ranks


def recall_from_scores(scores, pairing) -> RecallReport:
    """Recall@K/SumR of a (N_q, N_v) score matrix, ties to lower index."""
    ranks = _ranks(np.asarray(scores, dtype=np.float64), np.asarray(pairing))
    r_at = {k: float((ranks <= k).mean()) for k in RECALL_KS}
    return RecallReport(r_at=r_at, sum_r=100.0 * sum(r_at.values()))


def evaluate(state: DualBranchState, corpus: FeatureCorpus) -> RecallReport:
    """Recall@K and SumR of the fused scorer over the given corpus."""
    fused, _ = fused_pair_scores(state, corpus)
    return recall_from_scores(fused, corpus.pairing)


def grade_detection(detected, planted):
    """Precision/recall/F1 of detected pairs vs planted ground truth.

    Empty detected or empty/missing planted use the zero convention with
    defined=False.
    """
    detected = set(detected)
    planted = set(planted) if planted else set()
    tp = len(detected & planted)
    precision = tp / len(detected) if detected else 0.0
    recall = tp / len(planted) if planted else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f1, bool(detected) and bool(planted)


def _hist(values, mask_pos, mask_unp):
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        hi = lo + 1e-9
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    h_pos, _ = np.histogram(values[mask_pos], bins=edges)
    h_unp, _ = np.histogram(values[mask_unp], bins=edges)
    return edges, h_pos / max(h_pos.sum(), 1), h_unp / max(h_unp.sum(), 1)


def audit(state: DualBranchState, corpus: FeatureCorpus) -> AuditReport:
    """Distribution and detection-quality audit over a train corpus.

    Applies the ambiguity rule corpus-wide with fused branch scores and
    uncertainties, thresholds recomputed by the per-epoch rules. With no
    planted ground truth (or nothing detected) precision/recall fall back
    to 0 and lad_defined is False.
    """
    if corpus.split != "train":
        raise ConfigError("audit requires the train split")
    fused_s, fused_u = fused_pair_scores(state, corpus)
    n_q, n_v = fused_s.shape
    pos = np.zeros((n_q, n_v), dtype=bool)
    pos[np.arange(n_q), corpus.pairing] = True
    unp = ~pos

    tau_s = float(fused_s[pos].mean())
    tau_u = float(fused_u.mean())
    detected_mask = unp & (fused_s > tau_s) & (fused_u > tau_u)
    detected = sorted((int(i), int(j)) for i, j in zip(*np.nonzero(detected_mask)))

    planted = corpus.planted_ambiguity
    n_planted = len(planted) if planted else 0
    precision, recall, f1, lad_defined = grade_detection(detected, planted)

    sim_edges, sim_pos, sim_unp = _hist(fused_s, pos, unp)
    unc_edges, unc_pos, unc_unp = _hist(fused_u, pos, unp)

    return AuditReport(
        tau_s=tau_s, tau_u=tau_u,
        mean_positive_similarity=float(fused_s[pos].mean()),
        mean_unpaired_similarity=float(fused_s[unp].mean()),
        mean_positive_uncertainty=float(fused_u[pos].mean()),
        mean_unpaired_uncertainty=float(fused_u[unp].mean()),
        sim_bin_edges=sim_edges, sim_hist_positive=sim_pos, sim_hist_unpaired=sim_unp,
        unc_bin_edges=unc_edges, unc_hist_positive=unc_pos, unc_hist_unpaired=unc_unp,
        detected_pairs=detected, precision=precision, recall=recall, f1=f1,
        lad_defined=lad_defined, planted_count=n_planted,
    )
