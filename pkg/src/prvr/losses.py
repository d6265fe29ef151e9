"""Training objectives: multi-positive contrastive and dual-margin triplets.

Video level: for each positive pair, the contrastive numerator keeps the
pair plus its ambiguous set (ambiguous members are not pushed down as
negatives, but not all are forced positive either); the denominator adds
the negative set. Two triplet losses use the hardest member of the
ambiguous set (small margin) and of the negative set (full margin).

Frame level applies the same functional form inside the paired video
(frames vs the best frame) and across batch queries against the selected
frame. The warmup objective is the video objective with ambiguous sets
forced empty.

Exponentials use raw cosine scores (optionally divided by a temperature,
default 1). Empty contrast sets contribute exact zeros.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .ambiguity import AmbiguitySets, FrameSets
from .errors import ConfigError

__all__ = [
    "LossConfig", "LossBreakdown",
    "loss_nce_t2v", "loss_nce_v2t", "loss_nce",
    "loss_triplet", "loss_video", "loss_frame", "loss_warmup",
    "forced_negative_sets", "grand_total",
]


@dataclass(frozen=True)
class LossConfig:
    margin_m: float = 0.2
    margin_ma: float = 0.1
    lambda_nce: float = 0.02
    temperature: float = 1.0

    def validate(self):
        if self.margin_m < 0 or self.margin_ma < 0:
            raise ConfigError("margins must be nonnegative")
        if not self.margin_ma < self.margin_m:
            raise ConfigError(
                f"margin_ma ({self.margin_ma}) must be smaller than margin_m ({self.margin_m})")
        if self.lambda_nce <= 0:
            raise ConfigError("lambda_nce must be positive")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


@dataclass
class LossBreakdown:
    nce_t2v: float
    nce_v2t: float
    trip_a: float
    trip_n: float
    video_total: float
    frame_total: float
    grand_total: float


def _scalar(x):
    """Extract a python float from a Var/ndarray scalar."""
    return float(np.asarray(ad.val(x)))


def _nce_vectors(scores, sets: AmbiguitySets, temperature):
    """Per-slot contrastive losses for both directions, as (b,) vectors."""
    b = len(sets.batch)
    e = ad.exp(ad.div(scores, float(temperature)))
    flat = ad.reshape(e, (b * b,))
    diag = ad.take(flat, np.arange(b) * (b + 1))
    amb_mask = sets.amb.astype(np.float64)
    neg_mask = ((~sets.pos) & (~sets.amb)).astype(np.float64)

    num_r = ad.add(diag, ad.reduce_sum(ad.mul(e, amb_mask), axis=1))
    den_r = ad.add(num_r, ad.reduce_sum(ad.mul(e, neg_mask), axis=1))
    t2v = ad.sub(ad.log(den_r), ad.log(num_r))

    num_c = ad.add(diag, ad.reduce_sum(ad.mul(e, amb_mask), axis=0))
    den_c = ad.add(num_c, ad.reduce_sum(ad.mul(e, neg_mask), axis=0))
    v2t = ad.sub(ad.log(den_c), ad.log(num_c))
    return t2v, v2t


def loss_nce_t2v(pair_slot, scores, sets: AmbiguitySets, temperature=1.0):
    """Contrastive loss of one positive pair, query anchored over videos."""
    t2v, _ = _nce_vectors(scores, sets, temperature)
    return _scalar(ad.val(t2v)[pair_slot]) if not isinstance(t2v, ad.Var) \
        else ad.reshape(ad.take(t2v, [pair_slot]), ())


def loss_nce_v2t(pair_slot, scores, sets: AmbiguitySets, temperature=1.0):
    """Contrastive loss of one positive pair, video anchored over queries."""
    _, v2t = _nce_vectors(scores, sets, temperature)
    return _scalar(ad.val(v2t)[pair_slot]) if not isinstance(v2t, ad.Var) \
        else ad.reshape(ad.take(v2t, [pair_slot]), ())


def loss_nce(scores, sets: AmbiguitySets, temperature=1.0):
    """Batch means of the two contrastive directions."""
    t2v, v2t = _nce_vectors(scores, sets, temperature)
    return ad.reduce_mean(t2v), ad.reduce_mean(v2t)


def loss_triplet(scores, sets: AmbiguitySets, margin, mode):
    """Hinge loss against the hardest member of the given contrast sets.

    mode "ambiguous" draws from the ambiguous sets, "negative" from the
    negative sets; per pair, both directions (contrast video for the
    query, contrast query for the video) contribute, empty sets
    contribute zero, and the sum is averaged over the batch.
    """
    if mode == "ambiguous":
        mask = sets.amb
    elif mode == "negative":
        mask = (~sets.pos) & (~sets.amb)
    else:
        raise ConfigError(f"unknown triplet mode {mode!r}")
    b = len(sets.batch)
    sv = np.asarray(ad.val(scores), dtype=np.float64)
    flat = ad.reshape(scores, (b * b,))

    sel_idx, pos_idx = [], []
    for p in range(b):
        row = np.nonzero(mask[p])[0]
        if row.size:
            j_star = row[np.argmax(sv[p, row])]
            sel_idx.append(p * b + j_star)
            pos_idx.append(p * (b + 1))
        col = np.nonzero(mask[:, p])[0]
        if col.size:
            i_star = col[np.argmax(sv[col, p])]
            sel_idx.append(i_star * b + p)
            pos_idx.append(p * (b + 1))
    if not sel_idx:
        return 0.0
    hinges = ad.relu(ad.add(ad.sub(ad.take(flat, sel_idx), ad.take(flat, pos_idx)),
                            float(margin)))
    return ad.div(ad.reduce_sum(hinges), float(b))


def loss_video(scores, sets: AmbiguitySets, cfg: LossConfig):
    """Combined video-level objective; returns a dict of components."""
    nce_t2v, nce_v2t = loss_nce(scores, sets, cfg.temperature)
    trip_a = loss_triplet(scores, sets, cfg.margin_ma, "ambiguous")
    trip_n = loss_triplet(scores, sets, cfg.margin_m, "negative")
    total = ad.add(ad.add(ad.mul(ad.add(nce_t2v, nce_v2t), cfg.lambda_nce), trip_a), trip_n)
    return {"nce_t2v": nce_t2v, "nce_v2t": nce_v2t,
            "trip_a": trip_a, "trip_n": trip_n, "total": total}


def _gather_scalar(flat, idx):
    return ad.reshape(ad.take(flat, [idx]), ())


def _gather_sum(flat, idxs):
    if len(idxs) == 0:
        return 0.0
    return ad.reduce_sum(ad.take(flat, list(idxs)))


def loss_frame(frame_sims, frames: FrameSets, cfg: LossConfig):
    """Frame-level objective over a (b, b, L_v) cosine tensor.

    Returns zeros when L_v == 1: a single frame is the whole video, so
    the frame level would only duplicate the video objective.
    """
    shape = np.shape(ad.val(frame_sims))
    b, l_v = shape[0], shape[2]
    if l_v == 1:
        return {"nce": 0.0, "trip_a": 0.0, "trip_n": 0.0, "total": 0.0}

    flat = ad.reshape(frame_sims, (b * b * l_v,))
    e_flat = ad.exp(ad.div(flat, float(cfg.temperature)))
    fv = np.asarray(ad.val(frame_sims), dtype=np.float64)

    def fidx(x, p, k):
        return (x * b + p) * l_v + k

    nce_sum, trip_a_terms, trip_n_terms = 0.0, [], []
    sel_a, base_a, sel_n, base_n = [], [], [], []
    for p in range(b):
        k_hat = int(frames.best_frame[p])
        anchor = fidx(p, p, k_hat)
        e_anchor = _gather_scalar(e_flat, anchor)

        # text -> frames within the paired video
        amb_f = [fidx(p, p, k) for k in frames.amb_frames[p]]
        neg_f = [fidx(p, p, k) for k in frames.neg_frames[p]]
        num = ad.add(e_anchor, _gather_sum(e_flat, amb_f))
        den = ad.add(num, _gather_sum(e_flat, neg_f))
        nce_sum = ad.add(nce_sum, ad.sub(ad.log(den), ad.log(num)))

        # selected frame -> batch queries
        amb_q = [fidx(x, p, k_hat) for x in frames.amb_queries[p]]
        neg_q = [fidx(x, p, k_hat) for x in frames.neg_queries[p]]
        num_q = ad.add(e_anchor, _gather_sum(e_flat, amb_q))
        den_q = ad.add(num_q, _gather_sum(e_flat, neg_q))
        nce_sum = ad.add(nce_sum, ad.sub(ad.log(den_q), ad.log(num_q)))

        # hardest-in-set triplets, both directions
        for idxs, sel, base in ((frames.amb_frames[p], sel_a, base_a),
                                (frames.neg_frames[p], sel_n, base_n)):
            if idxs:
                k_star = idxs[int(np.argmax(fv[p, p, idxs]))]
                sel.append(fidx(p, p, k_star))
                base.append(anchor)
        for idxs, sel, base in ((frames.amb_queries[p], sel_a, base_a),
                                (frames.neg_queries[p], sel_n, base_n)):
            if idxs:
                x_star = idxs[int(np.argmax(fv[idxs, p, frames.best_frame[p]]))]
                sel.append(fidx(x_star, p, k_hat))
                base.append(anchor)

    def hinge_total(sel, base, margin):
        if not sel:
            return 0.0
        h = ad.relu(ad.add(ad.sub(ad.take(flat, sel), ad.take(flat, base)), float(margin)))
        return ad.div(ad.reduce_sum(h), float(b))

    nce = ad.div(nce_sum, float(b))
    trip_a = hinge_total(sel_a, base_a, cfg.margin_ma)
    trip_n = hinge_total(sel_n, base_n, cfg.margin_m)
    total = ad.add(ad.add(ad.mul(nce, cfg.lambda_nce), trip_a), trip_n)
    return {"nce": nce, "trip_a": trip_a, "trip_n": trip_n, "total": total}


def forced_negative_sets(batch) -> AmbiguitySets:
    """Video-level sets with every non-positive slot treated as negative."""
    b = len(batch)
    v_idx = np.asarray([v for _, v in batch])
    pos = v_idx[:, None] == v_idx[None, :]
    amb = np.zeros((b, b), dtype=bool)
    neg = ~pos
    return AmbiguitySets(
        batch=list(batch),
        video_sets=[[] for _ in range(b)],
        query_sets=[[] for _ in range(b)],
        negative_video_sets=[list(np.nonzero(neg[i])[0]) for i in range(b)],
        negative_query_sets=[list(np.nonzero(neg[:, j])[0]) for j in range(b)],
        pos=pos,
        amb=amb,
    )


def loss_warmup(scores, batch, cfg: LossConfig):
    """Warmup objective: the video objective with ambiguity forced empty."""
    return loss_video(scores, forced_negative_sets(batch), cfg)


def grand_total(video_parts, frame_parts):
    return ad.add(video_parts["total"], frame_parts["total"])


def breakdown(video_parts, frame_parts) -> LossBreakdown:
    return LossBreakdown(
        nce_t2v=_scalar(video_parts["nce_t2v"]),
        nce_v2t=_scalar(video_parts["nce_v2t"]),
        trip_a=_scalar(video_parts["trip_a"]),
        trip_n=_scalar(video_parts["trip_n"]),
        video_total=_scalar(video_parts["total"]),
        frame_total=_scalar(frame_parts["total"]),
        grand_total=_scalar(video_parts["total"]) + _scalar(frame_parts["total"]),
    )
