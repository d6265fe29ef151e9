"""Dual-branch training loop with per-epoch ambiguity refresh.

Two architecturally identical branches (different init seeds, identical
data order) train side by side. After the warmup epochs, each branch
rebuilds its similarity map, uncertainty tables, and thresholds at the
start of every epoch from its own parameters; per batch each branch
detects ambiguity sets with its own live scores, and with cross_model
enabled the branches swap sets before computing their losses. Updates
are simultaneous within a batch.

All randomness is derived statelessly from (seed, purpose, epoch), so a
checkpoint needs only the config, epoch counter, parameters, and
optimizer moments to reproduce the remaining trajectory exactly.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .ambiguity import (compute_thresholds, compute_uncertainty,
                        detect_frame_ambiguity, detect_video_ambiguity)
from .corpus import FeatureCorpus
from .encoder import EncoderDims, EncoderParams, collect_tape, encode_text, encode_video, wrap_params
from .errors import ConfigError, FormatError, NumericalError
from .losses import (LossConfig, breakdown, forced_negative_sets, grand_total,
                     loss_frame, loss_video, loss_warmup)
from .similarity import build_corpus_map, cosine_pairs

CKPT_MAGIC = b"PRVK"
CKPT_VERSION = 1
_SEED_MASK = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    warmup_epochs: int = 3
    learning_rate: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    cross_model: bool = True
    video_lad: bool = True
    frame_lad: bool = True
    embed_dim: int = 64
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (contrastive losses need an unpaired member)")
        if self.warmup_epochs < 0 or self.epochs < self.warmup_epochs:
            raise ConfigError("need epochs >= warmup_epochs >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 <= b < 1.0:
                raise ConfigError("adam betas must be in [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError("adam_eps must be positive")
        if self.embed_dim <= 0:
            raise ConfigError("embed_dim must be positive")
        self.loss.validate()


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: EncoderParams):
        return cls(m={k: np.zeros_like(v) for k, v in params.tensors.items()},
                   v={k: np.zeros_like(v) for k, v in params.tensors.items()})


@dataclass
class BranchState:
    params: EncoderParams
    adam: AdamState


@dataclass
class DualBranchState:
    theta: BranchState
    phi: BranchState
    epoch: int              # completed epochs
    seed: int
    cfg: TrainConfig


def _branch_seed(base_seed: int, which: int) -> int:
    ss = np.random.SeedSequence([base_seed & _SEED_MASK, which])
    return int(ss.generate_state(1, np.uint64)[0])


def _epoch_rng(base_seed: int, epoch: int):
    return np.random.default_rng(np.random.SeedSequence([base_seed & _SEED_MASK, 2, epoch]))


def init_state(corpus: FeatureCorpus, cfg: TrainConfig,
               theta_seed=None, phi_seed=None) -> DualBranchState:
    cfg.validate()
    dims = EncoderDims(d_t=corpus.d_t, d_v=corpus.d_v,
                       l_q=corpus.l_q, l_v=corpus.l_v, d=cfg.embed_dim)
    if theta_seed is None:
        theta_seed = _branch_seed(cfg.seed, 0)
    if phi_seed is None:
        phi_seed = _branch_seed(cfg.seed, 1)
    branches = []
    for s in (theta_seed, phi_seed):
        params = EncoderParams.initialize(dims, s)
        branches.append(BranchState(params=params, adam=AdamState.zeros(params)))
    return DualBranchState(theta=branches[0], phi=branches[1],
                           epoch=0, seed=cfg.seed, cfg=cfg)


def _forward_batch(params_or_wrapped, dims, text64, video64, pairs):
    """Traced batch forward: returns (frame cosine tensor Var, score Var, best)."""
    q = ad.stack([encode_text(params_or_wrapped, text64[i], dims) for i, _ in pairs])
    v = ad.stack([encode_video(params_or_wrapped, video64[j], dims) for _, j in pairs])
    frame_sims = cosine_pairs(q, v)
    scores, best = ad.reduce_max(frame_sims, axis=2)
    return frame_sims, scores, best


def _adam_update(branch: BranchState, tape, cfg: TrainConfig):
    st = branch.adam
    st.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name in branch.params.names():
        g = tape[name]
        st.m[name] = b1 * st.m[name] + (1.0 - b1) * g
        st.v[name] = b2 * st.v[name] + (1.0 - b2) * (g * g)
        m_hat = st.m[name] / (1.0 - b1 ** st.t)
        v_hat = st.v[name] / (1.0 - b2 ** st.t)
        p = branch.params.tensors[name]
        if cfg.weight_decay:
            p -= cfg.learning_rate * cfg.weight_decay * p
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def step(corpus: FeatureCorpus, pairs, sets, branch: BranchState, cfg: TrainConfig):
    """One optimizer step for one branch on the given (possibly peer) sets.

    sets is (video_sets, frame_sets_or_None); frame_sets None skips the
    frame objective. Returns (LossBreakdown, GradientTape); the branch's
    parameters are updated in place.
    """
    dims = branch.params.dims
    text64 = corpus.text_features.astype(np.float64)
    video64 = corpus.video_features.astype(np.float64)
    wrapped = wrap_params(branch.params)
    frame_sims, scores, _ = _forward_batch(wrapped, dims, text64, video64, pairs)
    video_sets, frame_sets = sets
    video_parts = loss_video(scores, video_sets, cfg.loss)
    if frame_sets is not None:
        frame_parts = loss_frame(frame_sims, frame_sets, cfg.loss)
    else:
        frame_parts = {"total": 0.0}
    total = grand_total(video_parts, frame_parts)
    if not np.isfinite(ad.val(total)):
        raise NumericalError("non-finite training loss")
    tape = collect_tape(wrapped, total)
    _adam_update(branch, tape, cfg)
    return breakdown(video_parts, frame_parts), tape


def _epoch_batches(n_q, cfg: TrainConfig, epoch: int):
    perm = _epoch_rng(cfg.seed, epoch).permutation(n_q)
    n_full = n_q // cfg.batch_size
    return [perm[k * cfg.batch_size:(k + 1) * cfg.batch_size] for k in range(n_full)]


def train(corpus: FeatureCorpus, cfg: TrainConfig = None, state: DualBranchState = None,
          theta_seed=None, phi_seed=None):
    """Run (or continue) the full training procedure.

    Returns (DualBranchState, log_rows); log_rows is a list of per-epoch
    per-branch dicts with loss components, thresholds, and set sizes.
    """
    if corpus.split != "train":
        raise ConfigError("training requires a train-split corpus")
    if state is None:
        if cfg is None:
            raise ConfigError("train needs a config or a state to resume")
        state = init_state(corpus, cfg, theta_seed=theta_seed, phi_seed=phi_seed)
    cfg = state.cfg
    if corpus.n_q < cfg.batch_size:
        raise ConfigError(
            f"batch_size {cfg.batch_size} exceeds corpus size {corpus.n_q}")

    dims = state.theta.params.dims
    if (dims.d_t, dims.d_v, dims.l_q, dims.l_v) != (corpus.d_t, corpus.d_v, corpus.l_q, corpus.l_v):
        raise ConfigError("corpus dimensions do not match the encoder state")

    text64 = corpus.text_features.astype(np.float64)
    video64 = corpus.video_features.astype(np.float64)
    branches = (state.theta, state.phi)
    log_rows = []

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        lad_possible = cfg.video_lad or cfg.frame_lad
        lad_active = epoch > cfg.warmup_epochs and lad_possible

        epoch_ctx = []
        for branch in branches:
            ctx = {"tables": None, "thresholds": None}
            if lad_active:
                sim_map = build_corpus_map(branch.params, corpus, epoch=epoch)
                ctx["tables"] = compute_uncertainty(sim_map)
                ctx["thresholds"] = compute_thresholds(sim_map, corpus.pairing, ctx["tables"])
            epoch_ctx.append(ctx)

        sums = [dict.fromkeys(
            ("nce_t2v", "nce_v2t", "trip_a", "trip_n", "video_total",
             "frame_total", "grand_total", "amb_videos", "neg_videos",
             "amb_frames"), 0.0) for _ in branches]

        batches = _epoch_batches(corpus.n_q, cfg, epoch)
        for bi, batch_idx in enumerate(batches):
            pairs = [(int(i), int(corpus.pairing[i])) for i in batch_idx]

            fwd, detected = [], []
            for branch, ctx in zip(branches, epoch_ctx):
                wrapped = wrap_params(branch.params)
                frame_sims, scores, best = _forward_batch(wrapped, dims, text64, video64, pairs)
                fwd.append((wrapped, frame_sims, scores))
                if lad_active:
                    sval = np.asarray(ad.val(scores))
                    vsets = (detect_video_ambiguity(pairs, sval, best, ctx["tables"], ctx["thresholds"])
                             if cfg.video_lad else forced_negative_sets(pairs))
                    fsets = (detect_frame_ambiguity(pairs, ad.val(frame_sims),
                                                    ctx["tables"], ctx["thresholds"])
                             if cfg.frame_lad else None)
                else:
                    vsets, fsets = forced_negative_sets(pairs), None
                detected.append((vsets, fsets))

            for b_i, (branch, (wrapped, frame_sims, scores)) in enumerate(zip(branches, fwd)):
                use = detected[1 - b_i] if (lad_active and cfg.cross_model) else detected[b_i]
                vsets, fsets = use
                if lad_active:
                    video_parts = loss_video(scores, vsets, cfg.loss)
                    frame_parts = loss_frame(frame_sims, fsets, cfg.loss) \
                        if fsets is not None else {"total": 0.0}
                else:
                    video_parts = loss_warmup(scores, pairs, cfg.loss)
                    frame_parts = {"total": 0.0}
                total = grand_total(video_parts, frame_parts)
                if not np.isfinite(ad.val(total)):
                    raise NumericalError(f"non-finite loss at epoch {epoch} batch {bi}")
                tape = collect_tape(wrapped, total)
                _adam_update(branch, tape, cfg)

                bd = breakdown(video_parts, frame_parts)
                s = sums[b_i]
                for k in ("nce_t2v", "nce_v2t", "trip_a", "trip_n",
                          "video_total", "frame_total", "grand_total"):
                    s[k] += getattr(bd, k)
                own_v, own_f = detected[b_i]
                b = len(pairs)
                s["amb_videos"] += float(own_v.amb.sum()) / b
                s["neg_videos"] += float(((~own_v.pos) & (~own_v.amb)).sum()) / b
                if own_f is not None:
                    s["amb_frames"] += sum(len(a) for a in own_f.amb_frames) / b

        n_b = max(len(batches), 1)
        for b_i, name in enumerate(("theta", "phi")):
            thr = epoch_ctx[b_i]["thresholds"]
            row = {"epoch": epoch, "branch": name,
                   "phase": "arl" if lad_active else "warmup",
                   "tau_s": thr.tau_s if thr else None,
                   "tau_u": thr.tau_u if thr else None}
            row.update({k: v / n_b for k, v in sums[b_i].items()})
            log_rows.append(row)
        state.epoch = epoch

    return state, log_rows


# --- checkpoint format -------------------------------------------------

_CFG_FIELDS = (
    ("epochs", int), ("batch_size", int), ("warmup_epochs", int),
    ("learning_rate", float), ("adam_beta1", float), ("adam_beta2", float),
    ("adam_eps", float), ("weight_decay", float), ("seed", int),
    ("cross_model", bool), ("video_lad", bool), ("frame_lad", bool),
    ("embed_dim", int),
)
_LOSS_FIELDS = (
    ("margin_m", float), ("margin_ma", float),
    ("lambda_nce", float), ("temperature", float),
)


def _cfg_to_text(cfg: TrainConfig) -> str:
    lines = [f"{k}={getattr(cfg, k)!r}" for k, _ in _CFG_FIELDS]
    lines += [f"loss.{k}={getattr(cfg.loss, k)!r}" for k, _ in _LOSS_FIELDS]
    return "\n".join(lines)


def _cfg_from_text(text: str) -> TrainConfig:
    entries = {}
    for line in text.splitlines():
        key, _, raw = line.partition("=")
        entries[key] = raw
    def parse(key, typ):
        raw = entries[key]
        if typ is bool:
            return raw == "True"
        return typ(raw)
    loss = LossConfig(**{k: parse(f"loss.{k}", t) for k, t in _LOSS_FIELDS})
    return TrainConfig(loss=loss, **{k: parse(k, t) for k, t in _CFG_FIELDS})


def _write_branch(fh, branch: BranchState):
    fh.write(struct.pack("<Q", branch.adam.t))
    for name in branch.params.names():
        for arr in (branch.params.tensors[name], branch.adam.m[name], branch.adam.v[name]):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_branch(fh, dims: EncoderDims) -> BranchState:
    from .encoder import _PARAM_ORDER, _param_shapes
    raw = fh.read(8)
    if len(raw) != 8:
        raise FormatError("adam_t: file truncated")
    (t,) = struct.unpack("<Q", raw)
    shapes = _param_shapes(dims)
    tensors, m, v = {}, {}, {}
    for name in _PARAM_ORDER:
        shape = shapes[name]
        count = int(np.prod(shape)) if shape else 1
        out = []
        for part in ("param", "adam_m", "adam_v"):
            data = fh.read(8 * count)
            if len(data) != 8 * count:
                raise FormatError(f"{name}.{part}: file truncated")
            out.append(np.frombuffer(data, dtype="<f8").reshape(shape).copy())
        tensors[name], m[name], v[name] = out
    params = EncoderParams(dims, tensors)
    return BranchState(params=params, adam=AdamState(m=m, v=v, t=t))


def checkpoint(state: DualBranchState, path) -> None:
    """Serialize the full training state (pure w.r.t. state)."""
    cfg_blob = _cfg_to_text(state.cfg).encode("utf-8")
    dims = state.theta.params.dims
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", CKPT_MAGIC, CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<IIIII", dims.d_t, dims.d_v, dims.l_q, dims.l_v, dims.d))
        fh.write(struct.pack("<Iq", state.epoch, state.seed))
        _write_branch(fh, state.theta)
        _write_branch(fh, state.phi)


def resume(path) -> DualBranchState:
    """Load a checkpoint; the embedded config rides along as state.cfg."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise FormatError("header: file truncated")
        magic, version = struct.unpack("<4sI", head)
        if magic != CKPT_MAGIC:
            raise FormatError(f"magic: expected {CKPT_MAGIC!r}, got {magic!r}")
        if version != CKPT_VERSION:
            raise FormatError(f"version: unsupported value {version}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise FormatError("config length: file truncated")
        (cfg_len,) = struct.unpack("<I", raw)
        cfg_blob = fh.read(cfg_len)
        if len(cfg_blob) != cfg_len:
            raise FormatError("config block: file truncated")
        try:
            cfg = _cfg_from_text(cfg_blob.decode("utf-8"))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"config block: {exc}") from exc
        raw = fh.read(20)
        if len(raw) != 20:
            raise FormatError("dims: file truncated")
        d_t, d_v, l_q, l_v, d = struct.unpack("<IIIII", raw)
        dims = EncoderDims(d_t=d_t, d_v=d_v, l_q=l_q, l_v=l_v, d=d)
        raw = fh.read(12)
        if len(raw) != 12:
            raise FormatError("epoch/seed: file truncated")
        epoch, seed = struct.unpack("<Iq", raw)
        theta = _read_branch(fh, dims)
        phi = _read_branch(fh, dims)
        if fh.read(1):
            raise FormatError("payload: unexpected trailing bytes")
    return DualBranchState(theta=theta, phi=phi, epoch=epoch, seed=seed, cfg=cfg)
