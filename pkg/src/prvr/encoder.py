"""Text and video encoders with learnable parameters and a gradient tape.

Both branches share one architecture: FC + ReLU into the embedding space,
additive positional encoding, one pre-norm single-head self-attention
layer with a residual connection, and (text only) softmax attention
pooling over words. Everything runs in float64; forward functions accept
plain ndarrays or autodiff Vars and are deterministic per instance.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericalError

LN_EPS = 1e-5

# Canonical parameter order: drives initialization draws, checkpoint
# layout, and gradient-tape iteration. Do not reorder.
_PARAM_ORDER = (
    "text_proj_w", "text_proj_b",
    "video_proj_w", "video_proj_b",
    "pos_text", "pos_video",
    "attn_text_wq", "attn_text_wk", "attn_text_wv", "attn_text_wo",
    "attn_text_ln_g", "attn_text_ln_b",
    "attn_video_wq", "attn_video_wk", "attn_video_wv", "attn_video_wo",
    "attn_video_ln_g", "attn_video_ln_b",
    "pool_w", "pool_b",
)


@dataclass(frozen=True)
class EncoderDims:
    d_t: int
    d_v: int
    l_q: int
    l_v: int
    d: int


def _param_shapes(dims: EncoderDims):
    d = dims.d
    shapes = {
        "text_proj_w": (dims.d_t, d), "text_proj_b": (d,),
        "video_proj_w": (dims.d_v, d), "video_proj_b": (d,),
        "pos_text": (dims.l_q, d), "pos_video": (dims.l_v, d),
        "pool_w": (d,), "pool_b": (),
    }
    for branch in ("text", "video"):
        for m in ("wq", "wk", "wv", "wo"):
            shapes[f"attn_{branch}_{m}"] = (d, d)
        shapes[f"attn_{branch}_ln_g"] = (d,)
        shapes[f"attn_{branch}_ln_b"] = (d,)
    return shapes


# fan-in used for the uniform init bound of each tensor
def _fan_in(name, dims: EncoderDims):
    if name.startswith("text_proj"):
        return dims.d_t
    if name.startswith("video_proj"):
        return dims.d_v
    return dims.d


class EncoderParams:
    """All learnable weights of one branch, in canonical order."""

    def __init__(self, dims: EncoderDims, tensors: dict):
        self.dims = dims
        self.tensors = {name: np.asarray(tensors[name], dtype=np.float64)
                        for name in _PARAM_ORDER}

    @classmethod
    def initialize(cls, dims: EncoderDims, seed: int) -> "EncoderParams":
        rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF]))
        shapes = _param_shapes(dims)
        tensors = {}
        for name in _PARAM_ORDER:
            if name.endswith("ln_g"):
                tensors[name] = np.ones(shapes[name])
            elif name.endswith("ln_b"):
                tensors[name] = np.zeros(shapes[name])
            else:
                bound = 1.0 / np.sqrt(_fan_in(name, dims))
                tensors[name] = rng.uniform(-bound, bound, size=shapes[name])
        return cls(dims, tensors)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.dims, {k: v.copy() for k, v in self.tensors.items()})

    def names(self):
        return _PARAM_ORDER

    def __getitem__(self, name):
        return self.tensors[name]


@dataclass
class GradientTape:
    """Per-parameter gradients, shapes mirroring EncoderParams."""

    grads: dict

    def __getitem__(self, name):
        return self.grads[name]

    def max_abs(self):
        return max(np.abs(g).max() if g.size else 0.0 for g in self.grads.values())


def wrap_params(params: EncoderParams) -> dict:
    """Wrap every parameter tensor in an autodiff Var for one training step."""
    return {name: ad.Var(params.tensors[name]) for name in params.names()}


def _layernorm(x, g, b):
    mu = ad.reduce_mean(x, axis=-1, keepdims=True)
    xc = ad.sub(x, mu)
    var = ad.reduce_mean(ad.mul(xc, xc), axis=-1, keepdims=True)
    return ad.add(ad.mul(ad.div(xc, ad.sqrt(ad.add(var, LN_EPS))), g), b)


def _attention(tensors, x, prefix, d):
    n = _layernorm(x, tensors[f"{prefix}_ln_g"], tensors[f"{prefix}_ln_b"])
    q = ad.matmul(n, tensors[f"{prefix}_wq"])
    k = ad.matmul(n, tensors[f"{prefix}_wk"])
    v = ad.matmul(n, tensors[f"{prefix}_wv"])
    scores = ad.div(ad.matmul(q, ad.transpose(k, (1, 0))), np.sqrt(float(d)))
    attn = ad.softmax(scores, axis=-1)
    out = ad.matmul(ad.matmul(attn, v), tensors[f"{prefix}_wo"])
    return ad.add(x, out)


def _encode_tokens(tensors, x, side, dims):
    h = ad.relu(ad.add(ad.matmul(x, tensors[f"{side}_proj_w"]), tensors[f"{side}_proj_b"]))
    h = ad.add(h, tensors[f"pos_{side}"])
    return _attention(tensors, h, f"attn_{side}", dims.d)


def _check_shape(x, expected, what):
    if np.shape(x) != expected:
        raise DimensionError(f"{what}: expected shape {expected}, got {np.shape(x)}")


def _resolve(params, dims):
    if isinstance(params, EncoderParams):
        return params.tensors, params.dims
    if dims is None:
        raise DimensionError("dims required when passing a raw tensor dict")
    return params, dims


def encode_text(params, word_features, dims: EncoderDims = None):
    """Encode one query's word features (L_q, d_t) into a vector (d,).

    params may be an EncoderParams or a dict of autodiff Vars (training).
    """
    tensors, dims = _resolve(params, dims)
    x = word_features if isinstance(word_features, ad.Var) \
        else np.asarray(word_features, dtype=np.float64)
    _check_shape(ad.val(x), (dims.l_q, dims.d_t), "word_features")
    h = _encode_tokens(tensors, x, "text", dims)
    scores = ad.add(ad.reduce_sum(ad.mul(h, tensors["pool_w"]), axis=-1), tensors["pool_b"])
    alpha = ad.softmax(scores, axis=-1)
    return ad.reduce_sum(ad.mul(ad.reshape(alpha, (dims.l_q, 1)), h), axis=0)


def encode_video(params, frame_features, dims: EncoderDims = None):
    """Encode one video's frame features (L_v, d_v) into (L_v, d)."""
    tensors, dims = _resolve(params, dims)
    x = frame_features if isinstance(frame_features, ad.Var) \
        else np.asarray(frame_features, dtype=np.float64)
    _check_shape(ad.val(x), (dims.l_v, dims.d_v), "frame_features")
    return _encode_tokens(tensors, x, "video", dims)


def collect_tape(wrapped: dict, loss) -> GradientTape:
    """Run backprop from a scalar loss Var and gather per-parameter grads.

    Parameters not reached by the loss get zero gradients. Non-finite
    gradients abort with the offending tensor's name.
    """
    grads = ad.backward(loss)
    tape = {}
    for name, var in wrapped.items():
        g = grads.get(id(var))
        if g is None:
            g = np.zeros_like(var.value)
        else:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != var.value.shape:  # scalar params
                g = g.reshape(var.value.shape)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"gradient for {name} is non-finite")
        tape[name] = g
    return GradientTape(tape)
