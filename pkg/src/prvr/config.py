"""Flat key=value config files with command-line overrides.

Lines are `key = value`; blank lines and #-comments are ignored. Unknown
keys are rejected so typos fail loudly before any work starts.
"""

from .corpus import CorpusSpec
from .errors import ConfigError
from .losses import LossConfig
from .trainer import TrainConfig

CORPUS_KEYS = {
    "n_q": int, "n_v": int, "l_q": int, "l_v": int, "d_t": int, "d_v": int,
    "seed": int, "segments_per_video": int,
    "ambiguity_rate": float, "noise_scale": float,
}

TRAIN_KEYS = {
    "epochs": int, "batch_size": int, "warmup_epochs": int,
    "learning_rate": float, "adam_beta1": float, "adam_beta2": float,
    "adam_eps": float, "weight_decay": float, "seed": int,
    "cross_model": bool, "video_lad": bool, "frame_lad": bool,
    "embed_dim": int,
}

LOSS_KEYS = {
    "margin_m": float, "margin_ma": float,
    "lambda_nce": float, "temperature": float,
}


def parse_kv_file(path) -> dict:
    entries = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        entries[key.strip()] = raw.strip()
    return entries


def apply_overrides(entries: dict, overrides) -> dict:
    merged = dict(entries)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, raw = item.partition("=")
        merged[key.strip()] = raw.strip()
    return merged


def _convert(key, raw, typ):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from exc


def _typed(entries, schema, what):
    unknown = set(entries) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {what} key(s): {', '.join(sorted(unknown))}")
    return {k: _convert(k, raw, schema[k]) for k, raw in entries.items()}


def corpus_spec_from(entries: dict) -> CorpusSpec:
    spec = CorpusSpec(**_typed(entries, CORPUS_KEYS, "corpus"))
    spec.validate()
    return spec


def train_config_from(entries: dict) -> TrainConfig:
    schema = dict(TRAIN_KEYS, **LOSS_KEYS)
    typed = _typed(entries, schema, "training")
    loss_kwargs = {k: typed.pop(k) for k in LOSS_KEYS if k in typed}
    cfg = TrainConfig(loss=LossConfig(**loss_kwargs), **typed)
    cfg.validate()
    return cfg


def resolved_lines(obj, loss: LossConfig = None):
    """Render a config dataclass back to sorted key=value lines."""
    items = {k: getattr(obj, k) for k in vars(obj) if k != "loss"} \
        if not hasattr(obj, "__dataclass_fields__") else \
        {k: getattr(obj, k) for k in obj.__dataclass_fields__ if k != "loss"}
    lines = [f"{k}={items[k]}" for k in sorted(items)]
    if loss is not None:
        lines += [f"{k}={getattr(loss, k)}" for k in sorted(LOSS_KEYS)]
    return lines
