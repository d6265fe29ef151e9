"""Desk-scale engine for partially relevant video retrieval training.

Detects ambiguous text-video and text-frame pairs via similarity and
uncertainty thresholds, trains dual encoder branches with ambiguity-aware
contrastive and dual-margin triplet objectives, exchanges detected sets
between branches, and evaluates retrieval with fused scores.
"""

from .ambiguity import (AmbiguitySets, FrameSets, Thresholds, UncertaintyTables,
                        compute_thresholds, compute_uncertainty,
                        detect_frame_ambiguity, detect_video_ambiguity,
                        frame_uncertainty, pair_uncertainty)
from .corpus import (CorpusSpec, FeatureCorpus, generate_synthetic,
                     read_corpus, write_corpus)
from .encoder import EncoderDims, EncoderParams, GradientTape, encode_text, encode_video
from .errors import (ConfigError, DimensionError, FormatError,
                     NumericalError, PrvrError)
from .evaluation import AuditReport, RecallReport, audit, evaluate, fused_score
from .losses import (LossBreakdown, LossConfig, loss_frame, loss_nce,
                     loss_nce_t2v, loss_nce_v2t, loss_triplet, loss_video,
                     loss_warmup)
from .similarity import (CorpusSimilarityMap, build_corpus_map,
                         frame_similarity, retrieval_score)
from .trainer import (DualBranchState, TrainConfig, checkpoint, resume,
                      step, train)

__version__ = "0.1.0"
