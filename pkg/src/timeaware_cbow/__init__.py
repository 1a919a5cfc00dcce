"""Time-aware attention CBOW embeddings for timestamped event codes."""

from .corpus import (
    BucketedSequence,
    CorpusFormatError,
    EmptyVocabularyError,
    PatientRecord,
    Vocabulary,
    build_vocab,
    bucketize,
    keep_probability,
    parse_events,
)
from .model import (
    AttentionProfile,
    ContextSet,
    ModelParams,
    attention_weights,
    cbow_train_step,
    export_profiles,
    forward_loss,
    hidden,
    init_params,
    train_step,
)
from .negsample import NegSampler, build_sampler, draw
from .trainer import TrainConfig, TrainReport, assemble_contexts, count_attention_ops, lr_schedule, train

__version__ = "0.1.0"
