"""Segment-aware long-text classification.

Truncate a long document into segments, encode each segment, score every
segment against every label with a shared perceptron, pool the segment
scores into document labels, and read key segments back off the scores with
no segment-level supervision.
"""

__version__ = "0.1.0"

from swipe.corpus import (
    Corpus,
    Document,
    LabelVocab,
    SyntheticSpec,
    generate_synthetic,
    load_jsonl,
    split_corpus,
    write_jsonl,
)
from swipe.encoder import (
    HashEncoderParams,
    InteractionParams,
    SegmentMatrix,
    encode_segments,
    interact,
    load_precomputed,
)
from swipe.head import (
    Explanation,
    Pooling,
    Prediction,
    SwipeParams,
    classify,
    explain,
    pool,
    rank_segments,
    segment_gates,
    segment_scores,
)
from swipe.model import ModelConfig, SwipeModel
from swipe.train import TrainConfig, grad_check, loss_multiclass, loss_multilabel, train
from swipe.truncate import Segment, TruncationConfig, tokenize, truncate

__all__ = [
    "Corpus",
    "Document",
    "Explanation",
    "HashEncoderParams",
    "InteractionParams",
    "LabelVocab",
    "ModelConfig",
    "Pooling",
    "Prediction",
    "Segment",
    "SegmentMatrix",
    "SwipeModel",
    "SwipeParams",
    "SyntheticSpec",
    "TrainConfig",
    "TruncationConfig",
    "classify",
    "encode_segments",
    "explain",
    "generate_synthetic",
    "grad_check",
    "interact",
    "load_jsonl",
    "load_precomputed",
    "loss_multiclass",
    "loss_multilabel",
    "pool",
    "rank_segments",
    "segment_gates",
    "segment_scores",
    "split_corpus",
    "tokenize",
    "train",
    "truncate",
    "write_jsonl",
]
