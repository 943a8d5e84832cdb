"""Segment-aware perceptron head.

Every segment vector is scored against every label by a shared affine map;
a per-label sigmoid gate can modulate each segment's participation; one of
four pooling reductions turns per-segment scores into the document score;
a strict zero threshold yields document and segment bits. The same scores
rank segments for label relevance, which is where the self-explaining
behaviour comes from: key segments are read off the trained scores without
any segment-level supervision.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from swipe import autodiff as ad
from swipe.corpus import TASK_MULTICLASS
from swipe.encoder import SegmentMatrix
from swipe.errors import ConfigError


class Pooling(str, Enum):
    MAX = "max"
    GATED_MAX = "gated_max"
    SUM = "sum"
    GATED_SUM = "gated_sum"

    @property
    def gated(self) -> bool:
        return self in (Pooling.GATED_MAX, Pooling.GATED_SUM)

    @property
    def is_max(self) -> bool:
        return self in (Pooling.MAX, Pooling.GATED_MAX)


@dataclass
class SwipeParams:
    """Per-label score weights (weight, bias) and gate weights."""

    weight: ad.Tensor       # L x h
    bias: ad.Tensor         # L
    gate_weight: ad.Tensor  # L x h
    gate_bias: ad.Tensor    # L

    @property
    def n_labels(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def create(
        cls,
        n_labels: int,
        dim: int,
        init_seed: int = 0,
        label_vectors: np.ndarray | None = None,
    ) -> "SwipeParams":
        """Zero-mean Gaussian rows of scale 1/sqrt(h); biases zero.

        `label_vectors` (L x h) optionally seeds the score weights with label
        embeddings instead of random rows.
        """
        rng = np.random.default_rng(init_seed)
        if label_vectors is not None:
            weight = np.asarray(label_vectors, dtype=np.float64).copy()
            if weight.shape != (n_labels, dim):
                raise ConfigError(
                    f"label_vectors shape {weight.shape} != ({n_labels}, {dim})"
                )
        else:
            weight = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_labels, dim))
        gate_weight = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_labels, dim))
        return cls(
            weight=ad.Tensor(weight, requires_grad=True),
            bias=ad.Tensor(np.zeros(n_labels), requires_grad=True),
            gate_weight=ad.Tensor(gate_weight, requires_grad=True),
            gate_bias=ad.Tensor(np.zeros(n_labels), requires_grad=True),
        )


def _check_dims(h: int, params: SwipeParams) -> None:
    if h != params.dim:
        raise ConfigError(f"segment dim {h} != head dim {params.dim}")


def scores_tensor(x: ad.Tensor, params: SwipeParams) -> ad.Tensor:
    """Differentiable per-segment scores, shape (m, L)."""
    _check_dims(x.shape[1], params)
    return ad.add(ad.matmul(x, ad.transpose(params.weight)), params.bias)


def gates_tensor(x: ad.Tensor, params: SwipeParams) -> ad.Tensor:
    """Differentiable per-segment gates in (0, 1), shape (m, L)."""
    _check_dims(x.shape[1], params)
    return ad.sigmoid(ad.add(ad.matmul(x, ad.transpose(params.gate_weight)), params.gate_bias))


def pool_tensor(
    scores: ad.Tensor, gates: ad.Tensor | None, strategy: Pooling
) -> tuple[ad.Tensor, np.ndarray | None]:
    """Reduce (m, L) scores to (L,) document scores.

    Max variants also return the per-label argmax segment (ties resolved to
    the lowest segment index, which is also where the subgradient flows).
    """
    if strategy.gated and gates is None:
        raise ConfigError(f"{strategy.value} pooling requires gates")
    effective = ad.mul(gates, scores) if strategy.gated else scores
    if strategy.is_max:
        pooled, argmax = ad.max_along(effective, axis=0)
        return pooled, argmax
    return ad.sum_along(effective, axis=0), None


def segment_scores(matrix: SegmentMatrix, params: SwipeParams) -> np.ndarray:
    """Scores of every segment on every label, shape (L, m)."""
    return scores_tensor(ad.Tensor(matrix.rows), params).data.T


def segment_gates(matrix: SegmentMatrix, params: SwipeParams) -> np.ndarray:
    """Gates of every segment on every label, shape (L, m), strictly in (0, 1)."""
    return gates_tensor(ad.Tensor(matrix.rows), params).data.T


def pool(
    scores: np.ndarray, gates: np.ndarray | None, strategy: Pooling
) -> tuple[np.ndarray, np.ndarray | None]:
    """Pool (L, m) scores into (L,) document scores; see `pool_tensor`."""
    scores_t = ad.Tensor(np.asarray(scores, dtype=np.float64).T)
    gates_t = None
    if gates is not None:
        gates_t = ad.Tensor(np.asarray(gates, dtype=np.float64).T)
    pooled, argmax = pool_tensor(scores_t, gates_t, strategy)
    return pooled.data, argmax


@dataclass
class Prediction:
    """Everything the head knows about one document."""

    doc_id: str
    strategy: Pooling
    scores: np.ndarray              # (L,) document score per label
    bits: np.ndarray                # (L,) int8, 1 iff score > 0 (strict)
    seg_scores: np.ndarray          # (L, m)
    gates: np.ndarray | None        # (L, m), gated strategies only
    seg_bits: np.ndarray            # (L, m) int8, 1 iff seg score > 0 (strict)
    key_segments: np.ndarray        # (L,) argmax segment under the ranking score
    pred_class: int | None = None   # argmax label, multi-class mode only

    @property
    def n_labels(self) -> int:
        return self.seg_scores.shape[0]

    @property
    def m(self) -> int:
        return self.seg_scores.shape[1]

    def ranking_scores(self, label: int, use_gate: bool) -> np.ndarray:
        if use_gate:
            if self.gates is None:
                raise ConfigError("prediction has no gates to rank with")
            return self.gates[label] * self.seg_scores[label]
        return self.seg_scores[label]

    def to_record(self, label_names) -> dict:
        """JSONL-serializable record; key names are part of the file format."""
        per_label = []
        for i, name in enumerate(label_names):
            per_label.append(
                {
                    "label": name,
                    "y": float(self.scores[i]),
                    "bit": int(self.bits[i]),
                    "key_segment": int(self.key_segments[i]),
                    "positive_segments": [int(k) for k in np.flatnonzero(self.seg_bits[i])],
                    "segment_scores": [float(v) for v in self.seg_scores[i]],
                }
            )
        predicted = (
            [label_names[self.pred_class]]
            if self.pred_class is not None
            else [label_names[i] for i in np.flatnonzero(self.bits)]
        )
        return {"doc_id": self.doc_id, "labels": predicted, "per_label": per_label}


def classify(
    matrix: SegmentMatrix,
    params: SwipeParams,
    strategy: Pooling,
    task_kind: str = TASK_MULTICLASS,
) -> Prediction:
    """Full head forward for one encoded document."""
    x = ad.Tensor(matrix.rows)
    scores_ml = scores_tensor(x, params)
    gates_ml = gates_tensor(x, params) if strategy.gated else None
    pooled, _ = pool_tensor(scores_ml, gates_ml, strategy)
    return build_prediction(
        doc_id=matrix.doc_id,
        strategy=strategy,
        doc_scores=pooled.data,
        seg_scores=scores_ml.data.T,
        gates=gates_ml.data.T if gates_ml is not None else None,
        task_kind=task_kind,
    )


def build_prediction(
    doc_id: str,
    strategy: Pooling,
    doc_scores: np.ndarray,
    seg_scores: np.ndarray,
    gates: np.ndarray | None,
    task_kind: str,
) -> Prediction:
    """Assemble a Prediction from raw (L,) / (L, m) arrays."""
    ranking = gates * seg_scores if strategy.gated and gates is not None else seg_scores
    return Prediction(
        doc_id=doc_id,
        strategy=strategy,
        scores=doc_scores,
        bits=(doc_scores > 0).astype(np.int8),
        seg_scores=seg_scores,
        gates=gates,
        seg_bits=(seg_scores > 0).astype(np.int8),
        key_segments=np.argmax(ranking, axis=1),
        pred_class=int(np.argmax(doc_scores)) if task_kind == TASK_MULTICLASS else None,
    )


def rank_segments(pred: Prediction, label: int, use_gate: bool = False) -> list[int]:
    """Segment indices in descending relevance to `label`; ties keep index order."""
    ranking = pred.ranking_scores(label, use_gate)
    return list(np.argsort(-ranking, kind="stable"))


@dataclass(frozen=True)
class Explanation:
    label: int
    positive_segments: tuple[int, ...]  # segments whose bit is set for the label
    key_segment: int                    # top-ranked segment


def explain(pred: Prediction, label: int) -> Explanation:
    """Extract the label's rationale: positive segments plus the top segment.

    Under max pooling a positive document bit guarantees the positive set is
    non-empty and contains the key segment.
    """
    if not 0 <= label < pred.n_labels:
        raise ConfigError(f"label {label} out of range for L={pred.n_labels}")
    positives = tuple(int(k) for k in np.flatnonzero(pred.seg_bits[label]))
    return Explanation(
        label=label,
        positive_segments=positives,
        key_segment=int(pred.key_segments[label]),
    )
