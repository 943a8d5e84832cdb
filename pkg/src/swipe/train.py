"""Supervised training of encoder + head, and the gradient-check oracle.

Cross-entropy losses (softmax for multi-class, per-label logistic for
multi-label, both threshold-consistent with the strict-zero document bit),
Adam with bias correction, and a learning rate that decays linearly from
`base_lr` to zero over the planned number of steps.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from swipe import autodiff as ad
from swipe.corpus import Corpus, Document, TASK_MULTICLASS
from swipe.errors import TrainingError, ValidationError
from swipe.hashing import derive_seed
from swipe.model import DocFeatures, SwipeModel
from swipe.head import Prediction


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    base_lr: float = 5e-5
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.base_lr <= 0:
            raise ValidationError(f"base_lr must be > 0, got {self.base_lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_meta(self) -> dict:
        return {
            "epochs": self.epochs,
            "base_lr": self.base_lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


def loss_multiclass(doc_scores, gold: int) -> ad.Tensor:
    """Softmax cross-entropy over the document scores vs the gold label index."""
    logits = ad.as_tensor(doc_scores)
    n_labels = logits.shape[0]
    if n_labels < 2:
        raise ValidationError(f"multi-class loss needs >= 2 labels, got {n_labels}")
    if not 0 <= gold < n_labels:
        raise ValidationError(f"gold index {gold} out of range for L={n_labels}")
    return ad.softmax_cross_entropy(logits, gold)


def loss_multilabel(doc_scores, gold_bits) -> ad.Tensor:
    """Mean per-label logistic loss; sigmoid(score) crosses 0.5 exactly at 0."""
    logits = ad.as_tensor(doc_scores)
    gold_bits = np.asarray(gold_bits, dtype=np.float64)
    if gold_bits.shape != logits.shape:
        raise ValidationError(
            f"gold bits shape {gold_bits.shape} != scores shape {logits.shape}"
        )
    return ad.bce_with_logits_mean(logits, gold_bits)


def doc_loss(model: SwipeModel, feats: DocFeatures, target) -> tuple[ad.Tensor, tuple | None]:
    """Per-document loss plus the pooling signature (for kink detection)."""
    out = model.forward(feats)
    if model.config.task_kind == TASK_MULTICLASS:
        return loss_multiclass(out.doc_scores, int(target)), out.signature()
    return loss_multilabel(out.doc_scores, target), out.signature()


def backward_batch(
    model: SwipeModel, batch: list[tuple[DocFeatures, object]]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its gradients for every trainable parameter.

    Parameters that do not participate in the forward pass (e.g. gate
    weights under ungated pooling) get zero gradients.
    """
    model.zero_grad()
    losses = [doc_loss(model, feats, target)[0] for feats, target in batch]
    total = ad.scale(ad.add_n(losses), 1.0 / len(losses))
    value = total.item()
    if not math.isfinite(value):
        ids = [feats.doc_id for feats, _ in batch]
        raise TrainingError(f"non-finite loss {value!r} on batch {ids}")
    total.backward()
    grads = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in model.parameters().items()
    }
    return value, grads


@dataclass
class ModelState:
    """Model plus optimizer accumulators; `step` counts completed Adam steps."""

    model: SwipeModel
    config: TrainConfig
    total_steps: int
    step: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, tensor in self.model.parameters().items():
            self.adam_m.setdefault(name, np.zeros_like(tensor.data))
            self.adam_v.setdefault(name, np.zeros_like(tensor.data))


def learning_rate(config: TrainConfig, step: int, total_steps: int) -> float:
    """Linear decay from base_lr to zero at step == total_steps."""
    return config.base_lr * max(0.0, 1.0 - step / total_steps)


def adam_step(state: ModelState, grads: dict[str, np.ndarray], step: int) -> float:
    """Standard bias-corrected Adam update; returns the learning rate used."""
    cfg = state.config
    lr = learning_rate(cfg, step, state.total_steps)
    params = state.model.parameters()
    for name, tensor in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        m = state.adam_m[name] = cfg.beta1 * state.adam_m[name] + (1 - cfg.beta1) * g
        v = state.adam_v[name] = cfg.beta2 * state.adam_v[name] + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**step)
        v_hat = v / (1 - cfg.beta2**step)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if not np.all(np.isfinite(tensor.data)):
            raise TrainingError(f"non-finite parameter {name!r} after step {step}")
    state.step = step
    return lr


# -- gradient checking -------------------------------------------------------

#: Relative error denominators are floored here so coordinates whose true
#: gradient is ~0 are judged on an absolute scale of tol * floor, which sits
#: safely above central-difference noise for smooth float64 losses.
GRAD_CHECK_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_excluded: int
    failures: list[tuple[str, int, float, float, float]]  # name, flat idx, analytic, fd, rel
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.failures


def grad_check(
    fn,
    params: dict[str, ad.Tensor],
    tolerance: float = 1e-4,
    base_step: float = 1e-4,
    analytic: dict[str, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `fn` rebuilds the forward pass from the current parameter data and
    returns (loss tensor, signature). The signature is any hashable marker of
    the non-smooth branch taken (max-pooling argmaxes); a coordinate whose
    perturbation changes the signature crosses a kink, so its finite
    difference is meaningless and it is excluded rather than compared.

    Per-coordinate step: base_step * (1 + |value|).
    """
    if analytic is None:
        for tensor in params.values():
            tensor.zero_grad()
        loss, _ = fn()
        loss.backward()
        analytic = {
            name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
            for name, t in params.items()
        }
    _, base_sig = fn()
    max_rel = 0.0
    n_checked = 0
    n_excluded = 0
    failures = []
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for j in range(flat.shape[0]):
            original = flat[j]
            step = base_step * (1.0 + abs(original))
            flat[j] = original + step
            loss_plus, sig_plus = fn()
            flat[j] = original - step
            loss_minus, sig_minus = fn()
            flat[j] = original
            if sig_plus != base_sig or sig_minus != base_sig:
                n_excluded += 1
                continue
            fd = (loss_plus.item() - loss_minus.item()) / (2.0 * step)
            rel = abs(fd - grad_flat[j]) / max(abs(fd), abs(grad_flat[j]), GRAD_CHECK_FLOOR)
            n_checked += 1
            max_rel = max(max_rel, rel)
            if rel > tolerance:
                failures.append((name, j, float(grad_flat[j]), float(fd), float(rel)))
    return GradCheckReport(
        max_rel_error=max_rel,
        n_checked=n_checked,
        n_excluded=n_excluded,
        failures=failures,
        tolerance=tolerance,
    )


# -- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    model: SwipeModel                 # final state (mutated in place)
    best_params: dict[str, np.ndarray]
    best_epoch: int
    best_metric: float
    metrics: list[dict]               # rows: epoch, step, lr, train_loss, dev_metric

    def restore_best(self) -> SwipeModel:
        """Overwrite the model's parameters with the best-dev snapshot."""
        for name, tensor in self.model.parameters().items():
            tensor.data = self.best_params[name].copy()
        return self.model


def _target_for(model: SwipeModel, doc: Document):
    if model.config.task_kind == TASK_MULTICLASS:
        return model.vocab.index(doc.labels[0])
    return model.vocab.bits(doc.labels)


def exact_match(pred: Prediction, model: SwipeModel, doc: Document) -> bool:
    """Document-level correctness: argmax class (multi-class) or bit set."""
    if model.config.task_kind == TASK_MULTICLASS:
        return pred.pred_class == model.vocab.index(doc.labels[0])
    return bool(np.array_equal(pred.bits.astype(np.float64), model.vocab.bits(doc.labels)))


def evaluate_split(model: SwipeModel, docs: list[Document],
                   features: dict[str, DocFeatures]) -> float:
    if not docs:
        return float("nan")
    hits = sum(
        exact_match(model.predict_features(features[doc.id]), model, doc) for doc in docs
    )
    return hits / len(docs)


def train(corpus: Corpus, model: SwipeModel, config: TrainConfig) -> TrainResult:
    """Train on the corpus train split; track the best dev epoch.

    Deterministic under (config.seed, model init): batch order comes from a
    dedicated shuffle stream and every reduction runs in a fixed order.
    """
    train_docs = corpus.split_docs("train")
    if not train_docs:
        raise ValidationError("train split is empty")
    dev_docs = corpus.split_docs("dev")
    features = {doc.id: model.featurize(doc) for doc in (*train_docs, *dev_docs)}
    targets = {doc.id: _target_for(model, doc) for doc in train_docs}

    n_batches = math.ceil(len(train_docs) / config.batch_size)
    state = ModelState(model=model, config=config,
                       total_steps=config.epochs * n_batches)
    model.train_config_meta = config.to_meta()
    rng = np.random.default_rng(derive_seed("train-shuffle", config.seed))

    snapshot = {name: t.data.copy() for name, t in model.parameters().items()}
    best = TrainResult(model=model, best_params=snapshot, best_epoch=0,
                       best_metric=-math.inf, metrics=[])
    step = 0
    lr = config.base_lr
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_docs))
        epoch_loss = 0.0
        for b in range(n_batches):
            chosen = order[b * config.batch_size:(b + 1) * config.batch_size]
            batch = [
                (features[train_docs[i].id], targets[train_docs[i].id]) for i in chosen
            ]
            loss_value, grads = backward_batch(model, batch)
            step += 1
            lr = adam_step(state, grads, step)
            epoch_loss += loss_value * len(batch)
        epoch_loss /= len(train_docs)
        dev_metric = evaluate_split(model, dev_docs, features)
        best.metrics.append(
            {"epoch": epoch, "step": step, "lr": lr,
             "train_loss": epoch_loss, "dev_metric": dev_metric}
        )
        if dev_docs and dev_metric > best.best_metric:
            best.best_metric = dev_metric
            best.best_epoch = epoch
            best.best_params = {name: t.data.copy() for name, t in model.parameters().items()}
    if not dev_docs:
        best.best_params = {name: t.data.copy() for name, t in model.parameters().items()}
        best.best_epoch = config.epochs
    return best


def write_metrics_csv(rows: list[dict], path) -> None:
    """Training log; float formatting via repr, so identical runs match byte-wise."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "lr", "train_loss", "dev_metric"])
        for row in rows:
            writer.writerow(
                [row["epoch"], row["step"], repr(float(row["lr"])),
                 repr(float(row["train_loss"])), repr(float(row["dev_metric"]))]
            )


def aggregate_runs(values: list[float]) -> dict[str, float]:
    """Mean and spread across seeds (the multi-initialization protocol)."""
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


def clone_model(model: SwipeModel) -> SwipeModel:
    """Deep copy used by convergence comparisons; shares nothing."""
    return copy.deepcopy(model)
