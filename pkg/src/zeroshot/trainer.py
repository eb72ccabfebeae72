"""Training: categorical cross-entropy, backprop, SGD, and a
finite-difference gradient oracle.

The loss is mean batch cross-entropy over the softmax outputs; the
output layer stays frozen (its columns are class vectors) unless the
model config explicitly marks it trainable.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import AssembledDataset
from .errors import NumericError
from .network import Model, ModelConfig, backward_targets_check, forward, init_model, save_model
from .zslf import ClassVectorSet

log = logging.getLogger(__name__)

LOG_EPS = 1e-12  # guards log() against float32 probability underflow
MIN_LOSS_IMPROVEMENT = 1e-5


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 64
    max_epochs: int = 300
    early_stop_patience: int = 10
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise ValueError("learning_rate must be a positive finite float")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")


@dataclass
class EpochStats:
    mean_loss: float
    train_top1: float
    elapsed_seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)


def cross_entropy_loss(probs, one_hot_index: int) -> float:
    """-log(probs[one_hot_index] + eps) for a single prediction."""
    probs = np.asarray(probs)
    if not 0 <= one_hot_index < probs.shape[-1]:
        raise ValueError(f"one_hot_index {one_hot_index} out of range [0, {probs.shape[-1]})")
    return float(-np.log(np.float64(probs[one_hot_index]) + LOG_EPS))


def batch_cross_entropy(probs, targets, eps: float = LOG_EPS) -> float:
    """Mean cross-entropy over a batch, accumulated in float64.

    `eps` guards against float32 probability underflow during training;
    gradient checking passes eps=0 because the analytic gradient is that of
    the exact, unguarded loss.
    """
    targets = np.asarray(targets)
    picked = probs[np.arange(len(targets)), targets].astype(np.float64)
    return float(-np.log(picked + eps).mean())


def softmax_ce_logit_gradient(probs, targets, batch_mean: bool = True):
    """d(loss)/d(logits) for softmax + cross-entropy: probs - one_hot.

    With `batch_mean` the gradient is divided by the batch size, matching
    the mean-loss convention used everywhere in training.
    """
    probs = np.atleast_2d(probs)
    targets = np.atleast_1d(targets)
    d = probs.copy()
    d[np.arange(len(targets)), targets] -= 1
    return d / len(targets) if batch_mean else d


def backward(model: Model, trace, targets) -> dict[str, np.ndarray]:
    """Gradients of the mean batch loss for every trainable tensor."""
    targets = backward_targets_check(trace, targets)
    grads: dict[str, np.ndarray] = {}
    dlogits = softmax_ce_logit_gradient(trace.probs, targets)
    if model.config.train_output_layer:
        grads["output.W"] = trace.semantic.T @ dlogits
    d = dlogits @ model.output_weights.T
    for i in reversed(range(len(model.layers))):
        d = model.layers[i].backward(
            d, trace.layer_recs[i], trace.training, grads, model._layer_name(i)
        )
        if i == model.n_reducer:
            # First trunk layer consumed concat(reduced, text); keep the
            # visual half, the text half is input.
            d = d[:, : model.config.reduced_dim]
    return grads


def sgd_step(model: Model, grads: dict[str, np.ndarray], lr: float) -> None:
    """w <- w - lr * g for every trainable tensor; aborts on non-finite grads."""
    tensors = dict(model.trainable_tensors())
    for name, g in grads.items():
        if name not in tensors:
            raise ValueError(f"gradient for unknown or frozen tensor {name!r}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name}; step aborted")
    for name, g in grads.items():
        tensors[name] -= (lr * g).astype(tensors[name].dtype)


def train(
    model: Model,
    data: AssembledDataset,
    config: TrainConfig,
    log_fn=None,
    checkpoint_path=None,
) -> TrainHistory:
    """SGD loop with per-epoch shuffling and early stopping on loss plateau.

    Deterministic given the model's init seed and `config.seed`.  When
    `checkpoint_path` is set, the model is saved whenever the epoch loss
    improves and again after the final epoch.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.label_order != model.label_order:
        raise ValueError("dataset label_order does not match the model's")
    if config.batch_size > len(data):
        raise ValueError(
            f"batch_size {config.batch_size} exceeds dataset size {len(data)}"
        )
    emit = log_fn if log_fn is not None else (lambda line: log.info("%s", line))
    rng = np.random.Generator(np.random.PCG64(config.seed))
    X, T, y = data.images, data.texts, data.label_indices
    history = TrainHistory()
    best_loss = np.inf
    stale = 0
    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        order = rng.permutation(len(data)) if config.shuffle else np.arange(len(data))
        loss_sum = np.float64(0.0)
        hits = 0
        for lo in range(0, len(data), config.batch_size):
            rows = order[lo : lo + config.batch_size]
            probs, trace = forward(model, X[rows], T[rows], training=True, rng=rng)
            targets = y[rows]
            loss_sum += batch_cross_entropy(probs, targets) * len(rows)
            hits += int((probs.argmax(axis=1) == targets).sum())
            grads = backward(model, trace, targets)
            try:
                sgd_step(model, grads, config.learning_rate)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from exc
        mean_loss = float(loss_sum / len(data))
        if not np.isfinite(mean_loss):
            raise NumericError(f"epoch {epoch}: training loss diverged ({mean_loss})")
        stats = EpochStats(
            mean_loss=mean_loss,
            train_top1=hits / len(data),
            elapsed_seconds=time.perf_counter() - started,
        )
        history.epochs.append(stats)
        emit(
            f"epoch={epoch} loss={stats.mean_loss:.6f} "
            f"top1={stats.train_top1:.4f} secs={stats.elapsed_seconds:.3f}"
        )
        if mean_loss < best_loss - MIN_LOSS_IMPROVEMENT:
            best_loss = mean_loss
            stale = 0
            if checkpoint_path is not None:
                save_model(model, checkpoint_path)
        else:
            stale += 1
            if stale > config.early_stop_patience:
                break
    if checkpoint_path is not None and config.max_epochs > 0:
        save_model(model, checkpoint_path)
    return history


# --- finite-difference oracle ----------------------------------------------

KINK_FACTOR = 10.0  # relu pre-activations within 10*eps of zero are excluded


def _relu_kink_map(model, trace, eps):
    """Per-layer mask of relu units too close to their kink to difference."""
    threshold = KINK_FACTOR * eps
    kinks = []
    for layer, rec in zip(model.layers, trace.layer_recs):
        if layer.spec.activation == "relu":
            kinks.append((np.abs(rec["u"]) < threshold).any(axis=0))
        else:
            kinks.append(np.zeros(layer.spec.out_dim, dtype=bool))
    return kinks


def gradient_check(
    model_config: ModelConfig,
    seed: int,
    eps: float = 1e-5,
    num_classes: int = 3,
    batch: int = 4,
    cv_scale: float = 0.3,
    details: bool = False,
):
    """Compare analytic gradients against central finite differences.

    Runs entirely in float64 with dropout off and batchnorm on running
    statistics.  Every trainable parameter is perturbed by +-eps; the
    relative error is |a - n| / max(|a|, |n|, 1e-8).  Parameters whose relu
    unit sits within 10*eps of its kink are excluded, as is any tensor with
    a near-kink relu unit downstream of it (central differences are
    meaningless across the nondifferentiability).

    `cv_scale` shrinks the random class vectors so the softmax at the check
    point stays unsaturated: saturated probabilities push true gradients
    toward the 1e-8 denominator floor, below what float64 differencing can
    resolve.

    Returns the max relative error over checked parameters, or a
    (max_rel_err, checked, excluded) triple when `details` is set.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = [f"c{i}" for i in range(num_classes)]
    cv = ClassVectorSet(
        model_config.sem_dim,
        {
            l: (cv_scale * rng.standard_normal(model_config.sem_dim)).astype(np.float32)
            for l in labels
        },
    )
    model = init_model(cv, labels, model_config).astype(np.float64)
    X = rng.standard_normal((batch, model_config.n1))
    T = rng.standard_normal((batch, model_config.n2))
    targets = rng.integers(0, num_classes, size=batch)

    def loss():
        probs, _ = forward(model, X, T, training=False)
        return batch_cross_entropy(probs, targets, eps=0.0)

    _, trace = forward(model, X, T, training=False)
    analytic = backward(model, trace, targets)
    kinks = _relu_kink_map(model, trace, eps)
    layer_of = {model._layer_name(i): i for i in range(len(model.layers))}
    kink_downstream_of = [
        any(k.any() for k in kinks[i + 1 :]) for i in range(len(model.layers))
    ]

    max_rel = 0.0
    checked = excluded = 0
    for name, tensor in model.trainable_tensors():
        prefix, param = name.rsplit(".", 1)
        li = layer_of.get(prefix)  # None for output.W: nothing downstream of it
        if li is not None and kink_downstream_of[li]:
            excluded += tensor.size
            continue
        unit_kinks = kinks[li] if li is not None else None
        out_dim = tensor.shape[-1]
        grad = analytic[name]
        flat = tensor.reshape(-1)
        for e in range(flat.size):
            if unit_kinks is not None and unit_kinks[e % out_dim]:
                excluded += 1
                continue
            orig = flat[e]
            flat[e] = orig + eps
            f_plus = loss()
            flat[e] = orig - eps
            f_minus = loss()
            flat[e] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(grad.reshape(-1)[e])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
            checked += 1
    if details:
        return max_rel, checked, excluded
    return max_rel
