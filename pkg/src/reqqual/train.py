"""Training loop: cross-entropy loss, Adam, gradient clipping, loss curves.

Everything stochastic (initialization, epoch shuffling, dropout masks)
draws from one seeded generator in a fixed order, so a fit is a pure
function of (data, configs, seed) and two runs produce bit-identical
parameters and loss curves.

The default execution processes padded batches; `execution="loop"`
selects the per-sequence reference path instead.  The two agree within
1e-10 per batch (see the nn module) but are not bit-identical, so the
execution mode is part of the reproducibility envelope.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ParameterError, TrainingError
from .numcore import Rng
from .nn import (
    ModelConfig,
    ParameterSet,
    RunMode,
    backward,
    backward_batch,
    forward,
    forward_batch,
    zero_gradients,
)

PROB_FLOOR = 1e-12  # keeps -log finite on saturated mispredictions


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.adam_beta1 < 1.0) or not (0.0 <= self.adam_beta2 < 1.0):
            raise ParameterError("adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0:
            raise ParameterError("adam_epsilon must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ParameterError(f"clip_norm must be positive or None, got {self.clip_norm}")


def loss(probs, true_class: int) -> float:
    """Binary cross entropy against the softmax output, floored at 1e-12."""
    if true_class not in (0, 1):
        raise ParameterError(f"true_class must be 0 or 1, got {true_class}")
    return -math.log(max(float(probs[true_class]), PROB_FLOOR))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, config: ModelConfig) -> "AdamState":
        return cls(m=zero_gradients(config), v=zero_gradients(config))


def adam_update(
    params: ParameterSet,
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[ParameterSet, AdamState]:
    """One Adam step with bias correction, applied in place."""
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    t_hat = state.t + 1
    for name, arr in params.arrays.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t_hat)
        v_hat = v / (1.0 - b2**t_hat)
        arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    state.t = t_hat
    return params, state


def gradient_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients down to a global L2 norm of clip_norm; no-op below it."""
    if clip_norm <= 0:
        raise ParameterError(f"clip_norm must be positive, got {clip_norm}")
    norm = gradient_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return grads


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    train_acc: float


@dataclass
class LossCurve:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if not math.isfinite(record.train_loss):
            raise TrainingError(f"non-finite epoch loss at epoch {record.epoch}")
        self.records.append(record)

    def final(self) -> EpochRecord:
        if not self.records:
            raise ParameterError("loss curve is empty")
        return self.records[-1]

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "train_acc"])
            for rec in self.records:
                writer.writerow([
                    rec.epoch,
                    format(rec.train_loss, ".17g"),
                    "" if rec.val_loss is None else format(rec.val_loss, ".17g"),
                    format(rec.train_acc, ".17g"),
                ])


LabeledSequence = tuple[Sequence[int], int]
Execution = Literal["batched", "loop"]


def _predict(probs) -> int:
    # argmax with exact ties resolved to class 0 (property satisfied)
    return 0 if probs[0] >= probs[1] else 1


def _validate_data(data, what: str) -> list[tuple[tuple[int, ...], int]]:
    if not data:
        raise ParameterError(f"{what} set must be non-empty")
    out = []
    for ids, label in data:
        ids = tuple(int(i) for i in (ids.ids if hasattr(ids, "ids") else ids))
        if not ids:
            raise ParameterError(f"{what} set contains an empty sequence")
        if label not in (0, 1):
            raise ParameterError(f"{what} label must be 0 or 1, got {label}")
        out.append((ids, int(label)))
    return out


def _batch_losses_and_grads(seqs, labels, params, rng, execution: Execution):
    """Per-sequence losses plus summed gradients for one batch (train mode)."""
    if execution == "batched":
        probs, trace = forward_batch(seqs, params, mode=RunMode.TRAIN, rng=rng)
        picked = probs[np.arange(len(seqs)), labels]
        losses = -np.log(np.maximum(picked, PROB_FLOOR))
        grads = backward_batch(trace, labels, params)
        preds = [_predict(row) for row in probs]
    else:
        grads = zero_gradients(params.config)
        losses = np.zeros(len(seqs))
        preds = []
        for j, (ids, y) in enumerate(zip(seqs, labels)):
            probs, trace = forward(ids, params, mode=RunMode.TRAIN, rng=rng)
            losses[j] = loss(probs, y)
            preds.append(_predict(probs))
            for name, g in backward(trace, y, params).items():
                grads[name] += g
    return losses, grads, preds


def _mean_validation_loss(validation, params) -> float:
    probs, _ = forward_batch([ids for ids, _ in validation], params)
    labels = np.array([y for _, y in validation])
    picked = probs[np.arange(len(validation)), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def fit(
    train_data: Sequence[LabeledSequence],
    model_config: ModelConfig,
    train_config: TrainConfig,
    validation: Sequence[LabeledSequence] | None = None,
    execution: Execution = "batched",
) -> tuple[ParameterSet, LossCurve]:
    """Train a fresh model; returns final parameters and the per-epoch curve.

    Consumes the seeded generator in a fixed order: parameter
    initialization, then per epoch one shuffle permutation, then one
    dropout draw per batch (batched) or per sequence (loop).
    """
    if execution not in ("batched", "loop"):
        raise ParameterError(f"execution must be 'batched' or 'loop', got {execution!r}")
    data = _validate_data(train_data, "training")
    val = _validate_data(validation, "validation") if validation is not None else None

    rng = Rng(train_config.seed)
    params = ParameterSet.initialize(model_config, rng)
    state = AdamState.zeros(model_config)
    curve = LossCurve()
    n = len(data)
    batch_count = (n + train_config.batch_size - 1) // train_config.batch_size

    for epoch in range(1, train_config.epochs + 1):
        if train_config.shuffle_each_epoch:
            order = rng.permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        correct = 0
        for b in range(batch_count):
            picks = order[b * train_config.batch_size : (b + 1) * train_config.batch_size]
            seqs = [data[i][0] for i in picks]
            labels = [data[i][1] for i in picks]
            losses, grads, preds = _batch_losses_and_grads(
                seqs, labels, params, rng, execution
            )
            if not np.isfinite(losses).all():
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b + 1} of {batch_count}"
                )
            for g in grads.values():
                g /= len(seqs)  # batch gradient is the mean over sequences
            if train_config.clip_norm is not None:
                clip_gradients(grads, train_config.clip_norm)
            adam_update(params, grads, state, train_config)
            loss_sum += float(losses.sum())
            correct += sum(1 for p, y in zip(preds, labels) if p == y)
        val_loss = None if val is None else _mean_validation_loss(val, params)
        curve.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n,
                val_loss=val_loss,
                train_acc=correct / n,
            )
        )
    return params, curve


# --- finite-difference gradient checking -------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    tolerance: float
    max_rel_error: float
    worst_param: str
    per_param: dict[str, float]

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} "
            f"(worst {self.worst_param}, tolerance {self.tolerance:g})"
        )


def finite_difference_gradients(
    params: ParameterSet, ids: Sequence[int], true_class: int, eps: float = 1e-6
) -> dict[str, np.ndarray]:
    """Central differences of the cross-entropy loss for every element."""
    numeric = {}
    for name, arr in params.arrays.items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            plus, _ = forward(ids, params)
            flat[j] = orig - eps
            minus, _ = forward(ids, params)
            flat[j] = orig
            gflat[j] = (loss(plus, true_class) - loss(minus, true_class)) / (2.0 * eps)
        numeric[name] = grad
    return numeric


def compare_gradients(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    tolerance: float,
) -> GradCheckReport:
    """Elementwise relative error, ignoring differences below 1e-8 absolute."""
    per_param: dict[str, float] = {}
    worst_param = ""
    worst = 0.0
    for name in analytic:
        a = analytic[name].reshape(-1)
        n = numeric[name].reshape(-1)
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(diff <= 1e-8, 0.0, diff / np.where(scale == 0.0, 1.0, scale))
        local = float(rel.max()) if rel.size else 0.0
        per_param[name] = local
        if local >= worst:
            worst = local
            worst_param = name
    return GradCheckReport(
        passed=worst <= tolerance,
        tolerance=tolerance,
        max_rel_error=worst,
        worst_param=worst_param,
        per_param=per_param,
    )


def gradient_check(
    config: ModelConfig,
    seed: int,
    tolerance: float = 1e-5,
    sequence_length: int = 3,
    eps: float = 1e-6,
) -> GradCheckReport:
    """Analytic BPTT vs central finite differences on a random instance."""
    if config.dropout_p != 0.0:
        raise ParameterError("gradient_check requires dropout_p = 0 (deterministic loss)")
    if sequence_length < 1:
        raise ParameterError("sequence_length must be >= 1")
    rng = Rng(seed)
    params = ParameterSet.initialize(config, rng)
    data_rng = Rng(seed, stream=1)
    ids = [int(i) for i in data_rng.integers(1, config.vocab_size, size=sequence_length)]
    true_class = int(data_rng.integers(0, 2))
    _, trace = forward(ids, params)
    analytic = backward(trace, true_class, params)
    numeric = finite_difference_gradients(params, ids, true_class, eps=eps)
    return compare_gradients(analytic, numeric, tolerance)
