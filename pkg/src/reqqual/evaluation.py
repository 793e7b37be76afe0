"""Metrics, k-fold cross-validation, and trained-model evaluation.

Class 0 is the positive class throughout: "the requirement satisfies
the property".  A boolean label maps to a class via ``class_of``
(True -> 0, False -> 1), and ``prob_positive`` always means the softmax
probability of class 0.

Zero-denominator ratios (no positive predictions, or no positive
labels) are defined as 0.0 and flagged in ``Metrics.zero_division``
rather than raising.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifact import ModelArtifact
from .corpus import Dataset, FoldPlan, PropertyName, holdout_split, make_folds
from .errors import ParameterError, StructuralError
from .nn import ModelConfig, forward_batch
from .textpipe import RulesTagger, TaggerMode, build_vocabulary, encode, tag_text
from .train import LossCurve, TrainConfig, fit


def classify(probs) -> int:
    """Argmax over the two class probabilities; an exact tie goes to class 0."""
    return 0 if float(probs[0]) >= float(probs[1]) else 1


def class_of(label: bool) -> int:
    return 0 if label else 1


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_pairs(cls, predictions: Sequence[int], labels: Sequence[int]) -> "Confusion":
        tp = tn = fp = fn = 0
        for p, y in zip(predictions, labels):
            if y == 0:
                if p == 0:
                    tp += 1
                else:
                    fn += 1
            else:
                if p == 0:
                    fp += 1
                else:
                    tn += 1
        return cls(tp=tp, tn=tn, fp=fp, fn=fn)

    def to_json(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    accuracy: float
    f1: float
    mse: float
    counts: Confusion
    zero_division: tuple[str, ...] = ()

    def to_json(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "mse": self.mse,
            "counts": self.counts.to_json(),
        }
        if self.zero_division:
            out["zero_division"] = list(self.zero_division)
        return out


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def compute_metrics(
    predictions: Sequence[int],
    labels: Sequence[int],
    probs,
) -> Metrics:
    """Confusion-based metrics plus MSE of prob_positive against the label."""
    n = len(predictions)
    if n == 0:
        raise StructuralError("cannot compute metrics over zero examples")
    if len(labels) != n:
        raise StructuralError(f"{n} predictions but {len(labels)} labels")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (n, 2):
        raise StructuralError(f"expected probabilities of shape ({n}, 2), got {probs.shape}")
    for value in list(predictions) + list(labels):
        if value not in (0, 1):
            raise ParameterError(f"classes must be 0 or 1, got {value}")

    counts = Confusion.from_pairs(predictions, labels)
    flags: list[str] = []
    if counts.tp + counts.fp == 0:
        precision = 0.0
        flags.append("precision")
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 0.0
        flags.append("recall")
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision + recall == 0.0:
        flags.append("f1")
    accuracy = (counts.tp + counts.tn) / counts.total
    target = np.array([1.0 if y == 0 else 0.0 for y in labels])
    mse = float(np.mean((probs[:, 0] - target) ** 2))
    return Metrics(
        precision=precision,
        recall=recall,
        accuracy=accuracy,
        f1=f1_score(precision, recall),
        mse=mse,
        counts=counts,
        zero_division=tuple(flags),
    )


METRIC_NAMES = ("precision", "recall", "accuracy", "f1", "mse")


def aggregate_metrics(folds: Sequence[Metrics]) -> dict[str, float]:
    """Unweighted mean of each metric across folds."""
    return {
        name: float(np.mean([getattr(m, name) for m in folds])) for name in METRIC_NAMES
    }


@dataclass
class CvResult:
    property: PropertyName
    model_config: ModelConfig
    train_config: TrainConfig
    k: int
    seed: int
    folds: list[Metrics]
    aggregate: dict[str, float]
    best_fold: int
    curves: list[LossCurve] = field(default_factory=list)
    plan: FoldPlan | None = None

    def to_json(self) -> dict:
        config = {
            "model": {
                "cell": self.model_config.cell.value,
                "vocab_size": self.model_config.vocab_size,
                "embedding_dim": self.model_config.embedding_dim,
                "hidden_units": self.model_config.hidden_units,
                "num_layers": self.model_config.num_layers,
                "dropout_p": self.model_config.dropout_p,
            },
            "train": {
                "learning_rate": self.train_config.learning_rate,
                "epochs": self.train_config.epochs,
                "batch_size": self.train_config.batch_size,
                "clip_norm": self.train_config.clip_norm,
            },
            "k": self.k,
        }
        folds = [dict(m.to_json(), fold=i) for i, m in enumerate(self.folds)]
        return {
            "property": self.property.value,
            "config": config,
            "folds": folds,
            "aggregate": self.aggregate,
            "best_fold": dict(self.folds[self.best_fold].to_json(), fold=self.best_fold),
            "seed": self.seed,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n", "utf-8"
        )


def _prepare_encoded(requirements, prop, mode, tagger):
    """Tag every labeled requirement, build the vocabulary, encode everything."""
    tagged = {req.id: tag_text(req.text, mode, tagger) for req in requirements}
    vocab = build_vocabulary(tagged.values())
    encoded = {
        req.id: (encode(tagged[req.id], vocab), class_of(req.labels[prop]))
        for req in requirements
    }
    return vocab, encoded


def cross_validate(
    dataset: Dataset,
    prop: PropertyName,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int,
    seed: int,
    tagger_mode: TaggerMode = TaggerMode.RULES,
    execution: str = "batched",
    keep_curves: bool = False,
) -> CvResult:
    """k-fold cross-validation of one property's classifier.

    The tag vocabulary is built over the whole labeled subset (every tag
    used at least once), and `model_config.vocab_size` is replaced by
    its size.  Fold i trains with seed `seed ^ i` on everything outside
    fold i and is evaluated on fold i.
    """
    prop = PropertyName(prop)
    plan = make_folds(dataset, prop, k, seed)
    tagger = RulesTagger() if TaggerMode(tagger_mode) is TaggerMode.RULES else None
    vocab, encoded = _prepare_encoded(dataset.labeled(prop), prop, tagger_mode, tagger)
    config = dataclasses.replace(model_config, vocab_size=vocab.size)

    all_ids = set(plan.assignments)
    folds: list[Metrics] = []
    curves: list[LossCurve] = []
    for i in range(k):
        test_ids = plan.fold_members(i)
        train_ids = plan.complement(i)
        if set(test_ids) & set(train_ids) or set(test_ids) | set(train_ids) != all_ids:
            raise StructuralError(f"fold {i} does not partition the labeled subset")
        fold_cfg = dataclasses.replace(train_config, seed=seed ^ i)
        params, curve = fit(
            [encoded[rid] for rid in train_ids], config, fold_cfg, execution=execution
        )
        probs, _ = forward_batch([encoded[rid][0] for rid in test_ids], params)
        predictions = [classify(row) for row in probs]
        labels = [encoded[rid][1] for rid in test_ids]
        folds.append(compute_metrics(predictions, labels, probs))
        if keep_curves:
            curves.append(curve)

    best_fold = max(range(k), key=lambda i: (folds[i].accuracy, -i))
    return CvResult(
        property=prop,
        model_config=config,
        train_config=train_config,
        k=k,
        seed=seed,
        folds=folds,
        aggregate=aggregate_metrics(folds),
        best_fold=best_fold,
        curves=curves,
        plan=plan,
    )


@dataclass
class HoldoutResult:
    property: PropertyName
    model_config: ModelConfig
    train_config: TrainConfig
    seed: int
    train_fraction: float
    metrics: Metrics
    train_size: int
    test_size: int
    params: object = None
    curve: LossCurve | None = None
    vocabulary: object = None


def holdout_evaluate(
    dataset: Dataset,
    prop: PropertyName,
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_fraction: float,
    seed: int,
    tagger_mode: TaggerMode = TaggerMode.RULES,
    execution: str = "batched",
) -> HoldoutResult:
    """Single train/test split evaluation with the same pipeline as CV.

    The vocabulary is built over the whole labeled subset, as in
    cross_validate; training runs with `train_config.seed` replaced by
    `seed`.  Returns the trained parameters alongside the test metrics
    so callers can persist the model.
    """
    prop = PropertyName(prop)
    train_ds, test_ds = holdout_split(dataset, prop, train_fraction, seed)
    tagger = RulesTagger() if TaggerMode(tagger_mode) is TaggerMode.RULES else None
    vocab, encoded = _prepare_encoded(dataset.labeled(prop), prop, tagger_mode, tagger)
    config = dataclasses.replace(model_config, vocab_size=vocab.size)
    fit_cfg = dataclasses.replace(train_config, seed=seed)
    params, curve = fit(
        [encoded[r.id] for r in train_ds.requirements], config, fit_cfg, execution=execution
    )
    test_pairs = [encoded[r.id] for r in test_ds.requirements]
    probs, _ = forward_batch([seq for seq, _ in test_pairs], params)
    predictions = [classify(row) for row in probs]
    labels = [cls for _, cls in test_pairs]
    return HoldoutResult(
        property=prop,
        model_config=config,
        train_config=fit_cfg,
        seed=seed,
        train_fraction=train_fraction,
        metrics=compute_metrics(predictions, labels, probs),
        train_size=len(train_ds),
        test_size=len(test_ds),
        params=params,
        curve=curve,
        vocabulary=vocab,
    )


def evaluate_model(
    artifact: ModelArtifact,
    dataset: Dataset,
    prop: PropertyName | None = None,
) -> tuple[Metrics | None, list[dict]]:
    """Run a saved model over a dataset.

    Returns per-requirement prediction records for every requirement,
    and Metrics over the subset labeled for the model's property (None
    when that subset is empty).  Requesting a different property than
    the model was trained for is refused.
    """
    if prop is not None and PropertyName(prop) != artifact.property:
        raise StructuralError(
            f"model was trained for property {artifact.property.value!r}, "
            f"not {PropertyName(prop).value!r}"
        )
    if len(dataset) == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    tagger = RulesTagger() if artifact.tagger_mode is TaggerMode.RULES else None
    sequences = [
        encode(tag_text(req.text, artifact.tagger_mode, tagger), artifact.vocabulary)
        for req in dataset.requirements
    ]
    probs, _ = forward_batch(sequences, artifact.params)

    records = []
    eval_preds: list[int] = []
    eval_labels: list[int] = []
    eval_probs: list[np.ndarray] = []
    for req, row in zip(dataset.requirements, probs):
        predicted = classify(row)
        label = req.label_for(artifact.property)
        records.append({
            "id": req.id,
            "predicted": predicted == 0,
            "prob_positive": float(row[0]),
            "label": label,
        })
        if label is not None:
            eval_preds.append(predicted)
            eval_labels.append(class_of(label))
            eval_probs.append(row)
    metrics = None
    if eval_preds:
        metrics = compute_metrics(eval_preds, eval_labels, np.stack(eval_probs))
    return metrics, records


def save_predictions(records: list[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")
