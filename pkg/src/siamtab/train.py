"""Training loops for both models, metric reports, and history export.

The baseline classifier is a dense sigmoid network trained with class-weighted
binary cross-entropy (Adam, batch 16, 250 epochs by default). The pair model
is the shared-weight twin trained with contrastive loss (RMSProp, batch 64,
10 epochs by default). Both loops reshuffle per epoch from a seeded stream and
are bitwise deterministic for a fixed (data, config, seed).

Reported losses are per-sample averages of data loss + activity penalty;
gradients keep the raw 2*l2*a penalty injection, so the regularizer acts per
activation exactly as the layer listings imply.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .data import FeatureTable, stratified_split
from .nn import (
    LayerSpec,
    NetworkSpec,
    ParamSet,
    adam_step,
    backward,
    bce_loss,
    contrastive_loss,
    forward,
    init_optimizer,
    init_params,
    rmsprop_step,
)
from .pairs import PairSet, split_pairs
from .siamese import (
    DEFAULT_MARGIN,
    DEFAULT_PAIR_THRESHOLD,
    ReferenceBank,
    SiameseModel,
    classify_table,
    pair_backward,
    pair_forward,
)

_EVAL_CHUNK = 8192


def base_network_spec(in_size: int = 15) -> NetworkSpec:
    """Baseline topology: two 256-wide ReLU blocks and a sigmoid output unit,
    each block carrying dropout 0.175 and activity penalty 0.01. The output
    block keeps its dropout between the dense unit and the sigmoid, as the
    configuration lists it."""
    return NetworkSpec(
        (
            LayerSpec(in_size, 256, "relu", dropout_rate=0.175, activity_l2=0.01),
            LayerSpec(256, 256, "relu", dropout_rate=0.175, activity_l2=0.01),
            LayerSpec(256, 1, "sigmoid", dropout_rate=0.175, activity_l2=0.01),
        )
    )


def siamese_network_spec(in_size: int = 15) -> NetworkSpec:
    """Twin-branch topology: 256-256-256 ReLU embedding with dropout 0.2
    after each hidden block and none on the embedding layer."""
    return NetworkSpec(
        (
            LayerSpec(in_size, 256, "relu", dropout_rate=0.2),
            LayerSpec(256, 256, "relu", dropout_rate=0.2),
            LayerSpec(256, 256, "relu"),
        )
    )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str  # "adam" | "rmsprop"
    loss: str  # "bce" | "contrastive"
    class_weights: tuple[float, float] | None = None
    val_fraction: float = 0.25
    margin: float = DEFAULT_MARGIN
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("bce", "contrastive"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.margin <= 0.0:
            raise ValueError("margin must be positive")


def base_config(seed: int = 0, **overrides) -> TrainConfig:
    """Baseline defaults: Adam lr 0.001, weighted BCE (1, 5), batch 16,
    250 epochs, 25% validation."""
    cfg = TrainConfig(
        epochs=250,
        batch_size=16,
        learning_rate=0.001,
        optimizer="adam",
        loss="bce",
        class_weights=(1.0, 5.0),
        val_fraction=0.25,
        seed=seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


def siamese_config(seed: int = 0, **overrides) -> TrainConfig:
    """Pair-model defaults: RMSProp lr 0.001, contrastive loss, batch 64,
    10 epochs, 25% validation on pairs, margin 1.0."""
    cfg = TrainConfig(
        epochs=10,
        batch_size=64,
        learning_rate=0.001,
        optimizer="rmsprop",
        loss="contrastive",
        class_weights=None,
        val_fraction=0.25,
        seed=seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class History:
    """Per-epoch series; validation entries are NaN when no split was held."""

    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    def append(self, tl: float, ta: float, vl: float, va: float):
        self.train_loss.append(tl)
        self.train_acc.append(ta)
        self.val_loss.append(vl)
        self.val_acc.append(va)

    def __len__(self) -> int:
        return len(self.train_loss)


@dataclass
class EvalReport:
    """Confusion matrix [[TN, FP], [FN, TP]] (rows = true class) plus the
    derived accuracy and per-class precision/recall."""

    confusion: np.ndarray
    accuracy: float
    precision: tuple[float, float]
    recall: tuple[float, float]

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "EvalReport":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape or y_true.size == 0:
            raise ValueError("need equal-length, nonempty prediction vectors")
        tn = int(((y_true == 0) & (y_pred == 0)).sum())
        fp = int(((y_true == 0) & (y_pred == 1)).sum())
        fn = int(((y_true == 1) & (y_pred == 0)).sum())
        tp = int(((y_true == 1) & (y_pred == 1)).sum())
        total = tn + fp + fn + tp
        confusion = np.array([[tn, fp], [fn, tp]], dtype=np.int64)

        def safe(num, den):
            return num / den if den > 0 else 0.0

        return cls(
            confusion=confusion,
            accuracy=(tn + tp) / total,
            precision=(safe(tn, tn + fn), safe(tp, tp + fp)),
            recall=(safe(tn, tn + fp), safe(tp, tp + fn)),
        )

    def kv(self) -> dict[str, str]:
        tn, fp = int(self.confusion[0, 0]), int(self.confusion[0, 1])
        fn, tp = int(self.confusion[1, 0]), int(self.confusion[1, 1])
        return {
            "tn": str(tn),
            "fp": str(fp),
            "fn": str(fn),
            "tp": str(tp),
            "accuracy": repr(self.accuracy),
            "precision_class0": repr(self.precision[0]),
            "precision_class1": repr(self.precision[1]),
            "recall_class0": repr(self.recall[0]),
            "recall_class1": repr(self.recall[1]),
        }

    def lines(self) -> list[str]:
        tn, fp = int(self.confusion[0, 0]), int(self.confusion[0, 1])
        fn, tp = int(self.confusion[1, 0]), int(self.confusion[1, 1])
        return [
            f"confusion matrix [[TN, FP], [FN, TP]]: [[{tn}, {fp}], [{fn}, {tp}]]",
            f"accuracy:          {self.accuracy:.4f}",
            f"precision class 0: {self.precision[0]:.4f}",
            f"precision class 1: {self.precision[1]:.4f}",
            f"recall class 0:    {self.recall[0]:.4f}",
            f"recall class 1:    {self.recall[1]:.4f}",
        ]


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


Progress = Callable[[str], None]


def train_base(
    cfg: TrainConfig, data: FeatureTable, progress: Progress | None = None
) -> tuple[ParamSet, History]:
    """Train the baseline classifier; returns its parameters and history."""
    if data.n == 0:
        raise ValueError("empty data")
    if len(np.unique(data.labels)) < 2:
        raise ValueError("training data contains a single class")
    s_init, s_split, s_loop = _seeds(cfg.seed, 3)
    if cfg.val_fraction > 0.0:
        train_ft, val_ft = stratified_split(data, cfg.val_fraction, s_split)
        if val_ft.n == 0:
            val_ft = None
    else:
        train_ft, val_ft = data, None

    spec = base_network_spec(data.d)
    params = init_params(spec, s_init)
    state = init_optimizer(cfg.optimizer, params)
    weights = cfg.class_weights if cfg.class_weights is not None else (1.0, 1.0)
    rng = np.random.default_rng(s_loop)
    history = History()

    for epoch in range(cfg.epochs):
        order = rng.permutation(train_ft.n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, train_ft.n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            x = train_ft.features[sel]
            y = train_ft.labels[sel]
            out, trace = forward(params, spec, x, mode="train", rng=rng)
            p = out[:, 0]
            losses, dldp = bce_loss(p, y, weights)
            loss_sum += float(losses.sum()) + trace.penalty
            correct += int(((p >= 0.5).astype(np.int64) == y).sum())
            grads, _ = backward(trace, params, spec, (dldp / sel.size)[:, None])
            if cfg.optimizer == "adam":
                adam_step(params, grads, state, cfg.learning_rate)
            else:
                rmsprop_step(params, grads, state, cfg.learning_rate)
        train_loss = loss_sum / train_ft.n
        train_acc = correct / train_ft.n

        if val_ft is not None:
            val_loss, val_acc = _eval_base(params, spec, val_ft, weights)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        history.append(train_loss, train_acc, val_loss, val_acc)
        if progress is not None:
            progress(
                f"epoch {epoch + 1}/{cfg.epochs} "
                f"train_loss={train_loss:.4f} train_acc={train_acc:.4f} "
                f"val_loss={val_loss:.4f} val_acc={val_acc:.4f}"
            )
    return params, history


def _eval_base(params, spec, ft: FeatureTable, weights) -> tuple[float, float]:
    out, trace = forward(params, spec, ft.features, mode="infer")
    p = out[:, 0]
    losses, _ = bce_loss(p, ft.labels, weights)
    loss = (float(losses.sum()) + trace.penalty) / ft.n
    acc = float(((p >= 0.5).astype(np.int64) == ft.labels).mean())
    return loss, acc


def train_siamese(
    cfg: TrainConfig,
    pairs: PairSet,
    pair_threshold: float = DEFAULT_PAIR_THRESHOLD,
    progress: Progress | None = None,
) -> tuple[SiameseModel, History]:
    """Train the shared-weight pair model on a pair corpus."""
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    s_init, s_split, s_loop = _seeds(cfg.seed, 3)
    if cfg.val_fraction > 0.0:
        train_ps, val_ps = split_pairs(pairs, 1.0 - cfg.val_fraction, s_split)
        if len(val_ps) == 0:
            val_ps = None
    else:
        train_ps, val_ps = pairs, None

    ft = pairs.source
    spec = siamese_network_spec(ft.d)
    params = init_params(spec, s_init)
    model = SiameseModel(spec, params, margin=cfg.margin, pair_threshold=pair_threshold)
    state = init_optimizer(cfg.optimizer, params)
    rng = np.random.default_rng(s_loop)
    history = History()

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_ps))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(train_ps), cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            a = ft.features[train_ps.left[sel]]
            b = ft.features[train_ps.right[sel]]
            sim = train_ps.similar[sel]
            d, traces = pair_forward(model, a, b, mode="train", rng=rng)
            losses, dldd = contrastive_loss(d, sim, cfg.margin)
            loss_sum += float(losses.sum())
            correct += int(((d < pair_threshold) == sim).sum())
            grads = pair_backward(model, traces, dldd / sel.size)
            if cfg.optimizer == "adam":
                adam_step(params, grads, state, cfg.learning_rate)
            else:
                rmsprop_step(params, grads, state, cfg.learning_rate)
        train_loss = loss_sum / len(train_ps)
        train_acc = correct / len(train_ps)

        if val_ps is not None:
            val_loss, val_acc = _eval_pairs_loss(model, val_ps)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        history.append(train_loss, train_acc, val_loss, val_acc)
        if progress is not None:
            progress(
                f"epoch {epoch + 1}/{cfg.epochs} "
                f"train_loss={train_loss:.4f} train_acc={train_acc:.4f} "
                f"val_loss={val_loss:.4f} val_acc={val_acc:.4f}"
            )
    return model, history


def _pair_distances(model: SiameseModel, ps: PairSet) -> np.ndarray:
    """Inference-mode distances for every pair, chunked to bound memory."""
    ft = ps.source
    out = np.empty(len(ps))
    for start in range(0, len(ps), _EVAL_CHUNK):
        sel = slice(start, min(start + _EVAL_CHUNK, len(ps)))
        d, _ = pair_forward(model, ft.features[ps.left[sel]], ft.features[ps.right[sel]])
        out[sel] = d
    return out


def _eval_pairs_loss(model: SiameseModel, ps: PairSet) -> tuple[float, float]:
    d = _pair_distances(model, ps)
    losses, _ = contrastive_loss(d, ps.similar, model.margin)
    acc = float(((d < model.pair_threshold) == ps.similar).mean())
    return float(losses.mean()), acc


def evaluate_pairs(model: SiameseModel, pairs: PairSet) -> EvalReport:
    """Pair-level confusion matrix; a similar verdict is the positive class."""
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    d = _pair_distances(model, pairs)
    verdicts = (d < model.pair_threshold).astype(np.int64)
    return EvalReport.from_predictions(pairs.similar.astype(np.int64), verdicts)


def evaluate_classifier(
    model, data: FeatureTable, bank: ReferenceBank | None = None
) -> EvalReport:
    """Sample-level confusion matrix and metrics.

    `model` is either a SiameseModel (classified through its reference bank),
    a (NetworkSpec, ParamSet) pair, or a bare ParamSet for the baseline
    topology (input width inferred from the data).
    """
    if data.n == 0:
        raise ValueError("empty data")
    if isinstance(model, SiameseModel):
        if bank is None:
            raise ValueError("siamese evaluation needs a reference bank")
        preds, _, _ = classify_table(model, bank, data)
    else:
        if isinstance(model, tuple):
            spec, params = model
        else:
            spec, params = base_network_spec(data.d), model
        out, _ = forward(params, spec, data.features, mode="infer")
        preds = (out[:, 0] >= 0.5).astype(np.int64)
    return EvalReport.from_predictions(data.labels, preds)


def export_history(history: History, path: str | Path):
    """Write the per-epoch series as CSV; floats use repr so a read-back
    reproduces every value exactly."""
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        for i in range(len(history)):
            fh.write(
                f"{i + 1},{history.train_loss[i]!r},{history.train_acc[i]!r},"
                f"{history.val_loss[i]!r},{history.val_acc[i]!r}\n"
            )


def load_history(path: str | Path) -> History:
    history = History()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]:
            raise ValueError(f"{path}: not a history file")
        for row in reader:
            history.append(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
    return history
