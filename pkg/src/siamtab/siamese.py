"""Shared-weight twin network: pair distances, verdicts, and reference-bank
classification of single samples.

Both branches read the one ParamSet held by the model; weight sharing is
structural, never copied. Gradients from a pair accumulate branch A + branch B
into a single GradSet over that shared store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureTable
from .nn import (
    DIST_FLOOR,
    ForwardTrace,
    NetworkSpec,
    ParamSet,
    backward,
    euclidean_distance,
    forward,
)

DEFAULT_MARGIN = 1.0
DEFAULT_PAIR_THRESHOLD = 0.5  # margin / 2


@dataclass
class SiameseModel:
    spec: NetworkSpec
    params: ParamSet
    margin: float = DEFAULT_MARGIN
    pair_threshold: float = DEFAULT_PAIR_THRESHOLD

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ValueError("margin must be positive")
        if self.pair_threshold <= 0.0:
            raise ValueError("pair_threshold must be positive")

    @property
    def embedding_size(self) -> int:
        return self.spec.out_size

    def embed(
        self, x: np.ndarray, mode: str = "infer", rng: np.random.Generator | None = None
    ) -> np.ndarray:
        out, _ = forward(self.params, self.spec, x, mode=mode, rng=rng)
        return out


def pair_forward(
    model: SiameseModel,
    a: np.ndarray,
    b: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
):
    """Embed both pair members with the shared weights and return their
    distance plus both branch traces. Dropout masks are drawn independently
    per branch in train mode."""
    ea, trace_a = forward(model.params, model.spec, a, mode=mode, rng=rng)
    eb, trace_b = forward(model.params, model.spec, b, mode=mode, rng=rng)
    d, _, _ = euclidean_distance(ea, eb)
    return d, (trace_a, trace_b)


def pair_backward(
    model: SiameseModel,
    traces: tuple[ForwardTrace, ForwardTrace],
    dloss_dd,
) -> ParamSet:
    """Accumulate both branch gradients into one GradSet over the shared
    ParamSet. dloss_dd is d loss / d distance, scalar or per-pair vector."""
    trace_a, trace_b = traces
    ea = trace_a.outputs[-1]
    eb = trace_b.outputs[-1]
    d, ga, gb = euclidean_distance(ea, eb)
    scale = np.asarray(dloss_dd, dtype=np.float64)
    if ea.ndim > 1:
        scale = scale.reshape(-1, 1)
    grads_a, _ = backward(trace_a, model.params, model.spec, scale * ga)
    grads_b, _ = backward(trace_b, model.params, model.spec, scale * gb)
    return grads_a.add_(grads_b)


def pair_verdict(model: SiameseModel, a: np.ndarray, b: np.ndarray):
    """Similar iff embedding distance < pair_threshold (inference mode)."""
    d, _ = pair_forward(model, a, b, mode="infer")
    if np.ndim(d) == 0:
        return bool(d < model.pair_threshold)
    return d < model.pair_threshold


@dataclass
class ReferenceBank:
    """k training vectors per class that new samples are compared against."""

    refs0: np.ndarray  # (k, d)
    refs1: np.ndarray  # (k, d)
    k: int

    def __post_init__(self):
        self.refs0 = np.asarray(self.refs0, dtype=np.float64)
        self.refs1 = np.asarray(self.refs1, dtype=np.float64)
        if self.k < 1:
            raise ValueError("need at least one reference per class")
        if (
            self.refs0.ndim != 2
            or self.refs0.shape[0] != self.k
            or self.refs1.shape != self.refs0.shape
        ):
            raise ValueError("reference banks must both be (k, d)")


def build_reference_bank(train: FeatureTable, k: int, seed: int) -> ReferenceBank:
    """Sample k training rows per class, uniformly without replacement."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    refs = []
    for c in (0, 1):
        idx_c = np.flatnonzero(train.labels == c)
        if idx_c.size < k:
            raise ValueError(f"class {c} has {idx_c.size} samples, need k={k}")
        pick = rng.choice(idx_c, size=k, replace=False)
        refs.append(train.features[pick])
    return ReferenceBank(refs[0], refs[1], k)


def _mean_ref_distances(model: SiameseModel, bank: ReferenceBank, x: np.ndarray):
    """Mean embedding distance from each row of x to each class's references."""
    e_x = model.embed(x)  # (n, emb)
    e0 = model.embed(bank.refs0)  # (k, emb)
    e1 = model.embed(bank.refs1)
    out = []
    for e_ref in (e0, e1):
        diff = e_x[:, None, :] - e_ref[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        out.append(np.sqrt(np.maximum(sq, DIST_FLOOR)).mean(axis=1))
    return out[0], out[1]


def classify(model: SiameseModel, bank: ReferenceBank, x: np.ndarray):
    """Label a single sample by the class with smaller mean reference distance.

    Returns (label, mean_d0, mean_d1). An exact tie goes to class 1, the
    costlier class to miss.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("classify takes a single feature vector")
    d0, d1 = _mean_ref_distances(model, bank, x[None, :])
    label = int(d1[0] <= d0[0])
    return label, float(d0[0]), float(d1[0])


def classify_table(model: SiameseModel, bank: ReferenceBank, ft: FeatureTable):
    """Vectorized classify() over a table; returns (labels, d0, d1) arrays."""
    if ft.n == 0:
        raise ValueError("empty table")
    d0, d1 = _mean_ref_distances(model, bank, ft.features)
    labels = (d1 <= d0).astype(np.int64)
    return labels, d0, d1
