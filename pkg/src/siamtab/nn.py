"""Minimal dense-network engine: init, forward/backward, losses, optimizers.

Everything runs in float64 and is deterministic given the seeds that feed it.
Layer order is linear -> dropout -> activation, mirroring the layer listings
the two model configurations use (dropout sits between the dense output and
its activation; for ReLU layers this is interchangeable with post-activation
dropout because masking commutes with ReLU). The activity penalty is taken on
the layer's final activations.

Shape conventions: inputs are row batches (n, in_size); a weight matrix is
(out_size, in_size); z = x @ W.T + b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "linear")

# Floors keeping log() and the distance gradient finite.
PRED_EPS = 1e-7
DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    in_size: int
    out_size: int
    activation: str = "linear"
    dropout_rate: float = 0.0
    activity_l2: float = 0.0

    def __post_init__(self):
        if self.in_size <= 0 or self.out_size <= 0:
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.activity_l2 < 0.0:
            raise ValueError("activity_l2 must be nonnegative")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_size != b.in_size:
                raise ValueError(
                    f"layer chain mismatch: {a.out_size} -> {b.in_size}"
                )

    @property
    def in_size(self) -> int:
        return self.layers[0].in_size

    @property
    def out_size(self) -> int:
        return self.layers[-1].out_size


@dataclass
class ParamSet:
    """Per-layer weight matrices and bias vectors.

    The same container holds gradients and optimizer moment buffers, which
    share these shapes by construction.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.weights)

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def zeros_like(cls, other: "ParamSet") -> "ParamSet":
        return cls(
            [np.zeros_like(w) for w in other.weights],
            [np.zeros_like(b) for b in other.biases],
        )

    def add_(self, other: "ParamSet") -> "ParamSet":
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob
        return self

    def arrays(self):
        """All arrays, weights first then biases, in layer order."""
        return list(self.weights) + list(self.biases)


def init_params(spec: NetworkSpec, seed: int) -> ParamSet:
    """Glorot-uniform weights, W ~ U(-L, L) with L = sqrt(6/(fan_in+fan_out));
    zero biases. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in spec.layers:
        limit = np.sqrt(6.0 / (layer.in_size + layer.out_size))
        weights.append(rng.uniform(-limit, limit, size=(layer.out_size, layer.in_size)))
        biases.append(np.zeros(layer.out_size))
    return ParamSet(weights, biases)


@dataclass
class ForwardTrace:
    """Per-layer bookkeeping retained for the backward pass."""

    mode: str
    inputs: list[np.ndarray] = field(default_factory=list)
    pre_acts: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray | None] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    penalty: float = 0.0

    def __len__(self) -> int:
        return len(self.outputs)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    params: ParamSet,
    spec: NetworkSpec,
    x: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on a vector or row batch.

    In train mode dropout is inverted: surviving units scale by 1/(1-rate),
    so inference applies no correction. The trace accumulates the activity
    penalty sum(l2 * a^2) over regularized layers and the whole batch.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != spec.in_size:
        raise ValueError(f"input width {h.shape[-1]} != network input {spec.in_size}")
    if not np.isfinite(h).all():
        raise ValueError("non-finite input")
    if mode == "train" and rng is None and any(l.dropout_rate > 0 for l in spec.layers):
        raise ValueError("train mode with dropout requires an rng")

    trace = ForwardTrace(mode=mode)
    penalty = 0.0
    for k, layer in enumerate(spec.layers):
        z = h @ params.weights[k].T + params.biases[k]
        trace.inputs.append(h)
        trace.pre_acts.append(z)
        if mode == "train" and layer.dropout_rate > 0.0:
            keep = 1.0 - layer.dropout_rate
            mask = (rng.random(z.shape) < keep) / keep
            z = z * mask
            trace.masks.append(mask)
        else:
            trace.masks.append(None)
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
        elif layer.activation == "sigmoid":
            a = _sigmoid(z)
        else:
            a = z
        if layer.activity_l2 > 0.0:
            penalty += layer.activity_l2 * float(np.sum(a * a))
        trace.outputs.append(a)
        h = a
    trace.penalty = penalty
    out = h[0] if single else h
    return out, trace


def backward(
    trace: ForwardTrace,
    params: ParamSet,
    spec: NetworkSpec,
    grad_out: np.ndarray,
) -> tuple[ParamSet, np.ndarray]:
    """Backpropagate grad_out (d loss / d output) through a traced forward.

    The activity-penalty gradient 2*l2*a is injected at each regularized
    activation, so the returned gradients are those of
    caller_loss(output) + trace.penalty. Also returns the gradient w.r.t.
    the network input (the second branch of a shared-weight pair needs it).
    """
    if len(trace) != len(spec.layers):
        raise ValueError("trace depth does not match the network spec")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.outputs[-1].shape:
        raise ValueError(
            f"grad_out shape {g.shape} != output shape {trace.outputs[-1].shape}"
        )
    grads = ParamSet.zeros_like(params)
    for k in reversed(range(len(spec.layers))):
        layer = spec.layers[k]
        a = trace.outputs[k]
        if layer.activity_l2 > 0.0:
            g = g + 2.0 * layer.activity_l2 * a
        if layer.activation == "relu":
            gz = g * (a > 0.0)
        elif layer.activation == "sigmoid":
            gz = g * a * (1.0 - a)
        else:
            gz = g
        if trace.masks[k] is not None:
            gz = gz * trace.masks[k]
        grads.weights[k] = gz.T @ trace.inputs[k]
        grads.biases[k] = gz.sum(axis=0)
        g = gz @ params.weights[k]
    return grads, g


def bce_loss(pred, label, class_weights=(1.0, 1.0)):
    """Class-weighted binary cross-entropy, elementwise.

    loss = -w[label] * (label*ln(p) + (1-label)*ln(1-p)) with p clamped to
    [1e-7, 1-1e-7]. Returns (loss, d loss / d pred).
    """
    p = np.clip(np.asarray(pred, dtype=np.float64), PRED_EPS, 1.0 - PRED_EPS)
    y = np.asarray(label, dtype=np.float64)
    w0, w1 = class_weights
    w = np.where(y == 1.0, w1, w0)
    loss = -w * (y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    grad = -w * (y / p - (1.0 - y) / (1.0 - p))
    return loss, grad


def contrastive_loss(d, similar, margin: float = 1.0):
    """Pair loss: d^2 for similar pairs, hinge^2 past the margin otherwise.

    Returns (loss, d loss / d distance); the dissimilar gradient is
    -2*max(0, margin - d).
    """
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin}")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0.0):
        raise ValueError("distances must be nonnegative")
    sim = np.asarray(similar, dtype=bool)
    hinge = np.maximum(margin - d, 0.0)
    loss = np.where(sim, d * d, hinge * hinge)
    grad = np.where(sim, 2.0 * d, -2.0 * hinge)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def euclidean_distance(e1: np.ndarray, e2: np.ndarray):
    """Floored euclidean distance and its gradients w.r.t. both embeddings.

    d = sqrt(max(sum((e1-e2)^2), 1e-12)); the floor keeps the gradient
    (e1-e2)/d finite when the embeddings coincide. Accepts single vectors or
    row batches (gradients then come back row-aligned).
    """
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError(f"embedding shapes differ: {e1.shape} vs {e2.shape}")
    diff = e1 - e2
    sq = np.sum(diff * diff, axis=-1)
    d = np.sqrt(np.maximum(sq, DIST_FLOOR))
    g1 = diff / (d[..., None] if diff.ndim > 1 else d)
    if diff.ndim == 1:
        return float(d), g1, -g1
    return d, g1, -g1


@dataclass
class OptimizerState:
    """Per-parameter moment buffers for Adam or RMSProp."""

    kind: str
    step_count: int = 0
    m: ParamSet | None = None  # first moment (adam only)
    v: ParamSet | None = None  # second moment / running square cache


def init_optimizer(kind: str, params: ParamSet) -> OptimizerState:
    if kind == "adam":
        return OptimizerState("adam", 0, ParamSet.zeros_like(params), ParamSet.zeros_like(params))
    if kind == "rmsprop":
        return OptimizerState("rmsprop", 0, None, ParamSet.zeros_like(params))
    raise ValueError(f"unknown optimizer kind {kind!r}")


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
RMSPROP_RHO = 0.9
OPT_EPS = 1e-8


def adam_step(
    params: ParamSet, grads: ParamSet, state: OptimizerState, lr: float
) -> tuple[ParamSet, OptimizerState]:
    """One Adam update with bias correction. Mutates params/state in place."""
    if state.kind != "adam":
        raise ValueError(f"optimizer state is {state.kind!r}, expected adam")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for p, g, m, v in zip(
        params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()
    ):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + OPT_EPS)
    return params, state


def rmsprop_step(
    params: ParamSet, grads: ParamSet, state: OptimizerState, lr: float
) -> tuple[ParamSet, OptimizerState]:
    """One RMSProp update: cache = rho*cache + (1-rho)*g^2. In place."""
    if state.kind != "rmsprop":
        raise ValueError(f"optimizer state is {state.kind!r}, expected rmsprop")
    state.step_count += 1
    for p, g, v in zip(params.arrays(), grads.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        v *= RMSPROP_RHO
        v += (1.0 - RMSPROP_RHO) * g * g
        p -= lr * g / (np.sqrt(v) + OPT_EPS)
    return params, state


CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    spec: NetworkSpec,
    params: ParamSet,
    extra: dict | None = None,
    arrays: dict[str, np.ndarray] | None = None,
):
    """Write spec + parameters (+ optional scalars and named arrays) to .npz.

    The meta entry is a JSON string: version tag, layer dimensions and layer
    options, plus the caller's extra scalars.
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "layers": [
            {
                "in_size": l.in_size,
                "out_size": l.out_size,
                "activation": l.activation,
                "dropout_rate": l.dropout_rate,
                "activity_l2": l.activity_l2,
            }
            for l in spec.layers
        ],
        "extra": extra or {},
    }
    payload: dict[str, np.ndarray] = {"meta": np.array(json.dumps(meta))}
    for k in range(len(spec.layers)):
        payload[f"w{k}"] = params.weights[k]
        payload[f"b{k}"] = params.biases[k]
    for name, arr in (arrays or {}).items():
        payload[name] = arr
    np.savez(path, **payload)


def load_checkpoint(path: str | Path):
    """Read a checkpoint back: (spec, params, extra, named arrays)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        layers = tuple(
            LayerSpec(
                l["in_size"], l["out_size"], l["activation"],
                l["dropout_rate"], l["activity_l2"],
            )
            for l in meta["layers"]
        )
        spec = NetworkSpec(layers)
        weights = [np.asarray(data[f"w{k}"], dtype=np.float64) for k in range(len(layers))]
        biases = [np.asarray(data[f"b{k}"], dtype=np.float64) for k in range(len(layers))]
        known = {"meta"} | {f"w{k}" for k in range(len(layers))} | {f"b{k}" for k in range(len(layers))}
        arrays = {name: data[name] for name in data.files if name not in known}
    params = ParamSet(weights, biases)
    for arr in params.arrays():
        if not np.isfinite(arr).all():
            raise ValueError(f"{path}: checkpoint contains non-finite parameters")
    return spec, params, meta["extra"], arrays
