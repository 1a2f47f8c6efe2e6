"""Collective-learning GCN: label injection, two-stage forward, training, imputation.

The model appends a 5-wide label channel to the node features: true one-hots
for nodes whose label is visible this pass, and (in stage 2) the stage-11
predicted distribution for hidden nodes. Training repeats four steps per
epoch: sample a mask over the observed labels, run the two-stage forward,
take the masked cross-entropy on both stages, and update with Adam.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .checkpoint import Checkpoint
from .data import N_STATES, Encoders
from .errors import DegenerateMask, InvalidConfig, NonFiniteLoss, ShapeMismatch
from .graph import NormalizedAdjacency
from .nn import GcnLayerParams


@dataclass
class TrainConfig:
    """Knobs shared by all trainable models; round-trips through JSON."""

    epochs: int = 300
    lr: float = 0.01
    mask_rate: float = 0.5
    hidden: int = 64
    weight_decay: float = 0.0
    seed: int = 0
    patience: int = 30
    val_fraction: float = 0.1

    def validate(self) -> None:
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if not 0.0 < self.mask_rate < 1.0:
            raise InvalidConfig("mask_rate must lie strictly inside (0, 1)")
        if self.lr <= 0.0:
            raise InvalidConfig("lr must be positive")
        if self.hidden < 1:
            raise InvalidConfig("hidden width must be >= 1")
        if self.weight_decay < 0.0:
            raise InvalidConfig("weight_decay must be >= 0")
        if self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidConfig("val_fraction must lie in [0, 1)")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class ClgnnModel:
    """Two GCN stacks plus the label-injection configuration."""

    n_features: int
    hidden: int
    stage1: list[GcnLayerParams]
    stage2: list[GcnLayerParams]
    inject_mode: str = "soft"
    aux_weight: float = 0.5
    seed: int = 0

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in (*self.stage1, *self.stage2):
            out.extend(layer.arrays())
        return out


def init_clgnn(
    n_features: int,
    hidden: int = 64,
    seed: int = 0,
    inject_mode: str = "soft",
    aux_weight: float = 0.5,
) -> ClgnnModel:
    if inject_mode not in ("soft", "hard"):
        raise InvalidConfig(f"unknown inject_mode {inject_mode!r}")
    rng = np.random.default_rng(seed)
    width_in = n_features + N_STATES
    return ClgnnModel(
        n_features=n_features,
        hidden=hidden,
        stage1=[
            GcnLayerParams.init(width_in, hidden, rng),
            GcnLayerParams.init(hidden, N_STATES, rng),
        ],
        stage2=[
            GcnLayerParams.init(width_in, hidden, rng),
            GcnLayerParams.init(hidden, N_STATES, rng),
        ],
        inject_mode=inject_mode,
        aux_weight=aux_weight,
        seed=seed,
    )


def sample_training_mask(
    rng: np.random.Generator, observed: np.ndarray, rate: float
) -> np.ndarray:
    """Hide each observed label independently with probability ``rate``.

    Nodes outside the observed set are always hidden. Resamples (up to 100
    times) until the observed set has both hidden and visible members, since
    the loss needs supervised targets and the input channel needs labels.
    """
    observed = np.asarray(observed, dtype=bool)
    if not 0.0 < rate < 1.0:
        raise InvalidConfig("mask rate must lie strictly inside (0, 1)")
    if not observed.any():
        raise DegenerateMask("observed set is empty")
    for _ in range(100):
        mask = np.ones(observed.shape[0], dtype=bool)
        draw = rng.random(int(observed.sum())) < rate
        mask[observed] = draw
        if draw.any() and not draw.all():
            return mask
    raise DegenerateMask("could not sample a mask with both hidden and visible labels")


def inject_labels(
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    predictions: np.ndarray | None = None,
) -> np.ndarray:
    """Append the 5-wide label channel to the feature rows.

    Visible nodes (observed and not masked) contribute their true one-hot;
    every other node gets its ``predictions`` row, or zeros when none are
    given. True labels of masked or unobserved nodes never reach the output.
    """
    features = nn.as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    n = features.shape[0]
    if labels.shape != (n,) or mask.shape != (n,):
        raise ShapeMismatch("labels/mask length must match feature rows")

    channel = np.zeros((n, N_STATES), dtype=np.float64)
    visible = (labels >= 0) & ~mask
    channel[visible, labels[visible]] = 1.0
    if predictions is not None:
        predictions = nn.as_matrix(predictions, "predictions")
        if predictions.shape != (n, N_STATES):
            raise ShapeMismatch(f"predictions shape {predictions.shape} != ({n}, {N_STATES})")
        if np.abs(predictions.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("prediction rows must sum to 1")
        hidden = ~visible
        channel[hidden] = predictions[hidden]
    return np.concatenate([features, channel], axis=1)


def _stack_forward(
    adj: NormalizedAdjacency, x: np.ndarray, layers: Sequence[GcnLayerParams]
):
    """GCN layers with ReLU between (none after the last); returns logits + caches."""
    h = x
    caches = []
    for li, layer in enumerate(layers):
        pre = nn.gcn_forward(adj, h, layer)
        caches.append((h, pre))
        h = nn.relu_forward(pre) if li < len(layers) - 1 else pre
    return h, caches


def _stack_backward(
    adj: NormalizedAdjacency,
    layers: Sequence[GcnLayerParams],
    caches,
    grad_logits: np.ndarray,
):
    """Backprop through a GCN stack; returns per-layer grads and grad w.r.t. input."""
    g = grad_logits
    per_layer: list[tuple[np.ndarray, np.ndarray | None]] = [None] * len(layers)  # type: ignore[list-item]
    for li in reversed(range(len(layers))):
        h_in, pre = caches[li]
        if li < len(layers) - 1:
            g = nn.relu_backward(pre, g)
        g, grad_theta, grad_bias = nn.gcn_backward(adj, h_in, layers[li], g)
        per_layer[li] = (grad_theta, grad_bias)
    return per_layer, g


@dataclass
class _ForwardCache:
    x1: np.ndarray
    logits1: np.ndarray
    dist1: np.ndarray
    caches1: list
    x2: np.ndarray
    logits2: np.ndarray
    dist2: np.ndarray
    caches2: list
    hidden: np.ndarray


def _forward_full(
    model: ClgnnModel,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
) -> _ForwardCache:
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    x1 = inject_labels(features, labels, mask, None)
    logits1, caches1 = _stack_forward(adj, x1, model.stage1)
    dist1 = nn.softmax(logits1)
    if model.inject_mode == "hard":
        reinject = np.zeros_like(dist1)
        reinject[np.arange(dist1.shape[0]), dist1.argmax(axis=1)] = 1.0
    else:
        reinject = dist1
    x2 = inject_labels(features, labels, mask, reinject)
    logits2, caches2 = _stack_forward(adj, x2, model.stage2)
    dist2 = nn.softmax(logits2)
    hidden = mask | (labels < 0)
    return _ForwardCache(x1, logits1, dist1, caches1, x2, logits2, dist2, caches2, hidden)


def forward_collective(
    model: ClgnnModel,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Run both stages and return their N x 5 class distributions."""
    fw = _forward_full(model, adj, features, labels, mask)
    return fw.dist1, fw.dist2


def collective_loss_and_grads(
    model: ClgnnModel,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    loss_nodes: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Two-stage masked cross-entropy and its gradient in param_arrays() order.

    Stage-2 loss plus aux_weight times the stage-1 loss; the stage-2 gradient
    flows through the soft re-injected stage-1 distribution.
    """
    fw = _forward_full(model, adj, features, labels, mask)
    loss2, grad_logits2 = nn.masked_softmax_cross_entropy(fw.logits2, labels, loss_nodes)
    loss1, grad_logits1_ce = nn.masked_softmax_cross_entropy(fw.logits1, labels, loss_nodes)

    per_layer2, grad_x2 = _stack_backward(adj, model.stage2, fw.caches2, grad_logits2)

    grad_dist1 = np.zeros_like(fw.dist1)
    if model.inject_mode == "soft":
        # only hidden rows carry the re-injected distribution
        grad_dist1[fw.hidden] = grad_x2[fw.hidden, model.n_features :]
    grad_logits1 = nn.softmax_backward(fw.dist1, grad_dist1)
    grad_logits1 += model.aux_weight * grad_logits1_ce
    per_layer1, _ = _stack_backward(adj, model.stage1, fw.caches1, grad_logits1)

    grads: list[np.ndarray] = []
    for layer, (gt, gb) in zip(model.stage1, per_layer1):
        grads.append(gt)
        if layer.bias is not None:
            grads.append(gb)
    for layer, (gt, gb) in zip(model.stage2, per_layer2):
        grads.append(gt)
        if layer.bias is not None:
            grads.append(gb)
    return loss2 + model.aux_weight * loss1, grads


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_accuracy: float | None


def argmax_worst_tiebreak(dist: np.ndarray) -> np.ndarray:
    """Row argmax; exact ties resolve to the lower ordinal (worse) state."""
    # np.argmax returns the first maximum, and state 0 is the worst
    return dist.argmax(axis=1)


def _apply_weight_decay(
    model_params: list[np.ndarray], grads: list[np.ndarray], decay: float, matrices_only: set[int]
) -> None:
    if decay == 0.0:
        return
    for i, (p, g) in enumerate(zip(model_params, grads)):
        if i in matrices_only:
            g += decay * p


def train(
    model: ClgnnModel,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
) -> tuple[ClgnnModel, list[EpochStats]]:
    """Fit the model in place and return it with the per-epoch history.

    A fraction of the observed labels is held out for validation (skipped
    when fewer than 10 labels are observed, where a holdout would be
    meaningless); the parameters with the best validation accuracy are
    restored at the end. Fully deterministic for a fixed (model, config).
    """
    config.validate()
    labels = np.asarray(labels, dtype=np.int64)
    observed = labels >= 0
    n_obs = int(observed.sum())
    if n_obs < 1:
        raise InvalidConfig("training needs at least one observed label")

    rng = np.random.default_rng(config.seed)
    obs_idx = np.flatnonzero(observed)
    n_val = int(round(config.val_fraction * n_obs)) if n_obs >= 10 else 0
    perm = rng.permutation(obs_idx)
    val_idx = np.sort(perm[:n_val])
    train_observed = observed.copy()
    train_observed[val_idx] = False
    n_train_obs = int(train_observed.sum())

    eval_mask = np.ones(labels.shape[0], dtype=bool)
    eval_mask[np.flatnonzero(train_observed)] = False

    params = model.param_arrays()
    theta_slots = {
        i for i, p in enumerate(params) if p.ndim == 2
    }
    adam = nn.AdamState.init(params, lr=config.lr)

    best_val = -1.0
    best_params: list[np.ndarray] | None = None
    since_best = 0
    history: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        if n_train_obs == 1:
            # a single observed label cannot be split into hidden + visible;
            # supervise it with an all-hidden channel instead
            mask = np.ones(labels.shape[0], dtype=bool)
        else:
            mask = sample_training_mask(rng, train_observed, config.mask_rate)
        loss_nodes = mask & train_observed
        loss, grads = collective_loss_and_grads(model, adj, features, labels, mask, loss_nodes)
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch)
        _apply_weight_decay(params, grads, config.weight_decay, theta_slots)
        nn.adam_step(adam, params, grads)

        val_acc: float | None = None
        if n_val:
            _, dist2 = forward_collective(model, adj, features, labels, eval_mask)
            preds = argmax_worst_tiebreak(dist2)
            val_acc = float((preds[val_idx] == labels[val_idx]).mean())
            if val_acc > best_val:
                best_val = val_acc
                best_params = [p.copy() for p in params]
                since_best = 0
            else:
                since_best += 1
        history.append(EpochStats(epoch=epoch, loss=loss, val_accuracy=val_acc))
        if n_val and since_best >= config.patience:
            break

    if best_params is not None:
        for p, best in zip(params, best_params):
            p[...] = best
    return model, history


@dataclass
class ImputationResult:
    """Completed label vector, the hidden node indices, and the N x 5 confidences."""

    states: np.ndarray
    imputed_nodes: np.ndarray
    dist: np.ndarray


def impute(
    model: ClgnnModel,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    observed_labels: np.ndarray,
) -> ImputationResult:
    """Predict the state of every unobserved node.

    Observed labels are passed through untouched; hidden nodes take the
    argmax of the stage-2 distribution with ties broken toward the worse
    state (the conservative choice for maintenance planning).
    """
    observed_labels = np.asarray(observed_labels, dtype=np.int64)
    mask = observed_labels < 0
    _, dist2 = forward_collective(model, adj, features, observed_labels, mask)
    states = observed_labels.copy()
    states[mask] = argmax_worst_tiebreak(dist2)[mask]
    return ImputationResult(
        states=states, imputed_nodes=np.flatnonzero(mask), dist=dist2
    )


def clgnn_to_checkpoint(
    model: ClgnnModel,
    encoders: Encoders,
    traffic_stats: tuple[float, float],
    feature_columns: Sequence[str],
) -> Checkpoint:
    arrays: dict[str, np.ndarray] = {}
    for stage_name, stage in (("stage1", model.stage1), ("stage2", model.stage2)):
        for li, layer in enumerate(stage):
            arrays[f"{stage_name}.{li}.theta"] = layer.theta
            if layer.bias is not None:
                arrays[f"{stage_name}.{li}.bias"] = layer.bias
    return Checkpoint(
        kind="clgnn",
        config={
            "n_features": model.n_features,
            "hidden": model.hidden,
            "inject_mode": model.inject_mode,
            "aux_weight": model.aux_weight,
            "seed": model.seed,
            "n_layers": len(model.stage1),
        },
        arrays=arrays,
        encoders=encoders,
        traffic_stats=traffic_stats,
        feature_columns=tuple(feature_columns),
    )


def clgnn_from_checkpoint(ckpt: Checkpoint) -> ClgnnModel:
    if ckpt.kind != "clgnn":
        raise InvalidConfig(f"checkpoint kind {ckpt.kind!r} is not clgnn")
    cfg = ckpt.config
    stages: dict[str, list[GcnLayerParams]] = {"stage1": [], "stage2": []}
    for stage_name in ("stage1", "stage2"):
        for li in range(int(cfg["n_layers"])):
            theta = ckpt.arrays[f"{stage_name}.{li}.theta"]
            bias = ckpt.arrays.get(f"{stage_name}.{li}.bias")
            stages[stage_name].append(GcnLayerParams(theta=theta, bias=bias))
    return ClgnnModel(
        n_features=int(cfg["n_features"]),
        hidden=int(cfg["hidden"]),
        stage1=stages["stage1"],
        stage2=stages["stage2"],
        inject_mode=cfg.get("inject_mode", "soft"),
        aux_weight=float(cfg.get("aux_weight", 0.5)),
        seed=int(cfg.get("seed", 0)),
    )
