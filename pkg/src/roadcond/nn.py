"""Dense-matrix neural-network core with hand-written gradients.

Everything runs in float64 on full-graph matrices: a graph-convolution layer
(propagate with the normalized adjacency, then transform), ReLU, a masked
softmax cross-entropy, bias-corrected Adam, and a central finite-difference
gradient checker. All operations are deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, ShapeMismatch, UndefinedLabel
from .graph import NormalizedAdjacency


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2-D array; reject NaN/Inf inputs."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ShapeMismatch(f"{name} contains non-finite entries")
    return arr


@dataclass
class GcnLayerParams:
    """One graph-convolution layer: F_in x F_out weights plus optional bias."""

    theta: np.ndarray
    bias: np.ndarray | None = None

    @classmethod
    def init(
        cls, f_in: int, f_out: int, rng: np.random.Generator, with_bias: bool = True
    ) -> "GcnLayerParams":
        scale = np.sqrt(2.0 / (f_in + f_out))
        theta = rng.normal(0.0, scale, size=(f_in, f_out))
        bias = np.zeros(f_out) if with_bias else None
        return cls(theta=theta, bias=bias)

    def arrays(self) -> list[np.ndarray]:
        return [self.theta] if self.bias is None else [self.theta, self.bias]


def gcn_forward(
    adj: NormalizedAdjacency, h_in: np.ndarray, params: GcnLayerParams
) -> np.ndarray:
    """Propagate node embeddings through the normalized adjacency, then
    transform: out = (S @ H) @ theta + bias."""
    h_in = as_matrix(h_in, "h_in")
    if h_in.shape[1] != params.theta.shape[0]:
        raise ShapeMismatch(
            f"h_in width {h_in.shape[1]} != theta rows {params.theta.shape[0]}"
        )
    out = adj.apply(h_in) @ params.theta
    if params.bias is not None:
        out = out + params.bias
    return out


def gcn_backward(
    adj: NormalizedAdjacency,
    h_in: np.ndarray,
    params: GcnLayerParams,
    grad_out: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Exact gradients of gcn_forward.

    With S the (symmetric) propagation operator:
      grad_theta = (S H)^T G,  grad_h = S (G theta^T),  grad_bias = column sums.
    """
    h_in = as_matrix(h_in, "h_in")
    grad_out = as_matrix(grad_out, "grad_out")
    if grad_out.shape != (h_in.shape[0], params.theta.shape[1]):
        raise ShapeMismatch(
            f"grad_out shape {grad_out.shape} != ({h_in.shape[0]}, {params.theta.shape[1]})"
        )
    propagated = adj.apply(h_in)
    grad_theta = propagated.T @ grad_out
    grad_h_in = adj.apply(grad_out @ params.theta.T)
    grad_bias = grad_out.sum(axis=0) if params.bias is not None else None
    return grad_h_in, grad_theta, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, grad_y, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with the max-shift trick."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given grad w.r.t. softmax output."""
    inner = (grad_probs * probs).sum(axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def masked_softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray, loss_mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over masked nodes, with its logit gradient.

    Gradient rows are zero for unmasked nodes and (softmax - onehot)/|masked|
    for masked ones. Labels use -1 for "undefined".
    """
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    loss_mask = np.asarray(loss_mask, dtype=bool)
    if labels.shape != (logits.shape[0],) or loss_mask.shape != (logits.shape[0],):
        raise ShapeMismatch("labels/loss_mask length must match logits rows")
    idx = np.flatnonzero(loss_mask)
    if idx.size == 0:
        raise EmptyMask("loss mask selects no node")
    if np.any(labels[idx] < 0):
        raise UndefinedLabel("masked node without a label")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[idx, labels[idx]].mean())

    grad = np.zeros_like(logits)
    probs = np.exp(log_probs[idx])
    probs[np.arange(idx.size), labels[idx]] -= 1.0
    grad[idx] = probs / idx.size
    return loss, grad


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for a flat list of parameter arrays."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: list[np.ndarray], lr: float = 0.01, **kw) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One in-place Adam update over aligned parameter/gradient lists."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeMismatch("params/grads length mismatch with Adam state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**state.t
    bias2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


def finite_diff_check(
    f,
    params: list[np.ndarray],
    analytic_grads: list[np.ndarray],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic grads and central differences.

    ``f(params) -> float`` is re-evaluated at per-coordinate perturbations of
    copies of ``params``; the relative error metric is
    |a - n| / max(1e-8, |a| + |n|).
    """
    worst = 0.0
    work = [p.copy() for p in params]
    for pi, (p, g) in enumerate(zip(work, analytic_grads)):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g, dtype=np.float64).reshape(-1)
        for k in range(flat_p.size):
            orig = flat_p[k]
            flat_p[k] = orig + step
            f_plus = f(work)
            flat_p[k] = orig - step
            f_minus = f(work)
            flat_p[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            analytic = flat_g[k]
            err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst
