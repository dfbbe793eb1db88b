"""Differentiable primitives.

Each forward function has a matching ``*_backward`` (or returns its
gradient alongside the value for losses). Backward functions accumulate
parameter gradients in place and return the gradient of the input.
"""
import numpy as np
from scipy.special import expit, log_softmax, softmax as _softmax

from .tensor import Parameter, Tensor, as_tensor
from etp.Utils.errors import ShapeError

__all__ = [
    "linear_forward", "linear_backward", "sigmoid", "sigmoid_backward", "tanh",
    "tanh_backward", "softmax", "smooth_l1", "smooth_l1_grad", "cross_entropy", "hinge",
    "hinge_per_sample", "regression_loss", "masked_mean_pool", "masked_mean_pool_backward",
]


def linear_forward(x: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    x = as_tensor(x)
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in or bias.shape != (d_out,):
        raise ShapeError(
            f"linear: input shape {x.shape} does not conform to weight shape {weight.shape} "
            f"and bias shape {bias.shape}")
    return x @ weight.value + bias.value


def linear_backward(dy: Tensor, x: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    weight.grad += x2.T @ dy2
    bias.grad += dy2.sum(axis=0)
    return dy @ weight.value.T


def sigmoid(x: Tensor) -> Tensor:
    return expit(x)


def sigmoid_backward(dy: Tensor, y: Tensor) -> Tensor:
    return dy * y * (1.0 - y)


def tanh(x: Tensor) -> Tensor:
    return np.tanh(x)


def tanh_backward(dy: Tensor, y: Tensor) -> Tensor:
    return dy * (1.0 - y * y)


def softmax(scores: Tensor) -> Tensor:
    # scipy subtracts the row maximum before exponentiating
    return _softmax(as_tensor(scores), axis=-1)


def smooth_l1(x: Tensor) -> Tensor:
    x = as_tensor(x)
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def cross_entropy(logits: Tensor, labels) -> tuple:
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    log_p = log_softmax(logits, axis=1)
    loss = -log_p[np.arange(n), labels].mean()
    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def hinge(preds: Tensor, signs: Tensor) -> tuple:
    """Mean of ``max(0, 1 - c * p)`` and its gradient w.r.t. ``preds``."""
    preds = as_tensor(preds)
    signs = as_tensor(signs)
    n = preds.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(preds)
    margins = 1.0 - signs * preds
    active = margins > 0.0
    loss = np.where(active, margins, 0.0).mean()
    return float(loss), np.where(active, -signs, 0.0) / n


def hinge_per_sample(preds: Tensor, signs: Tensor) -> Tensor:
    return np.maximum(0.0, 1.0 - as_tensor(signs) * as_tensor(preds))


def regression_loss(preds: Tensor, targets: Tensor) -> tuple:
    """Mean over samples of the summed smooth-L1 on (center, span) offsets."""
    preds = as_tensor(preds)
    n = preds.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(preds)
    diff = preds - as_tensor(targets)
    loss = smooth_l1(diff).sum(axis=1).mean()
    return float(loss), smooth_l1_grad(diff) / n


def masked_mean_pool(x: Tensor, weights: Tensor) -> Tensor:
    """Pooling as a weighted sum over positions: ``(B, P, L) @ (B, L, D)``."""
    return weights @ x


def masked_mean_pool_backward(dy: Tensor, weights: Tensor) -> Tensor:
    return np.swapaxes(weights, -1, -2) @ dy
