# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Double precision layers with hand-written forward and backward passes.

Tensors are plain float64 numpy arrays. Matrices use the row-vector
convention: a dense layer computes act(x @ W + b) with W shaped (in, out).
Every *_forward function returns (output, cache) and the matching
*_backward consumes that cache.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ClassIndexError,
    DimensionError,
    ModelError,
)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BATCHNORM_MOMENTUM = 0.9
BATCHNORM_EPS = 1e-5

GRU_PARAM_NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


def as_tensor(value):
    """Return `value` as a float64 array."""
    return np.asarray(value, dtype=np.float64)


def matmul(a, b):
    """
    Matrix product of two 2-D tensors.

    Raises:
        DimensionError: If the inner dimensions differ
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"Cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def _relu(x):
    return np.maximum(x, 0.0)


ACTIVATIONS = {
    "linear": (lambda x: x, lambda y, z: np.ones_like(z)),
    "tanh": (np.tanh, lambda y, z: 1.0 - y * y),
    "relu": (_relu, lambda y, z: (z > 0).astype(np.float64)),
    "sigmoid": (sigmoid, lambda y, z: y * (1.0 - y)),
}


def dense_forward(x, W, b, activation="linear"):
    """
    Fully connected layer.

    Args:
        x (np.ndarray): (batch, in) inputs
        W (np.ndarray): (in, out) weights
        b (np.ndarray): (out,) bias
        activation (str): One of linear, tanh, relu, sigmoid

    Returns:
        tuple: (activation(x @ W + b), cache)

    Raises:
        DimensionError: If x columns differ from W rows or b does not match W
    """
    if activation not in ACTIVATIONS:
        raise ValueError(f"Unknown activation '{activation}'")
    x = as_tensor(x)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"Dense input {x.shape} does not match weights {W.shape}")
    if b.shape != (W.shape[1],):
        raise DimensionError(f"Dense bias {b.shape} does not match weights {W.shape}")
    z = x @ W + b
    y = ACTIVATIONS[activation][0](z)
    return y, (x, W, z, y, activation)


def dense_backward(dy, cache):
    """
    Returns:
        tuple: (dx, dW, db)
    """
    x, W, z, y, activation = cache
    dz = dy * ACTIVATIONS[activation][1](y, z)
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)


def gru_cell_forward(x_t, h_prev, params):
    """
    One step of a gated recurrent unit.

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * h~

    Args:
        x_t (np.ndarray): (batch, in) inputs
        h_prev (np.ndarray): (batch, hidden) previous state
        params (dict): W_* (in, hidden), U_* (hidden, hidden), b_* (hidden,)

    Returns:
        tuple: (h_t, cache)

    Raises:
        DimensionError: On any shape mismatch
    """
    missing = [name for name in GRU_PARAM_NAMES if name not in params]
    if missing:
        raise ModelError(f"GRU parameters missing: {', '.join(missing)}")
    if x_t.ndim != 2 or h_prev.ndim != 2 or x_t.shape[0] != h_prev.shape[0]:
        raise DimensionError(f"GRU input {x_t.shape} and state {h_prev.shape} batch sizes differ")
    hidden = h_prev.shape[1]
    if params["W_z"].shape != (x_t.shape[1], hidden) or params["U_z"].shape != (hidden, hidden):
        raise DimensionError(
            f"GRU weights {params['W_z'].shape}/{params['U_z'].shape} do not fit input {x_t.shape} and state {h_prev.shape}"
        )

    z = sigmoid(x_t @ params["W_z"] + h_prev @ params["U_z"] + params["b_z"])
    r = sigmoid(x_t @ params["W_r"] + h_prev @ params["U_r"] + params["b_r"])
    rh = r * h_prev
    h_tilde = np.tanh(x_t @ params["W_h"] + rh @ params["U_h"] + params["b_h"])
    h_t = (1.0 - z) * h_prev + z * h_tilde
    return h_t, (x_t, h_prev, z, r, rh, h_tilde)


def gru_cell_backward(dh_t, cache, params):
    """
    Backward pass of gru_cell_forward.

    Returns:
        tuple: (dx_t, dh_prev, grads) with grads keyed like GRU_PARAM_NAMES
    """
    x_t, h_prev, z, r, rh, h_tilde = cache

    d_tilde = dh_t * z
    dz = dh_t * (h_tilde - h_prev)
    dh_prev = dh_t * (1.0 - z)

    da_h = d_tilde * (1.0 - h_tilde * h_tilde)
    d_rh = da_h @ params["U_h"].T
    dr = d_rh * h_prev
    dh_prev = dh_prev + d_rh * r

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    dx_t = da_h @ params["W_h"].T + da_z @ params["W_z"].T + da_r @ params["W_r"].T
    dh_prev = dh_prev + da_z @ params["U_z"].T + da_r @ params["U_r"].T

    grads = {
        "W_z": x_t.T @ da_z,
        "W_r": x_t.T @ da_r,
        "W_h": x_t.T @ da_h,
        "U_z": h_prev.T @ da_z,
        "U_r": h_prev.T @ da_r,
        "U_h": rh.T @ da_h,
        "b_z": da_z.sum(axis=0),
        "b_r": da_r.sum(axis=0),
        "b_h": da_h.sum(axis=0),
    }
    return dx_t, dh_prev, grads


def softmax(logits, axis=-1):
    """Numerically stable softmax along `axis`."""
    logits = as_tensor(logits)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    logits = as_tensor(logits)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def nll_from_logits(logits, target_class, mask=None):
    """
    Negative log likelihood of the target class under softmax(logits).

    Args:
        logits (np.ndarray): (..., C) scores
        target_class (int | np.ndarray): Index or integer array shaped logits.shape[:-1]
        mask (np.ndarray, optional): 0/1 weights shaped like target_class; masked rows add
            nothing to the loss and get zero gradient

    Returns:
        tuple: (loss summed over rows, dlogits)

    Raises:
        ClassIndexError: If a target is outside [0, C)
    """
    logits = as_tensor(logits)
    classes = logits.shape[-1]
    target = np.asarray(target_class, dtype=np.int64)
    if target.shape != logits.shape[:-1]:
        raise DimensionError(f"Targets {target.shape} do not match logits {logits.shape}")
    if np.any(target < 0) or np.any(target >= classes):
        raise ClassIndexError(f"Target class out of range for {classes} classes: {target_class}")

    log_probs = log_softmax(logits)
    picked = np.take_along_axis(log_probs, target[..., None], axis=-1)[..., 0]
    dlogits = np.exp(log_probs) - np.eye(classes)[target]
    if mask is not None:
        mask = as_tensor(mask)
        picked = picked * mask
        dlogits = dlogits * mask[..., None]
    return float(-picked.sum()), dlogits


def conv2d_forward(x, W, b):
    """
    Valid (no padding), stride 1 convolution.

    Args:
        x (np.ndarray): (N, C, H, W) inputs
        W (np.ndarray): (O, C, kH, kW) kernels
        b (np.ndarray): (O,) bias

    Returns:
        tuple: ((N, O, H - kH + 1, W - kW + 1) output, cache)
    """
    x = as_tensor(x)
    if x.ndim != 4 or W.ndim != 4 or x.shape[1] != W.shape[1]:
        raise DimensionError(f"Convolution input {x.shape} does not match kernels {W.shape}")
    if x.shape[2] < W.shape[2] or x.shape[3] < W.shape[3]:
        raise DimensionError(f"Convolution input {x.shape} smaller than kernels {W.shape}")
    windows = sliding_window_view(x, W.shape[2:], axis=(2, 3))
    out = np.einsum("nchwij,ocij->nohw", windows, W, optimize=True) + b[None, :, None, None]
    return out, (x, W)


def conv2d_backward(dout, cache):
    """
    Returns:
        tuple: (dx, dW, db)
    """
    x, W = cache
    kh, kw = W.shape[2:]
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    dW = np.einsum("nchwij,nohw->ocij", windows, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    padded = np.pad(dout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    dwindows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    dx = np.einsum("nohwij,ocij->nchw", dwindows, W[:, :, ::-1, ::-1], optimize=True)
    return dx, dW, db


def maxpool2x2_forward(x):
    """
    2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
    """
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise DimensionError(f"Cannot pool input of shape {x.shape}")
    blocks = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return out, (x.shape, argmax)


def maxpool2x2_backward(dout, cache):
    shape, argmax = cache
    n, c, h, w = shape
    h2, w2 = h // 2, w // 2
    blocks = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(blocks, argmax[..., None], dout[..., None], axis=-1)
    dx = np.zeros(shape)
    dx[:, :, :2 * h2, :2 * w2] = blocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    return dx


def batchnorm_forward(x, gamma, beta, state, mode="train", momentum=BATCHNORM_MOMENTUM, eps=BATCHNORM_EPS):
    """
    Per-channel batch normalization; channels are axis 1.

    In train mode the batch statistics normalize the input and the running
    statistics in `state` ('running_mean', 'running_var') are updated in place:
    running = momentum * running + (1 - momentum) * batch.
    In infer mode the running statistics are used and nothing is updated.

    Raises:
        ModelError: If train mode receives a batch of one
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"Unknown batchnorm mode '{mode}'")
    x = as_tensor(x)
    if x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"Batchnorm input {x.shape} does not match {gamma.shape[0]} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)

    if mode == "train":
        if x.shape[0] < 2:
            raise ModelError("Batch normalization in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state["running_mean"] = momentum * state["running_mean"] + (1.0 - momentum) * mean
        state["running_var"] = momentum * state["running_var"] + (1.0 - momentum) * var
    else:
        mean = state["running_mean"]
        var = state["running_var"]

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * x_hat + beta.reshape(shape)
    return out, (x_hat, inv_std, gamma, axes, shape, mode)


def batchnorm_backward(dout, cache):
    """
    Returns:
        tuple: (dx, dgamma, dbeta)
    """
    x_hat, inv_std, gamma, axes, shape, mode = cache
    dgamma = (dout * x_hat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dx_hat = dout * gamma.reshape(shape)
    if mode == "infer":
        return dx_hat * inv_std.reshape(shape), dgamma, dbeta
    m = dout.size / gamma.shape[0]
    dx = (inv_std.reshape(shape) / m) * (
        m * dx_hat
        - dx_hat.sum(axis=axes).reshape(shape)
        - x_hat * (dx_hat * x_hat).sum(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


def dropout_forward(x, rate, rng, train=True):
    """
    Inverted dropout: kept units are scaled by 1 / (1 - rate) at train time.

    Returns:
        tuple: (output, mask) where mask already includes the scale
    """
    if not train or rate <= 0.0:
        return x, None
    mask = rng.bernoulli_mask(1.0 - rate, x.shape) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


@dataclass
class ParamEntry:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    touched: bool = False


@dataclass
class ParamStore:
    """
    Named learnable tensors with their gradients and Adam moments.
    """
    entries: dict = field(default_factory=dict)
    step_count: int = 0

    def add(self, name, value):
        value = as_tensor(value).copy()
        self.entries[name] = ParamEntry(value, np.zeros_like(value), np.zeros_like(value), np.zeros_like(value))
        return self.entries[name].value

    def __getitem__(self, name):
        return self.entries[name].value

    def __contains__(self, name):
        return name in self.entries

    def names(self):
        return list(self.entries)

    def group(self, prefix):
        """Return {short name: value} for every entry below 'prefix.'."""
        start = prefix + "."
        return {name[len(start):]: entry.value for name, entry in self.entries.items() if name.startswith(start)}

    def accumulate(self, name, grad):
        entry = self.entries[name]
        if grad.shape != entry.value.shape:
            raise DimensionError(f"Gradient {grad.shape} does not match parameter '{name}' {entry.value.shape}")
        entry.grad += grad
        entry.touched = True

    def accumulate_group(self, prefix, grads):
        for short, grad in grads.items():
            self.accumulate(f"{prefix}.{short}", grad)

    def grad(self, name):
        return self.entries[name].grad

    def zero_grad(self):
        for entry in self.entries.values():
            entry.grad[...] = 0.0
            entry.touched = False

    def scale_grads(self, factor):
        for entry in self.entries.values():
            entry.grad *= factor

    def snapshot(self):
        """Copies of all parameter values, for read-only sharing."""
        return {name: entry.value.copy() for name, entry in self.entries.items()}

    def to_tensors(self, prefix="param"):
        """Flatten values and optimizer state for a tensor archive."""
        tensors = {}
        for name, entry in self.entries.items():
            tensors[f"{prefix}/{name}"] = entry.value
            tensors[f"adam_m/{name}"] = entry.adam_m
            tensors[f"adam_v/{name}"] = entry.adam_v
        return tensors

    @classmethod
    def from_tensors(cls, tensors, step_count=0, prefix="param"):
        store = cls(step_count=int(step_count))
        for key in sorted(tensors):
            kind, _, name = key.partition("/")
            if kind != prefix:
                continue
            store.add(name, tensors[key])
            if f"adam_m/{name}" in tensors:
                store.entries[name].adam_m = tensors[f"adam_m/{name}"].copy()
                store.entries[name].adam_v = tensors[f"adam_v/{name}"].copy()
        return store


def adam_step(store, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """
    One Adam update with bias correction over every entry of `store`.

    Gradients are zeroed afterwards and step_count is incremented.

    Raises:
        ModelError: If an entry received no gradient since the last step
    """
    for name, entry in store.entries.items():
        if not entry.touched:
            raise ModelError(f"Missing gradient for parameter '{name}'")
    store.step_count += 1
    t = store.step_count
    for entry in store.entries.values():
        entry.adam_m = beta1 * entry.adam_m + (1.0 - beta1) * entry.grad
        entry.adam_v = beta2 * entry.adam_v + (1.0 - beta2) * entry.grad * entry.grad
        m_hat = entry.adam_m / (1.0 - beta1 ** t)
        v_hat = entry.adam_v / (1.0 - beta2 ** t)
        entry.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grad()


@dataclass
class GradCheckReport:
    max_relative_error: float
    passed: bool
    worst_parameter: str = None
    worst_index: tuple = None
    checked: int = 0


def grad_check(f, params, analytic, h=1e-5, tolerance=1e-6, abs_floor=1e-4):
    """
    Compare analytic gradients with central differences.

    Each coordinate of every tensor in `params` is perturbed in place by +/-h
    and restored. The relative error of a coordinate is
    |a - n| / max(|a| + |n|, abs_floor); the floor keeps coordinates with
    vanishing gradients from amplifying rounding noise.

    Args:
        f (callable): f(params) -> float, deterministic
        params (dict): name -> np.ndarray, perturbed in place
        analytic (dict): name -> gradient array with the same shape
        h (float): Step size
        tolerance (float): Pass threshold on the maximum relative error
        abs_floor (float): Denominator floor

    Returns:
        GradCheckReport
    """
    worst = (0.0, None, None)
    checked = 0
    for name, value in params.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise DimensionError(f"Analytic gradient {grad.shape} does not match '{name}' {value.shape}")
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + h
            upper = f(params)
            value[index] = original - h
            lower = f(params)
            value[index] = original
            numeric = (upper - lower) / (2.0 * h)
            error = abs(grad[index] - numeric) / max(abs(grad[index]) + abs(numeric), abs_floor)
            checked += 1
            if error > worst[0]:
                worst = (error, name, index)
    return GradCheckReport(
        max_relative_error=float(worst[0]),
        passed=bool(worst[0] < tolerance),
        worst_parameter=worst[1],
        worst_index=worst[2],
        checked=checked,
    )


def uniform_init(rng, shape, fan_in):
    """uniform(-k, k) with k = 1 / sqrt(fan_in)."""
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)
