"""Layer primitives built on :mod:`pacc.nn.tensor`.

Masks passed to :func:`softmax`, :func:`bigru` and the attention layers are
boolean arrays that are True at *valid* (non-padding) positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream
from .tensor import (
    ACTIVATIONS,
    ShapeMismatch,
    Tensor,
    _node,
    concat,
    sigmoid,
    stack,
    tanh,
)


class AllMasked(ValueError):
    pass


class BatchTooSmall(ValueError):
    pass


class EvenKernel(ValueError):
    pass


class IndexOutOfVocab(IndexError):
    pass


def dense(x: Tensor, W: Tensor, b: Tensor | None = None, activation: str = "linear") -> Tensor:
    if x.shape[-1] != W.shape[0] or (b is not None and b.shape != (W.shape[1],)):
        raise ShapeMismatch(f"dense: x {x.shape}, W {W.shape}, b {None if b is None else b.shape}")
    out = x @ W
    if b is not None:
        out = out + b
    return ACTIVATIONS[activation](out)


def embedding(ids: np.ndarray, E: Tensor) -> Tensor:
    """Row gather ``E[ids]``; repeated ids accumulate gradient."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= E.shape[0]):
        raise IndexOutOfVocab(f"token id outside vocabulary of size {E.shape[0]}")

    def backward(g):
        full = np.zeros_like(E.data)
        np.add.at(full, ids, g)
        E._accumulate(full)

    return _node(E.data[ids], (E,), backward, "embedding")


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, activation: str = "linear") -> Tensor:
    """Same-length 1-D convolution of ``x`` [B, T, Cin] with ``kernels`` [K, Cin, Cout].

    Sequences are zero-padded by (K-1)/2 at both ends, so K must be odd.
    """
    K, c_in, c_out = kernels.shape
    if K % 2 == 0:
        raise EvenKernel(f"kernel width {K} is even; same padding needs an odd width")
    if x.ndim != 3 or x.shape[2] != c_in:
        raise ShapeMismatch(f"conv1d: x {x.shape} vs kernels {kernels.shape}")
    B, T, _ = x.shape
    half = (K - 1) // 2
    padded = np.pad(x.data, ((0, 0), (half, half), (0, 0)))
    # windows: [B, T, Cin, K] -> [B, T, K, Cin]
    windows = np.lib.stride_tricks.sliding_window_view(padded, K, axis=1).transpose(0, 1, 3, 2)
    cols = np.ascontiguousarray(windows).reshape(B * T, K * c_in)
    w2 = kernels.data.reshape(K * c_in, c_out)
    out = (cols @ w2).reshape(B, T, c_out)

    def backward(g):
        g2 = g.reshape(B * T, c_out)
        if kernels.requires_grad:
            kernels._accumulate((cols.T @ g2).reshape(K, c_in, c_out))
        if x.requires_grad:
            dcols = (g2 @ w2.T).reshape(B, T, K, c_in)
            dpad = np.zeros_like(padded)
            for k in range(K):
                dpad[:, k : k + T, :] += dcols[:, :, k, :]
            x._accumulate(dpad[:, half : half + T, :])

    y = _node(out, (x, kernels), backward, "conv1d")
    if bias is not None:
        y = y + bias
    return ACTIVATIONS[activation](y)


def softmax(logits: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; masked-out positions get exactly zero weight."""
    z = logits.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise AllMasked("softmax over a row with no unmasked position")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        logits._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _node(y, (logits,), backward, "softmax")


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99

    @classmethod
    def fresh(cls, n: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(n, dtype=dtype), np.ones(n, dtype=dtype))


VARIANCE_FLOOR = 1e-5


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str = "train") -> Tensor:
    """Batch normalization over axis 0 of ``x`` [B, F].

    Train mode normalizes with batch statistics (variance floored at 1e-5)
    and updates the running averages; eval mode uses the running averages.
    """
    if mode == "eval":
        std = np.sqrt(np.maximum(state.running_var, VARIANCE_FLOOR)).astype(x.dtype)
        xhat = (x - state.running_mean.astype(x.dtype)) * (1.0 / std).astype(x.dtype)
        return xhat * gamma + beta
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if x.shape[0] < 2:
        raise BatchTooSmall("batch normalization in train mode needs at least 2 rows")
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    floored = var <= VARIANCE_FLOOR
    std = np.sqrt(np.where(floored, VARIANCE_FLOOR, var)).astype(x.dtype)
    xhat = (x.data - mu) / std
    m = state.momentum
    state.running_mean[...] = m * state.running_mean + (1 - m) * mu
    state.running_var[...] = m * state.running_var + (1 - m) * var

    def backward(g):
        gm = g.mean(axis=0)
        # where the floor is active std is constant and only the mean term remains
        gx = (g - gm - np.where(floored, 0, xhat * (g * xhat).mean(axis=0))) / std
        x._accumulate(gx)

    normed = _node(xhat.astype(x.dtype), (x,), backward, "batchnorm")
    return normed * gamma + beta


def dropout(x: Tensor, p_drop: float, mode: str, rng: RngStream | None) -> Tensor:
    """Inverted dropout: keep with probability 1 - p and rescale by 1/(1 - p)."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"p_drop must lie in [0, 1), got {p_drop}")
    if mode == "eval" or p_drop == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an RngStream")
    keep = rng.random(x.shape) >= p_drop
    scale = np.where(keep, 1.0 / (1.0 - p_drop), 0.0).astype(x.dtype)
    return x * scale


def mse_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse_loss: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


# -- recurrent ------------------------------------------------------------


def gru_direction(x: Tensor, valid: np.ndarray, Wx: Tensor, Uh: Tensor, b: Tensor, reverse: bool = False):
    """Run one GRU direction over ``x`` [B, T, D].

    ``Wx`` [D, 3h], ``Uh`` [h, 3h] and ``b`` [3h] hold the (z, r, candidate)
    blocks. State is carried unchanged across padded positions. Returns the
    per-position states [B, T, h] and the final state [B, h].
    """
    B, T, _ = x.shape
    h_size = Uh.shape[0]
    proj = x @ Wx + b  # [B, T, 3h]
    U_zr = Uh[:, : 2 * h_size]
    U_c = Uh[:, 2 * h_size :]
    h = Tensor(np.zeros((B, h_size), dtype=x.dtype))
    outputs: list[Tensor | None] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        p = proj[:, t, :]
        zr = sigmoid(p[:, : 2 * h_size] + h @ U_zr)
        z = zr[:, :h_size]
        r = zr[:, h_size:]
        cand = tanh(p[:, 2 * h_size :] + (r * h) @ U_c)
        new = h + z * (cand - h)  # (1 - z) h + z cand
        m = valid[:, t : t + 1].astype(x.dtype)
        h = new * m + h * (1 - m)
        outputs[t] = h
    return stack(outputs, axis=1), h


def bigru(x: Tensor, valid: np.ndarray, layers: list[dict]) -> Tensor:
    """Stacked bidirectional GRU; returns the top layer's final states [B, 2h].

    Each entry of ``layers`` maps ``fw``/``bw`` to ``(Wx, Uh, b)`` tensors.
    The forward state is the one after the last valid token; the backward
    state is the one at the first position.
    """
    if x.ndim != 3 or valid.shape != x.shape[:2]:
        raise ShapeMismatch(f"bigru: x {x.shape} vs mask {valid.shape}")
    seq = x
    final = None
    for layer in layers:
        fw_seq, fw_last = gru_direction(seq, valid, *layer["fw"])
        bw_seq, bw_last = gru_direction(seq, valid, *layer["bw"], reverse=True)
        seq = concat([fw_seq, bw_seq], axis=-1)
        final = concat([fw_last, bw_last], axis=-1)
    return final
