"""Attention layers shared by the encoders.

``valid`` masks are True at real tokens. With ``valid=None`` attention runs
over every position, pads included.
"""
from __future__ import annotations

import numpy as np

from ..nn import ShapeMismatch, Tensor, max_over, softmax, tanh


def gene_attention(g: Tensor, W: Tensor, b: Tensor | None) -> tuple[Tensor, Tensor]:
    """Softmax gate over the panel: returns (alpha * g, alpha)."""
    n = g.shape[-1]
    if W.shape != (n, n):
        raise ShapeMismatch(f"gene attention expects a {n}x{n} matrix, got {W.shape}")
    logits = g @ W
    if b is not None:
        logits = logits + b
    alpha = softmax(logits)
    return alpha * g, alpha


def _pool(S: Tensor, u: Tensor, valid) -> tuple[Tensor, Tensor]:
    alpha = softmax(u, valid)
    B, T, d = S.shape
    pooled = (alpha.reshape(B, 1, T) @ S).reshape(B, d)
    return pooled, alpha


def self_attention(S: Tensor, valid, W_e: Tensor, b: Tensor | None, V: Tensor) -> tuple[Tensor, Tensor]:
    """u_i = V . tanh(W_e s_i + b); returns (sum_i alpha_i s_i, alpha)."""
    if S.shape[-1] != W_e.shape[0] or V.shape != (W_e.shape[1],):
        raise ShapeMismatch(f"self attention: S {S.shape}, W_e {W_e.shape}, V {V.shape}")
    proj = S @ W_e
    if b is not None:
        proj = proj + b
    return _pool(S, tanh(proj) @ V, valid)


def contextual_attention(S: Tensor, G: Tensor, valid, W_e: Tensor, W_g: Tensor,
                         V: Tensor) -> tuple[Tensor, Tensor]:
    """u_i = V . tanh(W_e s_i + W_g G); the gene context shifts every token."""
    if S.shape[-1] != W_e.shape[0] or G.shape[-1] != W_g.shape[0] or W_e.shape[1] != W_g.shape[1]:
        raise ShapeMismatch(f"contextual attention: S {S.shape}, G {G.shape}, W_e {W_e.shape}, W_g {W_g.shape}")
    B = S.shape[0]
    ctx = (G @ W_g).reshape(B, 1, W_g.shape[1])
    return _pool(S, tanh(S @ W_e + ctx) @ V, valid)


def masked_max(x: Tensor, valid) -> Tensor:
    """Max over positions (axis 1) restricted to valid tokens."""
    if valid is None:
        return max_over(x, 1)
    penalty = np.where(valid, 0.0, -1e30).astype(x.dtype)[..., None]
    return max_over(x + penalty, 1)
