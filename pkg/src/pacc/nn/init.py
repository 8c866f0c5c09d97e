"""Seed-deterministic parameter initializers."""
from __future__ import annotations

import numpy as np

from .rng import RngStream


def glorot_uniform(rng: RngStream, shape, fan_in: int | None = None, fan_out: int | None = None,
                   dtype=np.float32) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)).

    For conv kernels [K, Cin, Cout] the fans default to K*Cin and K*Cout.
    """
    shape = tuple(shape)
    if fan_in is None or fan_out is None:
        receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
        fan_in = shape[-2] * receptive if len(shape) >= 2 else shape[0]
        fan_out = shape[-1] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape, dtype)


def embedding_uniform(rng: RngStream, shape, scale: float = 0.05, dtype=np.float32) -> np.ndarray:
    return rng.uniform(-scale, scale, tuple(shape), dtype)


def orthogonal(rng: RngStream, n: int, dtype=np.float32) -> np.ndarray:
    a = rng.normal((n, n))
    q, r = np.linalg.qr(a)
    # sign fix makes the result unique for a given draw
    q *= np.sign(np.diag(r))
    return q.astype(dtype)


def zeros(shape, dtype=np.float32) -> np.ndarray:
    return np.zeros(tuple(shape), dtype=dtype)
