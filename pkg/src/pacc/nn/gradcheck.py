"""Central finite-difference gradient checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.worst < tol


def relative_error(a, n) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(fn: Callable[[dict[str, Tensor]], Tensor], inputs: dict[str, np.ndarray],
               eps: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``fn`` with central differences.

    Everything runs in float64. ``fn`` receives a dict of leaf tensors and
    must be deterministic (no dropout draws that change between calls).
    """
    values = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in values.items()}
    out = fn(leaves)
    out.backward()
    report = {}
    for name, base in values.items():
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = _evaluate(fn, values)
            flat[i] = orig - eps
            minus = _evaluate(fn, values)
            flat[i] = orig
            numeric.reshape(-1)[i] = (plus - minus) / (2 * eps)
        err = relative_error(analytic, numeric)
        report[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(report)


def _evaluate(fn, values) -> float:
    return float(fn({k: Tensor(v) for k, v in values.items()}).data)
