"""Label min-max scaling and per-gene expression standardization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


class DegenerateRange(ValueError):
    pass


class NotFitted(RuntimeError):
    pass


@dataclass(frozen=True)
class LabelTransform:
    low: float
    high: float

    @classmethod
    def fit(cls, labels) -> "LabelTransform":
        labels = np.asarray(labels, dtype=np.float64)
        if labels.size < 2 or labels.min() == labels.max():
            raise DegenerateRange("need at least two distinct training labels")
        return cls(float(labels.min()), float(labels.max()))

    def apply(self, y):
        return (np.asarray(y, dtype=np.float64) - self.low) / (self.high - self.low)

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * (self.high - self.low) + self.low

    def to_text(self) -> str:
        return f"{self.low!r},{self.high!r}"

    @classmethod
    def from_text(cls, text: str) -> "LabelTransform":
        low, high = (float(v) for v in text.split(","))
        return cls(low, high)


@dataclass(frozen=True, eq=False)
class ExpressionTransform:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrix) -> "ExpressionTransform":
        x = np.asarray(matrix, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("need at least two training cells to fit the expression transform")
        return cls(x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR))

    def apply(self, matrix):
        x = np.asarray(matrix, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"expression has {x.shape[-1]} genes, transform expects {self.mean.shape[0]}")
        return (x - self.mean) / self.std

    def __eq__(self, other) -> bool:
        return (isinstance(other, ExpressionTransform) and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std))
