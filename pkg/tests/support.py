"""Shared builders for the test suite: toy specs, batches, datasets and checkpoints."""
from __future__ import annotations

import numpy as np

from pacc.data import Dataset
from pacc.models import Batch, ModelSpec
from pacc.synthetic import toy_response_data
from pacc.train import FoldData, TrainConfig, train


def toy_spec(kind: str, V: int = 7, G: int = 4, T: int = 6, fp_width: int = 16, **overrides) -> ModelSpec:
    """Encoders at toy widths, small enough for elementwise finite differences."""
    fields = dict(vocab_size=V, n_genes=G, max_len=T, fp_width=fp_width, H=3, A=4, f=3, m=2,
                  kernel_widths=(3, 5) if kind == "MCA" else (3, 3), channels=(3, 2), dense=(4, 3),
                  rnn_hidden=2, p_drop=0.3)
    fields.update(overrides)
    return ModelSpec(kind, **fields)


def toy_batch(rng: np.random.Generator, B: int = 8, T: int = 6, G: int = 4, V: int = 7,
              fp_width: int = 16, dtype=np.float64) -> Batch:
    """Random batch with a few rows padded at the tail."""
    ids = rng.integers(2, V, (B, T))
    valid = np.ones((B, T), dtype=bool)
    for row, length in ((1, 3), (2, 5), (5, 2)):
        if row < B and length < T:
            valid[row, length:] = False
    ids[~valid] = 0
    return Batch(genes=rng.normal(size=(B, G)).astype(dtype), ids=ids, valid=valid,
                 fingerprints=(rng.random((B, fp_width)) < 0.3).astype(dtype))


def toy_dataset(n_drugs: int = 6, n_cells: int = 6, n_genes: int = 5, seed: int = 0, n_variants: int = 2,
                fp_width: int = 32) -> Dataset:
    smiles, genes, cells, rows = toy_response_data(n_drugs, n_cells, n_genes, seed=seed)
    return Dataset.build(smiles, genes, cells, rows, n_variants=n_variants, seed=seed, fp_width=fp_width)


def small_overrides(kind: str) -> dict:
    return dict(H=4, A=4, f=3, m=2, dense=(6, 4), rnn_hidden=3, channels=(4, 3),
                kernel_widths=(3, 5) if kind == "MCA" else (3, 3))


def toy_fold(dataset: Dataset) -> FoldData:
    keys = [p.key for p in dataset.pairs]
    cut = (len(keys) * 3) // 4
    return FoldData.prepare(dataset, keys[:cut], keys[cut:])


def train_toy(kind: str, dataset: Dataset | None = None, steps: int = 12, seed: int = 0, keep: int = 3):
    """A few optimizer steps so that batch-norm statistics and weights move off their init."""
    dataset = dataset or toy_dataset()
    fold = toy_fold(dataset)
    spec = fold.spec(kind, **small_overrides(kind))
    cfg = TrainConfig(max_steps=steps, batch_size=8, eval_interval=4, checkpoint_keep=keep, seed=seed)
    return dataset, fold, train(spec, fold, cfg)
