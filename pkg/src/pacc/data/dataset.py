"""Assembled datasets, model-ready feature arrays and the batch stream."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ..chem import Vocabulary
from ..models import Batch
from ..nn import RngStream
from .records import CellRecord, DrugRecord, PairSample, build_drug_record, pair_samples
from .transforms import ExpressionTransform, LabelTransform


class SequenceTooLong(ValueError):
    pass


@dataclass
class Dataset:
    drugs: dict[str, DrugRecord]
    cells: dict[str, CellRecord]
    genes: list[str]
    pairs: list[PairSample]
    vocab: Vocabulary
    max_len: int

    @classmethod
    def build(cls, smiles: Mapping[str, str], genes: Sequence[str], cells: Mapping[str, CellRecord],
              responses: Iterable, n_variants: int = 32, seed: int = 0, fp_width: int = 512,
              max_len: int | None = None) -> "Dataset":
        """Parse and augment every compound, pair responses and fix the vocabulary.

        The vocabulary covers the tokens of every compound. It carries no label
        information, so building it before splitting leaks nothing.
        """
        drugs = {d: build_drug_record(d, s, n_variants, seed, fp_width) for d, s in sorted(smiles.items())}
        pairs = pair_samples(drugs, cells, responses)
        vocab = Vocabulary(tok for rec in drugs.values() for v in rec.variants for tok in v)
        longest = max((len(v) for rec in drugs.values() for v in rec.variants), default=1)
        if max_len is None:
            max_len = longest
        elif longest > max_len:
            raise SequenceTooLong(f"longest SMILES has {longest} tokens, max_len is {max_len}")
        return cls(drugs, dict(cells), list(genes), pairs, vocab, max_len)

    def pair_index(self) -> dict[tuple[str, str], PairSample]:
        return {p.key: p for p in self.pairs}

    def select(self, keys: Iterable[tuple[str, str]]) -> list[PairSample]:
        index = self.pair_index()
        return [index[tuple(k)] for k in keys]

    def expression_matrix(self, cell_ids: Iterable[str]) -> np.ndarray:
        return np.stack([self.cells[c].expression for c in cell_ids])


@dataclass
class FeatureStore:
    """Dense per-drug and per-cell arrays that batches are gathered from."""

    drug_ids: list[str]
    cell_ids: list[str]
    ids: np.ndarray  # [n_drugs, n_variants, T]
    valid: np.ndarray  # [n_drugs, n_variants, T]
    n_variants: np.ndarray  # [n_drugs]
    fingerprints: np.ndarray  # [n_drugs, fp_width]
    expression: np.ndarray  # [n_cells, |G|], transformed

    def __post_init__(self):
        self.drug_index = {d: i for i, d in enumerate(self.drug_ids)}
        self.cell_index = {c: i for i, c in enumerate(self.cell_ids)}

    def rows(self, pairs: Iterable) -> tuple[np.ndarray, np.ndarray]:
        keys = [(p.drug_id, p.cell_id) if isinstance(p, PairSample) else tuple(p) for p in pairs]
        d = np.array([self.drug_index[k[0]] for k in keys], dtype=np.int64)
        c = np.array([self.cell_index[k[1]] for k in keys], dtype=np.int64)
        return d, c

    def batch(self, drug_rows, cell_rows, variant_rows=None) -> Batch:
        drug_rows = np.asarray(drug_rows, dtype=np.int64)
        if variant_rows is None:
            variant_rows = np.zeros_like(drug_rows)
        return Batch(
            genes=self.expression[cell_rows],
            ids=self.ids[drug_rows, variant_rows],
            valid=self.valid[drug_rows, variant_rows],
            fingerprints=self.fingerprints[drug_rows],
        )


def encode_drugs(drugs: Sequence[DrugRecord], vocab: Vocabulary, max_len: int):
    """Pad every variant to ``max_len``; returns (ids, valid, n_variants)."""
    n_var = max((r.n_variants for r in drugs), default=1)
    ids = np.zeros((len(drugs), n_var, max_len), dtype=np.int64)
    valid = np.zeros((len(drugs), n_var, max_len), dtype=bool)
    counts = np.zeros(len(drugs), dtype=np.int64)
    for i, rec in enumerate(drugs):
        counts[i] = rec.n_variants
        for v, toks in enumerate(rec.variants):
            if len(toks) > max_len:
                raise SequenceTooLong(f"{rec.drug_id}: {len(toks)} tokens exceed max_len {max_len}")
            ids[i, v] = vocab.encode_array(toks, max_len)
            valid[i, v, : len(toks)] = True
    return ids, valid, counts


def build_features(drugs: Mapping[str, DrugRecord], cells: Mapping[str, CellRecord],
                   expression_transform: ExpressionTransform, vocab: Vocabulary, max_len: int) -> FeatureStore:
    drug_ids = sorted(drugs)
    cell_ids = sorted(cells)
    records = [drugs[d] for d in drug_ids]
    ids, valid, counts = encode_drugs(records, vocab, max_len)
    fps = np.stack([r.fingerprint.to_array(np.float64) for r in records]) if records else np.zeros((0, 1))
    raw = np.stack([cells[c].expression for c in cell_ids])
    return FeatureStore(drug_ids, cell_ids, ids, valid, counts, fps, expression_transform.apply(raw))


def fit_transforms(dataset: Dataset, train_pairs: Sequence[PairSample]) -> tuple[LabelTransform, ExpressionTransform]:
    """Fit both transforms on the training pairs and their cells only."""
    labels = LabelTransform.fit([p.label for p in train_pairs])
    train_cells = sorted({p.cell_id for p in train_pairs})
    expr = ExpressionTransform.fit(dataset.expression_matrix(train_cells))
    return labels, expr


def make_batches(store: FeatureStore, pairs: Sequence, targets: np.ndarray, batch_size: int,
                 augment: bool, rng: RngStream) -> Iterator[tuple[Batch, np.ndarray]]:
    """One shuffled epoch of batches; the last batch may be short.

    With ``augment`` each pair appears once per stored SMILES variant.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    d, c = store.rows(pairs)
    targets = np.asarray(targets, dtype=np.float64)
    if augment:
        reps = store.n_variants[d]
        pair_idx = np.repeat(np.arange(len(d)), reps)
        variant = np.concatenate([np.arange(r) for r in reps]) if len(reps) else np.zeros(0, np.int64)
    else:
        pair_idx = np.arange(len(d))
        variant = np.zeros(len(d), dtype=np.int64)
    order = rng.permutation(len(pair_idx))
    for start in range(0, len(order), batch_size):
        sel = order[start : start + batch_size]
        rows = pair_idx[sel]
        yield store.batch(d[rows], c[rows], variant[sel]), targets[rows]
