"""Checkpoint inference, ensembles and cross-validation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..data import CellRecord, Dataset, DrugRecord, FeatureStore, SplitPlan, build_features
from ..models import ModelSpec
from .checkpoint import Checkpoint
from .loop import FoldData, TrainConfig, predict_normalized, train
from .metrics import MetricReport, median_iqr, metrics


class VocabMismatch(ValueError):
    pass


class PanelMismatch(ValueError):
    pass


class EmptyEnsemble(ValueError):
    pass


def checkpoint_features(ckpt: Checkpoint, drugs: Mapping[str, DrugRecord], cells: Mapping[str, CellRecord],
                        genes: Sequence[str]) -> FeatureStore:
    """Encode inputs with the checkpoint's own vocabulary, panel and transforms."""
    if list(genes) != list(ckpt.genes):
        raise PanelMismatch("expression panel differs from the checkpoint's gene panel")
    for rec in drugs.values():
        for toks in rec.variants:
            unknown = [t for t in toks if t not in ckpt.vocab]
            if unknown:
                raise VocabMismatch(f"{rec.drug_id}: tokens {unknown[:3]} are not in the checkpoint vocabulary")
    return build_features(drugs, cells, ckpt.expression_transform, ckpt.vocab, ckpt.spec.max_len)


def predict_normalized_ckpt(ckpt: Checkpoint, store: FeatureStore, pairs, augment_average: bool = False,
                            batch_size: int = 512) -> np.ndarray:
    model = ckpt.model()
    if not augment_average:
        return predict_normalized(model, store, pairs, batch_size)
    d, _ = store.rows(pairs)
    counts = store.n_variants[d]
    total = np.zeros(len(d))
    for v in range(int(counts.max(initial=1))):
        has = counts > v
        if has.any():
            sub = [p for p, h in zip(pairs, has) if h]
            total[has] += predict_normalized(model, store, sub, batch_size, variant=v)
    return total / counts


def predict(ckpt: Checkpoint, drugs: Mapping[str, DrugRecord], cells: Mapping[str, CellRecord],
            genes: Sequence[str], pairs, augment_average: bool = False) -> np.ndarray:
    """Log-IC50 predictions for ``pairs`` (drug_id, cell_id)."""
    store = checkpoint_features(ckpt, drugs, cells, genes)
    return ckpt.label_transform.invert(predict_normalized_ckpt(ckpt, store, pairs, augment_average))


def stable_mean(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Mean computed as an offset from the first member, exact when all members agree."""
    base = rows[0]
    return base + np.mean([r - base for r in rows], axis=0)


def ensemble_predict(checkpoints: Sequence[Checkpoint], drugs, cells, genes, pairs,
                     augment_average: bool = False) -> np.ndarray:
    """Average member predictions on the normalized scale, then invert.

    Members fitted with different label transforms cannot share a normalized
    scale; their predictions are averaged after inversion instead.
    """
    if not checkpoints:
        raise EmptyEnsemble("ensemble needs at least one checkpoint")
    first = checkpoints[0]
    if any(ck.vocab != first.vocab or ck.genes != first.genes for ck in checkpoints):
        raise VocabMismatch("ensemble members disagree on vocabulary or panel")
    stores: list[tuple[Checkpoint, FeatureStore]] = []
    for ck in checkpoints:
        store = next((s for other, s in stores if other.expression_transform == ck.expression_transform
                      and other.spec.max_len == ck.spec.max_len), None)
        stores.append((ck, store or checkpoint_features(ck, drugs, cells, genes)))
    normalized = [predict_normalized_ckpt(ck, s, pairs, augment_average) for ck, s in stores]
    if all(ck.label_transform == first.label_transform for ck in checkpoints):
        return first.label_transform.invert(stable_mean(normalized))
    return stable_mean([ck.label_transform.invert(z) for ck, z in zip(checkpoints, normalized)])


@dataclass
class FoldOutcome:
    fold: int
    report: MetricReport
    best: Checkpoint


@dataclass
class CrossValidation:
    folds: list[FoldOutcome]

    def summary(self, metric: str = "rmse") -> tuple[float, float]:
        return median_iqr([getattr(f.report, metric) for f in self.folds])


def cross_validate(kind: str, dataset: Dataset, plan: SplitPlan, cfg: TrainConfig,
                   spec_overrides: dict | None = None, fold_ids: Sequence[int] | None = None,
                   ensemble: bool = False) -> CrossValidation:
    """Train per fold and score the validation pairs (best checkpoint, or the kept ensemble)."""
    outcomes = []
    for k in (range(len(plan.folds)) if fold_ids is None else fold_ids):
        fold = plan.folds[k]
        data = FoldData.prepare(dataset, fold.train, fold.validation)
        spec: ModelSpec = data.spec(kind, **(spec_overrides or {}))
        result = train(spec, data, cfg)
        keys = [p.key for p in data.val_pairs]
        truth = np.array([p.label for p in data.val_pairs])
        members = result.checkpoints if ensemble else [result.best]
        pred = ensemble_predict(members, dataset.drugs, dataset.cells, dataset.genes, keys)
        outcomes.append(FoldOutcome(k, metrics(pred, truth, data.label_transform), result.best))
    return CrossValidation(outcomes)
