"""Training loop with periodic validation and best-k checkpoint retention."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..chem import Vocabulary
from ..data import (
    Dataset,
    ExpressionTransform,
    FeatureStore,
    LabelTransform,
    PairSample,
    build_features,
    fit_transforms,
    make_batches,
)
from ..models import Model, ModelSpec
from ..nn import AdamState, LearningRateSchedule, RngStream, adam_step, mse_loss
from .checkpoint import Checkpoint

logger = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite training loss {value} at step {step}")
        self.step = step


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int = 500_000
    batch_size: int = 2048
    eval_interval: int = 1000
    checkpoint_keep: int = 20
    seed: int = 0
    augment: bool = True
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_steps: int = 10_000
    eval_batch_size: int = 512

    def __post_init__(self):
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        for name in ("batch_size", "eval_interval", "checkpoint_keep", "lr_decay_steps", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.max_steps and self.eval_interval > self.max_steps:
            raise ConfigError("eval_interval must not exceed max_steps")
        if not (self.lr > 0 and 0 < self.lr_decay <= 1):
            raise ConfigError("lr must be positive and lr_decay in (0, 1]")

    @property
    def schedule(self) -> LearningRateSchedule:
        return LearningRateSchedule(self.lr, self.lr_decay, self.lr_decay_steps)

    @classmethod
    def from_mapping(cls, raw: dict) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in types:
                raise ConfigError(f"unknown training field {key!r}")
            if isinstance(value, str):
                if types[key] == "bool":
                    if value not in ("True", "False", "true", "false", "1", "0"):
                        raise ConfigError(f"{key} must be a boolean, got {value!r}")
                    value = value in ("True", "true", "1")
                elif types[key] == "float":
                    value = float(value)
                else:
                    value = int(value)
            kwargs[key] = value
        return cls(**kwargs)


@dataclass
class FoldData:
    """Everything one training run needs, with transforms fitted on its train pairs."""

    store: FeatureStore
    train_pairs: list[PairSample]
    val_pairs: list[PairSample]
    label_transform: LabelTransform
    expression_transform: ExpressionTransform
    vocab: Vocabulary
    genes: list[str]
    max_len: int

    @classmethod
    def prepare(cls, dataset: Dataset, train_keys, val_keys) -> "FoldData":
        train = dataset.select(train_keys)
        val = dataset.select(val_keys)
        labels, expr = fit_transforms(dataset, train)
        store = build_features(dataset.drugs, dataset.cells, expr, dataset.vocab, dataset.max_len)
        return cls(store, train, val, labels, expr, dataset.vocab, dataset.genes, dataset.max_len)

    def spec(self, kind: str, **overrides) -> ModelSpec:
        return ModelSpec(kind, vocab_size=len(self.vocab), n_genes=len(self.genes), max_len=self.max_len,
                         fp_width=self.store.fingerprints.shape[1], **overrides)


@dataclass
class HistoryRow:
    step: int
    train_loss: float
    val_rmse: float


@dataclass
class TrainResult:
    checkpoints: list[Checkpoint]  # best first
    history: list[HistoryRow] = field(default_factory=list)
    final: Checkpoint | None = None

    @property
    def best(self) -> Checkpoint:
        return self.checkpoints[0]

    def history_csv(self) -> str:
        rows = ["step,train_loss,val_rmse"]
        rows += [f"{h.step},{h.train_loss!r},{h.val_rmse!r}" for h in self.history]
        return "\n".join(rows) + "\n"


def predict_normalized(model: Model, store: FeatureStore, pairs, batch_size: int = 512,
                       variant: int = 0) -> np.ndarray:
    """Eval-mode predictions on the normalized scale for one SMILES variant."""
    d, c = store.rows(pairs)
    out = np.empty(len(d), dtype=np.float64)
    v = np.full(len(d), variant, dtype=np.int64)
    for start in range(0, len(d), batch_size):
        sl = slice(start, start + batch_size)
        out[sl] = model.forward(store.batch(d[sl], c[sl], v[sl]), "eval").values
    return out


def train(spec: ModelSpec, fold: FoldData, cfg: TrainConfig, threads: int = 1) -> TrainResult:
    """Fit ``spec`` on ``fold`` and keep the ``checkpoint_keep`` best checkpoints by validation RMSE."""
    if spec.vocab_size != len(fold.vocab) or spec.n_genes != len(fold.genes):
        raise ConfigError("model spec does not match the fold's vocabulary or gene panel")
    if not fold.val_pairs:
        raise ConfigError("training needs at least one validation pair")
    model = Model(spec, seed=cfg.seed)
    root = RngStream(cfg.seed)
    batch_rng, drop_rng = root.child("batches"), root.child("dropout")
    state = AdamState(schedule=cfg.schedule)
    targets = fold.label_transform.apply([p.label for p in fold.train_pairs])
    val_truth = fold.label_transform.apply([p.label for p in fold.val_pairs])

    def snapshot(step: int, val: float) -> Checkpoint:
        return Checkpoint.from_model(model, step, val, cfg.seed, fold.label_transform, fold.expression_transform,
                                     fold.vocab, fold.genes, threads)

    def validate() -> float:
        pred = predict_normalized(model, fold.store, fold.val_pairs, cfg.eval_batch_size)
        return float(np.sqrt(np.mean((pred - val_truth) ** 2)))

    if cfg.max_steps == 0:
        ck = snapshot(0, validate())
        return TrainResult([ck], [], ck)

    kept: list[Checkpoint] = []
    history: list[HistoryRow] = []
    losses: list[float] = []
    step = 0
    while step < cfg.max_steps:
        progressed = False
        for batch, y in make_batches(fold.store, fold.train_pairs, targets, cfg.batch_size, cfg.augment, batch_rng):
            if len(batch) < 2:
                continue  # batch norm needs two rows
            progressed = True
            leaves = model.leaves(requires_grad=True)
            loss = mse_loss(model.forward(batch, "train", drop_rng, leaves).prediction, y)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(step, value)
            loss.backward()
            adam_step(model.params, {k: t.grad for k, t in leaves.items()}, state)
            step += 1
            losses.append(value)
            if step % cfg.eval_interval == 0 or step == cfg.max_steps:
                val = validate()
                history.append(HistoryRow(step, float(np.mean(losses)), val))
                losses.clear()
                logger.info("step %d train_loss %.5f val_rmse %.5f", step, history[-1].train_loss, val)
                kept.append(snapshot(step, val))
                kept.sort(key=lambda ck: (ck.val_rmse, ck.step))
                del kept[cfg.checkpoint_keep :]
            if step >= cfg.max_steps:
                break
        if not progressed:
            raise ConfigError("no training batch has two or more rows; add pairs or raise batch_size")
    final = snapshot(step, history[-1].val_rmse if history else math.nan)
    return TrainResult(kept, history, final)
