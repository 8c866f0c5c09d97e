"""Strict (entity-disjoint) and lenient (pair-disjoint) cross-validation plans.

Percentages are rounded down everywhere. Strict validation sets are drawn
independently for each fold, so folds may overlap one another.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

Pair = tuple[str, str]


class TooFewEntities(ValueError):
    pass


class TooFewPairs(ValueError):
    pass


class PlanFormatError(ValueError):
    pass


@dataclass
class Fold:
    train: list[Pair]
    validation: list[Pair]
    validation_drugs: list[str] = field(default_factory=list)
    validation_cells: list[str] = field(default_factory=list)


@dataclass
class SplitPlan:
    protocol: str
    seed: int
    test: list[Pair]
    folds: list[Fold]
    test_drugs: list[str] = field(default_factory=list)
    test_cells: list[str] = field(default_factory=list)
    discarded: int = 0

    def summary(self) -> dict[str, int | str]:
        out: dict[str, int | str] = {
            "protocol": self.protocol,
            "rounding": "floor",
            "folds": len(self.folds),
            "test_pairs": len(self.test),
        }
        if self.protocol == "strict":
            out["test_drugs"] = len(self.test_drugs)
            out["test_cells"] = len(self.test_cells)
        if self.folds:
            out["train_pairs_fold0"] = len(self.folds[0].train)
            out["validation_pairs_fold0"] = len(self.folds[0].validation)
        out["discarded_pairs_fold0"] = self.discarded
        return out

    def to_text(self) -> str:
        lines = [f"pacc-split {FORMAT_VERSION}", f"protocol = {self.protocol}", f"seed = {self.seed}",
                 "rounding = floor", f"folds = {len(self.folds)}"]
        if self.protocol == "strict":
            lines.append("test_drugs = " + ",".join(self.test_drugs))
            lines.append("test_cells = " + ",".join(self.test_cells))
            for k, fold in enumerate(self.folds):
                lines.append(f"fold{k}_drugs = " + ",".join(fold.validation_drugs))
                lines.append(f"fold{k}_cells = " + ",".join(fold.validation_cells))
        else:
            lines.extend(f"test\t{d}\t{c}" for d, c in self.test)
            for k, fold in enumerate(self.folds):
                lines.extend(f"fold{k}\t{d}\t{c}" for d, c in fold.validation)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, pairs: Iterable[Pair] | None = None) -> "SplitPlan":
        """Parse a plan. Strict plans store ids only and need the observed ``pairs``."""
        lines = text.splitlines()
        if not lines or lines[0] != f"pacc-split {FORMAT_VERSION}":
            raise PlanFormatError("not a split plan (bad magic or version)")
        meta: dict[str, str] = {}
        rows: list[list[str]] = []
        for line in lines[1:]:
            if "\t" in line:
                rows.append(line.split("\t"))
            else:
                key, _, value = line.partition(" = ")
                meta[key] = value
        protocol, seed, n_folds = meta["protocol"], int(meta["seed"]), int(meta["folds"])
        ids = lambda key: [x for x in meta.get(key, "").split(",") if x]  # noqa: E731
        if protocol == "strict":
            if pairs is None:
                raise PlanFormatError("a strict plan needs the observed pairs to rebuild its folds")
            return _strict_from_ids(sorted(set(map(tuple, pairs))), seed, ids("test_drugs"), ids("test_cells"),
                                    [(ids(f"fold{k}_drugs"), ids(f"fold{k}_cells")) for k in range(n_folds)])
        if protocol != "lenient":
            raise PlanFormatError(f"unknown protocol {protocol!r}")
        test = [(d, c) for tag, d, c in rows if tag == "test"]
        vals = [[(d, c) for tag, d, c in rows if tag == f"fold{k}"] for k in range(n_folds)]
        return _lenient_from_parts(seed, test, vals)


def _quota(n: int, percent: int) -> int:
    return n * percent // 100


def _sorted_unique(ids: Iterable[str]) -> list[str]:
    return sorted(set(ids))


def strict_split(drug_ids: Sequence[str], cell_ids: Sequence[str], pairs: Iterable[Pair], seed: int,
                 n_folds: int = 25, test_percent: int = 10, val_percent: int = 4) -> SplitPlan:
    """Hold out drugs and cells so that nothing in test or validation was seen in training.

    Test takes floor(10%) of drugs and of cells; each fold then draws floor(4%)
    of the remaining drugs and cells for validation. Pairs that mix a
    validation entity with a training entity belong to neither side.
    """
    drugs, cells = _sorted_unique(drug_ids), _sorted_unique(cell_ids)
    n_test_d, n_test_c = _quota(len(drugs), test_percent), _quota(len(cells), test_percent)
    n_val_d = _quota(len(drugs) - n_test_d, val_percent)
    n_val_c = _quota(len(cells) - n_test_c, val_percent)
    if min(n_test_d, n_test_c, n_val_d, n_val_c) == 0:
        raise TooFewEntities(
            f"{len(drugs)} drugs and {len(cells)} cells give an empty test or validation quota "
            "(floor rounding needs at least 27 of each)")
    rng = np.random.Generator(np.random.Philox(seed))
    drug_perm = [drugs[i] for i in rng.permutation(len(drugs))]
    cell_perm = [cells[i] for i in rng.permutation(len(cells))]
    test_drugs, pool_drugs = sorted(drug_perm[:n_test_d]), sorted(drug_perm[n_test_d:])
    test_cells, pool_cells = sorted(cell_perm[:n_test_c]), sorted(cell_perm[n_test_c:])
    fold_ids = []
    for _ in range(n_folds):
        vd = sorted(pool_drugs[i] for i in rng.permutation(len(pool_drugs))[:n_val_d])
        vc = sorted(pool_cells[i] for i in rng.permutation(len(pool_cells))[:n_val_c])
        fold_ids.append((vd, vc))
    return _strict_from_ids(sorted(set(map(tuple, pairs))), seed, test_drugs, test_cells, fold_ids)


def _strict_from_ids(pairs: list[Pair], seed: int, test_drugs, test_cells, fold_ids) -> SplitPlan:
    td, tc = set(test_drugs), set(test_cells)
    test = [p for p in pairs if p[0] in td and p[1] in tc]
    pool = [p for p in pairs if p[0] not in td and p[1] not in tc]
    folds = []
    discarded = 0
    for k, (vd, vc) in enumerate(fold_ids):
        vds, vcs = set(vd), set(vc)
        train, val = [], []
        for p in pool:
            in_d, in_c = p[0] in vds, p[1] in vcs
            if in_d and in_c:
                val.append(p)
            elif not in_d and not in_c:
                train.append(p)
            elif k == 0:
                discarded += 1
        folds.append(Fold(train, val, list(vd), list(vc)))
    return SplitPlan("strict", seed, test, folds, list(test_drugs), list(test_cells), discarded)


def lenient_split(pairs: Iterable[Pair], seed: int, n_folds: int = 5, test_percent: int = 10) -> SplitPlan:
    """Shuffle pairs, hold out floor(10%) for test and cut the rest into folds."""
    pairs = sorted(set(map(tuple, pairs)))
    if len(pairs) < 10:
        raise TooFewPairs(f"lenient split needs at least 10 pairs, got {len(pairs)}")
    rng = np.random.Generator(np.random.Philox(seed))
    shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
    n_test = _quota(len(pairs), test_percent)
    rest = shuffled[n_test:]
    vals = [[rest[i] for i in idx] for idx in np.array_split(np.arange(len(rest)), n_folds)]
    return _lenient_from_parts(seed, shuffled[:n_test], vals)


def _lenient_from_parts(seed: int, test: list[Pair], vals: list[list[Pair]]) -> SplitPlan:
    folds = []
    for k, val in enumerate(vals):
        train = [p for j, other in enumerate(vals) if j != k for p in other]
        folds.append(Fold(train, list(val)))
    return SplitPlan("lenient", seed, list(test), folds)
