"""Drug, cell and pair records, and TSV ingestion of expression and responses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..chem import Fingerprint, canonical_form, enumerate_smiles, morgan_fingerprint, parse_smiles, tokenize


class DataError(ValueError):
    pass


class UnknownDrugId(DataError):
    pass


class UnknownCellId(DataError):
    pass


class DuplicatePair(DataError):
    pass


class MissingValue(DataError):
    pass


class MissingPanelGene(DataError):
    pass


class MalformedTable(DataError):
    pass


@dataclass(frozen=True)
class DrugRecord:
    drug_id: str
    smiles: str
    canonical: str
    variants: tuple[tuple[str, ...], ...]  # token lists, canonical first
    fingerprint: Fingerprint
    top_genes: tuple[str, ...] = ()

    @property
    def n_variants(self) -> int:
        return len(self.variants)

    def variant_smiles(self) -> list[str]:
        return ["".join(v) for v in self.variants]


def build_drug_record(drug_id: str, smiles: str, n_variants: int = 32, seed: int = 0,
                      fp_width: int = 512, radius: int = 2, top_genes: Sequence[str] = ()) -> DrugRecord:
    """Parse ``smiles`` and store its canonical form plus up to n-1 randomized variants."""
    g = parse_smiles(smiles)
    canon = canonical_form(g)
    strings = [canon]
    if n_variants > 1:
        for s in enumerate_smiles(g, n=n_variants, seed=seed):
            if s != canon and len(strings) < n_variants:
                strings.append(s)
    return DrugRecord(
        drug_id=drug_id,
        smiles=smiles,
        canonical=canon,
        variants=tuple(tuple(tokenize(s)) for s in strings),
        fingerprint=morgan_fingerprint(g, radius, fp_width),
        top_genes=tuple(top_genes),
    )


@dataclass(frozen=True)
class CellRecord:
    cell_id: str
    expression: np.ndarray = field(compare=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.expression)):
            raise MissingValue(f"cell {self.cell_id}: non-finite expression value")


@dataclass(frozen=True)
class PairSample:
    drug_id: str
    cell_id: str
    label: float
    normalized: float | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.drug_id, self.cell_id)


def read_expression_tsv(path, panel: Sequence[str] | None = None) -> tuple[list[str], dict[str, CellRecord]]:
    """Read a ``cell_id<TAB>gene...`` matrix; returns (genes, cells).

    With ``panel`` the columns are reordered to the panel and every panel
    gene must be present. Empty or non-numeric cells are rejected.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) < 2 or header[0] != "cell_id":
            raise MalformedTable(f"{path}:1: expected header 'cell_id<TAB>gene...'")
        genes = header[1:]
        if len(set(genes)) != len(genes):
            raise MalformedTable(f"{path}:1: duplicate gene column")
        if panel is None:
            cols = list(range(len(genes)))
            out_genes = list(genes)
        else:
            where = {g: i for i, g in enumerate(genes)}
            missing = [g for g in panel if g not in where]
            if missing:
                raise MissingPanelGene(f"{path}: panel genes absent from the matrix: {', '.join(missing[:5])}")
            cols = [where[g] for g in panel]
            out_genes = list(panel)
        cells: dict[str, CellRecord] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise MalformedTable(f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}")
            cell = parts[0]
            if cell in cells:
                raise MalformedTable(f"{path}:{lineno}: duplicate cell id {cell!r}")
            try:
                values = np.array([float(parts[1 + c]) for c in cols])
            except ValueError as exc:
                raise MissingValue(f"{path}:{lineno}: {exc}") from exc
            if not np.all(np.isfinite(values)):
                raise MissingValue(f"{path}:{lineno}: missing or non-finite expression value")
            cells[cell] = CellRecord(cell, values)
    return out_genes, cells


def read_responses_tsv(path) -> list[tuple[str, str, float, int]]:
    """Read ``drug_id<TAB>cell_id<TAB>log_ic50`` rows as (drug, cell, label, line)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["drug_id", "cell_id", "log_ic50"]:
            raise MalformedTable(f"{path}:1: expected header 'drug_id<TAB>cell_id<TAB>log_ic50'")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedTable(f"{path}:{lineno}: expected 3 columns")
            try:
                label = float(parts[2])
            except ValueError as exc:
                raise MalformedTable(f"{path}:{lineno}: {exc}") from exc
            rows.append((parts[0], parts[1], label, lineno))
    return rows


def write_responses_tsv(path, pairs: Iterable[PairSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\tcell_id\tlog_ic50\n")
        for p in pairs:
            fh.write(f"{p.drug_id}\t{p.cell_id}\t{float(p.label)!r}\n")


def write_expression_tsv(path, genes: Sequence[str], cells: Mapping[str, CellRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cell_id\t" + "\t".join(genes) + "\n")
        for cid, rec in cells.items():
            fh.write(cid + "\t" + "\t".join(repr(float(v)) for v in rec.expression) + "\n")


def pair_samples(drugs: Iterable[str], cells: Iterable[str], responses: Iterable) -> list[PairSample]:
    """Turn observed (drug, cell, log_ic50[, line]) rows into pairs.

    Unobserved combinations simply produce no pair.
    """
    drugs, cells = set(drugs), set(cells)
    seen: set[tuple[str, str]] = set()
    out = []
    for n, row in enumerate(responses, start=1):
        drug, cell, label = row[:3]
        where = f"row {row[3] if len(row) > 3 else n}"
        if drug not in drugs:
            raise UnknownDrugId(f"{where}: unknown drug id {drug!r}")
        if cell not in cells:
            raise UnknownCellId(f"{where}: unknown cell id {cell!r}")
        if not math.isfinite(label):
            raise MissingValue(f"{where}: non-finite label")
        if (drug, cell) in seen:
            raise DuplicatePair(f"{where}: repeated pair ({drug}, {cell})")
        seen.add((drug, cell))
        out.append(PairSample(drug, cell, float(label)))
    return out
