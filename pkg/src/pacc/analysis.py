"""Attention interpretability: structure correlation and gene-set enrichment."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chem import Fingerprint, tanimoto
from .data import CellRecord, DrugRecord
from .models import ModelWithoutAttention
from .nn import ShapeMismatch
from .train import Checkpoint, checkpoint_features
from .train.metrics import pearson


class InsufficientCells(ValueError):
    pass


class CellSetMismatch(ValueError):
    pass


class EmptyUniverse(ValueError):
    pass


class NotInUniverse(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttentionProfile:
    drug_id: str
    cell_id: str
    tokens: tuple[str, ...]
    token_attention: np.ndarray  # valid tokens only, heads averaged
    gene_attention: np.ndarray


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    drug_id: str
    cells: tuple[str, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    n: int
    table: list[tuple[str, str, float, float]]  # (drug_a, drug_b, frobenius, tanimoto)

    @property
    def defined(self) -> bool:
        return not math.isnan(self.rho)


@dataclass(frozen=True)
class EnrichmentResult:
    set_id: str
    overlap: int
    set_size: int
    attended_size: int
    universe_size: int
    p_value: float
    adjusted_p: float


def collect_profiles(ckpt: Checkpoint, drugs: Mapping[str, DrugRecord], cells: Mapping[str, CellRecord],
                     genes: Sequence[str], drug_ids: Sequence[str] | None = None,
                     cell_ids: Sequence[str] | None = None, batch_size: int = 256) -> list[AttentionProfile]:
    """Eval-mode attention for every (drug, cell) pair, canonical SMILES only."""
    if not ckpt.spec.has_attention:
        raise ModelWithoutAttention(f"{ckpt.spec.kind} models emit no token attention")
    drug_ids = sorted(drugs) if drug_ids is None else list(drug_ids)
    cell_ids = sorted(cells) if cell_ids is None else list(cell_ids)
    store = checkpoint_features(ckpt, {d: drugs[d] for d in drug_ids}, {c: cells[c] for c in cell_ids}, genes)
    model = ckpt.model()
    keys = [(d, c) for d in drug_ids for c in cell_ids]
    dr, cr = store.rows(keys)
    out = []
    for start in range(0, len(keys), batch_size):
        sl = slice(start, start + batch_size)
        res = model.forward(store.batch(dr[sl], cr[sl]), "eval")
        token = res.smiles_attention.mean(axis=1)
        for row, (d, c) in enumerate(keys[sl]):
            toks = drugs[d].variants[0]
            out.append(AttentionProfile(d, c, toks, token[row, : len(toks)].copy(), res.gene_attention[row].copy()))
    return out


def _euclidean(rows: np.ndarray) -> np.ndarray:
    diff = rows[:, None, :] - rows[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def drug_distance_matrix(profiles: Iterable[AttentionProfile], drug_id: str, mode: str = "token") -> DistanceMatrix:
    """Pairwise L2 distances between one drug's per-cell attention profiles (cells sorted)."""
    mine = sorted((p for p in profiles if p.drug_id == drug_id), key=lambda p: p.cell_id)
    if len(mine) < 2:
        raise InsufficientCells(f"drug {drug_id} has {len(mine)} profiled cell(s); need at least 2")
    attr = {"token": "token_attention", "gene": "gene_attention"}[mode]
    rows = [getattr(p, attr) for p in mine]
    if len({r.shape for r in rows}) != 1:
        raise ShapeMismatch(f"drug {drug_id}: attention profiles differ in length")
    return DistanceMatrix(drug_id, tuple(p.cell_id for p in mine), _euclidean(np.stack(rows)))


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"matrices differ in shape: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt((d * d).sum()))


def attention_structure_correlation(profiles: Sequence[AttentionProfile], fingerprints: Mapping[str, Fingerprint],
                                    mode: str = "token", workers: int = 1) -> CorrelationResult:
    """Pearson correlation between attention-matrix distance and Tanimoto similarity.

    Every ordered drug pair counts, self-pairs included, so d drugs give d**2
    rows. A degenerate table (zero variance) yields ``rho = nan``.
    """
    drugs = sorted({p.drug_id for p in profiles})
    if len(drugs) < 2:
        raise ValueError("need at least two drugs")

    def one(d):
        return drug_distance_matrix(profiles, d, mode)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(one, drugs))
    else:
        mats = [one(d) for d in drugs]
    cells = mats[0].cells
    for m in mats[1:]:
        if m.cells != cells:
            raise CellSetMismatch(f"drug {m.drug_id} was profiled on a different cell set")
    table = []
    for a in mats:
        for b in mats:
            table.append((a.drug_id, b.drug_id, frobenius_distance(a.matrix, b.matrix),
                          tanimoto(fingerprints[a.drug_id], fingerprints[b.drug_id])))
    fro = np.array([row[2] for row in table])
    tan = np.array([row[3] for row in table])
    return CorrelationResult(pearson(fro, tan), len(table), table)


def aggregate_gene_attention(profiles: Sequence[AttentionProfile], panel: Sequence[str]) -> list[str]:
    """Genes whose mean attention is at least 1/K (K = panel size), in panel order."""
    K = len(panel)
    if K < 1:
        raise ValueError("empty panel")
    rows = np.stack([p.gene_attention for p in profiles]).astype(np.float64)
    if rows.shape[1] != K:
        raise ShapeMismatch(f"gene attention has {rows.shape[1]} entries, panel has {K}")
    # offset mean: exact when all profiles agree, so uniform attention stays at 1/K
    mean = rows[0] + (rows - rows[0]).mean(axis=0)
    return [g for g, a in zip(panel, mean) if not a < 1.0 / K]


def hypergeometric_sf(k: int, N: int, K: int, n: int) -> float:
    """P(X >= k) for X ~ Hypergeometric(population N, K successes, n draws), exactly."""
    if k <= 0:
        return 1.0
    hi = min(K, n)
    if k > hi:
        return 0.0
    tail = sum(math.comb(K, i) * math.comb(N - K, n - i) for i in range(k, hi + 1))
    return float(Fraction(tail, math.comb(N, n)))


def benjamini_hochberg(pvalues: Sequence[float]) -> list[float]:
    m = len(pvalues)
    order = sorted(range(m), key=lambda i: pvalues[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, pvalues[i] * (m / rank))  # factor >= 1 keeps adjusted >= raw under rounding
        adjusted[i] = running
    return adjusted


def ora_enrichment(attended: Iterable[str], gene_sets: Mapping[str, Iterable[str]],
                   universe: Iterable[str]) -> list[EnrichmentResult]:
    """Hypergeometric over-representation per gene set with BH adjustment, sorted by adjusted p."""
    universe = set(universe)
    if not universe:
        raise EmptyUniverse("the gene universe is empty")
    attended = set(attended)
    if not attended <= universe:
        raise NotInUniverse(f"{len(attended - universe)} attended gene(s) are outside the universe")
    N, n = len(universe), len(attended)
    raw = []
    for set_id, genes in gene_sets.items():
        members = set(genes) & universe
        k = len(members & attended)
        raw.append((set_id, k, len(members), hypergeometric_sf(k, N, len(members), n)))
    adjusted = benjamini_hochberg([r[3] for r in raw])
    results = [EnrichmentResult(sid, k, size, n, N, p, adj) for (sid, k, size, p), adj in zip(raw, adjusted)]
    return sorted(results, key=lambda r: (r.adjusted_p, r.p_value, r.set_id))


def read_gmt(path) -> dict[str, list[str]]:
    """Read ``set_id<TAB>description<TAB>gene...`` lines."""
    sets: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected set_id, description and genes")
            sets[parts[0]] = [g for g in parts[2:] if g]
    return sets


def write_profiles_tsv(path, profiles: Sequence[AttentionProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\tcell_id\ttokens\ttoken_attention\tgene_attention\n")
        for p in profiles:
            fh.write("\t".join([
                p.drug_id, p.cell_id, " ".join(p.tokens),
                ",".join(repr(float(x)) for x in p.token_attention),
                ",".join(repr(float(x)) for x in p.gene_attention),
            ]) + "\n")


def read_profiles_tsv(path) -> list[AttentionProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            d, c, toks, ta, ga = line.split("\t")
            out.append(AttentionProfile(d, c, tuple(toks.split(" ")), np.array([float(x) for x in ta.split(",")]),
                                        np.array([float(x) for x in ga.split(",")])))
    return out


def write_correlation_tsv(path, result: CorrelationResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# pearson\t{result.rho!r}\n# n\t{result.n}\n")
        fh.write("drug_a\tdrug_b\tfrobenius\ttanimoto\n")
        for a, b, f, t in result.table:
            fh.write(f"{a}\t{b}\t{f!r}\t{t!r}\n")


def write_enrichment_tsv(path, results: Sequence[EnrichmentResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("set_id\toverlap\tset_size\tattended_size\tuniverse_size\tp_value\tadjusted_p\n")
        for r in results:
            fh.write(f"{r.set_id}\t{r.overlap}\t{r.set_size}\t{r.attended_size}\t{r.universe_size}\t"
                     f"{r.p_value!r}\t{r.adjusted_p!r}\n")
