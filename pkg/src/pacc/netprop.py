"""Gene-panel selection by diffusing drug-target weights over a PPI network.

Each drug starts from a weight vector with its targets at ``W`` and all other
genes at a small background ``eps``; the vector is smoothed by iterating

    w_{t+1} = alpha * w_t @ A' + (1 - alpha) * w_0,   A' = D^-1/2 A D^-1/2

until the max-norm step falls below ``tol``. The top-k genes per drug are
pooled into the panel used to profile every cell line.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class NetworkError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NegativeWeight(NetworkError):
    pass


class SelfLoop(NetworkError):
    pass


class MalformedRow(NetworkError):
    pass


class SingularSystem(ValueError):
    pass


class KTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PpiNetwork:
    genes: tuple[str, ...]
    adjacency: sp.csr_matrix

    @property
    def n(self) -> int:
        return len(self.genes)

    @property
    def index(self) -> dict[str, int]:
        return {g: i for i, g in enumerate(self.genes)}

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


@dataclass
class PropagationResult:
    weights: np.ndarray
    iterations: int
    final_residual: float
    converged: bool


@dataclass
class GenePanel:
    genes: list[str]
    per_drug_topk: dict[str, list[str]]
    skipped: list[str] = field(default_factory=list)


def load_ppi(edges: Iterable) -> PpiNetwork:
    """Build a symmetric network from ``(gene_a, gene_b, weight)`` rows.

    Node order is first appearance; repeated undirected edges keep the
    largest weight.
    """
    return _build_network(enumerate(edges, start=1))


def _build_network(numbered_rows) -> PpiNetwork:
    index: dict[str, int] = {}
    best: dict[tuple[int, int], float] = {}
    for lineno, row in numbered_rows:
        try:
            a, b, w = row
            w = float(w)
        except (TypeError, ValueError) as exc:
            raise MalformedRow(f"expected (gene_a, gene_b, weight), got {row!r}", lineno) from exc
        if not a or not b:
            raise MalformedRow("empty gene id", lineno)
        if not np.isfinite(w):
            raise MalformedRow(f"non-finite weight {w}", lineno)
        if w < 0:
            raise NegativeWeight(f"negative weight {w} on {a}-{b}", lineno)
        if a == b:
            raise SelfLoop(f"self-loop on {a}", lineno)
        i = index.setdefault(a, len(index))
        j = index.setdefault(b, len(index))
        key = (min(i, j), max(i, j))
        best[key] = max(best.get(key, w), w)
    n = len(index)
    if best:
        ij = np.array(list(best.keys()), dtype=np.int64)
        w = np.array(list(best.values()), dtype=np.float64)
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        adj = sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))
    else:
        adj = sp.csr_matrix((n, n), dtype=np.float64)
    return PpiNetwork(tuple(index), adj)


def read_edge_list(path) -> PpiNetwork:
    """Read a ``gene_a<TAB>gene_b<TAB>weight`` file (no header; ``#`` comments)."""
    def rows():
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise MalformedRow(f"expected 3 tab-separated columns in {path}", lineno)
                yield lineno, parts

    return _build_network(rows())


def normalize_adjacency(net: PpiNetwork) -> sp.csr_matrix:
    """Symmetric normalization D^-1/2 A D^-1/2 (zero rows for isolated nodes)."""
    deg = net.degree
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    d = sp.diags(inv_sqrt)
    return (d @ net.adjacency @ d).tocsr()


def initial_weights(net: PpiNetwork, targets: Iterable[str], target_weight: float = 1.0,
                    background: float = 1e-5) -> np.ndarray:
    w = np.full(net.n, background, dtype=np.float64)
    index = net.index
    missing = 0
    for gene in targets:
        if gene in index:
            w[index[gene]] = target_weight
        else:
            missing += 1
    if missing:
        logger.warning("%d target gene(s) not in the network were skipped", missing)
    return w


def propagate(net: PpiNetwork, w0: np.ndarray, alpha: float = 0.7, tol: float = 1e-6,
              max_iter: int = 10_000, normalized: sp.csr_matrix | None = None) -> PropagationResult:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a_norm = normalize_adjacency(net) if normalized is None else normalized
    # row-vector form w @ A' computed as A'^T w
    a_t = a_norm.T.tocsr()
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (net.n,):
        raise ValueError(f"w0 has shape {w0.shape}, expected ({net.n},)")
    restart = (1.0 - alpha) * w0
    w = w0
    residual = np.inf
    for it in range(1, max_iter + 1):
        new = alpha * (a_t @ w) + restart
        residual = float(np.max(np.abs(new - w))) if net.n else 0.0
        w = new
        if residual < tol:
            return PropagationResult(w, it, residual, True)
    logger.warning("propagation did not converge in %d iterations (residual %.3g)", max_iter, residual)
    return PropagationResult(w, max_iter, residual, False)


def solve_fixed_point(net: PpiNetwork, w0: np.ndarray, alpha: float = 0.7) -> np.ndarray:
    """Direct dense solve of w (I - alpha A') = (1 - alpha) w0."""
    a_norm = normalize_adjacency(net).toarray()
    system = np.eye(net.n) - alpha * a_norm.T
    if alpha >= 1.0 and np.linalg.matrix_rank(system) < net.n:
        raise SingularSystem("fixed-point system is singular at alpha = 1")
    try:
        return np.linalg.solve(system, (1.0 - alpha) * np.asarray(w0, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def top_k_genes(weights: np.ndarray, genes, k: int = 20) -> list[str]:
    """The k heaviest genes, ties broken by gene id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(genes):
        raise KTooLarge(f"k={k} exceeds the {len(genes)} genes available")
    order = sorted(range(len(genes)), key=lambda i: (-weights[i], genes[i]))
    return [genes[i] for i in order[:k]]


def build_panel(net: PpiNetwork, target_map: Mapping[str, Iterable[str]], alpha: float = 0.7,
                k: int = 20, tol: float = 1e-6, max_iter: int = 10_000,
                workers: int = 1) -> GenePanel:
    """Propagate per drug and pool the top-k genes into a sorted panel.

    Drugs whose targets all fall outside the network are skipped and listed in
    ``GenePanel.skipped``.
    """
    a_norm = normalize_adjacency(net)
    index = net.index
    drugs = sorted(target_map)
    usable, skipped = [], []
    for drug in drugs:
        targets = list(target_map[drug])
        if not targets:
            raise ValueError(f"drug {drug!r} has no targets")
        if any(t in index for t in targets):
            usable.append(drug)
        else:
            skipped.append(drug)
            logger.warning("drug %s: no targets in the network, skipped", drug)

    def run(drug):
        w0 = initial_weights(net, target_map[drug])
        res = propagate(net, w0, alpha, tol, max_iter, normalized=a_norm)
        return top_k_genes(res.weights, net.genes, k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lists = list(pool.map(run, usable))
    else:
        lists = [run(d) for d in usable]
    per_drug = dict(zip(usable, lists))
    panel = sorted({g for genes in lists for g in genes})
    return GenePanel(panel, per_drug, skipped)


def read_target_map(path) -> dict[str, list[str]]:
    """Read ``drug_id<TAB>gene,gene,...`` rows."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise MalformedRow(f"expected drug_id<TAB>targets in {path}", lineno)
            if lineno == 1 and parts[0] == "drug_id":
                continue
            out[parts[0]] = [g for g in parts[1].split(",") if g]
    return out


def write_panel(path, panel: GenePanel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(g + "\n" for g in panel.genes)


def write_topk(path, panel: GenePanel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\ttop_genes\n")
        for drug, genes in panel.per_drug_topk.items():
            fh.write(f"{drug}\t{','.join(genes)}\n")
