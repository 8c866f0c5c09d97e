"""Small synthetic corpora for tests, scripts and demos.

Everything is generated from a seed; nothing here resembles real assay data
beyond its shape.
"""
from __future__ import annotations

import numpy as np

from .chem import morgan_fingerprint, parse_smiles
from .data import CellRecord

DRUG_LIKE = (
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccc2c(c1)cccc2",
    "O=C(O)CCc1ccccc1",
    "Nc1ccc(cc1)S(=O)(=O)N",
    "CCN(CC)CCOC(=O)c1ccc(N)cc1",
    "C1CCC(CC1)NC(=O)N",
    "OC1=CC=CC=C1",
    "Clc1ccc(Cl)cc1",
    "CC(=O)Nc1ccc(O)cc1",
    "C#CCO",
    "[NH4+].[Cl-]",
    "CC[C@H](N)C(=O)O",
    "O=C1NC(=O)C=C1",
    "c1ccncc1",
    "c1cc[nH]c1",
    "FC(F)(F)c1ccccc1",
    "COc1ccc2[nH]cc(CCN)c2c1",
    "CN1CCC[C@H]1c1cccnc1",
    "OC(=O)C1=CC=CC=C1O",
    "CC12CCC3C(CCC4=CC(=O)CCC34C)C1CCC2O",
    "Brc1ccccc1I",
    "S=C(N)N",
    "CC(C)(C)OC(=O)N",
    "C1=CC2=CC=CC=CC2=C1",
    "N#Cc1ccccc1",
    "OCC(O)CO",
    "CS(=O)C",
    "[O-][N+](=O)c1ccccc1",
    "CCCCCCCC(=O)O",
    "C1CC1C(=O)O",
)

_ORGANIC = ("C", "C", "C", "C", "N", "O", "S", "F", "Cl", "Br")
_TERMINAL = {"F", "Cl", "Br"}


def random_smiles(rng: np.random.Generator, max_atoms: int = 14) -> str:
    """A random, syntactically valid SMILES with branches, rings and fragments."""
    n_atoms = int(rng.integers(1, max_atoms + 1))
    parts: list[str] = []
    open_rings: list[tuple[int, int]] = []  # (label, atom position)
    depth = 0
    next_label = 1
    for i in range(n_atoms):
        if i and rng.random() < 0.08 and depth == 0 and not open_rings:
            parts.append(".")
        elif i and rng.random() < 0.15:
            parts.append(str(rng.choice(["=", "#", "-"])))
        if rng.random() < 0.1:
            atom = str(rng.choice(["[NH4+]", "[O-]", "[13CH3]", "[nH]", "[C@@H]", "[Na+]"]))
        elif rng.random() < 0.15:
            atom = "c1ccccc1"
        else:
            atom = str(rng.choice(_ORGANIC))
        parts.append(atom)
        terminal = atom in _TERMINAL or atom.startswith("[N") or atom.startswith("[O")
        if not terminal and i >= 2 and open_rings and rng.random() < 0.3:
            label, pos = open_rings.pop()
            if pos < i - 1:
                parts.append(_label(label))
            else:
                open_rings.append((label, pos))
        elif not terminal and rng.random() < 0.15 and len(open_rings) < 3 and "c1" not in atom:
            open_rings.append((next_label, i))
            parts.append(_label(next_label))
            next_label = next_label % 12 + 1
            if any(lab == next_label for lab, _ in open_rings):
                next_label = max(lab for lab, _ in open_rings) + 1
        if not terminal and rng.random() < 0.2 and i < n_atoms - 1:
            parts.append("(")
            depth += 1
        elif depth and rng.random() < 0.4 and parts[-1] != "(":
            parts.append(")")
            depth -= 1
    while open_rings:
        # close remaining rings on a fresh carbon chain to keep the string valid
        label, _ = open_rings.pop()
        parts.append("C" + _label(label))
    parts.append(")" * depth)
    text = "".join(parts)
    parse_smiles(text)
    return text


def _label(n: int) -> str:
    return str(n) if n < 10 else f"%{n:02d}"


def fuzz_corpus(n: int, seed: int = 0) -> list[str]:
    """``n`` SMILES: the drug-like list first, then random ones."""
    rng = np.random.Generator(np.random.Philox(seed))
    out = list(DRUG_LIKE[:n])
    while len(out) < n:
        try:
            out.append(random_smiles(rng))
        except ValueError:
            continue
    return out


def toy_response_data(n_drugs: int = 8, n_cells: int = 8, n_genes: int = 6, seed: int = 0,
                      density: float = 1.0):
    """Drugs, cells and log-IC50 rows with a learnable structure.

    The label mixes a fingerprint-derived drug score with a projection of the
    cell's expression, plus an interaction term. Returns
    (smiles map, genes, cells, response rows).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    pool = list(DRUG_LIKE)
    pick = rng.permutation(len(pool))
    smiles = {}
    for k in range(n_drugs):
        s = pool[pick[k]] if k < len(pool) else random_smiles(rng, 10)
        smiles[f"D{k:03d}"] = s
    genes = [f"G{k:03d}" for k in range(n_genes)]
    expr = rng.normal(size=(n_cells, n_genes))
    cells = {f"C{k:03d}": CellRecord(f"C{k:03d}", expr[k]) for k in range(n_cells)}
    w_gene = rng.normal(size=n_genes)
    drug_score = {}
    drug_vec = {}
    for d, s in smiles.items():
        fp = morgan_fingerprint(parse_smiles(s), 2, 64).to_array(np.float64)
        drug_score[d] = float(fp @ rng.normal(size=64)) / 4
        drug_vec[d] = rng.normal(size=n_genes) / np.sqrt(n_genes)
    rows = []
    for d in smiles:
        for k, c in enumerate(cells):
            if rng.random() > density:
                continue
            x = expr[k]
            y = drug_score[d] + 0.5 * float(x @ w_gene) / np.sqrt(n_genes) + float(x @ drug_vec[d])
            rows.append((d, c, float(y)))
    return smiles, genes, cells, rows


def random_ppi(n_genes: int, n_edges: int, seed: int = 0, prefix: str = "P"):
    """Random weighted edge rows over ``n_genes`` nodes (no self loops)."""
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    for _ in range(n_edges):
        a, b = rng.choice(n_genes, size=2, replace=False)
        rows.append((f"{prefix}{a:04d}", f"{prefix}{b:04d}", float(rng.uniform(0.05, 1.0))))
    return rows


def write_toy_corpus(outdir, n_drugs: int = 30, n_cells: int = 30, n_genes: int = 12, seed: int = 0,
                     density: float = 0.9) -> dict[str, str]:
    """Write a complete toy input set (SMILES, expression, responses, PPI, targets, gene sets).

    Returns the written paths keyed by role.
    """
    from pathlib import Path

    from .chem.io import write_smiles_tsv
    from .data import PairSample, write_expression_tsv, write_responses_tsv

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    smiles, genes, cells, rows = toy_response_data(n_drugs, n_cells, n_genes, seed, density)
    paths = {k: str(out / name) for k, name in [
        ("smiles", "smiles.tsv"), ("expression", "expression.tsv"), ("responses", "responses.tsv"),
        ("ppi", "ppi.tsv"), ("targets", "targets.tsv"), ("gene_sets", "gene_sets.gmt"),
        ("universe", "universe.txt")]}
    write_smiles_tsv(paths["smiles"], smiles)
    write_expression_tsv(paths["expression"], genes, cells)
    write_responses_tsv(paths["responses"], [PairSample(d, c, y) for d, c, y in rows])
    rng = np.random.Generator(np.random.Philox(seed + 1))
    with open(paths["ppi"], "w", encoding="utf-8") as fh:
        for k in range(n_genes):
            # a ring plus random chords keeps the network connected
            fh.write(f"{genes[k]}\t{genes[(k + 1) % n_genes]}\t{rng.uniform(0.2, 1.0)!r}\n")
        for _ in range(n_genes):
            a, b = rng.choice(n_genes, size=2, replace=False)
            fh.write(f"{genes[a]}\t{genes[b]}\t{rng.uniform(0.05, 1.0)!r}\n")
    with open(paths["targets"], "w", encoding="utf-8") as fh:
        fh.write("drug_id\ttargets\n")
        for d in smiles:
            picks = rng.choice(n_genes, size=2, replace=False)
            fh.write(f"{d}\t{','.join(genes[i] for i in sorted(picks))}\n")
    with open(paths["gene_sets"], "w", encoding="utf-8") as fh:
        for k in range(4):
            members = [genes[i] for i in sorted(rng.choice(n_genes, size=4, replace=False))]
            fh.write(f"SET{k}\ttoy set {k}\t" + "\t".join(members) + "\n")
    with open(paths["universe"], "w", encoding="utf-8") as fh:
        fh.writelines(g + "\n" for g in genes)
    return paths
