"""TSV readers and writers for compound files."""
from __future__ import annotations

from pathlib import Path

from .fingerprint import Fingerprint


class MalformedFile(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def read_smiles_tsv(path) -> dict[str, str]:
    """Read ``drug_id<TAB>smiles`` rows (header required) into an ordered dict."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["drug_id", "smiles"]:
            raise MalformedFile(path, 1, "expected header 'drug_id<TAB>smiles'")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0] or not parts[1]:
                raise MalformedFile(path, lineno, "expected two columns")
            if parts[0] in out:
                raise MalformedFile(path, lineno, f"duplicate drug id {parts[0]!r}")
            out[parts[0]] = parts[1]
    return out


def write_smiles_tsv(path, smiles: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\tsmiles\n")
        for drug, s in smiles.items():
            fh.write(f"{drug}\t{s}\n")


def write_fingerprints_tsv(path, fingerprints: dict[str, Fingerprint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("drug_id\tfingerprint\n")
        for drug, fp in fingerprints.items():
            fh.write(f"{drug}\t{fp.to_hex()}\n")


def read_fingerprints_tsv(path, radius: int = 2) -> dict[str, Fingerprint]:
    out = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedFile(path, lineno, "expected two columns")
        out[parts[0]] = Fingerprint.from_hex(parts[1], radius)
    return out
