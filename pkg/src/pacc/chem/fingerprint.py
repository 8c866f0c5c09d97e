"""Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity.

Environment identifiers come from a fixed 64-bit hash (FNV-1a over 8-byte
little-endian words, then the splitmix64 finalizer), so fingerprints are the
same on every platform. They are not bit-compatible with other toolkits.

Hex encoding: the bitset is read as the integer ``sum(2**i for set bit i)``
and written as ``width // 4`` hex digits, most significant nibble first.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .smiles import MolGraph

__all__ = ["Fingerprint", "WidthMismatch", "hash64", "morgan_fingerprint", "tanimoto"]

_MASK = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class WidthMismatch(ValueError):
    pass


def hash64(words: Iterable[int]) -> int:
    h = _FNV_OFFSET
    for w in words:
        for byte in (w & _MASK).to_bytes(8, "little"):
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _MASK
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _MASK
    h ^= h >> 31
    return h


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    width: int = 512
    radius: int = 2

    def __post_init__(self):
        if self.width <= 0 or self.width & (self.width - 1):
            raise ValueError(f"width must be a positive power of two, got {self.width}")
        if self.bits >> self.width:
            raise ValueError("bits set beyond the fingerprint width")

    @classmethod
    def from_bits(cls, on_bits: Iterable[int], width: int = 512, radius: int = 2) -> "Fingerprint":
        value = 0
        for b in on_bits:
            value |= 1 << int(b)
        return cls(value, width, radius)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def on_bits(self) -> list[int]:
        return [i for i in range(self.width) if self.bits >> i & 1]

    def to_array(self, dtype=np.float32) -> np.ndarray:
        out = np.zeros(self.width, dtype=dtype)
        out[self.on_bits()] = 1
        return out

    def to_hex(self) -> str:
        return format(self.bits, f"0{self.width // 4}x")

    @classmethod
    def from_hex(cls, text: str, radius: int = 2) -> "Fingerprint":
        return cls(int(text, 16), len(text) * 4, radius)


def _atom_invariant(g: MolGraph, i: int) -> int:
    a = g.atoms[i]
    return hash64((a.atomic_number, g.degree(i), a.charge, g.total_hydrogens(i),
                   int(a.aromatic), int(g.in_ring(i))))


def morgan_fingerprint(g: MolGraph, radius: int = 2, width: int = 512) -> Fingerprint:
    """Fold every atom environment up to ``radius`` bonds into ``width`` bits.

    Round 0 hashes (element, degree, charge, H count, aromatic, in ring); each
    later round hashes the previous identifier with the sorted list of
    (bond order, neighbour identifier) pairs.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if width <= 0 or width & (width - 1):
        raise ValueError(f"width must be a positive power of two, got {width}")
    ids = [_atom_invariant(g, i) for i in range(len(g.atoms))]
    bits = 0
    for h in ids:
        bits |= 1 << (h % width)
    for r in range(1, radius + 1):
        new = []
        for i in range(len(g.atoms)):
            env = sorted((int(g.bond(i, j).order), ids[j]) for j in g.neighbors[i])
            words = [r, ids[i]]
            for order, nid in env:
                words += (order, nid)
            new.append(hash64(words))
        ids = new
        for h in ids:
            bits |= 1 << (h % width)
    return Fingerprint(bits, width, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union
