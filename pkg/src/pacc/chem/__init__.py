"""Molecule handling: SMILES grammar, augmentation, tokens, fingerprints."""
from .fingerprint import Fingerprint, WidthMismatch, morgan_fingerprint, tanimoto
from .smiles import (
    Atom,
    Bond,
    BondOrder,
    EmptyInput,
    InvalidSmiles,
    MolGraph,
    SmilesError,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownAtomSymbol,
    canonical_form,
    canonical_ranks,
    enumerate_smiles,
    parse_smiles,
    write_smiles,
)
from .tokens import PAD, UNK, TokenSequence, TokenizationGap, Vocabulary, detokenize, tokenize

__all__ = [
    "Atom", "Bond", "BondOrder", "EmptyInput", "Fingerprint", "InvalidSmiles",
    "MolGraph", "PAD", "SmilesError", "TokenSequence", "TokenizationGap", "UNK",
    "UnbalancedParenthesis", "UnclosedRingBond", "UnknownAtomSymbol", "Vocabulary",
    "WidthMismatch", "canonical_form", "canonical_ranks", "detokenize",
    "enumerate_smiles", "morgan_fingerprint", "parse_smiles", "tanimoto",
    "tokenize", "write_smiles",
]
