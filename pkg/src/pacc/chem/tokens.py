"""Regular-expression SMILES tokenization and the token vocabulary."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PAD",
    "PAD_TOKEN",
    "SMILES_TOKEN_PATTERN",
    "TokenSequence",
    "TokenizationGap",
    "UNK",
    "UNK_TOKEN",
    "Vocabulary",
    "detokenize",
    "tokenize",
]

# bracket atoms, two-letter halogens and %nn ring labels are single tokens
SMILES_TOKEN_PATTERN = (
    r"(\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9])"
)
_TOKEN_RE = re.compile(SMILES_TOKEN_PATTERN)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class TokenizationGap(ValueError):
    def __init__(self, offset: int, char: str):
        super().__init__(f"no token class matches {char!r} at offset {offset}")
        self.offset = offset


def tokenize(s: str) -> list[str]:
    """Split a SMILES string into tokens whose concatenation is ``s``."""
    if not s:
        raise ValueError("cannot tokenize an empty string")
    tokens = []
    pos = 0
    while pos < len(s):
        m = _TOKEN_RE.match(s, pos)
        if m is None:
            raise TokenizationGap(pos, s[pos])
        tokens.append(m.group(0))
        pos = m.end()
    return tokens


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    ids: tuple[int, ...]
    pad_mask: tuple[bool, ...]  # True at padding positions

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_valid(self) -> int:
        return len(self.tokens) - sum(self.pad_mask)

    def valid_tokens(self) -> list[str]:
        return [t for t, pad in zip(self.tokens, self.pad_mask) if not pad]


def detokenize(t: TokenSequence | Sequence[str]) -> str:
    if isinstance(t, TokenSequence):
        return "".join(t.valid_tokens())
    return "".join(t)


class Vocabulary:
    """Token/id map with ``<pad>`` = 0 and ``<unk>`` = 1 reserved.

    Ordinary tokens are numbered from 2 in lexicographic order, so the same
    corpus always yields the same ids.
    """

    def __init__(self, tokens: Iterable[str]):
        ordinary = sorted(set(tokens) - {PAD_TOKEN, UNK_TOKEN})
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN, *ordinary]
        self.stoi: dict[str, int] = {tok: i for i, tok in enumerate(self.itos)}

    @classmethod
    def from_smiles(cls, corpus: Iterable[str]) -> "Vocabulary":
        toks: set[str] = set()
        for s in corpus:
            toks.update(tokenize(s))
        return cls(toks)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str], length: int | None = None) -> TokenSequence:
        """Map tokens to ids, right-padding to ``length`` with the pad id."""
        if length is None:
            length = len(tokens)
        if length < len(tokens):
            raise ValueError(f"sequence of {len(tokens)} tokens exceeds length {length}")
        n_pad = length - len(tokens)
        ids = tuple(self.stoi.get(t, UNK) for t in tokens) + (PAD,) * n_pad
        return TokenSequence(
            tokens=tuple(tokens) + (PAD_TOKEN,) * n_pad,
            ids=ids,
            pad_mask=(False,) * len(tokens) + (True,) * n_pad,
        )

    def encode_array(self, tokens: Sequence[str], length: int) -> np.ndarray:
        out = np.zeros(length, dtype=np.int64)
        out[: len(tokens)] = [self.stoi.get(t, UNK) for t in tokens]
        return out

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i != PAD]

    def to_text(self) -> str:
        return "".join(tok + "\n" for tok in self.itos)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary text must start with the reserved tokens")
        vocab = cls(lines[2:])
        if vocab.itos != lines:
            raise ValueError("vocabulary text is not in canonical order")
        return vocab
