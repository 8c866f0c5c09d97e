"""SMILES reading and writing over a small molecular graph type.

Only the subset of the Daylight grammar found in typical drug collections is
accepted: organic-subset and bracket atoms, explicit bonds (``- = # : / \\``),
branches, ring closures (``1``-``9`` and ``%nn``) and ``.`` separated
fragments. Stereo marks are recorded on atoms and bonds but never
interpreted; bond direction marks are not re-emitted by the writer.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "EmptyInput",
    "InvalidSmiles",
    "MolGraph",
    "SmilesError",
    "UnbalancedParenthesis",
    "UnclosedRingBond",
    "UnknownAtomSymbol",
    "canonical_form",
    "canonical_ranks",
    "enumerate_smiles",
    "parse_smiles",
    "write_smiles",
]


class SmilesError(ValueError):
    """Base class for parse failures; ``offset`` is the byte offset in the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EmptyInput(SmilesError):
    pass


class UnbalancedParenthesis(SmilesError):
    pass


class UnclosedRingBond(SmilesError):
    pass


class UnknownAtomSymbol(SmilesError):
    pass


class InvalidSmiles(SmilesError):
    pass


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe "
    "Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg "
    "Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr"
).split()
ATOMIC_NUMBER = {symbol: number for number, symbol in enumerate(ELEMENTS, start=1)}

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_SUBSET = ("b", "c", "n", "o", "s", "p")
AROMATIC_BRACKET = ("se", "as", "te", "b", "c", "n", "o", "p", "s")

_BOND_SYMBOLS = {
    "-": (BondOrder.SINGLE, ""),
    "=": (BondOrder.DOUBLE, ""),
    "#": (BondOrder.TRIPLE, ""),
    ":": (BondOrder.AROMATIC, ""),
    "/": (BondOrder.SINGLE, "/"),
    "\\": (BondOrder.SINGLE, "\\"),
}
_FLIP = {"/": "\\", "\\": "/", "": ""}

_BRACKET_TAIL = re.compile(
    r"(?P<chir>@(?:@|TH[12]|AL[12]|SP[123]|TB\d{1,2}|OH\d{1,2})?)?"
    r"(?P<h>H\d*)?"
    r"(?P<chg>\++|-+|[+-]\d+)?"
    r"(?::(?P<cls>\d+))?$"
)


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    charge: int = 0
    hydrogens: int = 0
    isotope: int | None = None
    bracketed: bool = False
    chirality: str = ""
    atom_class: int | None = None

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]

    def symbol(self) -> str:
        return self.element.lower() if self.aromatic else self.element

    def to_smiles(self) -> str:
        if not self.bracketed:
            return self.symbol()
        text = "[" + ("" if self.isotope is None else str(self.isotope))
        text += self.symbol() + self.chirality
        if self.hydrogens:
            text += "H" if self.hydrogens == 1 else f"H{self.hydrogens}"
        if self.charge:
            sign = "+" if self.charge > 0 else "-"
            text += sign if abs(self.charge) == 1 else f"{sign}{abs(self.charge)}"
        if self.atom_class is not None:
            text += f":{self.atom_class}"
        return text + "]"


@dataclass(frozen=True)
class Bond:
    """An undirected bond. ``stereo`` is the ``/`` or ``\\`` mark as read going
    from ``begin`` to ``end``."""

    begin: int
    end: int
    order: BondOrder = BondOrder.SINGLE
    stereo: str = ""

    def other(self, atom: int) -> int:
        return self.end if atom == self.begin else self.begin

    def stereo_from(self, atom: int) -> str:
        return self.stereo if atom == self.begin else _FLIP[self.stereo]


@dataclass(frozen=True)
class MolGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.begin].append(bond.end)
            adj[bond.end].append(bond.begin)
        return tuple(tuple(n) for n in adj)

    @cached_property
    def _bond_index(self) -> dict[frozenset, Bond]:
        return {frozenset((b.begin, b.end)): b for b in self.bonds}

    def bond(self, a: int, b: int) -> Bond:
        return self._bond_index[frozenset((a, b))]

    def degree(self, atom: int) -> int:
        return len(self.neighbors[atom])

    @cached_property
    def components(self) -> tuple[tuple[int, ...], ...]:
        """Connected components, each sorted, ordered by smallest atom index."""
        seen = [False] * len(self.atoms)
        out = []
        for root in range(len(self.atoms)):
            if seen[root]:
                continue
            stack, members = [root], []
            seen[root] = True
            while stack:
                u = stack.pop()
                members.append(u)
                for v in self.neighbors[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            out.append(tuple(sorted(members)))
        return tuple(out)

    @property
    def multi_fragment(self) -> bool:
        return len(self.components) > 1

    @cached_property
    def ring_bonds(self) -> frozenset:
        """Bonds (as frozensets of endpoints) lying on at least one cycle."""
        bridges = _bridges(len(self.atoms), self.neighbors)
        return frozenset(
            key for key in self._bond_index if key not in bridges
        )

    def in_ring(self, atom: int) -> bool:
        return any(frozenset((atom, v)) in self.ring_bonds for v in self.neighbors[atom])

    def implicit_hydrogens(self, atom: int) -> int:
        """Hydrogens implied by default valence for organic-subset atoms."""
        a = self.atoms[atom]
        if a.bracketed:
            return 0
        total = 0.0
        for v in self.neighbors[atom]:
            order = self.bond(atom, v).order
            total += 1.5 if order == BondOrder.AROMATIC else int(order)
        for valence in _DEFAULT_VALENCE.get(a.element, ()):
            if valence >= total:
                return int(valence - total)
        return 0

    def total_hydrogens(self, atom: int) -> int:
        return self.atoms[atom].hydrogens + self.implicit_hydrogens(atom)


_DEFAULT_VALENCE = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}


def _bridges(n: int, neighbors) -> set[frozenset]:
    # iterative Tarjan low-link
    disc = [-1] * n
    low = [0] * n
    out: set[frozenset] = set()
    clock = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = clock
        clock += 1
        stack = [(root, -1, iter(neighbors[root]))]
        while stack:
            u, parent, it = stack[-1]
            advanced = False
            for v in it:
                if v == parent:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = clock
                    clock += 1
                    stack.append((v, u, iter(neighbors[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if advanced:
                continue
            stack.pop()
            if parent != -1:
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    out.add(frozenset((u, parent)))
    return out


# ---------------------------------------------------------------- parsing


def _read_organic(s: str, i: int) -> tuple[Atom, int]:
    for sym in ORGANIC_SUBSET:
        if s.startswith(sym, i):
            return Atom(sym), len(sym)
    ch = s[i]
    if ch in AROMATIC_SUBSET:
        return Atom(ch.upper(), aromatic=True), 1
    raise UnknownAtomSymbol(f"unknown atom symbol {ch!r}", i)


def _read_bracket(s: str, i: int) -> tuple[Atom, int]:
    close = s.find("]", i)
    if close < 0:
        raise InvalidSmiles("unterminated bracket atom", i)
    body = s[i + 1 : close]
    j = 0
    while j < len(body) and body[j].isdigit():
        j += 1
    isotope = int(body[:j]) if j else None
    element = aromatic = None
    two, one = body[j : j + 2], body[j : j + 1]
    if len(two) == 2 and two in ATOMIC_NUMBER:
        element, aromatic, j = two, False, j + 2
    elif len(two) == 2 and two in AROMATIC_BRACKET:
        element, aromatic, j = two.capitalize(), True, j + 2
    elif one in ATOMIC_NUMBER:
        element, aromatic, j = one, False, j + 1
    elif one and one in AROMATIC_BRACKET:
        element, aromatic, j = one.upper(), True, j + 1
    if element is None:
        raise UnknownAtomSymbol(f"unknown atom symbol in [{body}]", i + 1 + j)
    m = _BRACKET_TAIL.match(body, j)
    if m is None:
        raise InvalidSmiles(f"malformed bracket atom [{body}]", i)
    h = m.group("h")
    hydrogens = 0 if h is None else (int(h[1:]) if len(h) > 1 else 1)
    chg = m.group("chg") or ""
    if not chg:
        charge = 0
    elif chg[1:].isdigit():
        charge = int(chg)
    else:
        charge = len(chg) * (1 if chg[0] == "+" else -1)
    cls = m.group("cls")
    atom = Atom(
        element,
        aromatic=aromatic,
        charge=charge,
        hydrogens=hydrogens,
        isotope=isotope,
        bracketed=True,
        chirality=m.group("chir") or "",
        atom_class=None if cls is None else int(cls),
    )
    return atom, close - i + 1


def _implicit_order(a: Atom, b: Atom) -> BondOrder:
    return BondOrder.AROMATIC if a.aromatic and b.aromatic else BondOrder.SINGLE


def parse_smiles(s: str) -> MolGraph:
    """Parse ``s`` into a :class:`MolGraph`.

    Raises a :class:`SmilesError` subclass naming the offending offset.
    """
    if not s:
        raise EmptyInput("empty SMILES", 0)
    atoms: list[Atom] = []
    bonds: dict[frozenset, Bond] = {}
    branches: list[tuple[int, int]] = []
    rings: dict[int, tuple[int, tuple | None, int]] = {}
    prev: int | None = None
    pending: tuple | None = None  # (order, stereo, offset)

    def add_bond(a: int, b: int, order: BondOrder, stereo: str, offset: int):
        key = frozenset((a, b))
        if a == b:
            raise InvalidSmiles("ring bond closes on itself", offset)
        if key in bonds:
            raise InvalidSmiles("duplicate bond", offset)
        bonds[key] = Bond(a, b, order, stereo)

    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if ch == "(":
            if prev is None or pending is not None:
                raise InvalidSmiles("branch without preceding atom", i)
            branches.append((prev, i))
            i += 1
        elif ch == ")":
            if not branches:
                raise UnbalancedParenthesis("unmatched ')'", i)
            if pending is not None:
                raise InvalidSmiles("bond before ')'", pending[2])
            prev = branches.pop()[0]
            i += 1
        elif ch in _BOND_SYMBOLS:
            if pending is not None:
                raise InvalidSmiles("consecutive bond symbols", i)
            if prev is None:
                raise InvalidSmiles("bond without preceding atom", i)
            pending = (*_BOND_SYMBOLS[ch], i)
            i += 1
        elif ch == ".":
            if pending is not None or prev is None:
                raise InvalidSmiles("misplaced '.'", i)
            prev = None
            i += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise InvalidSmiles("ring bond without preceding atom", i)
            if ch == "%":
                digits = s[i + 1 : i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise InvalidSmiles("'%' must be followed by two digits", i)
                number, width = int(digits), 3
            else:
                number, width = int(ch), 1
            if number in rings:
                partner, spec, _ = rings.pop(number)
                if spec is not None and pending is not None:
                    # both ends given: must describe the same bond seen from either side
                    if spec[0] != pending[0] or spec[1] != _FLIP[pending[1]]:
                        raise InvalidSmiles("conflicting ring bond symbols", i)
                if pending is not None:
                    order, stereo = pending[0], pending[1]
                    add_bond(prev, partner, order, stereo, i)
                elif spec is not None:
                    add_bond(partner, prev, spec[0], spec[1], i)
                else:
                    order = _implicit_order(atoms[partner], atoms[prev])
                    add_bond(partner, prev, order, "", i)
            else:
                rings[number] = (prev, pending, i)
            pending = None
            i += width
        else:
            if ch == "[":
                atom, width = _read_bracket(s, i)
            else:
                atom, width = _read_organic(s, i)
            idx = len(atoms)
            atoms.append(atom)
            if prev is not None:
                if pending is not None:
                    add_bond(prev, idx, pending[0], pending[1], pending[2])
                else:
                    add_bond(prev, idx, _implicit_order(atoms[prev], atom), "", i)
            pending = None
            prev = idx
            i += width
    if branches:
        raise UnbalancedParenthesis("unclosed '('", branches[-1][1])
    if rings:
        raise UnclosedRingBond("unclosed ring bond", min(r[2] for r in rings.values()))
    if pending is not None:
        raise InvalidSmiles("dangling bond", pending[2])
    return MolGraph(tuple(atoms), tuple(bonds.values()), source=s)


# ---------------------------------------------------------------- writing


def _bond_text(g: MolGraph, bond: Bond, from_atom: int) -> str:
    a, b = g.atoms[bond.begin], g.atoms[bond.end]
    both_aromatic = a.aromatic and b.aromatic
    if bond.order == BondOrder.SINGLE:
        # direction marks are not re-emitted: without cis/trans perception they
        # cannot be written consistently from an arbitrary traversal
        return "-" if both_aromatic else ""
    if bond.order == BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return "=" if bond.order == BondOrder.DOUBLE else "#"


def _ring_label(number: int) -> str:
    return str(number) if number < 10 else f"%{number:02d}"


def _write_component(g: MolGraph, start: int, orders) -> str:
    """Depth-first serialization of the component containing ``start``.

    ``orders[u]`` gives the visiting order of u's neighbours.
    """
    visited = {start}
    seen_bonds: set[frozenset] = set()
    children: dict[int, list[int]] = {}
    openings: dict[int, list[tuple[int, Bond]]] = {}
    closings: dict[int, list[tuple[int, Bond]]] = {}

    # pass 1: spanning tree and ring-closure bonds
    stack = [(start, iter(orders[start]))]
    children[start] = []
    while stack:
        u, it = stack[-1]
        for v in it:
            key = frozenset((u, v))
            if key in seen_bonds:
                continue
            seen_bonds.add(key)
            bond = g.bond(u, v)
            if v in visited:
                openings.setdefault(v, []).append((u, bond))
                closings.setdefault(u, []).append((v, bond))
                continue
            visited.add(v)
            children[u].append(v)
            children[v] = []
            stack.append((v, iter(orders[v])))
            break
        else:
            stack.pop()

    # pass 2: emit text
    out: list[str] = []
    free: list[int] = []
    next_label = 1
    assigned: dict[frozenset, int] = {}

    def take_label(busy: set[int]) -> int:
        nonlocal next_label
        for label in sorted(free):
            if label not in busy:
                free.remove(label)
                return label
        label = next_label
        next_label += 1
        return label

    # explicit stack of (atom, incoming bond text) / close-paren markers
    work: list = [(start, "")]
    while work:
        item = work.pop()
        if item == ")":
            out.append(")")
            continue
        u, bond_text = item
        out.append(bond_text + g.atoms[u].to_smiles())
        closing_labels = []
        for partner, bond in closings.get(u, ()):
            label = assigned.pop(frozenset((u, partner)))
            closing_labels.append(label)
            out.append(_ring_label(label))
        busy = set(closing_labels)
        for partner, bond in openings.get(u, ()):
            label = take_label(busy)
            busy.add(label)
            assigned[frozenset((u, partner))] = label
            out.append(_bond_text(g, bond, u) + _ring_label(label))
        free.extend(closing_labels)
        kids = children[u]
        # push in reverse so the first child is emitted first
        for idx in range(len(kids) - 1, -1, -1):
            v = kids[idx]
            text = _bond_text(g, g.bond(u, v), u)
            if idx == len(kids) - 1:
                work.append((v, text))
            else:
                work.append(")")
                work.append((v, "(" + text))
    return "".join(out)


def _seeded_orders(g: MolGraph, seed: int) -> list[list[int]]:
    rng = np.random.Generator(np.random.Philox(seed))
    return [list(rng.permutation(np.array(nb, dtype=np.int64))) if nb else []
            for nb in g.neighbors]


def write_smiles(g: MolGraph, start_atom: int = 0, neighbor_order_seed: int | None = None) -> str:
    """Serialize ``g`` depth-first from ``start_atom``.

    With ``neighbor_order_seed=None`` neighbours are visited in index order;
    otherwise each atom's neighbour list is permuted by a seeded generator.
    Fragments not containing ``start_atom`` follow in order of their lowest
    atom index, each starting from a seed-chosen atom.
    """
    if not 0 <= start_atom < len(g.atoms):
        raise IndexError(f"start atom {start_atom} out of range for {len(g.atoms)} atoms")
    if neighbor_order_seed is None:
        orders = [list(nb) for nb in g.neighbors]
        pick = None
    else:
        orders = _seeded_orders(g, neighbor_order_seed)
        pick = np.random.Generator(np.random.Philox(neighbor_order_seed + 0x9E3779B9))
    parts = []
    for comp in sorted(g.components, key=lambda c: start_atom not in c):
        if start_atom in comp:
            root = start_atom
        elif pick is None:
            root = comp[0]
        else:
            root = comp[int(pick.integers(len(comp)))]
        parts.append(_write_component(g, root, orders))
    return ".".join(parts)


def _dense_rank(keys: list) -> list[int]:
    lookup = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [lookup[k] for k in keys]


def canonical_ranks(g: MolGraph) -> list[int]:
    """Distinct atom ranks from iterative neighbourhood refinement.

    Ties that survive refinement are broken by promoting the lowest-indexed
    atom of the lowest tied class, then refining again.
    """
    n = len(g.atoms)
    if n == 0:
        return []
    inv = []
    for i, a in enumerate(g.atoms):
        inv.append((
            a.atomic_number, a.aromatic, a.charge, a.hydrogens,
            -1 if a.isotope is None else a.isotope, a.chirality,
            -1 if a.atom_class is None else a.atom_class, a.bracketed, g.degree(i),
        ))
    ranks = _dense_rank(inv)

    def refine(ranks: list[int]) -> list[int]:
        classes = len(set(ranks))
        while True:
            keys = [
                (ranks[i], tuple(sorted((int(g.bond(i, j).order), ranks[j]) for j in g.neighbors[i])))
                for i in range(n)
            ]
            new = _dense_rank(keys)
            new_classes = len(set(new))
            if new_classes == classes:
                return new
            ranks, classes = new, new_classes

    ranks = refine(ranks)
    while len(set(ranks)) < n:
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        chosen = min(i for i in range(n) if ranks[i] == tied)
        ranks = refine(_dense_rank([(r, 0 if i == chosen else 1) for i, r in enumerate(ranks)]))
    return ranks


def canonical_form(g: MolGraph) -> str:
    """Canonical SMILES: each fragment written from its lowest-ranked atom
    with neighbours in rank order; fragments sorted lexicographically."""
    if not g.atoms:
        return ""
    ranks = canonical_ranks(g)
    orders = [sorted(nb, key=ranks.__getitem__) for nb in g.neighbors]
    parts = []
    for comp in g.components:
        root = min(comp, key=ranks.__getitem__)
        parts.append(_write_component(g, root, orders))
    return ".".join(sorted(parts))


def enumerate_smiles(g: MolGraph, n: int = 32, seed: int = 0, max_attempts: int | None = None) -> list[str]:
    """Up to ``n`` distinct randomized serializations of ``g``.

    Samples (start atom, neighbour-order seed) pairs and keeps new strings
    until ``n`` are found or ``50 * n`` attempts are spent. Returns fewer than
    ``n`` when the molecule does not admit that many.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_attempts is None:
        max_attempts = 50 * n
    rng = np.random.Generator(np.random.Philox(seed))
    found: dict[str, None] = {}
    for _ in range(max_attempts):
        start = int(rng.integers(len(g.atoms)))
        order_seed = int(rng.integers(2**62))
        found.setdefault(write_smiles(g, start, order_seed))
        if len(found) >= n:
            break
    return list(found)
