"""SMILES parsing for the practical subset the model consumes.

The parser keeps exactly two features per molecule: atomic numbers and bond
type codes. Stereochemistry, isotopes, charges and explicit hydrogen counts
are consumed and discarded; aromaticity is taken syntactically from lowercase
symbols (no kekulization). Anything outside the subset raises a
``SmilesError`` carrying the byte offset, never a crash.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# bond-type vocabulary (fixed so lookups are total)
BOND_SINGLE = 0
BOND_DOUBLE = 1
BOND_TRIPLE = 2
BOND_AROMATIC = 3
BOND_OTHER = 4
NUM_BOND_TYPES = 5

BOND_NAMES = {BOND_SINGLE: "single", BOND_DOUBLE: "double", BOND_TRIPLE: "triple",
              BOND_AROMATIC: "aromatic", BOND_OTHER: "other"}

# '/' and '\' carry only stereo information, which we discard: plain single bonds
_BOND_SYMBOL_CODES = {"-": BOND_SINGLE, "=": BOND_DOUBLE, "#": BOND_TRIPLE,
                      ":": BOND_AROMATIC, "/": BOND_SINGLE, "\\": BOND_SINGLE}

_ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
ATOMIC_NUMBERS = {sym: i + 1 for i, sym in enumerate(_ELEMENTS)}
NUM_ATOM_TYPES = 119  # atomic numbers 0-118; row 0 is unused padding

_ORGANIC_TWO = ("Cl", "Br")
_ORGANIC_ONE = set("BCNOPSFI")
_AROMATIC_ORGANIC = set("bcnops")
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as"}


class SmilesError(ValueError):
    """Lex or parse failure, positioned at a byte offset of the input."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


class TokenKind(enum.Enum):
    ATOM = "atom"
    BOND = "bond"
    OPEN = "branch-open"
    CLOSE = "branch-close"
    RING = "ring-closure"
    DOT = "dot"


@dataclass
class SmilesToken:
    kind: TokenKind
    text: str          # exact source span
    pos: int           # byte offset of the span start
    symbol: str | None = None    # element symbol for ATOM
    aromatic: bool = False       # lowercase atom for ATOM
    bond: str | None = None      # bond character for BOND
    ring: int | None = None      # closure number for RING


@dataclass
class MolGraph:
    """Parsed molecule: atomic numbers per node and undirected typed edges.

    Edges are stored once with u < v; consumers expand to both directions.
    """

    atom_nums: np.ndarray                  # int64 [N], values 1-118
    edges: np.ndarray                      # int64 [E, 3] rows (u, v, bond_code)
    num_nodes: int = field(default=0)

    def __post_init__(self):
        self.atom_nums = np.asarray(self.atom_nums, dtype=np.int64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        if not self.num_nodes:
            self.num_nodes = len(self.atom_nums)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]


def _lex_bracket(s: str, start: int) -> SmilesToken:
    """Lex a bracket atom starting at ``s[start] == '['``.

    Isotope, chirality marks, H-count, charge and atom class are consumed and
    discarded; only the element symbol (and its aromatic case) is kept.
    """
    end = s.find("]", start)
    if end < 0:
        raise SmilesError("unterminated bracket atom", start)
    body = s[start + 1:end]
    i = 0
    while i < len(body) and body[i].isdigit():  # isotope
        i += 1
    symbol = None
    aromatic = False
    if i < len(body):
        two = body[i:i + 2]
        one = body[i:i + 1]
        if two in _AROMATIC_BRACKET:
            symbol, aromatic = two.capitalize(), True
            i += 2
        elif two in ATOMIC_NUMBERS:
            symbol = two
            i += 2
        elif one in _AROMATIC_BRACKET:
            symbol, aromatic = one.upper(), True
            i += 1
        elif one in ATOMIC_NUMBERS:
            symbol = one
            i += 1
    if symbol is None:
        raise SmilesError("bracket atom without a recognizable element symbol", start + 1 + i)
    while i < len(body):
        c = body[i]
        if c == "@":
            i += 2 if body[i:i + 2] == "@@" else 1
        elif c == "H":
            i += 1
            while i < len(body) and body[i].isdigit():
                i += 1
        elif c in "+-":
            sign = c
            i += 1
            while i < len(body) and (body[i].isdigit() or body[i] == sign):
                i += 1
        elif c == ":":
            i += 1
            if i >= len(body) or not body[i].isdigit():
                raise SmilesError("atom class ':' without digits", start + 1 + i)
            while i < len(body) and body[i].isdigit():
                i += 1
        else:
            raise SmilesError(f"unexpected character {c!r} in bracket atom", start + 1 + i)
    return SmilesToken(TokenKind.ATOM, s[start:end + 1], start, symbol=symbol, aromatic=aromatic)


def tokenize_smiles(s: str) -> list[SmilesToken]:
    """Lex a SMILES string into tokens whose texts concatenate back to ``s``."""
    if not s:
        raise SmilesError("empty SMILES string", 0)
    if not s.isascii():
        bad = next(i for i, c in enumerate(s) if not c.isascii())
        raise SmilesError("non-ASCII character", bad)
    tokens: list[SmilesToken] = []
    i = 0
    n = len(s)
    while i < n:
        c = s[i]
        if c == "[":
            tok = _lex_bracket(s, i)
            tokens.append(tok)
            i += len(tok.text)
        elif s[i:i + 2] in _ORGANIC_TWO:
            sym = s[i:i + 2]
            tokens.append(SmilesToken(TokenKind.ATOM, sym, i, symbol=sym))
            i += 2
        elif c in _ORGANIC_ONE:
            tokens.append(SmilesToken(TokenKind.ATOM, c, i, symbol=c))
            i += 1
        elif c in _AROMATIC_ORGANIC:
            tokens.append(SmilesToken(TokenKind.ATOM, c, i, symbol=c.upper(), aromatic=True))
            i += 1
        elif c in _BOND_SYMBOL_CODES:
            tokens.append(SmilesToken(TokenKind.BOND, c, i, bond=c))
            i += 1
        elif c == "(":
            tokens.append(SmilesToken(TokenKind.OPEN, c, i))
            i += 1
        elif c == ")":
            tokens.append(SmilesToken(TokenKind.CLOSE, c, i))
            i += 1
        elif c.isdigit():
            tokens.append(SmilesToken(TokenKind.RING, c, i, ring=int(c)))
            i += 1
        elif c == "%":
            if i + 2 >= n or not (s[i + 1].isdigit() and s[i + 2].isdigit()):
                raise SmilesError("'%' ring closure needs two digits", i)
            tokens.append(SmilesToken(TokenKind.RING, s[i:i + 3], i, ring=int(s[i + 1:i + 3])))
            i += 3
        elif c == ".":
            tokens.append(SmilesToken(TokenKind.DOT, c, i))
            i += 1
        else:
            raise SmilesError(f"unknown character {c!r}", i)
    return tokens


def parse_smiles(s: str) -> MolGraph:
    """Parse a SMILES string to a molecular graph.

    Nodes appear in first-appearance order. The default bond between adjacent
    atoms is single, or aromatic when both atoms are aromatic; an explicit
    bond symbol overrides. Ring closures create a single edge whose symbol may
    be written at either closure digit (a conflict is an error). Dots produce
    disconnected components within the one graph.
    """
    tokens = tokenize_smiles(s)
    atom_nums: list[int] = []
    aromatic: list[bool] = []
    edge_codes: dict[tuple[int, int], int] = {}
    anchor: int | None = None
    pending: SmilesToken | None = None
    branch_stack: list[tuple[int | None, int]] = []   # (anchor, '(' position)
    rings: dict[int, tuple[int, SmilesToken | None, int]] = {}  # number -> (atom, bond tok, pos)

    def add_edge(u: int, v: int, code: int, pos: int) -> None:
        if u == v:
            raise SmilesError("bond from an atom to itself", pos)
        key = (min(u, v), max(u, v))
        if key in edge_codes:
            raise SmilesError(f"duplicate bond between atoms {key[0]} and {key[1]}", pos)
        edge_codes[key] = code

    def bond_code(tok: SmilesToken | None, u: int, v: int) -> int:
        if tok is not None:
            return _BOND_SYMBOL_CODES[tok.bond]
        if aromatic[u] and aromatic[v]:
            return BOND_AROMATIC
        return BOND_SINGLE

    for tok in tokens:
        if tok.kind is TokenKind.ATOM:
            idx = len(atom_nums)
            atom_nums.append(ATOMIC_NUMBERS[tok.symbol])
            aromatic.append(tok.aromatic)
            if anchor is not None:
                add_edge(anchor, idx, bond_code(pending, anchor, idx), tok.pos)
            anchor = idx
            pending = None
        elif tok.kind is TokenKind.BOND:
            if anchor is None:
                raise SmilesError("bond with no preceding atom", tok.pos)
            if pending is not None:
                raise SmilesError("two bond symbols in a row", tok.pos)
            pending = tok
        elif tok.kind is TokenKind.OPEN:
            if anchor is None:
                raise SmilesError("branch with no preceding atom", tok.pos)
            if pending is not None:
                raise SmilesError("bond symbol before '('", tok.pos)
            branch_stack.append((anchor, tok.pos))
        elif tok.kind is TokenKind.CLOSE:
            if not branch_stack:
                raise SmilesError("unmatched ')'", tok.pos)
            if pending is not None:
                raise SmilesError("dangling bond symbol before ')'", tok.pos)
            anchor, _ = branch_stack.pop()
        elif tok.kind is TokenKind.RING:
            if anchor is None:
                raise SmilesError("ring closure with no preceding atom", tok.pos)
            if tok.ring in rings:
                other, other_bond, _ = rings.pop(tok.ring)
                if other_bond is not None and pending is not None and other_bond.bond != pending.bond:
                    raise SmilesError(
                        f"conflicting ring-bond symbols {other_bond.bond!r} and {pending.bond!r}",
                        tok.pos)
                explicit = pending if pending is not None else other_bond
                add_edge(other, anchor, bond_code(explicit, other, anchor), tok.pos)
            else:
                rings[tok.ring] = (anchor, pending, tok.pos)
            pending = None
        elif tok.kind is TokenKind.DOT:
            if pending is not None:
                raise SmilesError("bond symbol before '.'", tok.pos)
            anchor = None
    if pending is not None:
        raise SmilesError("dangling bond symbol at end of input", pending.pos)
    if branch_stack:
        raise SmilesError("unclosed '('", branch_stack[-1][1])
    if rings:
        number, (_, _, pos) = next(iter(rings.items()))
        raise SmilesError(f"unclosed ring closure {number}", pos)

    edges = np.array(
        [(u, v, c) for (u, v), c in sorted(edge_codes.items())], dtype=np.int64
    ).reshape(-1, 3)
    return MolGraph(np.array(atom_nums, dtype=np.int64), edges, len(atom_nums))


def mol_to_model_graph(g: MolGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Expand a MolGraph to model inputs: node ids and a directed edge list.

    Every undirected edge is emitted in both directions with the same bond
    code. Returns (node_ids, edge_src, edge_dst, edge_codes).
    """
    u, v, c = g.edges[:, 0], g.edges[:, 1], g.edges[:, 2]
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    codes = np.concatenate([c, c])
    return g.atom_nums.copy(), src, dst, codes


def graph_to_edge_text(g: MolGraph) -> str:
    """Human-readable edge-list dump used by the CLI's debug parser."""
    lines = [f"atoms: {' '.join(str(a) for a in g.atom_nums)}"]
    for u, v, c in g.edges:
        lines.append(f"{u} -{BOND_NAMES[int(c)]}- {v}")
    return "\n".join(lines)
