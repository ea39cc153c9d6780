"""Term-symbol parsing and level-table ingestion.

Two coupling schemes are understood.  LS terms look like ``5s2.5p5 2P*3/2``;
JK terms carry a parent term and a bracketed K, ``5s2.5p4.(3P2).6d 2[0]1/2``.
Typeset variants (LaTeX exponents, ``\\circ`` parity markers, spaces instead
of dots) are normalized to that canonical machine form before parsing.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .angular import HalfInt, half, triangle_ok

logger = logging.getLogger(__name__)

__all__ = [
    "TermParseError",
    "LevelTableError",
    "Parent",
    "Shell",
    "QuantumNumbers",
    "Level",
    "LevelSet",
    "normalize_term",
    "parse_term",
    "format_term",
    "load_levels",
    "select_subspace",
    "bundled_table",
]

L_LETTERS = "SPDFGHIKLMN"
l_letters = "spdfghiklmn"


class TermParseError(ValueError):
    """A term symbol could not be parsed; ``token`` names the offending piece."""

    def __init__(self, text: str, token: str, reason: str):
        self.text = text
        self.token = token
        super().__init__(f"{reason}: token {token!r} in {text!r}")


class LevelTableError(ValueError):
    pass


@dataclass(frozen=True)
class Shell:
    n: int
    l: int
    count: int

    def __str__(self) -> str:
        c = str(self.count) if self.count != 1 else ""
        return f"{self.n}{l_letters[self.l]}{c}"

    @property
    def full(self) -> bool:
        return self.count == 2 * (2 * self.l + 1)


@dataclass(frozen=True)
class Parent:
    L_p: HalfInt
    S_p: HalfInt
    J_p: HalfInt

    def __str__(self) -> str:
        mult = self.S_p.twice + 1
        return f"({mult}{L_LETTERS[int(self.L_p)]}{self.J_p})"


@dataclass(frozen=True)
class QuantumNumbers:
    """Parsed quantum numbers of one fine-structure level.

    For JK levels ``n``/``L_E``/``S_E`` describe the outer electron and ``K``
    couples ``J_p`` with ``L_E``.  For LS levels ``L_E``/``S_E`` hold the
    total L and S of the term, and ``n``/``l_active`` name the open shell
    (the hole orbital for the ion ground and hole-excited states).
    """

    scheme: str
    n: int
    L_E: HalfInt
    S_E: HalfInt
    J: HalfInt
    parity: str
    K: Optional[HalfInt] = None
    parent: Optional[Parent] = None
    l_active: int = 0
    core: tuple[Shell, ...] = ()

    @property
    def odd(self) -> bool:
        return self.parity == "odd"


_SHELL_RE = re.compile(r"(\d+)([spdfghik])(\d{0,2})")
_PAREN_RE = re.compile(r"\(\s*(\d+)([SPDFGHIK])(\*?)\s*(\d+/2|\d+)?\s*\)")
_JK_RE = re.compile(r"(\d+)\[(\d+/2|\d+)\](\*?)(\d+/2|\d+)")
_LS_RE = re.compile(r"(\d+)([SPDFGHIK])(\*?)(\d+/2|\d+)")
_SEP_RE = re.compile(r"[\s.]+")


def normalize_term(text: str) -> str:
    """Rewrite typeset term notation into the canonical machine format."""
    return format_term(parse_term(text))


def _detypeset(text: str) -> str:
    s = text.strip().strip("$").strip()
    s = s.replace("°", "*").replace("\\mathrm", "")
    s = re.sub(r"\^\{?\\circ\}?", "*", s)
    s = s.replace("\\circ", "*")
    s = re.sub(r"\\[ ,;!]", " ", s).replace("~", " ")
    if "^" in s or "_" in s or "{" in s:
        # shells without exponent glued to the next shell: 5s5p^6
        s = re.sub(r"(\d+[spdfghik])(?=\d)", r"\1 ", s)
        # LaTeX: ^25 is ^2 followed by 5; multi-digit exponents need braces
        s = re.sub(r"(\d+)([spdfghik])\^(?:\{(\d+)\}|(\d))", lambda m: f"{m[1]}{m[2]}{m[3] or m[4]} ", s)
        s = s.replace("^", "").replace("_", "").replace("{", "").replace("}", "")
    # a JK term written in parentheses, (2[2]5/2)
    s = re.sub(r"\(\s*(\d+\s*\[[^\]]+\]\*?\s*\d+(?:/2)?)\s*\)\s*$", r"\1", s)
    return s


def _ang(tok: str) -> HalfInt:
    return HalfInt.parse(tok)


def parse_term(text: str) -> QuantumNumbers:
    """Parse a configuration + term string into :class:`QuantumNumbers`."""
    s = _detypeset(text)
    pos = 0
    shells: list[tuple[int, Shell]] = []
    parens: list[tuple[int, re.Match]] = []
    term = None
    items = 0
    while pos < len(s):
        m = _SEP_RE.match(s, pos)
        if m:
            pos = m.end()
            continue
        for kind, rx in (("paren", _PAREN_RE), ("jk", _JK_RE), ("ls", _LS_RE), ("shell", _SHELL_RE)):
            m = rx.match(s, pos)
            if m:
                break
        else:
            raise TermParseError(text, s[pos:pos + 8], "unrecognized token")
        tok = m.group(0)
        if term is not None:
            raise TermParseError(text, tok, "trailing token after term")
        if kind == "shell":
            n, letter, cnt = int(m.group(1)), m.group(2), m.group(3)
            l = l_letters.index(letter)
            count = int(cnt) if cnt else 1
            if l >= n:
                raise TermParseError(text, tok, "orbital l must be below n")
            if not 1 <= count <= 2 * (2 * l + 1):
                raise TermParseError(text, tok, "impossible shell occupancy")
            shells.append((items, Shell(n, l, count)))
        elif kind == "paren":
            parens.append((items, m))
        else:
            term = (kind, m)
        items += 1
        pos = m.end()
    if not shells:
        raise TermParseError(text, s, "no electron configuration")

    total_l = sum(sh.l * sh.count for _, sh in shells)
    parity = "odd" if total_l % 2 else "even"

    if term is not None and term[0] == "jk":
        m = term[1]
        if len(parens) != 1:
            raise TermParseError(text, m.group(0), "JK term needs exactly one parent term")
        p_at, pm = parens[0]
        if pm.group(4) is None:
            raise TermParseError(text, pm.group(0), "parent term lacks J")
        after = [sh for i, sh in shells if i > p_at]
        core = tuple(sh for i, sh in shells if i < p_at)
        if len(after) != 1 or after[0].count != 1:
            raise TermParseError(text, pm.group(0), "parent must be followed by one outer electron")
        outer = after[0]
        S_p = HalfInt(int(pm.group(1)) - 1)
        L_p = half(L_LETTERS.index(pm.group(2)))
        J_p = _ang(pm.group(4))
        if not triangle_ok(L_p, S_p, J_p):
            raise TermParseError(text, pm.group(0), "parent L, S, J violate the triangle rule")
        S_E = HalfInt(int(m.group(1)) - 1)
        K = _ang(m.group(2))
        J = _ang(m.group(4))
        L_E = half(outer.l)
        if not triangle_ok(J_p, L_E, K):
            raise TermParseError(text, m.group(0), f"K={K} not reachable from J_p={J_p}, l={outer.l}")
        if not triangle_ok(K, S_E, J):
            raise TermParseError(text, m.group(0), f"J={J} not reachable from K={K}, s={S_E}")
        if m.group(3) and parity != "odd":
            raise TermParseError(text, m.group(0), "odd-parity marker on even configuration")
        return QuantumNumbers(
            scheme="JK", n=outer.n, L_E=L_E, S_E=S_E, J=J, parity=parity, K=K,
            parent=Parent(L_p, S_p, J_p), l_active=outer.l, core=core,
        )

    # LS: term is either a trailing LS token or the last parenthesized group
    if term is not None:
        mult, letter, star, jtok = term[1].groups()
        tok = term[1].group(0)
        if parens:
            raise TermParseError(text, parens[0][1].group(0), "parent term without JK bracket")
    else:
        if len(parens) != 1 or parens[0][0] != items - 1:
            raise TermParseError(text, s, "missing term symbol")
        mult, letter, star, jtok = parens[0][1].groups()
        tok = parens[0][1].group(0)
        if jtok is None:
            raise TermParseError(text, tok, "term lacks J")
    S = HalfInt(int(mult) - 1)
    L = half(L_LETTERS.index(letter))
    J = _ang(jtok)
    if not triangle_ok(L, S, J):
        raise TermParseError(text, tok, "L, S, J violate the triangle rule")
    if star and parity != "odd":
        raise TermParseError(text, tok, "odd-parity marker on even configuration")
    config = tuple(sh for _, sh in shells)
    open_shells = [sh for sh in config if not sh.full]
    active = open_shells[-1] if open_shells else config[-1]
    return QuantumNumbers(
        scheme="LS", n=active.n, L_E=L, S_E=S, J=J, parity=parity,
        l_active=active.l, core=config,
    )


def format_term(qn: QuantumNumbers) -> str:
    """Canonical machine string; ``parse_term(format_term(q)) == q``."""
    if qn.scheme == "JK":
        outer = Shell(qn.n, qn.l_active, 1)
        parts = [str(sh) for sh in qn.core] + [str(qn.parent), str(outer)]
        star = "*" if qn.odd else ""
        return ".".join(parts) + f" {qn.S_E.twice + 1}[{qn.K}]{star}{qn.J}"
    star = "*" if qn.odd else ""
    conf = ".".join(str(sh) for sh in qn.core)
    return f"{conf} {qn.S_E.twice + 1}{L_LETTERS[int(qn.L_E)]}{star}{qn.J}"


@dataclass(frozen=True)
class Level:
    id: int
    label: str
    energy: float
    qn: QuantumNumbers
    m: HalfInt

    @property
    def term(self) -> str:
        return format_term(self.qn)

    @property
    def J(self) -> HalfInt:
        return self.qn.J


@dataclass(frozen=True)
class LevelSet:
    """Ordered, immutable collection of levels; ``levels[i].id == i``."""

    levels: tuple[Level, ...] = ()
    provenance: str = ""
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for i, lv in enumerate(self.levels):
            if lv.id != i:
                raise LevelTableError(f"level ids must be dense, got {lv.id} at {i}")
            self._index.setdefault(lv.term, []).append(i)

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[Level]:
        return iter(self.levels)

    def __getitem__(self, i: int) -> Level:
        return self.levels[i]

    @property
    def energies(self):
        import numpy as np

        return np.array([lv.energy for lv in self.levels])

    def find(self, label: str, m=None) -> list[int]:
        """Indices of levels whose term matches ``label`` (any notation)."""
        ids = self._index.get(normalize_term(label), [])
        if m is not None:
            ids = [i for i in ids if self.levels[i].m == half(m)]
        return list(ids)

    def index(self, label: str, m=None) -> int:
        ids = self.find(label, m)
        if len(ids) != 1:
            raise KeyError(f"{label!r} (m={m}) matches {len(ids)} levels")
        return ids[0]


def _sorted_levelset(entries: Iterable[tuple[str, float, QuantumNumbers, HalfInt]], provenance: str) -> LevelSet:
    rows = sorted(entries, key=lambda e: (e[1], format_term(e[2]), e[3]))
    return LevelSet(
        tuple(Level(i, lab, en, qn, m) for i, (lab, en, qn, m) in enumerate(rows)),
        provenance,
    )


def _read_rows(path: Path) -> list[tuple[int, dict]]:
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text) if text.strip() else []
        if not isinstance(data, list):
            raise LevelTableError(f"{path}: expected a JSON array of levels")
        return [(i + 1, row) for i, row in enumerate(data)]
    lines = [ln for ln in text.splitlines()]
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        return []
    header_no, header = body[0]
    reader = csv.DictReader([header] + [ln for _, ln in body[1:]])
    return [(no, row) for (no, _), row in zip(body[1:], reader)]


def load_levels(path, *, expand_m: bool = True) -> LevelSet:
    """Load a CSV (``label,energy_eV``) or JSON level table.

    Every J level is expanded into its 2J+1 m-sublevels.  Ids follow the
    order (energy, canonical term, m), so identical files give identical
    orderings.
    """
    path = Path(path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    rows = _read_rows(path)
    if not rows:
        warnings.warn(f"level table {path} is empty", stacklevel=2)
        return LevelSet((), digest)
    missing = {"label", "energy_eV"} - set(rows[0][1].keys())
    if missing:
        raise LevelTableError(f"{path}: missing required column(s) {sorted(missing)}")
    entries = []
    seen: dict[tuple[str, int], int] = {}
    errors = []
    for lineno, row in rows:
        label = str(row["label"]).strip()
        try:
            energy = float(row["energy_eV"])
        except (TypeError, ValueError):
            errors.append(f"{path}:{lineno}: bad energy {row['energy_eV']!r}")
            continue
        if energy < 0:
            errors.append(f"{path}:{lineno}: negative energy {energy}")
            continue
        try:
            qn = parse_term(label)
        except TermParseError as exc:
            errors.append(f"{path}:{lineno}: {exc}")
            continue
        ms = range(-qn.J.twice, qn.J.twice + 1, 2) if expand_m else [qn.J.twice]
        for m2 in ms:
            key = (format_term(qn), m2)
            if key in seen:
                errors.append(f"{path}:{lineno}: duplicate level {label!r} m={HalfInt(m2)} (first on line {seen[key]})")
                break
            seen[key] = lineno
            entries.append((label, energy, qn, HalfInt(m2)))
    if errors:
        raise LevelTableError("\n".join(errors))
    return _sorted_levelset(entries, digest)


def select_subspace(ls: LevelSet, m) -> LevelSet:
    """Keep only the m-sublevels with projection ``m``; ids are re-densified."""
    m = half(m)
    kept = [lv for lv in ls if lv.m == m]
    return LevelSet(
        tuple(replace(lv, id=i) for i, lv in enumerate(kept)),
        ls.provenance,
    )


def subset(ls: LevelSet, ids: Sequence[int]) -> LevelSet:
    """Levels ``ids`` (kept in their original order), re-indexed."""
    ids = sorted(set(ids))
    return LevelSet(tuple(replace(ls[i], id=k) for k, i in enumerate(ids)), ls.provenance)


def bundled_table(name: str = "xe_ii_levels.csv") -> Path:
    return Path(__file__).parent / "data" / name
