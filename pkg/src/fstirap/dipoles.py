"""Electric-dipole couplings between Xe+ levels from hydrogenic orbitals.

The operator acts on the outermost electron only.  JK levels are decoupled
twice (``(K S_E) J`` then ``(L_E J_p) K``) down to a single-electron reduced
element; LS levels reach JK levels through a 5p -> n'l' hydrogen-like
element and s-hole LS levels couple only to the p-hole ground terms.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .angular import HalfInt, half, wigner3j, wigner6j
from .levels import Level, LevelSet, QuantumNumbers, normalize_term

logger = logging.getLogger(__name__)

__all__ = [
    "DipoleTable",
    "DipoleError",
    "hydrogenic_radial",
    "radial_integral",
    "reduced_rY",
    "jk_jk_reduced",
    "ls_jk_reduced",
    "reduced_element",
    "build_dipole_matrix",
    "load_overrides",
    "connected_component",
]

Z_DEFAULT = 2.0


class DipoleError(ValueError):
    pass


def _br(x) -> float:
    return math.sqrt(2 * float(x) + 1)


def _sign(twice_exponent: int) -> int:
    if twice_exponent % 2:
        raise DipoleError("phase exponent is not an integer")
    return -1 if (twice_exponent // 2) % 2 else 1


def hydrogenic_radial(n: int, l: int, Z: float, r):
    """Normalized hydrogenic radial function R_nl(r) for nuclear charge Z."""
    if not (n > l >= 0):
        raise ValueError(f"need n > l >= 0, got n={n}, l={l}")
    rho = 2.0 * Z * np.asarray(r, dtype=float) / n
    norm = math.sqrt((2.0 * Z / n) ** 3 * math.factorial(n - l - 1) / (2 * n * math.factorial(n + l)))
    return norm * np.exp(-rho / 2) * rho**l * special.eval_genlaguerre(n - l - 1, 2 * l + 1, rho)


@lru_cache(maxsize=None)
def radial_integral(n: int, l: int, n2: int, l2: int, Z: float = Z_DEFAULT) -> float:
    """Radial dipole moment  ∫ R_nl r R_n2l2 r² dr  in bohr."""
    if Z <= 0:
        raise ValueError("Z must be positive")
    if not (n > l >= 0 and n2 > l2 >= 0):
        raise ValueError("need n > l >= 0 for both orbitals")

    def f(r):
        return hydrogenic_radial(n, l, Z, r) * hydrogenic_radial(n2, l2, Z, r) * r**3

    # both functions are negligible beyond a few times the outer turning point
    rmax = 8.0 * max(n, n2) ** 2 / Z + 40.0 / Z
    # split at the nodes' scale so quad sees smooth pieces
    edges = np.linspace(0.0, rmax, 4 * max(n, n2) + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total


def reduced_rY(n: int, l: int, n2: int, l2: int, Z: float = Z_DEFAULT) -> float:
    """Reduced element  <n2 l2 || r Y_1 || n l>  (bra is the primed orbital)."""
    ang = wigner3j(l2, 1, l, 0, 0, 0)
    if ang == 0.0:
        return 0.0
    return ((-1) ** l2) * _br(l2) * _br(l) * math.sqrt(3.0 / (4.0 * math.pi)) * ang * radial_integral(n, l, n2, l2, Z)


def jk_jk_reduced(bra: QuantumNumbers, ket: QuantumNumbers, Z: float = Z_DEFAULT) -> float:
    """Reduced element between two JK levels, operator on the outer electron."""
    if bra.scheme != "JK" or ket.scheme != "JK":
        raise DipoleError("jk_jk_reduced needs two JK levels")
    if bra.parent != ket.parent or bra.S_E != ket.S_E or bra.core != ket.core:
        return 0.0
    Jp, S = ket.parent.J_p, ket.S_E
    Lb, Lk = bra.L_E, ket.L_E
    Kb, Kk = bra.K, ket.K
    Jb, Jk = bra.J, ket.J
    phase = _sign(Lb.twice + Jp.twice + Kk.twice + 2 + Kb.twice + S.twice + Jk.twice + 2)
    w1 = wigner6j(Lb, Kb, Jp, Kk, Lk, 1)
    if w1 == 0.0:
        return 0.0
    w2 = wigner6j(Kb, Jb, S, Jk, Kk, 1)
    if w2 == 0.0:
        return 0.0
    red = reduced_rY(ket.n, ket.l_active, bra.n, bra.l_active, Z)
    return phase * _br(Kk) * _br(Kb) * _br(Jk) * _br(Jb) * w1 * w2 * red


def ls_jk_reduced(ground: QuantumNumbers, excited: QuantumNumbers, Z: float = Z_DEFAULT) -> float:
    """Hydrogen-like p-hole -> outer-electron element; core recoupling neglected."""
    if ground.scheme != "LS" or excited.scheme != "JK":
        raise DipoleError("ls_jk_reduced needs an LS ground and a JK excited level")
    if ground.l_active != 1:
        # s-hole LS levels would need two electrons to move
        return 0.0
    return reduced_rY(ground.n, ground.l_active, excited.n, excited.l_active, Z)


def ls_ls_reduced(bra: QuantumNumbers, ket: QuantumNumbers, Z: float = Z_DEFAULT) -> float:
    """Hole transfer between an s-hole and a p-hole LS level (n l of each hole)."""
    if {bra.l_active, ket.l_active} != {0, 1}:
        return 0.0
    return reduced_rY(ket.n, ket.l_active, bra.n, bra.l_active, Z)


def reduced_element(bra: Level, ket: Level, Z: float = Z_DEFAULT) -> float:
    """Dispatch on coupling schemes; the bra is the energetically higher level."""
    a, b = bra.qn, ket.qn
    if a.parity == b.parity:
        return 0.0
    if a.scheme == "JK" and b.scheme == "JK":
        return jk_jk_reduced(a, b, Z)
    if a.scheme == "JK" and b.scheme == "LS":
        return ls_jk_reduced(b, a, Z)
    if a.scheme == "LS" and b.scheme == "JK":
        return ls_jk_reduced(a, b, Z)
    return ls_ls_reduced(a, b, Z)


@dataclass(frozen=True)
class DipoleTable:
    """Real symmetric z-dipole matrix (a.u.) with its eigendecomposition."""

    matrix: np.ndarray
    basis: LevelSet
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, basis: LevelSet) -> "DipoleTable":
        matrix = np.array(matrix, dtype=float)
        if matrix.shape != (len(basis), len(basis)):
            raise DipoleError(f"matrix shape {matrix.shape} does not match {len(basis)} levels")
        if not np.array_equal(matrix, matrix.T):
            raise DipoleError("dipole matrix is not symmetric")
        w, v = np.linalg.eigh(matrix)
        matrix.setflags(write=False)
        return cls(matrix, basis, w, v)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def reconstruction_error(self) -> float:
        rec = (self.eigvecs * self.eigvals) @ self.eigvecs.T
        return float(np.max(np.abs(rec - self.matrix))) if self.n else 0.0

    def nonzero_count(self, tol: float = 0.0) -> int:
        return int(np.count_nonzero(np.abs(self.matrix) > tol))

    def largest(self, k: int = 10) -> list[tuple[str, str, float]]:
        iu = np.triu_indices(self.n, 1)
        vals = self.matrix[iu]
        order = np.argsort(-np.abs(vals))[:k]
        out = []
        for o in order:
            if vals[o] == 0.0:
                break
            i, j = iu[0][o], iu[1][o]
            out.append((self.basis[i].term, self.basis[j].term, float(vals[o])))
        return out

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id_i", "label_i", "m_i", "id_j", "label_j", "m_j", "mu_au"])
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    v = self.matrix[i, j]
                    if v != 0.0:
                        a, b = self.basis[i], self.basis[j]
                        w.writerow([i, a.term, str(a.m), j, b.term, str(b.m), repr(float(v))])


def load_overrides(path) -> list[tuple[str, str, float]]:
    """Read ``label_i,label_j,mu_au`` rows."""
    rows = []
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#"))
        need = {"label_i", "label_j", "mu_au"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DipoleError(f"{path}: override file needs columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((row["label_i"].strip(), row["label_j"].strip(), float(row["mu_au"])))
            except (TypeError, ValueError) as exc:
                raise DipoleError(f"{path}:{lineno}: {exc}") from exc
    return rows


def build_dipole_matrix(
    ls: LevelSet,
    Z: float = Z_DEFAULT,
    overrides: Optional[Iterable[tuple[str, str, float]]] = None,
) -> DipoleTable:
    """Assemble the q=0 dipole matrix over ``ls``.

    mu_ij = (-1)^(J_i - m_i) 3j(J_i 1 J_j; -m_i 0 m_j) <i||rY||j> with the
    higher-energy level as bra.  ``overrides`` pin the element between every
    pair of equal-m sublevels of the two labels to ``mu_au``.
    """
    n = len(ls)
    mat = np.zeros((n, n))
    red_cache: dict[tuple[int, int], float] = {}
    first = {}
    for lv in ls:
        first.setdefault(lv.term, lv)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = ls[i], ls[j]
            if a.m != b.m or a.qn.parity == b.qn.parity:
                continue
            if abs(a.J.twice - b.J.twice) > 2:
                continue
            bra, ket = (b, a) if (b.energy, b.term) > (a.energy, a.term) else (a, b)
            key = (id(first[bra.term]), id(first[ket.term]))
            if key not in red_cache:
                red_cache[key] = reduced_element(bra, ket, Z)
            red = red_cache[key]
            if red == 0.0:
                continue
            m = bra.m
            val = _sign(bra.J.twice - m.twice) * wigner3j(bra.J, 1, ket.J, -m, 0, ket.m) * red
            mat[i, j] = mat[j, i] = val
    for li, lj, mu in overrides or ():
        ids_i, ids_j = ls.find(li), ls.find(lj)
        if not ids_i or not ids_j:
            raise DipoleError(f"override refers to unknown level {li if not ids_i else lj!r}")
        for a in ids_i:
            for b in ids_j:
                if ls[a].m == ls[b].m:
                    mat[a, b] = mat[b, a] = mu
    return DipoleTable.from_matrix(mat, ls)


def connected_component(dip: DipoleTable, seeds: Sequence[int]) -> list[int]:
    """Indices reachable from ``seeds`` through nonzero couplings."""
    adj = dip.matrix != 0.0
    seen = set(int(s) for s in seeds)
    stack = list(seen)
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if int(j) not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return sorted(seen)
