"""A level set, its dipole table and the three states a control scheme addresses."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dipoles import DipoleTable, build_dipole_matrix, load_overrides
from .levels import LevelSet, bundled_table, load_levels, select_subspace
from .propagator import Channel, full_channel, stirap_channels

__all__ = ["StirapSystem", "GROUND_3_2", "GROUND_1_2", "S_HOLE_5S", "S_HOLE_4S"]

GROUND_3_2 = "5s2.5p5 2P*3/2"
GROUND_1_2 = "5s2.5p5 2P*1/2"
S_HOLE_5S = "5s.5p6 2S1/2"
S_HOLE_4S = "4s.5s2.5p6 2S1/2"


@dataclass(frozen=True)
class StirapSystem:
    """Levels + dipoles with the indices of |1>, |2>, |3>.

    With ``isolated=True`` the pump only couples |1>-|2> and the Stokes
    pulse only |2>-|3>, as in the idealized three-level Hamiltonian;
    otherwise every field drives the full dipole matrix.
    """

    levels: LevelSet
    dip: DipoleTable
    i1: int
    i2: int
    i3: int
    isolated: bool = False

    @classmethod
    def build(
        cls,
        levels_path=None,
        *,
        m="1/2",
        Z: float = 2.0,
        overrides=None,
        state1: str = GROUND_3_2,
        state2: str = S_HOLE_5S,
        state3: str = GROUND_1_2,
        isolated: bool = False,
    ) -> "StirapSystem":
        path = Path(levels_path) if levels_path else bundled_table()
        ls = select_subspace(load_levels(path), m)
        ov = load_overrides(overrides) if isinstance(overrides, (str, Path)) else overrides
        dip = build_dipole_matrix(ls, Z, ov)
        return cls(ls, dip, ls.index(state1), ls.index(state2), ls.index(state3), isolated)

    @classmethod
    def three_level(cls) -> "StirapSystem":
        """Idealized model: ground pair plus the 5s-hole state, mu12 = mu23 = 1 a.u."""
        return cls.build(
            bundled_table("three_level.csv"),
            overrides=bundled_table("three_level_overrides.csv"),
            isolated=True,
        )

    @classmethod
    def xe(cls, intermediate: str = S_HOLE_5S, levels_path=None, Z: float = 2.0) -> "StirapSystem":
        return cls.build(levels_path, Z=Z, state2=intermediate)

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def channels(self) -> Optional[list[Channel]]:
        if self.isolated:
            return stirap_channels(self.dip, self.i1, self.i2, self.i3)
        return None

    @property
    def energies(self) -> np.ndarray:
        return self.levels.energies

    def resonant_carriers(self) -> tuple[float, float]:
        """Pump and Stokes photon energies (eV) in one-photon resonance."""
        E = self.energies
        return float(E[self.i2] - E[self.i1]), float(E[self.i2] - E[self.i3])

    def state(self, alpha: float = 0.0, phase: float = 0.0) -> np.ndarray:
        """cos(alpha)|1> + e^{i phase} sin(alpha)|3>."""
        psi = np.zeros(self.n, dtype=complex)
        psi[self.i1] = np.cos(alpha)
        psi[self.i3] = np.exp(1j * phase) * np.sin(alpha)
        return psi

    def basis_vector(self, i: int) -> np.ndarray:
        psi = np.zeros(self.n, dtype=complex)
        psi[i] = 1.0
        return psi

    def three(self, amplitudes) -> np.ndarray:
        """Select the (|1>, |2>, |3>) components along axis 0."""
        a = np.asarray(amplitudes)
        return a[[self.i1, self.i2, self.i3]]
