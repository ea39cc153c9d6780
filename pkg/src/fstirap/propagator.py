"""Split-operator propagation of the lab-frame TDSE.

One step is

    psi <- exp(-i D dt/2) * C(t_mid) * exp(-i D dt/2) psi

with D the field-free energies and C the interaction factor.  The
interaction ``-mu E(t)`` is exponentiated in the eigenbasis of each
(time-independent) coupling matrix, so every step is exactly unitary.
Several coupling channels (for example a pump that only sees |1>-|2> and a
Stokes pulse that only sees |2>-|3>) are composed symmetrically,
``C1(dt/2) C2(dt/2) .. Ck(dt) .. C2(dt/2) C1(dt/2)``.

Batches of independent runs (scan points, probe delays) are propagated
together: amplitudes carry a trailing batch axis and every member has its
own field.  Initial amplitudes are interaction-picture values at
``t_start``; stored amplitudes are lab-frame.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dipoles import DipoleTable
from .levels import LevelSet
from .pulses import ControlField
from .units import AS, EV, FS

logger = logging.getLogger(__name__)

__all__ = [
    "TimeGrid",
    "Channel",
    "Trajectory",
    "NumericalError",
    "full_channel",
    "stirap_channels",
    "propagate",
    "populations",
    "dipole_expectation",
    "reverse_check",
]

NORM_TOL = 1e-8


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid from ``t_start`` to ``t_end`` (fs) with step ``dt`` (as)."""

    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def n_steps(self) -> int:
        return max(1, int(round((self.t_end - self.t_start) / (self.dt * 1e-3))))

    @property
    def dt_au(self) -> float:
        return self.dt * AS

    @property
    def dt_fs(self) -> float:
        return self.dt * 1e-3

    def times(self) -> np.ndarray:
        """Grid points in fs (n_steps + 1 values)."""
        return self.t_start + self.dt_fs * np.arange(self.n_steps + 1)

    def midpoints(self) -> np.ndarray:
        return self.t_start + self.dt_fs * (np.arange(self.n_steps) + 0.5)


@dataclass(frozen=True)
class Channel:
    """A coupling matrix restricted to ``support`` plus the roles that drive it.

    ``roles=None`` means every field drives this channel.
    """

    support: np.ndarray
    vals: np.ndarray
    vecs: np.ndarray
    roles: Optional[tuple[str, ...]] = None

    @classmethod
    def from_matrix(cls, matrix, support, roles=None) -> "Channel":
        sub = np.asarray(matrix, dtype=float)[np.ix_(support, support)]
        w, v = np.linalg.eigh(sub)
        return cls(np.asarray(support, dtype=int), w, v, None if roles is None else tuple(roles))

    def drives(self, f: ControlField) -> bool:
        return self.roles is None or f.role in self.roles


def full_channel(dip: DipoleTable) -> Channel:
    return Channel(np.arange(dip.n), dip.eigvals, dip.eigvecs, None)


def stirap_channels(dip: DipoleTable, i1: int, i2: int, i3: int) -> list[Channel]:
    """Isolated pump (|1>-|2>) and Stokes (|2>-|3>) channels of a three-level model.

    Probe fields, if any, act through the full matrix.
    """
    return [
        Channel.from_matrix(dip.matrix, [i1, i2], roles=("pump",)),
        Channel.from_matrix(dip.matrix, [i2, i3], roles=("stokes",)),
        Channel.from_matrix(dip.matrix, np.arange(dip.n), roles=("probe",)),
    ]


@dataclass
class Trajectory:
    """Result of :func:`propagate`.

    Attributes
    ----------
    grid : TimeGrid
    times : ndarray
        Stored sample times in fs.
    amplitudes : ndarray
        Lab-frame amplitudes, shape ``(n_store, N)`` or ``(n_store, N, B)``.
    norm_log : ndarray
        ``| ||psi||^2 - 1 |`` at every stored sample.
    final : ndarray
        Amplitudes after the last step.
    dipole : ndarray or None
        ``<psi|mu|psi>`` at every grid point when recorded.
    """

    grid: TimeGrid
    times: np.ndarray
    amplitudes: np.ndarray
    norm_log: np.ndarray
    final: np.ndarray
    energies: np.ndarray
    initial: np.ndarray
    batched: bool = False
    dipole: Optional[np.ndarray] = None
    _plan: Optional[tuple] = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.final.shape[0]

    def final_populations(self) -> np.ndarray:
        return np.abs(self.final) ** 2

    def interaction_amplitudes(self) -> np.ndarray:
        """Amplitudes with the free phases ``exp(-i E_i t)`` removed."""
        ph = np.exp(1j * np.outer(self.times * FS, self.energies))
        if self.batched:
            ph = ph[:, :, None]
        return self.amplitudes * ph

    def to_csv(self, path, indices: Optional[Sequence[int]] = None, labels: Optional[Sequence[str]] = None, member: int = 0):
        """Write ``t_fs,P_i...`` for the selected states."""
        idx = list(range(self.n_states)) if indices is None else list(indices)
        P = populations(self, idx)
        if self.batched:
            P = P[:, :, member]
        names = labels if labels is not None else [f"P_{i}" for i in idx]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_fs", *names])
            for t, row in zip(self.times, P):
                w.writerow([repr(float(t)), *(repr(float(x)) for x in row)])

    def save_dipole(self, path) -> None:
        """Binary dump (``.npz``) of the dipole response on the full grid."""
        if self.dipole is None:
            raise ValueError("trajectory was propagated without record_dipole")
        np.savez(path, t_fs=self.grid.times(), dipole=self.dipole)


def _field_table(channels, field_sets, tm) -> list[np.ndarray]:
    """Per-channel field samples, shape ``(n_steps, B)``."""
    out = []
    for ch in channels:
        F = np.zeros((tm.size, len(field_sets)))
        for b, fs in enumerate(field_sets):
            for f in fs:
                if ch.drives(f):
                    F[:, b] += f(tm)
        out.append(F)
    return out


def _sequence(channels, F):
    """Symmetric composition order as (channel, field table, fraction) triples."""
    active = [(c, f) for c, f in zip(channels, F) if np.any(f)]
    if not active:
        return []
    head = [(c, f, 0.5) for c, f in active[:-1]]
    return head + [(active[-1][0], active[-1][1], 1.0)] + head[::-1]


def _evolve(psi, energies, dt, seq, n_steps, store_every, dip_matrix=None, norm_tol=NORM_TOL, t0=0.0):
    """Run ``n_steps`` steps on ``psi`` (N, B) in place; returns stored samples."""
    h = np.exp(-0.5j * energies * dt)[:, None]
    N = psi.shape[0]
    prepared = []
    for ch, F, frac in seq:
        full = ch.support.size == N and np.array_equal(ch.support, np.arange(N))
        prepared.append((ch.support, full, ch.vecs, ch.vecs.T.copy(), ch.vals[:, None] * (frac * dt), F))
    store_idx, store_psi, norms = [], [], []
    dip = None
    if dip_matrix is not None:
        dip = np.empty((n_steps + 1, psi.shape[1]))
        dip[0] = np.real(np.sum(psi.conj() * (dip_matrix @ psi), axis=0))

    def store(k):
        dev = np.abs(np.sum(np.abs(psi) ** 2, axis=0) - 1.0)
        if np.any(dev > norm_tol):
            raise NumericalError(
                f"norm drift {dev.max():.3e} exceeds {norm_tol:g} at step {k} (t = {t0 + k * dt / FS:.4f} fs)"
            )
        store_idx.append(k)
        store_psi.append(psi.copy())
        norms.append(dev)

    store(0)
    for k in range(n_steps):
        psi *= h
        for sup, full, V, VT, lam_dt, F in prepared:
            ph = np.exp(1j * lam_dt * F[k])
            if full:
                psi[:] = V @ (ph * (VT @ psi))
            else:
                psi[sup] = V @ (ph * (VT @ psi[sup]))
        psi *= h
        if dip is not None:
            dip[k + 1] = np.real(np.sum(psi.conj() * (dip_matrix @ psi), axis=0))
        if (k + 1) % store_every == 0 or k + 1 == n_steps:
            store(k + 1)
    return store_idx, store_psi, norms, dip


def propagate(
    initial,
    levels: LevelSet,
    dip: DipoleTable,
    fields: Union[Sequence[ControlField], Sequence[Sequence[ControlField]]],
    grid: TimeGrid,
    *,
    channels: Optional[Sequence[Channel]] = None,
    batch: bool = False,
    store_stride: float = 2.0,
    record_dipole: bool = False,
    energy_shift: float = 0.0,
    norm_tol: float = NORM_TOL,
) -> Trajectory:
    """Propagate ``initial`` through ``grid`` under the summed fields.

    Parameters
    ----------
    initial : array_like
        Interaction-picture amplitudes at ``grid.t_start``, shape ``(N,)``;
        with ``batch=True`` shape ``(N,)`` (shared) or ``(N, B)``.
    fields : sequence of ControlField, or with ``batch=True`` one such
        sequence per batch member.
    channels : optional
        Coupling channels; default is the full dipole matrix driven by all
        fields.
    store_stride : float
        fs between stored samples (rounded to whole steps, at least one).
    energy_shift : float
        eV added to every level energy (a global gauge change).
    """
    if dip.basis is not levels and len(dip.basis) != len(levels):
        raise ValueError("dipole table and level set have different sizes")
    N = len(levels)
    energies = (levels.energies + energy_shift) * EV
    field_sets = list(fields) if batch else [list(fields)]
    B = len(field_sets)
    psi0 = np.asarray(initial, dtype=complex)
    if psi0.ndim == 1:
        psi0 = np.repeat(psi0[:, None], B, axis=1)
    if psi0.shape != (N, B):
        raise ValueError(f"initial state has shape {psi0.shape}, expected {(N, B)}")
    nrm = np.sum(np.abs(psi0) ** 2, axis=0)
    if np.any(np.abs(nrm - 1) > 1e-10):
        raise ValueError("initial state is not normalized")
    chans = list(channels) if channels is not None else [full_channel(dip)]
    tm = grid.midpoints()
    F = _field_table(chans, field_sets, tm)
    seq = _sequence(chans, F)
    dt = grid.dt_au
    psi = psi0 * np.exp(-1j * energies * grid.t_start * FS)[:, None]
    start = psi.copy()
    n = grid.n_steps
    stride = max(1, int(round(store_stride / grid.dt_fs))) if store_stride > 0 else n
    idx, ps, norms, dipole = _evolve(
        psi, energies, dt, seq, n, stride, dip.matrix if record_dipole else None, norm_tol, grid.t_start
    )
    times = grid.t_start + grid.dt_fs * np.asarray(idx)
    amps = np.stack(ps)
    norms = np.stack(norms)
    final = psi
    if not batch:
        amps, norms, final, start = amps[..., 0], norms[..., 0], final[:, 0], start[:, 0]
        dipole = None if dipole is None else dipole[:, 0]
    return Trajectory(
        grid, times, amps, norms, final, energies, start, batch, dipole,
        _plan=(seq, n, dt, norm_tol),
    )


def populations(traj: Trajectory, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """|amplitude|^2 at the stored samples for ``indices`` (all by default)."""
    if indices is None:
        return np.abs(traj.amplitudes) ** 2
    idx = list(indices)
    for i in idx:
        if not (-traj.n_states <= i < traj.n_states):
            raise IndexError(f"state index {i} out of range for {traj.n_states} states")
    return np.abs(traj.amplitudes[:, idx]) ** 2


def dipole_expectation(traj: Trajectory, dip: DipoleTable) -> np.ndarray:
    """d(t) = <psi(t)|mu|psi(t)> at the stored samples."""
    a = traj.amplitudes
    if traj.batched:
        mu_a = np.einsum("ij,tjb->tib", dip.matrix, a)
        return np.real(np.sum(a.conj() * mu_a, axis=1))
    return np.real(np.sum(a.conj() * (a @ dip.matrix.T), axis=1))


def reverse_check(traj: Trajectory) -> float:
    """Run the conjugated final state back through the same fields.

    Returns ``1 - |<psi_rev(t_start)|psi(t_start)>|`` (worst batch member).
    """
    seq, n, dt, norm_tol = traj._plan
    rev = [(c, F[::-1], frac) for c, F, frac in seq]
    psi = np.conj(traj.final if traj.batched else traj.final[:, None]).copy()
    _evolve(psi, traj.energies, dt, rev, n, n, None, norm_tol)
    back = np.conj(psi)
    start = traj.initial if traj.batched else traj.initial[:, None]
    ov = np.abs(np.sum(back.conj() * start, axis=0))
    return float(np.max(1.0 - ov))
