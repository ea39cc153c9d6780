"""Three-level rotating-frame model and its adiabatic eigensystem.

Conventions.  Lab amplitudes psi_i map to the rotating frame by
``psi'_i = exp(i (E_2 - w_i) t) psi_i`` with ``w = (w_P, 0, w_S)``.  For a
lab Stokes carrier ``cos(w_S t + phi)`` this gives

    H' = -1/2 [[-2 d12, W_P, 0], [W_P, 0, W_S e^{-i phi}], [0, W_S e^{+i phi}, -2 d23]]

whose dark state is ``cos(T)|1> - e^{i phi} sin(T)|3>`` with energy d.
Detunings are carrier minus transition frequency, in a.u.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .pulses import ENVELOPE_FLOOR
from .units import FS

logger = logging.getLogger(__name__)

__all__ = [
    "RwaParameters",
    "AdiabaticFrame",
    "rwa_hamiltonian",
    "adiabatic_frame",
    "adiabatic_populations",
    "rotating_frame_transform",
    "inverse_rotating_frame_transform",
    "propagate_rwa",
    "mixing_angle",
]


@dataclass(frozen=True)
class RwaParameters:
    """Detunings (a.u.), relative phase and Rabi envelopes (a.u., of t in fs)."""

    delta12: float
    delta23: float
    phi: float
    rabi_P: Callable
    rabi_S: Callable

    @classmethod
    def resonant(cls, rabi_P, rabi_S, phi: float = 0.0, delta: float = 0.0) -> "RwaParameters":
        return cls(delta, delta, phi, rabi_P, rabi_S)

    @property
    def two_photon_resonant(self) -> bool:
        return self.delta12 == self.delta23


def _matrix(dP, dS, phi, wP, wS):
    wP = np.asarray(wP, dtype=float)
    wS = np.asarray(wS, dtype=float)
    H = np.zeros(wP.shape + (3, 3), dtype=complex)
    H[..., 0, 0] = dP
    H[..., 2, 2] = dS
    H[..., 0, 1] = H[..., 1, 0] = -0.5 * wP
    H[..., 1, 2] = -0.5 * wS * np.exp(-1j * phi)
    H[..., 2, 1] = -0.5 * wS * np.exp(1j * phi)
    return H


def rwa_hamiltonian(p: RwaParameters, t) -> np.ndarray:
    """Effective Hamiltonian at time(s) ``t`` (fs); shape ``(..., 3, 3)``."""
    return _matrix(p.delta12, p.delta23, p.phi, p.rabi_P(t), p.rabi_S(t))


def mixing_angle(rabi_P, rabi_S, floor: float = ENVELOPE_FLOOR) -> np.ndarray:
    """Theta = arctan(W_P / W_S); held at the nearest defined value where both vanish."""
    wP = np.atleast_1d(np.asarray(rabi_P, dtype=float))
    wS = np.atleast_1d(np.asarray(rabi_S, dtype=float))
    theta = np.arctan2(wP, wS)
    undefined = (np.abs(wP) <= floor) & (np.abs(wS) <= floor)
    if undefined.all():
        return np.zeros_like(theta)
    if undefined.any():
        idx = np.where(~undefined, np.arange(theta.size), 0)
        np.maximum.accumulate(idx, out=idx)
        first = np.argmax(~undefined)
        idx[:first] = first
        theta = theta[idx]
    return theta


@dataclass
class AdiabaticFrame:
    """Instantaneous eigensystem on a time grid.

    ``states[k]`` has columns psi_0, psi_+, psi_- at ``t[k]``.
    """

    t: np.ndarray
    theta: np.ndarray
    phi_mix: np.ndarray
    omega_rms: np.ndarray
    E0: np.ndarray
    Ep: np.ndarray
    Em: np.ndarray
    states: np.ndarray

    def to_csv(self, path, populations: Optional[np.ndarray] = None) -> None:
        cols = ["t_fs", "theta", "phi_mix", "E0_au", "Eplus_au", "Eminus_au"]
        data = [self.t, self.theta, self.phi_mix, self.E0, self.Ep, self.Em]
        if populations is not None:
            cols += ["P0", "Pplus", "Pminus"]
            data += [populations[:, 0], populations[:, 1], populations[:, 2]]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*data):
                w.writerow([repr(float(x)) for x in row])


def adiabatic_frame(p: RwaParameters, grid) -> AdiabaticFrame:
    """Dark and bright adiabatic states along ``grid`` (fs).

    Requires two-photon resonance; Phi = -atan2(W, d)/2 lies in (-pi/2, 0].
    """
    if not p.two_photon_resonant:
        raise ValueError("adiabatic frame needs delta12 == delta23")
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    d = p.delta12
    wP = np.broadcast_to(np.asarray(p.rabi_P(t), dtype=float), t.shape)
    wS = np.broadcast_to(np.asarray(p.rabi_S(t), dtype=float), t.shape)
    theta = mixing_angle(wP, wS)
    W = np.hypot(wP, wS)
    Phi = -0.5 * np.arctan2(W, d)
    root = np.sqrt(d * d + W * W)
    E0 = np.full_like(t, d)
    Ep = 0.5 * d + 0.5 * root
    Em = 0.5 * d - 0.5 * root
    e = np.exp(1j * p.phi)
    ct, st = np.cos(theta), np.sin(theta)
    cf, sf = np.cos(Phi), np.sin(Phi)
    S = np.zeros(t.shape + (3, 3), dtype=complex)
    S[:, 0, 0] = ct
    S[:, 2, 0] = -e * st
    S[:, 0, 1] = cf * st
    S[:, 1, 1] = sf
    S[:, 2, 1] = cf * e * ct
    S[:, 0, 2] = sf * st
    S[:, 1, 2] = -cf
    S[:, 2, 2] = sf * e * ct
    return AdiabaticFrame(t, theta, Phi, W, E0, Ep, Em, S)


def adiabatic_populations(state, frame: AdiabaticFrame, k=None) -> np.ndarray:
    """|<psi_j|state>|^2 for j = 0, +, -.

    With ``k=None`` and ``state`` of shape ``(n_t, 3)`` every time is used;
    otherwise ``k`` selects the frame sample.
    """
    state = np.asarray(state, dtype=complex)
    if k is None:
        if state.ndim != 2 or state.shape[0] != frame.t.size:
            raise ValueError("state series must have one row per frame time")
        amp = np.einsum("kij,ki->kj", frame.states.conj(), state)
    else:
        amp = frame.states[k].conj().T @ state
    return np.abs(amp) ** 2


def _phases(t_fs, omegaP, omegaS, E2):
    t = np.asarray(t_fs, dtype=float)[..., None] * FS
    w = np.array([omegaP, 0.0, omegaS])
    return np.exp(1j * (E2 - w) * t)


def rotating_frame_transform(lab_state, t, omegaP, omegaS, E2):
    """psi'_i = exp(i (E2 - w_i) t) psi_i; energies in a.u., ``t`` in fs.

    The state vector order is (|1>, |2>, |3>); ``lab_state`` may carry a
    leading time axis matching ``t``.
    """
    return np.asarray(lab_state) * _phases(t, omegaP, omegaS, E2)


def inverse_rotating_frame_transform(rot_state, t, omegaP, omegaS, E2):
    return np.asarray(rot_state) / _phases(t, omegaP, omegaS, E2)


def propagate_rwa(p: RwaParameters, psi0, t_span, t_eval=None, rtol=1e-10, atol=1e-12):
    """Integrate i d/dt psi' = H'(t) psi' in the rotating frame.

    ``t_span``/``t_eval`` are in fs.  Returns ``(t_fs, states)`` with
    states of shape ``(n_t, 3)``.
    """
    psi0 = np.asarray(psi0, dtype=complex)

    def rhs(tau, y):
        H = rwa_hamiltonian(p, tau / FS)
        return -1j * (H @ y)

    t0, t1 = t_span
    sol = solve_ivp(
        rhs, (t0 * FS, t1 * FS), psi0,
        t_eval=None if t_eval is None else np.asarray(t_eval) * FS,
        method="DOP853", rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"RWA integration failed: {sol.message}")
    return sol.t / FS, sol.y.T
