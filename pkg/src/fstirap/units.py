"""Unit conversions.  Everything internal is atomic units."""

import numpy as np

HARTREE_EV = 27.211386245988
EV = 1.0 / HARTREE_EV  # hartree per eV
FS = 41.341373335  # a.u. of time per fs
AS = FS * 1e-3
C_AU = 137.036
# I [W/cm^2] = ATOMIC_INTENSITY * E0[a.u.]^2
ATOMIC_INTENSITY = 3.50945e16


def ev_to_au(e):
    return np.asarray(e) * EV


def au_to_ev(e):
    return np.asarray(e) * HARTREE_EV


def intensity_to_field(i_tw_cm2):
    """Peak field amplitude (a.u.) of a pulse with peak intensity in TW/cm^2."""
    i = np.asarray(i_tw_cm2, dtype=float)
    if np.any(i < 0):
        raise ValueError("intensity must be non-negative")
    return np.sqrt(i * 1e12 / ATOMIC_INTENSITY)


def field_to_intensity(e0):
    """Inverse of :func:`intensity_to_field`, result in TW/cm^2."""
    return np.asarray(e0, dtype=float) ** 2 * ATOMIC_INTENSITY / 1e12


def period_fs(energy_ev):
    """Beat period 2π/ω in fs for an energy spacing in eV."""
    return 2 * np.pi / (energy_ev * EV) / FS
