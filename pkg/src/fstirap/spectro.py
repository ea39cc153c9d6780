"""Transient-absorption spectrograms from the simulated dipole response.

The single-atom cross-section is

    sigma(w) = (4 pi w / c) Im[ d(w) / E_probe(w) ],   f(w) = ∫ f(t) e^{i w t} dt

with the dipole response damped by ``exp(-(t - t_probe)/tau)`` after the
probe.  Transforms are direct sums evaluated on the requested energy grid,
which is equivalent to zero-padding an FFT to that bin width.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from .dipoles import DipoleTable
from .levels import LevelSet
from .propagator import Channel, TimeGrid, propagate
from .parallel import map_ordered
from .pulses import ControlField, GaussianParams, sample_field
from .units import C_AU, EV, FS

logger = logging.getLogger(__name__)

__all__ = [
    "Spectrogram",
    "LineTrace",
    "ResponseError",
    "apply_window",
    "fourier",
    "cross_section",
    "parseval_error",
    "default_probe",
    "table_i_lines",
    "identify_peaks",
    "atas_scan",
    "fit_oscillation",
    "OscillationFit",
]

SPECTRUM_FLOOR = 1e-14
DEFAULT_ENERGIES = np.round(np.arange(16.25, 18.25 + 1e-9, 0.01), 10)


class ResponseError(ValueError):
    pass


def apply_window(series, t, t_probe: float, tau: float):
    """Damp the post-probe part of ``series`` by exp(-(t - t_probe)/tau).

    ``t``, ``t_probe`` and ``tau`` share one time unit; earlier samples are
    returned unchanged.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    series = np.asarray(series)
    t = np.asarray(t, dtype=float)
    if math.isinf(tau):
        return series.copy()
    w = np.where(t >= t_probe, np.exp(-np.clip(t - t_probe, 0, None) / tau), 1.0)
    if series.ndim > 1:
        w = w.reshape((-1,) + (1,) * (series.ndim - 1))
    return series * w


def fourier(series, t_fs, energies_ev):
    """∫ f(t) e^{i w t} dt on a uniform grid (trapezoid), t in fs, w in eV.

    ``series`` may carry trailing batch axes; the result has shape
    ``(n_energies,) + series.shape[1:]``.
    """
    t = np.asarray(t_fs, dtype=float)
    dt = (t[1] - t[0]) * FS
    w = np.asarray(energies_ev, dtype=float) * EV
    wts = np.full(t.size, dt)
    wts[0] = wts[-1] = 0.5 * dt
    kern = np.exp(1j * np.outer(w, (t - t[0]) * FS)) * wts
    return np.tensordot(kern, np.asarray(series), axes=(1, 0)) * np.exp(1j * w * t[0] * FS).reshape(
        (-1,) + (1,) * (np.ndim(series) - 1)
    )


def cross_section(d_series, probe_series, t_fs, energies_ev=DEFAULT_ENERGIES, *, t_probe=None, tau: float = 10.0, floor: float = SPECTRUM_FLOOR):
    """Absorption cross-section (a.u. of area) on ``energies_ev``.

    ``d_series`` is the raw dipole response; it is windowed here when
    ``t_probe`` is given.  Raises :class:`ResponseError` when the probe
    spectrum falls below ``floor`` anywhere on the energy grid.
    """
    d = np.asarray(d_series, dtype=float)
    if t_probe is not None:
        d = apply_window(d, t_fs, t_probe, tau)
    Ew = fourier(probe_series, t_fs, energies_ev)
    if np.any(np.abs(Ew) < floor):
        bad = np.asarray(energies_ev)[np.abs(Ew).reshape(len(energies_ev), -1).min(axis=1) < floor]
        raise ResponseError(f"probe spectrum vanishes at {bad[:5]} eV")
    dw = fourier(d, t_fs, energies_ev)
    w = (np.asarray(energies_ev) * EV).reshape((-1,) + (1,) * (dw.ndim - 1))
    return 4 * np.pi * w / C_AU * np.imag(dw / Ew)


def parseval_error(series) -> float:
    """Relative mismatch of time- and frequency-domain energy of a sampled signal."""
    x = np.asarray(series)
    X = np.fft.fft(x)
    et = float(np.sum(np.abs(x) ** 2))
    ef = float(np.sum(np.abs(X) ** 2) / x.size)
    return abs(et - ef) / max(et, 1e-300)


def default_probe(
    t_probe: float = 0.0,
    energies=(16.325, 17.631),
    intensity: float = 0.008,
    width: float = 1.0,
) -> list[ControlField]:
    """Two-colour Gaussian probe centred at ``t_probe`` (fs)."""
    out = []
    for e in energies:
        env = GaussianParams(intensity, t_probe, width, e).envelope()
        out.append(ControlField(env, e, 0.0, "probe"))
    return out


@dataclass(frozen=True)
class TableLine:
    symbol: str
    initial: str
    final: str
    energy: float


def table_i_lines(path: Optional[Path] = None) -> list[TableLine]:
    path = Path(path) if path else Path(__file__).parent / "data" / "table_i_lines.csv"
    with path.open(newline="") as fh:
        return [TableLine(r["symbol"], r["initial"], r["final"], float(r["energy_eV"])) for r in csv.DictReader(fh)]


@dataclass
class LineTrace:
    symbol: str
    label: str
    energy: float
    trace: np.ndarray


@dataclass
class Spectrogram:
    """sigma[i_energy, i_delay] in a.u. of area."""

    delays: np.ndarray
    energies: np.ndarray
    sigma: np.ndarray
    lines: list = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.sigma)):
            raise ResponseError("non-finite cross-section values")

    def trace(self, energy: float, halfwidth: float = 0.0) -> np.ndarray:
        """sigma versus delay at the grid energy nearest ``energy`` (max over +-halfwidth)."""
        sel = np.abs(self.energies - energy) <= halfwidth + 1e-9
        if not sel.any():
            sel = np.abs(self.energies - energy) == np.min(np.abs(self.energies - energy))
        return self.sigma[sel].max(axis=0)

    def annotate(self, lines: Optional[Sequence[TableLine]] = None, halfwidth: float = 0.0) -> list[LineTrace]:
        lines = table_i_lines() if lines is None else lines
        self.lines = [
            LineTrace(l.symbol, l.final, l.energy, self.trace(l.energy, halfwidth))
            for l in lines
            if self.energies[0] - 1e-9 <= l.energy <= self.energies[-1] + 1e-9
        ]
        return self.lines

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["energy_eV", *(f"{d:.6g}" for d in self.delays)])
            for e, row in zip(self.energies, self.sigma):
                w.writerow([f"{e:.6f}", *(repr(float(x)) for x in row)])

    def to_json(self, path) -> None:
        data = [
            {"label": f"{l.symbol} {l.label}", "symbol": l.symbol, "energy_eV": l.energy, "delay_trace": [float(x) for x in l.trace]}
            for l in self.lines
        ]
        Path(path).write_text(json.dumps({"delays_fs": [float(x) for x in self.delays], "lines": data}, indent=1))


def identify_peaks(energies, sigma_column, lines: Optional[Sequence[TableLine]] = None, tol: float = 0.02, rel_prominence: float = 0.01):
    """Local maxima of one spectrum and their nearest reference line within ``tol`` eV.

    Returns a list of ``(energy, value, symbol or None)``.
    """
    lines = table_i_lines() if lines is None else lines
    col = np.asarray(sigma_column, dtype=float)
    scale = np.max(np.abs(col)) if col.size else 0.0
    if scale == 0:
        return []
    idx, _ = find_peaks(col, prominence=rel_prominence * scale)
    out = []
    energies = np.asarray(energies, dtype=float)
    for i in idx:
        e = float(energies[i])
        if 0 < i < col.size - 1:
            # vertex of the parabola through the three samples around the maximum
            y0, y1, y2 = col[i - 1], col[i], col[i + 1]
            den = y0 - 2 * y1 + y2
            if den < 0:
                e += 0.5 * (y0 - y2) / den * (energies[i + 1] - energies[i])
        near = min(lines, key=lambda l: abs(l.energy - e), default=None)
        sym = near.symbol if near is not None and abs(near.energy - e) <= tol else None
        out.append((e, float(col[i]), sym))
    return out


def atas_scan(
    levels: LevelSet,
    dip: DipoleTable,
    initial,
    control: Sequence[ControlField],
    delays,
    grid: TimeGrid,
    *,
    probe: Optional[Sequence[ControlField]] = None,
    energies=DEFAULT_ENERGIES,
    tau: float = 10.0,
    span: float = 80.0,
    pre: float = 5.0,
    channels: Optional[Sequence[Channel]] = None,
    chunk: int = 64,
    workers: Optional[int] = 1,
) -> Spectrogram:
    """Delay scan of the absorption cross-section.

    One propagation per delay (batched); the probe (centred at 0 fs when
    given, shifted to each delay) is included non-perturbatively.  The
    response is transformed over ``[t0 - pre, t0 + span]``.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    probe = default_probe() if probe is None else list(probe)
    if delays.min() - pre < grid.t_start - 1e-9 or delays.max() + span > grid.t_end + 1e-9:
        raise ValueError(
            f"delays need [{delays.min() - pre:.2f}, {delays.max() + span:.2f}] fs inside the grid "
            f"[{grid.t_start}, {grid.t_end}]"
        )
    t_all = grid.times()
    n_loc = int(round((pre + span) / grid.dt_fs)) + 1
    t_loc = -pre + grid.dt_fs * np.arange(n_loc)
    kern = np.exp(1j * np.outer(np.asarray(energies) * EV, t_loc * FS)) * (grid.dt_au)
    kern[:, 0] *= 0.5
    kern[:, -1] *= 0.5
    w = np.asarray(energies) * EV

    def run(c0):
        part = delays[c0:c0 + chunk]
        fsets = [list(control) + [p.shifted(t0) for p in probe] for t0 in part]
        tr = propagate(
            initial, levels, dip, fsets, grid, channels=channels, batch=True,
            store_stride=0, record_dipole=True,
        )
        cols = np.empty((len(energies), part.size))
        for j, t0 in enumerate(part):
            k0 = int(round((t0 - pre - grid.t_start) / grid.dt_fs))
            # probe sampled on the same absolute times, carrier phase included
            t_abs = t_all[k0:k0 + n_loc]
            Ew = kern @ sum(sample_field(p.shifted(t0), t_abs) for p in probe)
            if np.any(np.abs(Ew) < SPECTRUM_FLOOR):
                raise ResponseError("probe spectrum vanishes inside the requested energy range")
            seg = tr.dipole[k0:k0 + n_loc, j] * apply_window(np.ones(n_loc), t_abs, t0, tau)
            cols[:, j] = 4 * np.pi * w / C_AU * np.imag((kern @ seg) / Ew)
        return cols

    sigma = np.concatenate(map_ordered(run, range(0, delays.size, chunk), workers), axis=1)
    return Spectrogram(delays, np.asarray(energies, dtype=float), sigma)


@dataclass
class OscillationFit:
    period: float
    amplitude: float
    phase: float
    offset: float
    slope: float

    @property
    def frequency_ev(self) -> float:
        return 2 * np.pi / (self.period * FS) / EV


def fit_oscillation(delays, trace, period_guess: Optional[float] = None) -> OscillationFit:
    """Fit ``a cos(2 pi t / T + p) + c + s t`` to a delay trace.

    The period is seeded from the peak of a zero-padded FFT unless given.
    """
    t = np.asarray(delays, dtype=float)
    y = np.asarray(trace, dtype=float)
    if period_guess is None:
        yd = y - np.polyval(np.polyfit(t, y, 1), t)
        n = 64 * t.size
        F = np.abs(np.fft.rfft(yd, n))
        f = np.fft.rfftfreq(n, t[1] - t[0])
        k = 1 + np.argmax(F[1:])
        period_guess = 1.0 / f[k]
    amp0 = 0.5 * (y.max() - y.min())

    def model(tt, a, T, p, c, s):
        return a * np.cos(2 * np.pi * tt / T + p) + c + s * tt

    best = None
    for p0 in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2):
        try:
            popt, _ = curve_fit(model, t, y, p0=[amp0, period_guess, p0, y.mean(), 0.0], maxfev=20000)
        except RuntimeError:
            continue
        res = float(np.sum((model(t, *popt) - y) ** 2))
        if best is None or res < best[0]:
            best = (res, popt)
    if best is None:
        raise RuntimeError("oscillation fit failed")
    a, T, p, c, s = best[1]
    if a < 0:
        a, p = -a, p + np.pi
    return OscillationFit(float(abs(T)), float(a), float(np.mod(p, 2 * np.pi)), float(c), float(s))
