"""Final-population landscapes for twin identical Gaussians and transfer optimization.

Every scan point starts from ``cos(a)|1> + sin(a)|3>``.  Because the
propagation is linear, only |1> and |3> are propagated per value of the
second axis; all initial mixing angles follow by superposition.
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

from .propagator import NumericalError, TimeGrid, propagate
from .pulses import ControlField, twin_gaussians
from .parallel import map_ordered
from .units import FS
from .system import StirapSystem

logger = logging.getLogger(__name__)

__all__ = [
    "Axis",
    "ScanGrid",
    "Landscape",
    "TwinPulse",
    "scan_delay",
    "scan_phase",
    "final_amplitudes",
    "optimize_transfer",
    "Optimum",
    "fidelity",
]


@dataclass(frozen=True)
class Axis:
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 points")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"axis {self.name!r} has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def linspace(cls, name, start, stop, n, endpoint=True) -> "Axis":
        return cls(name, np.linspace(start, stop, n, endpoint=endpoint))


@dataclass(frozen=True)
class ScanGrid:
    axis1: Axis
    axis2: Axis
    fixed: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TwinPulse:
    """Identical Gaussian pump and Stokes pulses.

    ``carrier_P``/``carrier_S`` of ``None`` mean one-photon resonance.
    """

    intensity: float = 3.38
    width: float = 50.0
    carrier_P: Optional[float] = None
    carrier_S: Optional[float] = None
    dt: float = 10.0
    margin: float = 5.0

    def carriers(self, system: StirapSystem) -> tuple[float, float]:
        wP, wS = system.resonant_carriers()
        return (wP if self.carrier_P is None else self.carrier_P, wS if self.carrier_S is None else self.carrier_S)

    def fields(self, system: StirapSystem, delay: float, phi: float, center: float = 0.0, intensity=None):
        wP, wS = self.carriers(system)
        I = self.intensity if intensity is None else intensity
        return list(twin_gaussians(I, self.width, center - delay / 2, delay, wP, wS, phi))

    def grid(self, max_abs_delay: float) -> TimeGrid:
        half = max_abs_delay / 2 + self.margin * self.width
        return TimeGrid(-half, half, self.dt)


@dataclass
class Landscape:
    """P[i, j] for axis1[i] (initial mixing angle) and axis2[j]; NaN where missing."""

    grid: ScanGrid
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.P1)

    def closure_error(self) -> float:
        ok = ~self.missing
        return float(np.max(np.abs(self.P1 + self.P2 + self.P3 - 1.0)[ok])) if ok.any() else 0.0

    def fraction_above(self, threshold: float = 0.95) -> float:
        ok = ~self.missing
        return float(np.mean((self.P1 + self.P3)[ok] > threshold))

    def reachability(self, threshold: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
        """Per axis1 value: best P1 and best P3 over axis2."""
        return np.nanmax(self.P1, axis=1), np.nanmax(self.P3, axis=1)

    def smoothness(self) -> dict:
        """Largest population jump between neighbouring grid points, per axis."""
        out = {}
        for name, P in (("P1", self.P1), ("P3", self.P3)):
            out[f"{name}_max_step_axis1"] = float(np.nanmax(np.abs(np.diff(P, axis=0))))
            out[f"{name}_max_step_axis2"] = float(np.nanmax(np.abs(np.diff(P, axis=1))))
        return out

    def to_csv(self, path) -> None:
        a1, a2 = self.grid.axis1, self.grid.axis2
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([a1.name, a2.name, "P1", "P2", "P3"])
            for i, x in enumerate(a1.values):
                for j, y in enumerate(a2.values):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(self.P1[i, j])), repr(float(self.P2[i, j])), repr(float(self.P3[i, j]))])

    def summary(self) -> dict:
        b1, b3 = self.reachability()
        return {
            "axis1": self.grid.axis1.name,
            "axis2": self.grid.axis2.name,
            "shape": list(self.P1.shape),
            "fixed": {k: float(v) if isinstance(v, (int, float)) else v for k, v in self.grid.fixed.items()},
            "fraction_P1_plus_P3_above_0.95": self.fraction_above(0.95),
            "closure_error": self.closure_error(),
            "min_over_alpha_of_best_P1": float(np.nanmin(b1)),
            "min_over_alpha_of_best_P3": float(np.nanmin(b3)),
            "missing_points": int(self.missing.sum()),
            **self.smoothness(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=1))


def final_amplitudes(system: StirapSystem, field_sets, grid: TimeGrid, initial) -> np.ndarray:
    """Interaction-picture final amplitudes, shape (N, B)."""
    tr = propagate(initial, system.levels, system.dip, field_sets, grid, channels=system.channels, batch=True, store_stride=0)
    return tr.final * np.exp(1j * tr.energies * grid.t_end * FS)[:, None]


def _landscape(system, alphas, field_sets, grid, axes, chunk=64, workers=None):
    """Propagate |1> and |3> under each field set, combine for every alpha."""
    n2 = len(field_sets)
    U1 = np.full((system.n, n2), np.nan, dtype=complex)
    U3 = np.full((system.n, n2), np.nan, dtype=complex)

    def run(c0):
        fs = field_sets[c0:c0 + chunk]
        k = len(fs)
        init = np.zeros((system.n, 2 * k), dtype=complex)
        init[system.i1, :k] = 1.0
        init[system.i3, k:] = 1.0
        try:
            return final_amplitudes(system, fs + fs, grid, init)
        except NumericalError as exc:
            logger.warning("scan chunk %d failed: %s", c0, exc)
            return None

    starts = list(range(0, n2, chunk))
    for c0, out in zip(starts, map_ordered(run, starts, workers)):
        if out is None:
            continue
        k = out.shape[1] // 2
        U1[:, c0:c0 + k] = out[:, :k]
        U3[:, c0:c0 + k] = out[:, k:]
    ca = np.cos(alphas)[:, None, None]
    sa = np.sin(alphas)[:, None, None]
    psi = ca * U1[None] + sa * U3[None]  # (n_alpha, N, n2)
    P = np.abs(psi) ** 2
    return Landscape(axes, P[:, system.i1, :], P[:, system.i2, :], P[:, system.i3, :])


def scan_delay(
    system: StirapSystem,
    alphas,
    delays,
    phi: float = 1.14 * np.pi,
    pulse: TwinPulse = TwinPulse(),
    workers: Optional[int] = 1,
) -> Landscape:
    """Final populations over (alpha, delay) at fixed relative phase.

    ``delay = t_S - t_P``: negative means the pump precedes the Stokes pulse.
    """
    alphas = np.asarray(alphas, dtype=float)
    delays = np.asarray(delays, dtype=float)
    grid = pulse.grid(np.max(np.abs(delays)))
    fsets = [pulse.fields(system, d, phi) for d in delays]
    axes = ScanGrid(Axis("alpha", alphas), Axis("delay_fs", delays), {"phi": phi, "intensity_tw_cm2": pulse.intensity, "gamma_fs": pulse.width})
    return _landscape(system, alphas, fsets, grid, axes, workers=workers)


def scan_phase(
    system: StirapSystem,
    alphas,
    phis,
    delay: float = -12.75,
    pulse: TwinPulse = TwinPulse(),
    workers: Optional[int] = 1,
) -> Landscape:
    """Final populations over (alpha, relative phase) at fixed delay."""
    alphas = np.asarray(alphas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    grid = pulse.grid(abs(delay))
    fsets = [pulse.fields(system, delay, p) for p in phis]
    axes = ScanGrid(Axis("alpha", alphas), Axis("phi", phis), {"delay_fs": delay, "intensity_tw_cm2": pulse.intensity, "gamma_fs": pulse.width})
    return _landscape(system, alphas, fsets, grid, axes, workers=workers)


def fidelity(psi3, beta: float) -> float:
    """max over the target's relative phase of |<cos b|1> + e^{ix} sin b|3> | psi>|^2.

    ``psi3`` holds the (|1>, |2>, |3>) amplitudes.
    """
    return float((abs(psi3[0]) * math.cos(beta) + abs(psi3[2]) * math.sin(beta)) ** 2)


@dataclass
class Optimum:
    params: dict
    fidelity: float
    populations: tuple
    baseline: float
    improved: bool
    evaluations: int

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(
            {"params": self.params, "fidelity": self.fidelity, "populations": list(self.populations),
             "baseline": self.baseline, "improved": self.improved, "evaluations": self.evaluations},
            indent=1,
        ))


PARAMS = ("delay", "phi", "intensity")
# gains below this are propagation roundoff
IMPROVE_TOL = 1e-9


def optimize_transfer(
    system: StirapSystem,
    initial_alpha: float,
    target_beta: float,
    free: dict,
    fixed: Optional[dict] = None,
    pulse: TwinPulse = TwinPulse(),
    *,
    coarse: int = 16,
    refine_rounds: int = 4,
    refine_points: int = 7,
    seed: int = 0,
    initial_phase: float = 0.0,
) -> Optimum:
    """Coarse grid search then shrinking local grids over up to three parameters.

    Parameters
    ----------
    free : dict
        ``{name: (low, high)}`` for names among ``delay`` (fs), ``phi``
        (rad) and ``intensity`` (TW/cm^2).
    fixed : dict
        Values for the remaining parameters (defaults: delay 0, phi 0,
        intensity ``pulse.intensity``).
    seed : int
        Seeds the sub-cell jitter of the refinement grids.

    Returns
    -------
    Optimum
        ``improved`` is False when nothing beats the zero-field baseline by
        more than ``IMPROVE_TOL``,
        in which case the baseline point is returned.
    """
    if not 1 <= len(free) <= 3 or any(k not in PARAMS for k in free):
        raise ValueError(f"free parameters must be 1-3 of {PARAMS}")
    base = {"delay": 0.0, "phi": 0.0, "intensity": pulse.intensity}
    base.update(fixed or {})
    names = list(free)
    lo = np.array([free[k][0] for k in names], dtype=float)
    hi = np.array([free[k][1] for k in names], dtype=float)
    rng = np.random.default_rng(seed)
    psi0 = system.state(initial_alpha, initial_phase)
    max_delay = max(abs(base["delay"]), *(abs(free["delay"][i]) for i in (0, 1))) if "delay" in free else abs(base["delay"])
    grid = pulse.grid(max_delay)
    evals = 0

    def evaluate(points):
        nonlocal evals
        fsets = []
        for p in points:
            par = dict(base)
            par.update(dict(zip(names, p)))
            fsets.append(pulse.fields(system, par["delay"], par["phi"], intensity=par["intensity"]))
        out = final_amplitudes(system, fsets, grid, psi0)
        evals += len(points)
        three = system.three(out)
        return np.array([fidelity(three[:, b], target_beta) for b in range(len(points))]), np.abs(three) ** 2

    baseline = fidelity(system.three(psi0), target_beta)
    axes = [np.linspace(l, h, coarse) for l, h in zip(lo, hi)]
    pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(names), -1).T
    F, P = evaluate(pts)
    k = int(np.argmax(F))
    best, bestF, bestP = pts[k], F[k], P[:, k]
    step = (hi - lo) / (coarse - 1)
    for _ in range(refine_rounds):
        offs = np.linspace(-1, 1, refine_points)
        jitter = rng.uniform(-0.5, 0.5, size=len(names)) * step / (refine_points - 1)
        local = [np.clip(best[i] + offs * step[i] + jitter[i], lo[i], hi[i]) for i in range(len(names))]
        pts = np.array(np.meshgrid(*local, indexing="ij")).reshape(len(names), -1).T
        F, P = evaluate(pts)
        k = int(np.argmax(F))
        if F[k] > bestF:
            best, bestF, bestP = pts[k], F[k], P[:, k]
        step = step / ((refine_points - 1) / 2)
    params = dict(base)
    params.update({n: float(v) for n, v in zip(names, best)})
    if bestF <= baseline + IMPROVE_TOL:
        P0 = np.abs(system.three(psi0)) ** 2
        return Optimum({**base, "intensity": 0.0}, baseline, tuple(map(float, P0)), baseline, False, evals)
    return Optimum(params, float(bestF), tuple(map(float, bestP)), baseline, True, evals)
