"""Control-field envelopes, carriers and Gaussian fitting.

Times are in fs, field amplitudes in a.u.  A pulse labelled with an
intensity is converted once via ``E0 = sqrt(I / 3.50945e16 W/cm^2)``.
Pump and Stokes envelopes built by :func:`composite_envelopes` satisfy the
mixing-angle boundary conditions with a positive ratio
``Omega_P / Omega_S -> tan(alpha)`` before and ``tan(beta)`` after the pulses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .units import EV, FS, field_to_intensity, intensity_to_field

logger = logging.getLogger(__name__)

__all__ = [
    "GaussianParams",
    "GaussianEnvelope",
    "TwoGaussianEnvelope",
    "ControlField",
    "EnvelopePair",
    "composite_envelopes",
    "composite_fields",
    "twin_gaussians",
    "gaussian_pair",
    "sample_field",
    "total_field",
    "fit_gaussian",
    "FitResult",
    "FitError",
    "BoundaryResiduals",
    "UndefinedRatioError",
    "stirap_boundary_residuals",
    "ENVELOPE_FLOOR",
]

ENVELOPE_FLOOR = 1e-12
ROLES = ("pump", "stokes", "probe")


def gaussian(t, center: float, width: float):
    t = np.asarray(t, dtype=float)
    return np.exp(-(((t - center) / width) ** 2))


@dataclass(frozen=True)
class GaussianParams:
    """One Gaussian pulse: ``sqrt(I) exp(-((t - center)/width)^2) cos(w t + phase)``.

    Attributes
    ----------
    peak_intensity : float
        TW/cm^2.
    center, width : float
        fs; ``width`` is the 1/e half-width of the field envelope.
    carrier : float
        Photon energy in eV.
    phase : float
        Carrier phase in radians.
    """

    peak_intensity: float
    center: float
    width: float
    carrier: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"Gaussian width must be positive, got {self.width}")
        if self.peak_intensity < 0:
            raise ValueError("peak intensity must be non-negative")

    @property
    def amplitude(self) -> float:
        return float(intensity_to_field(self.peak_intensity))

    def envelope(self) -> "GaussianEnvelope":
        return GaussianEnvelope(self.amplitude, self.center, self.width)


@dataclass(frozen=True)
class GaussianEnvelope:
    amplitude: float
    center: float
    width: float

    def __call__(self, t):
        return self.amplitude * gaussian(t, self.center, self.width)

    def support(self, floor: float = ENVELOPE_FLOOR) -> tuple[float, float]:
        if self.amplitude <= floor:
            return (self.center, self.center)
        half = self.width * math.sqrt(math.log(self.amplitude / floor))
        return (self.center - half, self.center + half)


@dataclass(frozen=True)
class TwoGaussianEnvelope:
    """``amplitude * (w_left G_L(t) + w_right G_R(t))``; one half of a composite pair."""

    amplitude: float
    t_left: float
    t_right: float
    gamma_left: float
    gamma_right: float
    w_left: float
    w_right: float

    def __post_init__(self):
        if not (self.gamma_left > 0 and self.gamma_right > 0):
            raise ValueError("Gaussian widths must be positive")

    def __call__(self, t):
        return self.amplitude * (
            self.w_left * gaussian(t, self.t_left, self.gamma_left)
            + self.w_right * gaussian(t, self.t_right, self.gamma_right)
        )

    def support(self, floor: float = ENVELOPE_FLOOR) -> tuple[float, float]:
        lo, hi = [], []
        for w, c, g in ((self.w_left, self.t_left, self.gamma_left), (self.w_right, self.t_right, self.gamma_right)):
            a = abs(self.amplitude * w)
            if a > floor:
                h = g * math.sqrt(math.log(a / floor))
                lo.append(c - h)
                hi.append(c + h)
        if not lo:
            return (self.t_left, self.t_left)
        return (min(lo), max(hi))


Envelope = Union[GaussianEnvelope, TwoGaussianEnvelope]


@dataclass(frozen=True)
class ControlField:
    """A carrier-modulated pulse ``envelope(t) cos(carrier t + phase)``.

    ``role`` fixes which transition the pulse is meant for: the pump drives
    |1>-|2>, the Stokes |2>-|3>.  In the full multilevel model every pulse
    couples every allowed transition regardless of role.
    """

    envelope: Envelope
    carrier: float
    phase: float = 0.0
    role: str = "pump"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")

    @property
    def omega(self) -> float:
        return self.carrier * EV

    def __call__(self, t_fs):
        return sample_field(self, t_fs)

    def support(self, floor: float = ENVELOPE_FLOOR):
        return self.envelope.support(floor)

    def scaled(self, factor: float) -> "ControlField":
        env = self.envelope
        from dataclasses import replace

        return replace(self, envelope=replace(env, amplitude=env.amplitude * factor))

    def shifted(self, dt_fs: float) -> "ControlField":
        from dataclasses import replace

        env = self.envelope
        if isinstance(env, GaussianEnvelope):
            env = replace(env, center=env.center + dt_fs)
        else:
            env = replace(env, t_left=env.t_left + dt_fs, t_right=env.t_right + dt_fs)
        return replace(self, envelope=env)


def sample_field(f: ControlField, t_fs, mu_ref: Optional[float] = None):
    """Instantaneous field of ``f`` at lab time ``t_fs`` (a.u. of field).

    With ``mu_ref`` the coupling ``mu_ref * E(t)`` is returned instead.
    """
    t_fs = np.asarray(t_fs, dtype=float)
    val = f.envelope(t_fs) * np.cos(f.omega * t_fs * FS + f.phase)
    return val if mu_ref is None else mu_ref * val


def total_field(fields: Sequence[ControlField], t_fs):
    t_fs = np.asarray(t_fs, dtype=float)
    out = np.zeros_like(t_fs)
    for f in fields:
        out = out + sample_field(f, t_fs)
    return out


class EnvelopePair(NamedTuple):
    pump: Callable
    stokes: Callable


def _check_angle(name, x):
    if not (-1e-12 <= x <= math.pi / 2 + 1e-12):
        raise ValueError(f"{name}={x} outside [0, pi/2]")


def composite_fields(
    alpha: float,
    beta: float,
    EP: float,
    ES: float,
    tL: float,
    tR: float,
    gammaL: float,
    gammaR: float,
    carrier_P: float = 0.0,
    carrier_S: float = 0.0,
    phi: float = 0.0,
) -> tuple[ControlField, ControlField]:
    """Pump and Stokes fields of the composite two-Gaussian design.

    ``EP``, ``ES`` are field amplitudes in a.u.; the relative phase ``phi``
    rides on the Stokes carrier.
    """
    _check_angle("alpha", alpha)
    _check_angle("beta", beta)
    pe = TwoGaussianEnvelope(EP, tL, tR, gammaL, gammaR, math.sin(alpha), math.sin(beta))
    se = TwoGaussianEnvelope(ES, tL, tR, gammaL, gammaR, math.cos(alpha), math.cos(beta))
    return (
        ControlField(pe, carrier_P, 0.0, "pump"),
        ControlField(se, carrier_S, phi, "stokes"),
    )


def composite_envelopes(
    alpha: float,
    beta: float,
    EP: float,
    ES: float,
    tL: float,
    tR: float,
    gammaL: float,
    gammaR: float,
    mu12: float = 1.0,
    mu23: float = 1.0,
) -> EnvelopePair:
    """Rabi-frequency envelopes Omega_P(t), Omega_S(t) of the composite design.

    Omega_P = EP mu12 (G_L sin(alpha) + G_R sin(beta)) and
    Omega_S = ES mu23 (G_L cos(alpha) + G_R cos(beta)), G_X Gaussians of
    1/e half-width gammaX centred at tX (fs).
    """
    p, s = composite_fields(alpha, beta, EP, ES, tL, tR, gammaL, gammaR)
    pe, se = p.envelope, s.envelope
    return EnvelopePair(lambda t: mu12 * pe(t), lambda t: mu23 * se(t))


def gaussian_pair(
    pump: GaussianParams, stokes: GaussianParams
) -> tuple[ControlField, ControlField]:
    """Two independent Gaussian pulses; the Stokes phase is the relative phase."""
    return (
        ControlField(pump.envelope(), pump.carrier, pump.phase, "pump"),
        ControlField(stokes.envelope(), stokes.carrier, stokes.phase, "stokes"),
    )


def twin_gaussians(
    intensity: float,
    width: float,
    t_pump: float,
    delay: float,
    carrier_P: float,
    carrier_S: float,
    phi: float = 0.0,
) -> tuple[ControlField, ControlField]:
    """Identical envelopes with Omega_S(t) = Omega_P(t - delay).

    ``delay = t_S - t_P``; negative delay means the pump arrives first.
    """
    return gaussian_pair(
        GaussianParams(intensity, t_pump, width, carrier_P, 0.0),
        GaussianParams(intensity, t_pump + delay, width, carrier_S, phi),
    )


# ---------------------------------------------------------------- fitting


class FitError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class FitResult:
    """Least-squares Gaussian ``amplitude * exp(-((t-center)/width)^2)``."""

    amplitude: float
    center: float
    width: float
    residual: float
    history: list = field(default_factory=list)
    iterations: int = 0

    @property
    def peak_intensity(self) -> float:
        """Peak intensity in TW/cm^2 when the samples are field amplitudes (a.u.)."""
        return float(field_to_intensity(self.amplitude))

    def params(self, carrier: float = 0.0, phase: float = 0.0) -> GaussianParams:
        return GaussianParams(self.peak_intensity, self.center, self.width, carrier, phase)


def _moment_guess(t, y):
    w = np.clip(y, 0, None)
    if w.sum() <= 0:
        w = np.abs(y)
    amp = float(y[np.argmax(np.abs(y))])
    c = float(np.sum(w * t) / np.sum(w))
    var = float(np.sum(w * (t - c) ** 2) / np.sum(w))
    # for exp(-(x/g)^2) the variance of the profile is g^2/2
    return np.array([amp, c, math.sqrt(max(2 * var, 1e-30))])


def fit_gaussian(
    t,
    samples,
    initial_guess: Optional[Union[GaussianParams, Sequence[float]]] = None,
    *,
    max_iter: int = 500,
    tol: float = 1e-14,
) -> FitResult:
    """Fit one Gaussian to sampled envelope values by damped Gauss-Newton.

    Parameters
    ----------
    t, samples : array_like
        Sample times (fs) and envelope values (any unit, usually a.u. field).
    initial_guess : GaussianParams or (amplitude, center, width), optional
        Moment-based guesses are used when omitted.

    Returns
    -------
    FitResult
        The accepted-step cost history is non-increasing.

    Raises
    ------
    FitError
        When the iteration cap is reached first; ``best`` holds the
        best-so-far result.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(samples, dtype=float)
    if initial_guess is None:
        p = _moment_guess(t, y)
    elif isinstance(initial_guess, GaussianParams):
        p = np.array([initial_guess.amplitude, initial_guess.center, initial_guess.width])
    else:
        p = np.array(initial_guess, dtype=float)
    if not p[2] > 0:
        raise ValueError("initial width must be positive")

    def model(q):
        g = np.exp(-(((t - q[1]) / q[2]) ** 2))
        return q[0] * g, g

    def cost_of(q):
        m, _ = model(q)
        r = m - y
        return 0.5 * float(r @ r)

    lam = 1e-3
    cost = cost_of(p)
    history = [cost]
    scale = max(float(y @ y), 1e-300)
    for it in range(1, max_iter + 1):
        m, g = model(p)
        r = m - y
        x = (t - p[1]) / p[2]
        J = np.empty((t.size, 3))
        J[:, 0] = g
        J[:, 1] = p[0] * g * 2 * x / p[2]
        J[:, 2] = p[0] * g * 2 * x**2 / p[2]
        A = J.T @ J
        grad = J.T @ r
        improved = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-300), -grad)
            trial = p + step
            if trial[2] > 0:
                c_new = cost_of(trial)
                if c_new <= cost:
                    improved = True
                    break
            lam *= 4.0
        if not improved:
            # no descent direction left: stationary to machine precision
            return FitResult(*p, residual=cost, history=history, iterations=it)
        rel = (cost - c_new) / scale
        small_step = np.all(np.abs(step) <= 1e-13 * (np.abs(p) + 1e-300))
        p, cost = trial, c_new
        history.append(cost)
        lam = max(lam / 3.0, 1e-12)
        if rel <= tol or small_step:
            return FitResult(*p, residual=cost, history=history, iterations=it)
    best = FitResult(*p, residual=cost, history=history, iterations=max_iter)
    raise FitError(f"Gaussian fit did not converge in {max_iter} iterations", best)


# ---------------------------------------------------------------- diagnostics


class UndefinedRatioError(ValueError):
    pass


class BoundaryResiduals(NamedTuple):
    left: float
    right: float
    t_left: float
    t_right: float

    def ok(self, tol: float = 1e-6) -> bool:
        return self.left < tol and self.right < tol


def stirap_boundary_residuals(
    pump, stokes, alpha: float, beta: float, t, floor: float = ENVELOPE_FLOOR
) -> BoundaryResiduals:
    """Departure of the tail ratios Omega_P/Omega_S from tan(alpha), tan(beta).

    The ratio is taken at the first and last grid points where both
    envelopes exceed ``floor``.  With a finite floor the attainable
    accuracy is limited by how much the trailing Gaussian still contributes
    there.
    """
    t = np.asarray(t, dtype=float)
    p = np.abs(np.asarray(pump(t), dtype=float))
    s = np.abs(np.asarray(stokes(t), dtype=float))
    ok = (p > floor) & (s > floor)
    if not ok.any():
        raise UndefinedRatioError("pump and Stokes never both exceed the envelope floor")
    i0, i1 = np.argmax(ok), len(ok) - 1 - np.argmax(ok[::-1])
    r0, r1 = p[i0] / s[i0], p[i1] / s[i1]
    return BoundaryResiduals(
        abs(r0 - math.tan(alpha)), abs(r1 - math.tan(beta)), float(t[i0]), float(t[i1])
    )
