"""Command-line front end: ``fstirap <command> --preset NAME | --config FILE``.

Every run writes its artifacts plus ``manifest.json`` (resolved config,
input and artifact digests) into ``--out``.  Exit status: 0 success,
2 bad configuration or input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_preset, preset_names, resolve, sha256_file, _num
from .dipoles import DipoleError, connected_component
from .levels import LevelTableError, TermParseError
from .parallel import default_workers
from .propagator import NumericalError, populations, propagate
from .pulses import (
    ENVELOPE_FLOOR,
    FitError,
    UndefinedRatioError,
    fit_gaussian,
    gaussian_pair,
    stirap_boundary_residuals,
)
from .rwa import RwaParameters, adiabatic_frame, adiabatic_populations, propagate_rwa, rotating_frame_transform
from .scanner import TwinPulse, optimize_transfer, scan_delay, scan_phase
from .spectro import ResponseError, atas_scan, fit_oscillation, identify_peaks
from .units import EV

logger = logging.getLogger("fstirap")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONFIG_ERRORS = (ConfigError, LevelTableError, TermParseError, DipoleError, FileNotFoundError)
NUMERIC_ERRORS = (NumericalError, FitError, ResponseError, UndefinedRatioError, FloatingPointError)


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command: str, out: Path, cfg: RunConfig, argv):
        self.command = command
        self.out = out
        self.cfg = cfg
        self.argv = list(argv)
        self.artifacts: list[Path] = []
        self.inputs: dict = {}
        self.results: dict = {}
        self.t0 = time.time()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(p)
        return p

    def write_json(self, name: str, data) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(data, indent=1, default=_jsonable))
        return p

    def manifest(self, status: str = "ok", error: Optional[str] = None) -> None:
        data = {
            "command": self.command,
            "argv": self.argv,
            "version": __version__,
            "status": status,
            "error": error,
            "seed": self.cfg.get("seed", default=0),
            "elapsed_s": round(time.time() - self.t0, 3),
            "config_source": self.cfg.source,
            "config": self.cfg.data,
            "inputs": self.inputs,
            "artifacts": {p.name: sha256_file(p) for p in self.artifacts if p.exists()},
            "results": self.results,
        }
        (self.out / "manifest.json").write_text(json.dumps(data, indent=1, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


# ------------------------------------------------------------------ commands


def cmd_dipoles(res, run: Run, args) -> None:
    s = res.system
    d = s.dip
    d.to_csv(run.path("dipoles.csv"))
    run.results = {
        "n_states": s.n,
        "nonzero_elements": d.nonzero_count(),
        "reconstruction_error": d.reconstruction_error(),
        "largest": [{"bra": a, "ket": b, "mu_au": v} for a, b, v in d.largest(5)],
        "mu12_au": float(d.matrix[s.i1, s.i2]),
        "mu23_au": float(d.matrix[s.i2, s.i3]),
        "connected_to_123": len(connected_component(d, [s.i1, s.i2, s.i3])),
    }
    run.write_json("dipole_summary.json", run.results)


def _rabi_pair(res, fields=None):
    """Rabi envelopes (a.u.) of the pump and Stokes control fields."""
    s = res.system
    fields = res.control if fields is None else fields
    pump = next((f for f in fields if f.role == "pump"), None)
    stokes = next((f for f in fields if f.role == "stokes"), None)
    if pump is None or stokes is None:
        return None
    mu12, mu23 = float(s.dip.matrix[s.i1, s.i2]), float(s.dip.matrix[s.i2, s.i3])
    return pump, stokes, (lambda t: mu12 * pump.envelope(t)), (lambda t: mu23 * stokes.envelope(t))


def _three_level_extras(res, run: Run, traj, fields, tag: str = "") -> None:
    """Rotating-frame adiabatic populations and an RWA cross-check."""
    s = res.system
    pair = _rabi_pair(res, fields)
    if pair is None:
        return
    pump, stokes, rp, rs = pair
    E = s.energies * EV
    d12 = pump.omega - (E[s.i2] - E[s.i1])
    d23 = stokes.omega - (E[s.i2] - E[s.i3])
    phi = stokes.phase - pump.phase
    p = RwaParameters(d12, d23, phi, rp, rs)
    idx = [s.i1, s.i2, s.i3]
    amp = traj.amplitudes[:, idx]
    rot = rotating_frame_transform(amp, traj.times, pump.omega, stokes.omega, E[s.i2])
    if p.two_photon_resonant or abs(d12 - d23) < 1e-12:
        p = RwaParameters(d12, d12, phi, rp, rs)
        frame = adiabatic_frame(p, traj.times)
        pops = adiabatic_populations(rot, frame)
        frame.to_csv(run.path(f"adiabatic{tag}.csv"), pops)
        run.results[f"min_dark_population{tag}"] = float(pops[:, 0].min())
    psi0 = rot[0]
    t, st = propagate_rwa(p, psi0, (traj.times[0], traj.times[-1]), traj.times)
    P = np.abs(st) ** 2
    _write_rows(run.path(f"rwa{tag}.csv"), ["t_fs", "P1", "P2", "P3"], np.column_stack([t, P]))
    run.results[f"rwa_final{tag}"] = P[-1].tolist()


def _run_fields(res, run: Run, fields, tag: str, args) -> dict:
    s = res.system
    stride = res.config.get("outputs", "store_stride_fs", default=2.0)
    record = bool(res.config.get("outputs", "record_dipole", default=False))
    traj = propagate(res.initial, s.levels, s.dip, fields, res.grid, channels=s.channels, store_stride=stride, record_dipole=record)
    idx = [s.i1, s.i2, s.i3]
    P = populations(traj, idx)
    rest = 1.0 - (np.abs(traj.amplitudes) ** 2)[:, idx].sum(axis=1) if s.n > 3 else np.zeros(len(traj.times))
    t = traj.times
    rows = np.column_stack([t, P, rest, traj.norm_log])
    _write_rows(run.path(f"populations{tag}.csv"), ["t_fs", "P1", "P2", "P3", "P_other", "norm_error"], rows)
    if record:
        traj.save_dipole(run.path(f"dipole{tag}.npz"))
    fin = traj.final_populations()[idx]
    out = {"P1": float(fin[0]), "P2": float(fin[1]), "P3": float(fin[2]), "max_norm_error": float(traj.norm_log.max())}
    run.results[f"final{tag}"] = out
    if s.isolated:
        _three_level_extras(res, run, traj, fields, tag)
    return out


def _write_envelopes(res, run: Run, name: str, fitted=None) -> None:
    """Rabi envelopes ``t_fs,omega_P,omega_S`` (a.u.); fitted pulses add two columns."""
    pair = _rabi_pair(res)
    if pair is None:
        return
    _, _, rp, rs = pair
    t = res.grid.times()[:: max(1, int(round(0.1 / res.grid.dt_fs)))]
    cols = [t, rp(t), rs(t)]
    head = ["t_fs", "omega_P", "omega_S"]
    if fitted is not None:
        _, _, fp, fs = _rabi_pair(res, fitted)
        head += ["omega_P_fit", "omega_S_fit"]
        cols += [fp(t), fs(t)]
    _write_rows(run.path(name), head, np.column_stack(cols))


def _fit_control(res, run: Run) -> tuple:
    """Single-Gaussian fits of the pump and Stokes envelopes."""
    pair = _rabi_pair(res)
    if pair is None:
        raise ConfigError("fitting needs pump and Stokes control fields")
    pump, stokes, _, _ = pair
    lo = min(pump.support()[0], stokes.support()[0])
    hi = max(pump.support()[1], stokes.support()[1])
    t = np.linspace(lo, hi, 4001)
    fits = {}
    for name, f in (("pump", pump), ("stokes", stokes)):
        r = fit_gaussian(t, f.envelope(t))
        fits[name] = r
    fitted = gaussian_pair(fits["pump"].params(pump.carrier, pump.phase), fits["stokes"].params(stokes.carrier, stokes.phase))
    summary = {
        k: {"peak_intensity_tw_cm2": r.peak_intensity, "center_fs": r.center, "gamma_fs": r.width,
            "amplitude_au": r.amplitude, "residual": r.residual, "iterations": r.iterations}
        for k, r in fits.items()
    }
    summary["delay_fs"] = fits["stokes"].center - fits["pump"].center
    return fitted, summary


def cmd_propagate(res, run: Run, args) -> None:
    if res.grid is None:
        raise ConfigError("propagate needs a grid block")
    _write_envelopes(res, run, "envelopes.csv")
    _run_fields(res, run, res.control, "", args)
    if res.config.get("control", "compare_fitted", default=False):
        fitted, summary = _fit_control(res, run)
        run.write_json("fit.json", summary)
        run.results["fit"] = summary
        _write_envelopes(res, run, "envelopes_fit.csv", fitted)
        _run_fields(res, run, list(fitted), "_fitted", args)


def cmd_fit_pulse(res, run: Run, args) -> None:
    fitted, summary = _fit_control(res, run)
    run.results["fit"] = summary
    run.write_json("fit.json", summary)
    if res.grid is not None:
        _write_envelopes(res, run, "envelopes_fit.csv", fitted)


def cmd_design_pulse(res, run: Run, args) -> None:
    blk = res.config.get("control", default={}) or {}
    if blk.get("kind") != "composite":
        raise ConfigError("design-pulse needs control.kind: composite")
    if res.grid is None:
        raise ConfigError("design-pulse needs a grid block")
    alpha, beta = _num(blk, "alpha_rad"), _num(blk, "beta_rad")
    pump, stokes = res.control
    t = res.grid.times()
    br = stirap_boundary_residuals(pump.envelope, stokes.envelope, alpha, beta, t, ENVELOPE_FLOOR)
    fitted, summary = _fit_control(res, run)
    run.results["boundary_residuals"] = br._asdict()
    run.results["fit"] = summary
    run.write_json("design.json", {"boundary_residuals": br._asdict(), "fit": summary})
    _write_envelopes(res, run, "envelopes.csv")
    _write_envelopes(res, run, "envelopes_fit.csv", fitted)
    _run_fields(res, run, res.control, "", args)
    _run_fields(res, run, list(fitted), "_fitted", args)


def _axis(name, spec) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if not isinstance(spec, dict):
        raise ConfigError(f"scan.{name}: expected a list or a start/stop/n mapping")
    n = int(spec.get("n", 0))
    if n < 2:
        raise ConfigError(f"scan.{name}: need at least two points")
    lo, hi = _num(spec, "start", required=True), _num(spec, "stop", required=True)
    # a full 2 pi phase axis would repeat its first column
    endpoint = not (name == "phi_rad" and math.isclose(hi - lo, 2 * math.pi))
    return np.linspace(lo, hi, n, endpoint=endpoint)


def _twin_pulse(blk) -> TwinPulse:
    return TwinPulse(
        intensity=_num(blk, "intensity_tw_cm2", 3.38), width=_num(blk, "gamma_fs", 50.0),
        carrier_P=_num(blk, "carrier_P_ev"), carrier_S=_num(blk, "carrier_S_ev"), dt=_num(blk, "dt_as", 10.0),
    )


def cmd_scan(res, run: Run, args) -> None:
    blk = res.config.get("scan")
    opt = res.config.get("optimize")
    if not blk and not opt:
        raise ConfigError("scan needs a scan and/or optimize block")
    s = res.system
    if blk:
        kind = blk.get("type")
        alphas = _axis("alpha_rad", blk.get("alpha_rad"))
        pulse = _twin_pulse(blk)
        if kind == "delay":
            land = scan_delay(s, alphas, _axis("delay_fs", blk.get("delay_fs")), _num(blk, "phi_rad", 1.14 * math.pi), pulse, workers=args.threads)
        elif kind == "phase":
            land = scan_phase(s, alphas, _axis("phi_rad", blk.get("phi_rad")), _num(blk, "delay_fs", -12.75), pulse, workers=args.threads)
        else:
            raise ConfigError(f"scan.type must be delay or phase, got {kind!r}")
        land.to_csv(run.path("landscape.csv"))
        run.results["landscape"] = land.summary()
        run.write_json("landscape_summary.json", land.summary())
    if opt:
        names = {"delay_fs": "delay", "phi_rad": "phi", "intensity_tw_cm2": "intensity"}
        free = {}
        for k, v in (opt.get("free") or {}).items():
            if k not in names:
                raise ConfigError(f"optimize.free: unknown parameter {k!r}")
            free[names[k]] = (float(_num({"x": v[0]}, "x")), float(_num({"x": v[1]}, "x")))
        fixed = {names[k]: _num(opt["fixed"], k) for k in (opt.get("fixed") or {})}
        try:
            best = optimize_transfer(
                s, _num(opt, "initial_alpha_rad", required=True), _num(opt, "target_beta_rad", required=True),
                free, fixed, _twin_pulse(opt), coarse=int(opt.get("coarse", 16)),
                refine_rounds=int(opt.get("refine_rounds", 4)), seed=int(res.config.get("seed", default=0)),
            )
        except ValueError as exc:
            raise ConfigError(f"optimize: {exc}") from exc
        best.to_json(run.path("optimum.json"))
        run.results["optimum"] = {"params": best.params, "fidelity": best.fidelity, "improved": best.improved}


def cmd_atas(res, run: Run, args) -> None:
    pr = res.probe
    if pr is None:
        raise ConfigError("atas needs a probe block")
    if res.grid is None:
        raise ConfigError("atas needs a grid block")
    s = res.system
    try:
        spec = atas_scan(
            s.levels, s.dip, res.initial, res.control, pr["delays"], res.grid, probe=pr["probe"],
            energies=pr["energies"], tau=pr["tau"], span=pr["span"], pre=pr["pre"], channels=s.channels, workers=args.threads,
        )
    except ValueError as exc:
        if isinstance(exc, ResponseError):
            raise
        raise ConfigError(f"atas: {exc}") from exc
    spec.annotate()
    spec.to_csv(run.path("spectrogram.csv"))
    spec.to_json(run.path("line_traces.json"))
    peaks = [
        {"delay_fs": float(d), "peaks": [{"energy_eV": e, "sigma": v, "line": sym} for e, v, sym in identify_peaks(spec.energies, spec.sigma[:, j])]}
        for j, d in enumerate(spec.delays)
    ]
    run.write_json("peaks.json", peaks)
    fits = {}
    if spec.delays.size >= 8:
        for lt in spec.lines:
            try:
                f = fit_oscillation(spec.delays, lt.trace)
            except (RuntimeError, ValueError) as exc:
                logger.warning("oscillation fit failed for %s: %s", lt.symbol, exc)
                continue
            fits[lt.symbol] = {"period_fs": f.period, "amplitude": f.amplitude, "phase": f.phase, "offset": f.offset, "slope": f.slope}
        run.write_json("oscillations.json", fits)
    run.results["n_delays"] = int(spec.delays.size)
    run.results["oscillation_periods_fs"] = {k: v["period_fs"] for k, v in fits.items()}


COMMANDS = {
    "dipoles": (cmd_dipoles, "Build the dipole matrix and write it with a summary."),
    "propagate": (cmd_propagate, "Propagate one control scheme and write population dynamics."),
    "scan": (cmd_scan, "Population landscapes over (alpha, delay) or (alpha, phase), and transfer optimization."),
    "atas": (cmd_atas, "Transient absorption spectrogram over probe delays."),
    "fit-pulse": (cmd_fit_pulse, "Fit single Gaussians to the pump and Stokes envelopes."),
    "design-pulse": (cmd_design_pulse, "Composite pulse design: boundary checks, Gaussian fit and transfer check."),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fstirap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", choices=preset_names(), help="named parameter set")
        src.add_argument("--config", type=Path, help="YAML run configuration (may name a base preset)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: out/<command>-<name>)")
        p.add_argument("--threads", type=int, default=default_workers(), help="worker threads for scans (default: available cores)")
        p.add_argument("--store-stride", type=float, default=None, help="sampling interval of stored dynamics in fs (0: endpoints only)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.config is not None:
            cfg = load_config(args.config)
            name = args.config.stem
        else:
            cfg = load_preset(args.preset or "three_level")
            name = args.preset or "three_level"
        if args.store_stride is not None:
            if args.store_stride < 0:
                raise ConfigError("--store-stride must be >= 0")
            cfg = cfg.with_overrides({"outputs": {"store_stride_fs": args.store_stride}})
        res = resolve(cfg)
    except CONFIG_ERRORS as exc:
        print(f"fstirap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path("out") / f"{args.command}-{name}"
    run = Run(args.command, out, cfg, argv)
    run.inputs = res.inputs
    if args.config is not None:
        run.inputs["config"] = {"path": str(args.config), "sha256": sha256_file(args.config)}
    try:
        with np.errstate(over="raise", invalid="raise"):
            func(res, run, args)
    except CONFIG_ERRORS as exc:
        run.manifest("config_error", str(exc))
        print(f"fstirap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        run.manifest("numerical_error", str(exc))
        print(f"fstirap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    run.manifest()
    print(json.dumps(run.results, indent=1, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
