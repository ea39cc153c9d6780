"""Run configuration: YAML files with unit-suffixed keys, and named presets.

A config resolves into concrete objects (system, initial state, control
fields, probe, grid) through :func:`resolve`.  Presets are plain YAML files
shipped in ``fstirap/presets``; nothing in the library depends on them.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .levels import bundled_table
from .propagator import TimeGrid
from .pulses import (
    ControlField,
    GaussianParams,
    composite_fields,
    gaussian_pair,
    twin_gaussians,
)
from .spectro import DEFAULT_ENERGIES, default_probe
from .system import GROUND_1_2, GROUND_3_2, S_HOLE_4S, S_HOLE_5S, StirapSystem
from .units import intensity_to_field

__all__ = ["ConfigError", "RunConfig", "load_config", "load_preset", "preset_names", "resolve", "Resolved", "sha256_file"]

PRESET_DIR = Path(__file__).parent / "presets"
SCENARIOS = ("three_level", "xe_xuv", "xe_xray", "custom")
CONTROL_KINDS = ("none", "composite", "gaussian_pair", "twin")


class ConfigError(ValueError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def _read_yaml(path: Path) -> dict:
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    data: dict
    source: str = "<dict>"

    def get(self, *keys, default=None):
        d: Any = self.data
        for k in keys:
            if not isinstance(d, dict) or k not in d:
                return default
            d = d[k]
        return d

    def with_overrides(self, over: dict) -> "RunConfig":
        return RunConfig(_merge(self.data, over), self.source)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    data = _read_yaml(path)
    if "manifest_version" in data or ("command" in data and isinstance(data.get("config"), dict)):
        # a run manifest: re-run its resolved configuration
        data = data["config"]
    base = data.pop("preset", None)
    if base is not None:
        data = _merge(load_preset(base).data, data)
    return RunConfig(data, str(path))


def load_preset(name: str) -> RunConfig:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return RunConfig(_read_yaml(path), f"preset:{name}")


# ------------------------------------------------------------------ resolving


def _num(block: dict, key: str, default=None, *, required=False) -> Optional[float]:
    if key not in block or block[key] is None:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    v = block[key]
    if isinstance(v, str):
        # allow "pi/4", "1.14*pi"
        try:
            v = float(eval(v, {"__builtins__": {}}, {"pi": math.pi}))
        except Exception as exc:
            raise ConfigError(f"{key}: cannot read {v!r} as a number") from exc
    try:
        return float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from exc


def _check_keys(block: dict, allowed: set, where: str):
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {where}")


@dataclass
class Resolved:
    config: RunConfig
    system: StirapSystem
    initial: np.ndarray
    control: list[ControlField]
    grid: Optional[TimeGrid]
    probe: Optional[dict] = None
    inputs: dict = field(default_factory=dict)


def _system(cfg: RunConfig) -> tuple[StirapSystem, dict]:
    scen = cfg.get("scenario", default="three_level")
    if scen not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scen!r}")
    sysb = cfg.get("system", default={}) or {}
    _check_keys(sysb, {"levels_path", "dipole_overrides", "m", "z_charge", "state1", "state2", "state3", "isolated_channels"}, "system")
    defaults = {
        "three_level": dict(levels_path=str(bundled_table("three_level.csv")), dipole_overrides=str(bundled_table("three_level_overrides.csv")), isolated_channels=True, state2=S_HOLE_5S),
        "xe_xuv": dict(levels_path=None, dipole_overrides=None, isolated_channels=False, state2=S_HOLE_5S),
        "xe_xray": dict(levels_path=None, dipole_overrides=None, isolated_channels=False, state2=S_HOLE_4S),
        "custom": dict(levels_path=None, dipole_overrides=None, isolated_channels=False, state2=S_HOLE_5S),
    }[scen]
    opts = {**defaults, **{k: v for k, v in sysb.items() if v is not None or k in ("dipole_overrides",)}}
    base = Path(cfg.source).parent if not cfg.source.startswith(("preset:", "<")) else Path.cwd()
    paths = {}
    for key in ("levels_path", "dipole_overrides"):
        p = opts.get(key)
        if p:
            p = Path(p)
            if not p.is_absolute() and not p.exists():
                p = base / p
            if not p.exists():
                raise ConfigError(f"{key}: file {p} does not exist")
            paths[key] = p
    try:
        system = StirapSystem.build(
            paths.get("levels_path"),
            m=str(opts.get("m", "1/2")),
            Z=float(opts.get("z_charge", 2.0)),
            overrides=paths.get("dipole_overrides"),
            state1=opts.get("state1", GROUND_3_2),
            state2=opts.get("state2"),
            state3=opts.get("state3", GROUND_1_2),
            isolated=bool(opts.get("isolated_channels")),
        )
    except KeyError as exc:
        raise ConfigError(f"system: {exc}") from exc
    lv = paths.get("levels_path") or bundled_table()
    inputs = {"levels": {"path": str(lv), "sha256": sha256_file(lv)}}
    if "dipole_overrides" in paths:
        inputs["dipole_overrides"] = {"path": str(paths["dipole_overrides"]), "sha256": sha256_file(paths["dipole_overrides"])}
    return system, inputs


def _initial(cfg: RunConfig, system: StirapSystem) -> np.ndarray:
    blk = cfg.get("initial_state", default={}) or {}
    _check_keys(blk, {"alpha_rad", "relative_phase_rad", "amplitudes"}, "initial_state")
    if "amplitudes" in blk:
        psi = np.zeros(system.n, dtype=complex)
        for row in blk["amplitudes"]:
            try:
                idx = system.levels.index(row["label"], row.get("m", "1/2"))
            except KeyError as exc:
                raise ConfigError(f"initial_state: {exc}") from exc
            a = row["amplitude"]
            psi[idx] = complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ConfigError("initial_state: all amplitudes are zero")
        return psi / nrm
    return system.state(_num(blk, "alpha_rad", 0.0), _num(blk, "relative_phase_rad", 0.0))


def _carriers(blk: dict, system: StirapSystem) -> tuple[float, float]:
    wP, wS = system.resonant_carriers()
    split = float(system.energies[system.i3] - system.energies[system.i1])
    cP = _num(blk, "carrier_P_ev")
    cS = _num(blk, "carrier_S_ev")
    if cP is None and cS is None:
        return wP, wS
    if cS is None:
        return cP, cP - split
    if cP is None:
        return cS + split, cS
    return cP, cS


def control_fields(blk: Optional[dict], system: StirapSystem) -> list[ControlField]:
    blk = blk or {"kind": "none"}
    kind = blk.get("kind", "none")
    if kind not in CONTROL_KINDS:
        raise ConfigError(f"control.kind must be one of {CONTROL_KINDS}, got {kind!r}")
    if kind == "none":
        return []
    if kind == "composite":
        _check_keys(blk, {"kind", "alpha_rad", "beta_rad", "intensity_P_tw_cm2", "intensity_S_tw_cm2", "t_left_fs", "t_right_fs",
                          "gamma_left_fs", "gamma_right_fs", "phi_rad", "carrier_P_ev", "carrier_S_ev", "compare_fitted"}, "control")
        cP, cS = _carriers(blk, system)
        try:
            p, s = composite_fields(
                _num(blk, "alpha_rad", required=True), _num(blk, "beta_rad", required=True),
                float(intensity_to_field(_num(blk, "intensity_P_tw_cm2", required=True))),
                float(intensity_to_field(_num(blk, "intensity_S_tw_cm2", required=True))),
                _num(blk, "t_left_fs", required=True), _num(blk, "t_right_fs", required=True),
                _num(blk, "gamma_left_fs", required=True), _num(blk, "gamma_right_fs", required=True),
                cP, cS, _num(blk, "phi_rad", 0.0),
            )
        except ValueError as exc:
            raise ConfigError(f"control: {exc}") from exc
        return [p, s]
    if kind == "gaussian_pair":
        _check_keys(blk, {"kind", "pump", "stokes", "phi_rad", "carrier_P_ev", "carrier_S_ev"}, "control")
        cP, cS = _carriers(blk, system)
        pulses = []
        for role, carrier in (("pump", cP), ("stokes", cS)):
            pb = blk.get(role) or {}
            _check_keys(pb, {"intensity_tw_cm2", "center_fs", "gamma_fs"}, f"control.{role}")
            pulses.append(GaussianParams(
                _num(pb, "intensity_tw_cm2", required=True), _num(pb, "center_fs", required=True),
                _num(pb, "gamma_fs", required=True), carrier, _num(blk, "phi_rad", 0.0) if role == "stokes" else 0.0,
            ))
        return list(gaussian_pair(*pulses))
    _check_keys(blk, {"kind", "intensity_tw_cm2", "gamma_fs", "t_pump_fs", "delay_fs", "phi_rad", "carrier_P_ev", "carrier_S_ev"}, "control")
    cP, cS = _carriers(blk, system)
    return list(twin_gaussians(
        _num(blk, "intensity_tw_cm2", required=True), _num(blk, "gamma_fs", required=True),
        _num(blk, "t_pump_fs", required=True), _num(blk, "delay_fs", required=True), cP, cS, _num(blk, "phi_rad", 0.0),
    ))


def _grid(cfg: RunConfig) -> Optional[TimeGrid]:
    g = cfg.get("grid")
    if not g:
        return None
    _check_keys(g, {"t_start_fs", "t_end_fs", "dt_as"}, "grid")
    try:
        return TimeGrid(_num(g, "t_start_fs", 0.0), _num(g, "t_end_fs", required=True), _num(g, "dt_as", required=True))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def probe_settings(cfg: RunConfig) -> Optional[dict]:
    blk = cfg.get("probe")
    if not blk:
        return None
    _check_keys(blk, {"energies_ev", "intensity_tw_cm2", "gamma_fs", "tau_fs", "span_fs", "pre_fs", "delays_fs", "energy_grid_ev"}, "probe")
    d = blk.get("delays_fs") or {}
    if isinstance(d, list):
        delays = np.asarray(d, dtype=float)
    else:
        delays = np.arange(_num(d, "start", required=True), _num(d, "stop", required=True) + 1e-9, _num(d, "step", required=True))
    eg = blk.get("energy_grid_ev")
    energies = DEFAULT_ENERGIES if not eg else np.round(np.arange(_num(eg, "start"), _num(eg, "stop") + 1e-9, _num(eg, "step")), 10)
    return {
        "probe": default_probe(0.0, tuple(blk.get("energies_ev", (16.325, 17.631))), _num(blk, "intensity_tw_cm2", 0.008), _num(blk, "gamma_fs", 1.0)),
        "tau": _num(blk, "tau_fs", 10.0),
        "span": _num(blk, "span_fs", 80.0),
        "pre": _num(blk, "pre_fs", 5.0),
        "delays": delays,
        "energies": energies,
    }


def resolve(cfg: RunConfig) -> Resolved:
    _check_keys(cfg.data, {"scenario", "description", "system", "initial_state", "control", "probe", "grid", "scan", "optimize", "fit", "outputs", "seed"}, "config")
    system, inputs = _system(cfg)
    return Resolved(cfg, system, _initial(cfg, system), control_fields(cfg.get("control"), system), _grid(cfg), probe_settings(cfg), inputs)
