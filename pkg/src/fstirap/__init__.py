"""Fractional STIRAP in Xe+: level tables, dipoles, pulse design, propagation and ATAS."""

from .angular import HalfInt, wigner3j, wigner6j
from .dipoles import DipoleTable, build_dipole_matrix
from .levels import LevelSet, load_levels, parse_term
from .propagator import NumericalError, TimeGrid, propagate
from .pulses import ControlField, composite_fields, fit_gaussian
from .system import StirapSystem

__version__ = "0.1.0"

__all__ = [
    "HalfInt",
    "wigner3j",
    "wigner6j",
    "DipoleTable",
    "build_dipole_matrix",
    "LevelSet",
    "load_levels",
    "parse_term",
    "NumericalError",
    "TimeGrid",
    "propagate",
    "ControlField",
    "composite_fields",
    "fit_gaussian",
    "StirapSystem",
]
