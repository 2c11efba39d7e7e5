"""Simulation and verification toolkit for stochastic heat equations driven by G-white noise."""

from .expectation import envelope, envelope_scaling_check, solve_g_heat_pde
from .grid import DomainError, GridRect, GridSpec, make_grid
from .linear_she import FieldPath, solve_linear
from .noise import EnsembleSpec, NoiseRealization, SigmaBounds, VolatilityControl, default_dictionary, sample_noise
from .nonlinear_she import Coefficients, picard_solve

__version__ = "0.1.0"

__all__ = [
    "Coefficients",
    "DomainError",
    "EnsembleSpec",
    "FieldPath",
    "GridRect",
    "GridSpec",
    "NoiseRealization",
    "SigmaBounds",
    "VolatilityControl",
    "default_dictionary",
    "envelope",
    "envelope_scaling_check",
    "make_grid",
    "picard_solve",
    "sample_noise",
    "solve_g_heat_pde",
    "solve_linear",
]
