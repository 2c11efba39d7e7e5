"""Uniform space-time lattice shared by every solver and integral in the package.

Cell ``(i, j)`` is ``[t_i, t_{i+1}) x [x_j, x_{j+1})`` with ``t_i = i*dt`` and
``x_j = x_lo + j*dx``.  Nodes are indexed ``0..nt`` in time and ``0..nx`` in
space; cells ``0..nt-1`` and ``0..nx-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


# kernel p(t, .) has standard deviation sqrt(2 t)
TAIL_WIDTHS = 10.0


class DomainError(ValueError):
    """Raised when a grid, rectangle or domain argument is degenerate or out of range."""


@dataclass(frozen=True)
class GridSpec:
    t_end: float
    x_lo: float
    x_hi: float
    nt: int
    nx: int

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise DomainError(f"t_end must be positive and finite, got {self.t_end}")
        if not (self.x_hi > self.x_lo):
            raise DomainError(f"need x_hi > x_lo, got [{self.x_lo}, {self.x_hi}]")
        if int(self.nt) != self.nt or int(self.nx) != self.nx or self.nt < 1 or self.nx < 1:
            raise DomainError(f"nt and nx must be integers >= 1, got nt={self.nt}, nx={self.nx}")

    @property
    def dt(self) -> float:
        return self.t_end / self.nt

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def shape(self) -> tuple[int, int]:
        """Cell-array shape ``(nt, nx)``."""
        return (self.nt, self.nx)

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.nt + 1, self.nx + 1)

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def x_nodes(self) -> np.ndarray:
        return self.x_lo + np.arange(self.nx + 1) * self.dx

    def t_centers(self) -> np.ndarray:
        return (np.arange(self.nt) + 0.5) * self.dt

    def x_centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.nx) + 0.5) * self.dx

    def t_index(self, t: float, tol: float = 1e-9) -> int:
        """Index of the time node equal to ``t``; raises if ``t`` is off-grid."""
        k = round(t / self.dt)
        if abs(k * self.dt - t) > tol * max(1.0, abs(t)) or not 0 <= k <= self.nt:
            raise DomainError(f"t={t} is not a time node of the grid")
        return int(k)

    def x_index(self, x: float, tol: float = 1e-9) -> int:
        k = round((x - self.x_lo) / self.dx)
        if abs(self.x_lo + k * self.dx - x) > tol * max(1.0, abs(x)) or not 0 <= k <= self.nx:
            raise DomainError(f"x={x} is not a space node of the grid")
        return int(k)

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.t_end, self.x_lo, self.x_hi, self.nt * factor, self.nx * factor)

    def to_dict(self) -> dict:
        return {"t_end": self.t_end, "x_lo": self.x_lo, "x_hi": self.x_hi, "nt": self.nt, "nx": self.nx}


@dataclass(frozen=True)
class GridRect:
    """Half-open index rectangle ``[t_{i0}, t_{i1}) x [x_{j0}, x_{j1})``."""

    i0: int
    i1: int
    j0: int
    j1: int

    def validate(self, grid: GridSpec) -> "GridRect":
        if not (0 <= self.i0 <= self.i1 <= grid.nt and 0 <= self.j0 <= self.j1 <= grid.nx):
            raise DomainError(f"{self} is out of range for a {grid.nt}x{grid.nx} grid")
        return self

    @property
    def is_empty(self) -> bool:
        return self.i0 == self.i1 or self.j0 == self.j1

    def slices(self) -> tuple[slice, slice]:
        return slice(self.i0, self.i1), slice(self.j0, self.j1)

    @classmethod
    def full(cls, grid: GridSpec) -> "GridRect":
        return cls(0, grid.nt, 0, grid.nx)


def make_grid(t_end: float, x_lo: float, x_hi: float, nt: int, nx: int) -> GridSpec:
    return GridSpec(float(t_end), float(x_lo), float(x_hi), int(nt), int(nx))


def cell_measure(grid: GridSpec, rect: GridRect) -> float:
    rect.validate(grid)
    return (rect.i1 - rect.i0) * grid.dt * ((rect.j1 - rect.j0) * grid.dx)


def line_truncation(x_query_max: float, t_end: float) -> float:
    """Half-width ``R`` of a truncated line domain ``[-R, R]``.

    Two-sided Gaussian mass of the heat kernel beyond ``R`` is below 1e-10 for
    every query point ``|x| <= x_query_max`` and time ``t <= t_end``
    (``erfc(5) ~ 1.5e-12``; a margin of ``8*sqrt(t)`` only reaches 1.5e-8).
    """
    return abs(x_query_max) + TAIL_WIDTHS * math.sqrt(t_end)
