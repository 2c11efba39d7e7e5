"""Mild solution of the linear stochastic heat equation on a truncated line.

``u(t, x) = int u0(y) p(t, x - y) dy + int_0^t int p(t - s, x - y) W(ds, dy)``.
The stochastic convolution is the causal 2-D convolution of the increments
with the Toeplitz table from :func:`gheat.kernels.line_weight_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .grid import DomainError, GridSpec, line_truncation
from .identities import TestFunction
from .integrals import mc_mean
from .kernels import line_point_weights, line_weight_table, phi_interval
from .noise import EnsembleSpec, NoiseRealization

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class FieldPath:
    """Node values ``(..., nt+1, nx+1)``; a leading axis indexes realizations."""

    grid: GridSpec
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape[-2:] != self.grid.node_shape:
            raise DomainError("field values do not match the grid nodes")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite field values")


def cell_averages(u0: Callable[[np.ndarray], np.ndarray], grid: GridSpec) -> np.ndarray:
    """4-point Gauss-Legendre average of ``u0`` over every spatial cell."""
    mid = grid.x_centers()[:, None]
    pts = mid + 0.5 * grid.dx * _GL_NODES[None, :]
    vals = np.broadcast_to(np.asarray(u0(pts), dtype=float), pts.shape)
    return 0.5 * vals @ _GL_WEIGHTS


def _check_bounded(u0, grid: GridSpec, limit: float) -> np.ndarray:
    xs = np.linspace(grid.x_lo, grid.x_hi, 4 * grid.nx + 1)
    vals = np.broadcast_to(np.asarray(u0(xs), dtype=float), xs.shape)
    if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > limit:
        raise DomainError("initial data must be bounded on the grid")
    return vals


def check_truncation(grid: GridSpec, x_query_max: float = 0.0) -> float:
    """Half-width required by the tail rule; raises if the grid is narrower."""
    need = line_truncation(x_query_max, grid.t_end)
    have = min(-grid.x_lo, grid.x_hi)
    if have < need * (1 - 1e-12):
        raise DomainError(f"truncation half-width {have} below the tail rule {need}")
    return need


def deterministic_part(u0, grid: GridSpec) -> np.ndarray:
    """``int u0(y) p(t_i, x_j - y) dy`` at all nodes with exact kernel mass per cell."""
    avg = cell_averages(u0, grid)
    out = np.empty(grid.node_shape)
    out[0] = np.broadcast_to(np.asarray(u0(grid.x_nodes()), dtype=float), grid.nx + 1)
    d = np.arange(-(grid.nx - 1), grid.nx + 1)
    s = np.sqrt(2.0 * grid.t_nodes()[1:])[:, None]
    mass = phi_interval(d[None, :] * grid.dx / s, (d[None, :] - 1) * grid.dx / s)
    # node j gets sum_l avg[l] * mass[j - l]
    conv = fftconvolve(mass, avg[None, :], axes=-1)
    out[1:] = conv[:, grid.nx - 1: 2 * grid.nx]
    return out


def stochastic_convolution(grid: GridSpec, increments: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
    """``Z(t_i, x_j) = sum_{k<i} sum_l K[i-k, j-l] dW[k, l]`` at all nodes."""
    K = line_weight_table(grid) if table is None else table
    inc = np.asarray(increments, dtype=float)
    kern = K.reshape((1,) * (inc.ndim - 2) + K.shape)
    full = fftconvolve(inc, kern, axes=(-2, -1))
    out = full[..., : grid.nt + 1, grid.nx - 1: 2 * grid.nx].copy()
    out[..., 0, :] = 0.0  # FFT rounding leaves ~1e-17 at t = 0
    return out


def solve_linear(u0, grid: GridSpec, w: NoiseRealization, x_query_max: float = 0.0,
                 bound: float = 1e8, table: np.ndarray | None = None) -> FieldPath:
    if w.grid != grid:
        raise DomainError("noise and solver grids differ")
    check_truncation(grid, x_query_max)
    _check_bounded(u0, grid, bound)
    det = deterministic_part(u0, grid)
    Z = stochastic_convolution(grid, w.increments, table)
    vals = det + Z
    vals[..., 0, :] = det[0]
    return FieldPath(grid, vals, {"control": w.control_id, "seed_path": w.seed_path,
                                  "truncation": line_truncation(x_query_max, grid.t_end)})


def weak_form_residual(u: FieldPath, phi: TestFunction, w: NoiseRealization):
    """``|<u(T), phi(T)> - <u0, phi(0)> - <<u, phi_t + phi_xx>> - <<phi, dW>>|``.

    Node sums in space, trapezoid in time, ``phi`` at cell centers in the noise term.
    """
    g = u.grid
    phi.check_spatial_support(g)
    ph = phi.on_nodes(g)
    gen = phi.on_nodes(g, "phi_t") + phi.on_nodes(g, "phi_xx")
    v = u.values
    tw = np.full(g.nt + 1, g.dt)
    tw[[0, -1]] *= 0.5
    boundary = np.sum(v[..., -1, :] * ph[-1], axis=-1) * g.dx - np.sum(v[..., 0, :] * ph[0], axis=-1) * g.dx
    bulk = np.sum(np.sum(v * gen, axis=-1) * tw, axis=-1) * g.dx
    T, X = np.meshgrid(g.t_centers(), g.x_centers(), indexing="ij")
    noise = np.sum(phi.phi(T, X) * w.increments, axis=(-2, -1))
    return np.abs(boundary - bulk - noise)


def weight_sum(grid: GridSpec, i_eval: int, j_eval: int) -> float:
    """Discrete variance ``sum w^2 dt dx`` of ``Z(t_i, x_j)`` under unit volatility."""
    w = line_point_weights(grid, i_eval, j_eval)
    return float(np.sum(w * w) * grid.dt * grid.dx)


def weight_sum_interior(grid: GridSpec, i_eval: int) -> float:
    """Same as :func:`weight_sum` for a node far from the truncation edges (uses the table)."""
    K = line_weight_table(grid)
    return float(np.sum(K[1: i_eval + 1] ** 2) * grid.dt * grid.dx)


@dataclass
class MomentRow:
    axis: str
    delta: float
    empirical: float
    stderr: float
    scenario: str
    bound: float
    discrete_hi: float
    M: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _increment_weights(grid: GridSpec, t: float, x: float, deltas: Sequence[float], axis: str) -> np.ndarray:
    i = grid.t_index(t)
    j = grid.x_index(x)
    base = line_point_weights(grid, i, j)
    cols = []
    for d in deltas:
        if axis == "space":
            other = line_point_weights(grid, i, grid.x_index(x + d))
        elif axis == "time":
            other = line_point_weights(grid, grid.t_index(t + d), j)
        else:
            raise ValueError(f"axis must be 'space' or 'time', got {axis!r}")
        cols.append((other - base).ravel())
    return np.stack(cols, axis=1)


def z_increment_moments(ensemble: EnsembleSpec, t: float, x: float, deltas: Sequence[float], axis: str,
                        sigma_hi: float) -> list[MomentRow]:
    """Upper second moments ``max_s E_s |Z(.+delta) - Z(.)|^2`` with the matching bounds.

    Bounds are ``sigma_hi^2 delta / 2`` in space and ``sigma_hi^2 sqrt(delta / pi)`` in time.
    """
    g = ensemble.grid
    for d in deltas:
        if d < 0:
            raise DomainError("deltas must be nonnegative")
    W = _increment_weights(g, t, x, deltas, axis)
    discrete = sigma_hi**2 * np.sum(W * W, axis=0) * g.dt * g.dx
    best = [(-np.inf, 0.0, "") for _ in deltas]
    for s, control in enumerate(ensemble.controls):
        parts = [(w.increments.reshape(w.increments.shape[0], -1) @ W) ** 2 for w in ensemble.batches(s)]
        m, se = mc_mean(np.concatenate(parts, axis=0))
        for k in range(len(deltas)):
            if m[k] > best[k][0]:
                best[k] = (float(m[k]), float(se[k]), control.control_id)
    rows = []
    for k, d in enumerate(deltas):
        bound = sigma_hi**2 * (0.5 * d if axis == "space" else math.sqrt(d / math.pi))
        rows.append(MomentRow(axis, float(d), best[k][0], best[k][1], best[k][2], bound, float(discrete[k]), ensemble.M))
    return rows


def loglog_slope(deltas: Sequence[float], values: Sequence[float]) -> float:
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
