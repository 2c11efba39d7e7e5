"""Picard iteration for ``u_t = u_xx + b(u) + a(u) W`` on ``[0, L]`` with Neumann walls.

The mild map uses cell-averaged Green's weights in factorized cosine form, so
the double sum over source cells becomes a per-mode linear recursion in time:

    S_n(i) = exp(-lam_n dt) S_n(i-1) + exp(-lam_n dt / 2) F_n(i-1)

where ``F_n(k)`` is the projection of the source row ``k`` on mode ``n``.
A source cell takes ``u`` from its left time node, averaged over its two
spatial nodes, so the integrand of the noise term is adapted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import DomainError, GridSpec
from .identities import TestFunction
from .integrals import mc_mean
from .kernels import NeumannModes, neumann_modes
from .linear_she import FieldPath, loglog_slope
from .noise import (
    EnsembleSpec,
    NoiseRealization,
    VolatilityControl,
    draw_coins,
    draw_normals,
    feedback_sigma,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


class PicardDivergence(FloatingPointError):
    """A Picard iterate produced a non-finite node value."""


@dataclass(frozen=True)
class Coefficients:
    a: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    lipschitz_a: float
    lipschitz_b: float
    u0: Callable[[np.ndarray], np.ndarray]
    holder_alpha: float | None = None
    name: str = "custom"

    def check_lipschitz(self, n_pairs: int = 1000, seed: int = 0, span: float = 10.0) -> None:
        rng = np.random.default_rng(seed)
        x = rng.uniform(-span, span, n_pairs)
        y = rng.uniform(-span, span, n_pairs)
        keep = x != y
        x, y = x[keep], y[keep]
        for fn, lip, label in ((self.a, self.lipschitz_a, "a"), (self.b, self.lipschitz_b, "b")):
            ratio = np.abs(np.asarray(fn(x)) - np.asarray(fn(y))) / np.abs(x - y)
            if np.max(ratio) > lip * (1 + 1e-9):
                raise DomainError(f"{label} exceeds its declared Lipschitz constant {lip}: {np.max(ratio)}")

    def describe(self) -> dict:
        return {"name": self.name, "lipschitz_a": self.lipschitz_a, "lipschitz_b": self.lipschitz_b,
                "holder_alpha": self.holder_alpha}


def _const(c: float):
    return lambda u: np.full_like(np.asarray(u, dtype=float), c)


def linear_test_coefficients(a_scale: float = 0.5, u0: float = 1.0) -> Coefficients:
    """``b(u) = -u``, ``a(u) = a_scale * u``, constant initial data."""
    return Coefficients(lambda u: a_scale * u, lambda u: -u, abs(a_scale), 1.0, _const(u0), math.inf, "linear_test")


def lipschitz_test_coefficients() -> Coefficients:
    """``b(u) = -u``, ``a(u) = sin(u)`` (both 1-Lipschitz), ``u0 = 1 + cos(pi x)/2``."""
    return Coefficients(np.sin, lambda u: -u, 1.0, 1.0, lambda x: 1.0 + 0.5 * np.cos(np.pi * x), 1.0, "lipschitz_test")


def anderson_coefficients(u0: float = 1.0) -> Coefficients:
    return Coefficients(lambda u: u, _const(0.0), 1.0, 0.0, _const(u0), math.inf, "anderson")


def polymer_coefficients() -> Coefficients:
    return Coefficients(_const(1.0), lambda u: -np.tanh(u), 0.0, 1.0, _const(0.0), math.inf, "polymer")


def neuron_coefficients() -> Coefficients:
    return Coefficients(lambda u: 0.5 + 0.5 * np.sin(u), lambda u: -u, 0.5, 1.0, _const(0.0), math.inf, "neuron")


def heat_medium_coefficients() -> Coefficients:
    return Coefficients(_const(1.0), _const(0.0), 0.0, 0.0, lambda x: np.sin(np.pi * x) ** 2, 1.0, "heat_medium")


class NeumannOperator:
    """Discrete mild map on a Neumann grid (shared, read-only)."""

    def __init__(self, grid: GridSpec, tol: float = 1e-13):
        self.grid = grid
        self.modes: NeumannModes = neumann_modes(grid, tol)
        lam = self.modes.lam
        self._full = np.exp(-lam * grid.dt)
        self._half = np.exp(-0.5 * lam * grid.dt)
        self._recon = self.modes.coef[:, None] * self.modes.node_cos

    def initial(self, u0) -> np.ndarray:
        """``int g(t_i, x_j, y) u0(y) dy`` with 4-point Gauss-Legendre per cell."""
        g = self.grid
        pts = g.x_centers()[:, None] + 0.5 * g.dx * _GL_NODES[None, :]
        vals = np.broadcast_to(np.asarray(u0(pts), dtype=float), pts.shape)
        k = np.sqrt(self.modes.lam)
        proj = np.einsum("lq,q,nlq->n", vals, _GL_WEIGHTS, np.cos(k[:, None, None] * pts[None])) * 0.5 * g.dx
        decay = np.exp(-np.outer(g.t_nodes(), self.modes.lam))
        out = (decay * proj) @ self._recon
        out[0] = np.broadcast_to(np.asarray(u0(g.x_nodes()), dtype=float), g.nx + 1)
        return out

    def convolve(self, F: np.ndarray) -> np.ndarray:
        """Nodes ``sum_{k<i} sum_l G[i-k][j, l] F[k, l]``; ``F`` has shape ``(..., nt, nx)``."""
        Fh = F @ self.modes.cell_cos.T
        S = np.zeros(F.shape[:-2] + (self.grid.nt + 1, self.modes.n_modes))
        for i in range(1, self.grid.nt + 1):
            S[..., i, :] = self._full * S[..., i - 1, :] + self._half * Fh[..., i - 1, :]
        return S @ self._recon

    def dense_weights(self, m: int) -> np.ndarray:
        return self.modes.weights(m)


def cell_state(U: np.ndarray) -> np.ndarray:
    """Left-time, two-node spatial average of nodes: the adapted value of ``u`` on each cell."""
    return 0.5 * (U[..., :-1, :-1] + U[..., :-1, 1:])


def mild_map(op: NeumannOperator, coeffs: Coefficients, u_init: np.ndarray, U: np.ndarray, increments: np.ndarray) -> np.ndarray:
    g = op.grid
    C = cell_state(U)
    F = np.asarray(coeffs.b(C)) * (g.dt * g.dx) + np.asarray(coeffs.a(C)) * increments
    return u_init + op.convolve(F)


@dataclass
class PicardTrace:
    diffs: list[float] = field(default_factory=list)
    converged_at: int | None = None
    status: str = "running"
    iterates: list[list[np.ndarray]] = field(default_factory=list)
    tol: float = 1e-6

    def as_dict(self) -> dict:
        return {"diffs": self.diffs, "converged_at": self.converged_at, "status": self.status, "tol": self.tol}


@dataclass
class PicardEnsemble:
    fields: list[FieldPath]
    noises: list[NoiseRealization]
    scenario_ids: list[str]
    operator: NeumannOperator
    u_init: np.ndarray


def _noise_for(control: VolatilityControl, xi, coins, scale, U, feedback_source: str):
    if control.kind == "feedback" and feedback_source == "iterate":
        # reads the previous iterate at the cell's own start time: adapted
        sigma = feedback_sigma(cell_state(U), control.bounds)
        return sigma * scale * xi
    return control.realize(xi, coins, scale)[1]


def picard_solve(coeffs: Coefficients, grid: GridSpec, ensemble: EnsembleSpec, n_max: int = 25, tol: float = 1e-6,
                 initial_offset: float = 0.0, keep_iterates: bool = False,
                 operator: NeumannOperator | None = None,
                 feedback_source: str = "iterate") -> tuple[PicardEnsemble, PicardTrace]:
    """Iterate the mild map for every scenario; stop once ``D_n < tol`` or at ``n_max``.

    Feedback controls read the previous iterate (``feedback_source='iterate'``)
    or the control's own noise summary (``'noise'``).  The first choice changes
    the noise between iterations through a discontinuous sign rule, so the map
    is no longer a contraction and ``D_n`` typically stalls.
    """
    if feedback_source not in ("iterate", "noise"):
        raise ValueError(f"unknown feedback_source {feedback_source!r}")
    if not (tol > 0):
        raise DomainError("tol must be positive")
    if ensemble.grid != grid:
        raise DomainError("ensemble and solver grids differ")
    op = operator or NeumannOperator(grid)
    u_init = op.initial(coeffs.u0)
    scale = math.sqrt(grid.dt * grid.dx)
    states = []
    for s, control in enumerate(ensemble.controls):
        xi = draw_normals(grid, ensemble.master_seed, s, 0, ensemble.M)
        coins = draw_coins(grid, ensemble.master_seed, s, 0, ensemble.M, control.seed) if control.kind == "bang_bang_random" else None
        U = np.broadcast_to(u_init + initial_offset, (ensemble.M,) + grid.node_shape).copy()
        states.append({"xi": xi, "coins": coins, "U": U, "inc": None})
    trace = PicardTrace(tol=tol)
    for n in range(1, n_max + 1):
        D = 0.0
        snap = []
        for s, control in enumerate(ensemble.controls):
            st = states[s]
            inc = _noise_for(control, st["xi"], st["coins"], scale, st["U"], feedback_source)
            U_new = mild_map(op, coeffs, u_init, st["U"], inc)
            if not np.all(np.isfinite(U_new)):
                bad = np.argwhere(~np.isfinite(U_new))[0]
                trace.status = "nan"
                raise PicardDivergence(f"non-finite value at scenario {control.control_id}, index {tuple(bad)}, iteration {n}")
            D = max(D, float(np.max(np.mean((U_new - st["U"]) ** 2, axis=0))))
            st["U"], st["inc"] = U_new, inc
            if keep_iterates:
                snap.append(U_new.copy())
        trace.diffs.append(D)
        if keep_iterates:
            trace.iterates.append(snap)
        if D < tol:
            trace.converged_at = n
            trace.status = "converged"
            break
    else:
        trace.status = "max_iter"
    fields, noises = [], []
    for s, control in enumerate(ensemble.controls):
        st = states[s]
        fields.append(FieldPath(grid, st["U"], {"control": control.control_id, "scenario": s}))
        noises.append(NoiseRealization(grid, control.control_id, st["inc"], (ensemble.master_seed, s, 0)))
    return PicardEnsemble(fields, noises, [c.control_id for c in ensemble.controls], op, u_init), trace


def mild_residual(u: FieldPath, coeffs: Coefficients, grid: GridSpec, w: NoiseRealization,
                  operator: NeumannOperator | None = None) -> np.ndarray | float:
    """``max_nodes |u - (G u0 + G*b(u) + G*a(u) dW)|`` per realization."""
    if u.grid != grid or w.grid != grid:
        raise DomainError("grid mismatch")
    op = operator or NeumannOperator(grid)
    out = np.max(np.abs(u.values - mild_map(op, coeffs, op.initial(coeffs.u0), u.values, w.increments)), axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def contraction_diagnostics(trace: PicardTrace, floor: float = 1e-28) -> dict:
    """Decrease, log-concavity and geometric ratios of ``D_n`` above the rounding floor."""
    if len(trace.diffs) < 4 and not (trace.diffs and trace.diffs[-1] == 0.0):
        raise DomainError("need at least four recorded iterations")
    d = np.asarray(trace.diffs)
    live = d[d > floor]
    tail = live[1:] if live.size > 2 else live
    decreasing = bool(np.all(np.diff(tail) <= 0)) if tail.size > 1 else True
    ratios = (live[1:] / live[:-1]).tolist() if live.size > 1 else []
    # factorial decay bends log D_n downward; the max over nodes is noisy, so
    # the sign of a fitted quadratic term is used instead of pointwise curvature
    curvature = float(np.polyfit(np.arange(tail.size), np.log(tail), 2)[0]) if tail.size > 3 else 0.0
    return {
        "n_iter": len(d),
        "eventually_decreasing": decreasing,
        "log_curvature": curvature,
        "log_concave": curvature <= 0.0,
        "ratios": ratios,
        "geometric_ratio": float(np.exp(np.mean(np.log(ratios)))) if ratios else 0.0,
        "converged_at": trace.converged_at,
    }


@dataclass
class HolderRow:
    axis: str
    delta: float
    empirical: float
    stderr: float
    scenario: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def holder_moment_diagnostics(result: PicardEnsemble, t: float, x: float, deltas: Sequence[float], axis: str,
                              holder_alpha: float | None = None) -> dict:
    """Upper second moments of ``u`` increments with a fitted log-log slope.

    The reference exponent is ``min(1, 2 alpha)`` in space and ``min(1/2, alpha)`` in time.
    """
    g = result.operator.grid
    i = g.t_index(t)
    j = g.x_index(x)
    rows = []
    for d in deltas:
        if d < 0:
            raise DomainError("deltas must be nonnegative")
        best = (-np.inf, 0.0, "")
        for f, sid in zip(result.fields, result.scenario_ids):
            v = f.values
            if axis == "space":
                diff = v[:, i, g.x_index(x + d)] - v[:, i, j]
            elif axis == "time":
                diff = v[:, g.t_index(t + d), j] - v[:, i, j]
            else:
                raise ValueError(f"axis must be 'space' or 'time', got {axis!r}")
            m, se = mc_mean(diff**2)
            if m > best[0]:
                best = (float(m), float(se), sid)
        rows.append(HolderRow(axis, float(d), *best))
    alpha = math.inf if holder_alpha is None else holder_alpha
    target = min(1.0, 2 * alpha) if axis == "space" else min(0.5, alpha)
    pos = [r for r in rows if r.delta > 0 and r.empirical > 0]
    slope = loglog_slope([r.delta for r in pos], [r.empirical for r in pos]) if len(pos) >= 2 else float("nan")
    return {"rows": rows, "slope": slope, "target": target}


def weak_form_residual_neumann(u: FieldPath, phi: TestFunction, coeffs: Coefficients, w: NoiseRealization):
    """Grid transcription of the Neumann weak form with its five terms.

    Trapezoid weights in both ``t`` and ``x`` for node terms; cell terms use
    the adapted cell state and ``phi`` at cell centers.
    """
    g = u.grid
    phi.check_neumann(g)
    ph = phi.on_nodes(g)
    gen = phi.on_nodes(g, "phi_t") + phi.on_nodes(g, "phi_xx")
    xw = np.full(g.nx + 1, g.dx)
    xw[[0, -1]] *= 0.5
    tw = np.full(g.nt + 1, g.dt)
    tw[[0, -1]] *= 0.5
    v = u.values
    u0 = np.broadcast_to(np.asarray(coeffs.u0(g.x_nodes()), dtype=float), g.nx + 1)
    boundary = np.sum(v[..., -1, :] * ph[-1] * xw, axis=-1) - np.sum(u0 * ph[0] * xw)
    bulk = np.einsum("...ij,ij,i,j->...", v, gen, tw, xw)
    T, X = np.meshgrid(g.t_centers(), g.x_centers(), indexing="ij")
    pc = phi.phi(T, X)
    C = cell_state(v)
    drift = np.sum(np.asarray(coeffs.b(C)) * pc, axis=(-2, -1)) * g.dt * g.dx
    noise = np.sum(np.asarray(coeffs.a(C)) * pc * w.increments, axis=(-2, -1))
    return np.abs(boundary - bulk - drift - noise)
