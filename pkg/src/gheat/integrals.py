"""Simple random fields and the stochastic, Bochner and kernel-weighted integrals.

A coefficient is either a number or a callable receiving the full increment
array ``(..., nt, nx)`` and returning one value per realization.  An adapted
coefficient for time cell ``i`` may only read rows ``< i``; the debug check
perturbs the remaining rows and insists the value does not move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy import integrate

from .grid import DomainError, GridRect, GridSpec
from .noise import EnsembleSpec, NoiseRealization

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]

MEAN_SLACK = 4.0
MOMENT_SLACK = 5.0


class AdaptednessError(ValueError):
    """A coefficient reads noise at or after its own time cell."""


class GridMismatchError(DomainError):
    pass


@dataclass(frozen=True)
class Piece:
    i: int
    j0: int
    j1: int
    coeff: Coefficient


def _eval_coeff(c: Coefficient, inc: np.ndarray) -> np.ndarray | float:
    if callable(c):
        return np.asarray(c(inc), dtype=float)
    return float(c)


@dataclass(frozen=True)
class SimpleRandomField:
    """``sum X_ij 1_[t_i, t_{i+1}) 1_[x_j0, x_j1)`` over its pieces."""

    grid: GridSpec
    pieces: tuple[Piece, ...]
    adapted: bool = True

    def __post_init__(self):
        seen: dict[int, list[tuple[int, int]]] = {}
        for p in self.pieces:
            GridRect(p.i, p.i + 1, p.j0, p.j1).validate(self.grid)
            for a, b in seen.get(p.i, []):
                if p.j0 < b and a < p.j1:
                    raise DomainError(f"pieces overlap in time cell {p.i}")
            seen.setdefault(p.i, []).append((p.j0, p.j1))
        object.__setattr__(self, "pieces", tuple(sorted(self.pieces, key=lambda p: (p.i, p.j0))))

    @classmethod
    def from_pieces(cls, grid: GridSpec, pieces: Iterable[tuple], adapted: bool = True) -> "SimpleRandomField":
        return cls(grid, tuple(Piece(*p) for p in pieces), adapted)

    @classmethod
    def constant(cls, grid: GridSpec, c: float = 1.0, cols: tuple[int, int] | None = None) -> "SimpleRandomField":
        j0, j1 = cols or (0, grid.nx)
        return cls.from_pieces(grid, [(i, j0, j1, c) for i in range(grid.nt)])

    def scaled_sum(self, other: "SimpleRandomField", alpha: float, beta: float) -> "SimpleRandomField":
        """``alpha * self + beta * other`` for fields with identical piece layouts."""
        if [(p.i, p.j0, p.j1) for p in self.pieces] != [(p.i, p.j0, p.j1) for p in other.pieces]:
            raise DomainError("piece layouts differ")

        def mix(c1, c2):
            return lambda inc: alpha * _eval_coeff(c1, inc) + beta * _eval_coeff(c2, inc)

        return SimpleRandomField(self.grid, tuple(Piece(p.i, p.j0, p.j1, mix(p.coeff, q.coeff))
                                                  for p, q in zip(self.pieces, other.pieces)),
                                 self.adapted and other.adapted)

    def cell_values(self, inc: np.ndarray) -> np.ndarray:
        """Field value on every cell, shape ``(..., nt, nx)``."""
        out = np.zeros(inc.shape)
        for p in self.pieces:
            out[..., p.i, p.j0:p.j1] = np.asarray(_eval_coeff(p.coeff, inc))[..., None]
        return out

    def check_adapted(self, w: NoiseRealization, seed: int = 0) -> None:
        """Re-sample rows ``>= i`` and require every piece coefficient to be unchanged."""
        rng = np.random.default_rng(seed)
        inc = w.increments
        for p in self.pieces:
            if not callable(p.coeff):
                continue
            bumped = inc.copy()
            bumped[..., p.i:, :] = rng.standard_normal(bumped[..., p.i:, :].shape)
            if not np.array_equal(_eval_coeff(p.coeff, inc), _eval_coeff(p.coeff, bumped)):
                raise AdaptednessError(f"coefficient of piece at time cell {p.i} reads future noise")


def _same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatchError("field and noise live on different grids")


def stochastic_integral(field: SimpleRandomField, w: NoiseRealization, debug: bool = False):
    """``sum_pieces X_ij W(piece)`` in time-major, then space order."""
    _same_grid(field.grid, w.grid)
    if not field.adapted:
        raise AdaptednessError("stochastic integrals need adapted coefficients")
    if debug:
        field.check_adapted(w)
    inc = w.increments
    total = np.zeros(inc.shape[:-2])
    for p in field.pieces:
        total = total + _eval_coeff(p.coeff, inc) * inc[..., p.i, p.j0:p.j1].sum(axis=-1)
    return float(total) if total.ndim == 0 else total


def bochner_integral(field: SimpleRandomField, w: NoiseRealization):
    """``sum_pieces X_ij dt |A_j|``; coefficients may read the whole noise path."""
    _same_grid(field.grid, w.grid)
    g = field.grid
    inc = w.increments
    total = np.zeros(inc.shape[:-2])
    for p in field.pieces:
        total = total + _eval_coeff(p.coeff, inc) * (g.dt * (p.j1 - p.j0) * g.dx)
    return float(total) if total.ndim == 0 else total


@dataclass(frozen=True)
class DeterministicKernel:
    """Square-integrable ``h(t, x)`` sampled at cell centers of ``grid``."""

    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grid: GridSpec
    centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T, X = np.meshgrid(self.grid.t_centers(), self.grid.x_centers(), indexing="ij")
        vals = np.broadcast_to(np.asarray(self.h(T, X), dtype=float), self.grid.shape).copy()
        if not np.all(np.isfinite(vals)):
            raise DomainError("kernel is not finite at every cell center")
        object.__setattr__(self, "centers", vals)

    @property
    def l2_norm_sq(self) -> float:
        """Midpoint value of ``int int h^2``; the same rule the integral uses."""
        return float(np.sum(self.centers**2) * self.grid.dt * self.grid.dx)

    def l2_norm_sq_quad(self) -> float:
        g = self.grid
        val, _ = integrate.dblquad(lambda x, t: float(self.h(np.float64(t), np.float64(x))) ** 2,
                                   0.0, g.t_end, g.x_lo, g.x_hi, epsabs=1e-10, epsrel=1e-9)
        return val


def kernel_weighted_integral(h: DeterministicKernel, field: SimpleRandomField, w: NoiseRealization):
    """``sum_pieces X_ij sum_cells h(center) dW`` (midpoint rule for ``h`` within cells)."""
    _same_grid(field.grid, w.grid)
    _same_grid(h.grid, w.grid)
    if not field.adapted:
        raise AdaptednessError("stochastic integrals need adapted coefficients")
    inc = w.increments
    weighted = h.centers * inc
    total = np.zeros(inc.shape[:-2])
    for p in field.pieces:
        total = total + _eval_coeff(p.coeff, inc) * weighted[..., p.i, p.j0:p.j1].sum(axis=-1)
    return float(total) if total.ndim == 0 else total


# Monte Carlo helpers --------------------------------------------------------

def mc_mean(x: np.ndarray, axis: int = 0) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Sample mean and its standard error along ``axis``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    se = x.std(axis=axis, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def empirical_s2_norm(field, ensemble: EnsembleSpec, scenarios: Sequence[int] | None = None) -> tuple[float, float]:
    """``max_points max_scenarios`` MC mean of the squared field, with its stderr.

    ``field`` is a :class:`SimpleRandomField` (evaluated on cells) or a callable
    mapping a batch realization to values ``(M, ...)``.
    """
    if not ensemble.controls:
        raise DomainError("empty ensemble")
    best, best_se = -np.inf, 0.0
    for s in scenarios if scenarios is not None else range(len(ensemble.controls)):
        acc = acc2 = None
        for w in ensemble.batches(s):
            v = field.cell_values(w.increments) if isinstance(field, SimpleRandomField) else np.asarray(field(w), float)
            sq = v.reshape(v.shape[0], -1) ** 2
            acc = sq.sum(0) if acc is None else acc + sq.sum(0)
            acc2 = (sq**2).sum(0) if acc2 is None else acc2 + (sq**2).sum(0)
        M = ensemble.M
        mean = acc / M
        var = np.maximum(acc2 / M - mean**2, 0.0) * (M / max(M - 1, 1))
        k = int(np.argmax(mean))
        if mean[k] > best:
            best, best_se = float(mean[k]), float(math.sqrt(var[k] / M))
    return best, best_se


# lemma battery --------------------------------------------------------------

def battery_fields(grid: GridSpec, block: int = 2) -> tuple[SimpleRandomField, SimpleRandomField, SimpleRandomField]:
    """Adapted test field on the full grid and its restrictions to two disjoint halves.

    The coefficient of piece ``(i, block)`` is ``1/2 + cos`` of the past noise in
    that column block, normalised by its natural scale.
    """
    scale = math.sqrt(grid.dt * grid.dx)

    def coeff(i, j0, j1):
        def c(inc):
            past = inc[..., :i, j0:j1]
            s = past.reshape(past.shape[:-2] + (-1,)).sum(axis=-1) / (scale * math.sqrt(max(1, i * (j1 - j0))))
            return 0.5 + np.cos(s)
        return c

    pieces = [(i, j0, min(j0 + block, grid.nx), coeff(i, j0, min(j0 + block, grid.nx)))
              for i in range(grid.nt) for j0 in range(0, grid.nx, block)]
    half = grid.nx // 2
    full = SimpleRandomField.from_pieces(grid, pieces)
    left = SimpleRandomField.from_pieces(grid, [p for p in pieces if p[2] <= half])
    right = SimpleRandomField.from_pieces(grid, [p for p in pieces if p[1] >= half])
    return full, left, right


def battery_kernel(grid: GridSpec) -> DeterministicKernel:
    L = grid.length
    return DeterministicKernel(lambda t, x: np.exp(-t) * np.cos(np.pi * (x - grid.x_lo) / L) + 0.25, grid)


@dataclass
class CheckRow:
    module: str
    check: str
    scenario: str
    statistic: float
    bound: float
    stderr: float
    passed: bool

    def as_dict(self) -> dict:
        return {"module": self.module, "check": self.check, "scenario": self.scenario,
                "statistic": self.statistic, "bound": self.bound, "stderr": self.stderr, "pass": self.passed}


def lemma_battery(ensemble: EnsembleSpec, sigma_hi: float, block: int = 2) -> list[CheckRow]:
    """Mean-zero, second-moment, orthogonality and kernel-weighted moment checks per scenario."""
    grid = ensemble.grid
    full, left, right = battery_fields(grid, block)
    h = battery_kernel(grid)
    M = ensemble.M
    slack = 1.0 + MOMENT_SLACK / math.sqrt(M)
    per_scenario = []
    s2_best = -np.inf
    for s, control in enumerate(ensemble.controls):
        cols = {k: [] for k in ("I", "E2", "I1", "I2", "Ih")}
        acc = np.zeros(grid.shape)
        for w in ensemble.batches(s):
            cells = full.cell_values(w.increments)
            acc += (cells**2).sum(axis=0)
            cols["I"].append(np.sum(cells * w.increments, axis=(-2, -1)))
            cols["E2"].append(np.sum(cells**2, axis=(-2, -1)) * grid.dt * grid.dx)
            cols["I1"].append(stochastic_integral(left, w))
            cols["I2"].append(stochastic_integral(right, w))
            cols["Ih"].append(np.sum(cells * h.centers * w.increments, axis=(-2, -1)))
        data = {k: np.concatenate(v) for k, v in cols.items()}
        s2_best = max(s2_best, float(np.max(acc / M)))
        per_scenario.append((control.control_id, data))

    rows = []
    for sid, d in per_scenario:
        m, se = mc_mean(d["I"])
        rows.append(CheckRow("integrals", "mean_zero", sid, m, MEAN_SLACK * se, se, abs(m) <= MEAN_SLACK * se))
        m2, se2 = mc_mean(d["I"] ** 2)
        e2, _ = mc_mean(d["E2"])
        bound = sigma_hi**2 * e2 * slack
        rows.append(CheckRow("integrals", "second_moment_bound", sid, m2, bound, se2, m2 <= bound))
        mo, seo = mc_mean(d["I1"] * d["I2"])
        rows.append(CheckRow("integrals", "disjoint_orthogonality", sid, mo, MEAN_SLACK * seo, seo,
                             mo <= MEAN_SLACK * seo and -mo <= MEAN_SLACK * seo))
        mh, seh = mc_mean(d["Ih"] ** 2)
        bound_h = sigma_hi**2 * s2_best * h.l2_norm_sq * slack
        rows.append(CheckRow("integrals", "kernel_moment_bound", sid, mh, bound_h, seh, mh <= bound_h))
    return rows
