"""Discrete space-time white noise under adapted volatility controls.

Every realization is addressed by a seed path ``(master_seed, scenario,
realization)``.  Random numbers come from a Philox counter stream whose key
is derived from ``(master_seed, scenario, stream)`` and whose counter starts
at a fixed offset per realization, so a realization is the same whether it is
drawn alone or inside a batch, and in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import ndtri

from .grid import DomainError, GridRect, GridSpec

XI_STREAM = 0
COIN_STREAM = 1
_TWO_M53 = 2.0**-53

SummaryRule = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SigmaBounds:
    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not (0 <= self.sigma_lo <= self.sigma_hi) or not math.isfinite(self.sigma_hi):
            raise DomainError(f"need 0 <= sigma_lo <= sigma_hi, got {self.sigma_lo}, {self.sigma_hi}")

    @property
    def degenerate(self) -> bool:
        return self.sigma_lo == self.sigma_hi

    def G(self, a):
        """``G(a) = (sigma_hi^2 a^+ - sigma_lo^2 a^-) / 2``."""
        a = np.asarray(a, dtype=float)
        out = 0.5 * (self.sigma_hi**2 * np.maximum(a, 0.0) - self.sigma_lo**2 * np.maximum(-a, 0.0))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"sigma_lo": self.sigma_lo, "sigma_hi": self.sigma_hi}


# counter-based streams --------------------------------------------------------

def _key(master_seed: int, scenario: int, stream: int) -> int:
    words = np.random.SeedSequence(int(master_seed), spawn_key=(int(scenario), int(stream))).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def raw_block(master_seed: int, scenario: int, stream: int, first: int, count: int, n_values: int) -> np.ndarray:
    """Raw 64-bit words for realizations ``first .. first+count-1``, shape ``(count, n_values)``.

    Realization ``r`` owns Philox blocks ``[r*B, (r+1)*B)`` with ``B = ceil(n_values/4)``.
    """
    if first < 0 or count < 0:
        raise DomainError("realization indices must be nonnegative")
    blocks = -(-n_values // 4)
    gen = np.random.Philox(key=_key(master_seed, scenario, stream), counter=first * blocks)
    raw = gen.random_raw(count * blocks * 4).reshape(count, blocks * 4)
    return raw[:, :n_values]


def standard_normals(raw: np.ndarray) -> np.ndarray:
    """Inverse-CDF normals from 53-bit uniforms on the open interval (0, 1).

    ``k + 0.5`` is only exact below ``2**52``, so the upper half of the range
    is folded onto the lower half and mapped through ``z -> -z``.
    """
    k = raw >> np.uint64(11)
    upper = k >= np.uint64(1 << 52)
    m = np.where(upper, np.uint64((1 << 53) - 1) - k, k)
    z = ndtri((m.astype(np.float64) + 0.5) * _TWO_M53)
    return np.where(upper, -z, z)


# controls ---------------------------------------------------------------------

def second_difference(s: np.ndarray) -> np.ndarray:
    """Discrete second difference along the last axis with edge padding."""
    padded = np.concatenate([s[..., :1], s, s[..., -1:]], axis=-1)
    return padded[..., :-2] - 2.0 * padded[..., 1:-1] + padded[..., 2:]


def feedback_sigma(summary: np.ndarray, bounds: SigmaBounds) -> np.ndarray:
    """``sigma_hi`` where the summary is locally convex (ties included), else ``sigma_lo``."""
    return np.where(second_difference(summary) >= 0.0, bounds.sigma_hi, bounds.sigma_lo)


@dataclass(frozen=True)
class VolatilityControl:
    """Adapted per-cell volatility ``sigma_ij`` in ``[sigma_lo, sigma_hi]``.

    ``constant`` stores its cell values; ``bang_bang_random`` and ``feedback``
    produce them per realization in :meth:`realize`.  ``feedback_rule`` maps
    the past increments ``(..., i, nx)`` to a summary ``(..., nx)``; the
    default is the running column sum of the noise.
    """

    kind: str
    bounds: SigmaBounds
    control_id: str
    values: np.ndarray | None = None
    feedback_rule: SummaryRule | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0

    def realize(self, xi: np.ndarray, coins: np.ndarray | None, scale: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(sigma, increments)`` for normals ``xi`` of shape ``(..., nt, nx)``."""
        if self.kind == "constant":
            sigma = np.broadcast_to(self.values, xi.shape)
            return sigma, sigma * scale * xi
        if self.kind == "bang_bang_random":
            # coin bits are independent of xi, hence trivially past-measurable
            sigma = np.where(coins, self.bounds.sigma_hi, self.bounds.sigma_lo)
            return sigma, sigma * scale * xi
        if self.kind == "feedback":
            return self._realize_feedback(xi, scale)
        raise ValueError(f"unknown control kind {self.kind!r}")

    def _realize_feedback(self, xi: np.ndarray, scale: float):
        nt = xi.shape[-2]
        sigma = np.empty_like(xi)
        inc = np.empty_like(xi)
        running = np.zeros(xi.shape[:-2] + xi.shape[-1:])
        for i in range(nt):
            if i == 0:
                row = np.full(running.shape, self.bounds.sigma_hi)
            else:
                summ = running if self.feedback_rule is None else self.feedback_rule(inc[..., :i, :])
                row = feedback_sigma(np.asarray(summ, dtype=float), self.bounds)
            sigma[..., i, :] = row
            inc[..., i, :] = row * scale * xi[..., i, :]
            running = running + inc[..., i, :]
        return sigma, inc

    def to_dict(self) -> dict:
        out = {"id": self.control_id, "kind": self.kind, **self.bounds.to_dict(), "seed": self.seed}
        if self.kind == "constant":
            out["level"] = float(self.values.flat[0]) if np.all(self.values == self.values.flat[0]) else "field"
        out.update({k: v for k, v in self.params.items() if isinstance(v, (int, float, str))})
        return out


def make_control(grid: GridSpec, bounds: SigmaBounds, kind: str, params: dict | None = None,
                 seed: int = 0, control_id: str | None = None) -> VolatilityControl:
    """Build a control; ``params`` holds ``level`` (constant) or ``rule`` (feedback)."""
    params = dict(params or {})
    if bounds.degenerate:
        # every kind collapses to the single admissible level
        values = np.full(grid.shape, bounds.sigma_hi)
        return VolatilityControl("constant", bounds, control_id or kind, values, params={"requested": kind}, seed=seed)
    if kind == "constant":
        level = params.pop("level", bounds.sigma_hi)
        values = np.asarray(level, dtype=float)
        values = np.broadcast_to(values, grid.shape).copy()
        if np.any(values < bounds.sigma_lo) or np.any(values > bounds.sigma_hi):
            raise DomainError(f"constant level {level} outside [{bounds.sigma_lo}, {bounds.sigma_hi}]")
        params["level"] = level if np.ndim(level) == 0 else "field"
        return VolatilityControl("constant", bounds, control_id or f"constant_{level}", values, params=params, seed=seed)
    if kind == "bang_bang_random":
        return VolatilityControl(kind, bounds, control_id or kind, params=params, seed=seed)
    if kind == "feedback":
        rule = params.pop("rule", None)
        return VolatilityControl(kind, bounds, control_id or kind, feedback_rule=rule, params=params, seed=seed)
    raise DomainError(f"unknown control kind {kind!r}")


def default_dictionary(grid: GridSpec, bounds: SigmaBounds, kinds: Sequence[str] | None = None) -> list[VolatilityControl]:
    """Five constant levels, a random bang-bang control and the feedback control."""
    lo, hi = bounds.sigma_lo, bounds.sigma_hi
    q = (hi - lo) / 4.0
    levels = [("const_lo", lo), ("const_q1", lo + q), ("const_mid", lo + 2 * q), ("const_q3", hi - q), ("const_hi", hi)]
    out = [make_control(grid, bounds, "constant", {"level": v}, control_id=name) for name, v in levels]
    out.append(make_control(grid, bounds, "bang_bang_random", control_id="bang_bang"))
    out.append(make_control(grid, bounds, "feedback", control_id="feedback"))
    if kinds is not None:
        out = [c for c in out if c.control_id in kinds or c.params.get("requested", c.kind) in kinds]
    return out


# realizations -----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseRealization:
    """Cell increments ``(..., nt, nx)``; a leading axis indexes consecutive realizations."""

    grid: GridSpec
    control_id: str
    increments: np.ndarray
    seed_path: tuple[int, int, int]
    sigma: np.ndarray | None = None

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.increments.shape[:-2]

    def __getitem__(self, k: int) -> "NoiseRealization":
        if not self.batch_shape:
            raise IndexError("single realization")
        m, s, r = self.seed_path
        sig = None if self.sigma is None else self.sigma[k]
        return NoiseRealization(self.grid, self.control_id, self.increments[k], (m, s, r + k), sig)

    def cumulative(self) -> np.ndarray:
        """``W([0, t_i) x [x_lo, x_j))`` at all nodes, shape ``(..., nt+1, nx+1)``."""
        inc = self.increments
        out = np.zeros(inc.shape[:-2] + (inc.shape[-2] + 1, inc.shape[-1] + 1))
        out[..., 1:, 1:] = np.cumsum(np.cumsum(inc, axis=-2), axis=-1)
        return out


def draw_normals(grid: GridSpec, master_seed: int, scenario: int, first: int, count: int) -> np.ndarray:
    n = grid.nt * grid.nx
    return standard_normals(raw_block(master_seed, scenario, XI_STREAM, first, count, n)).reshape(count, grid.nt, grid.nx)


def draw_coins(grid: GridSpec, master_seed: int, scenario: int, first: int, count: int, salt: int = 0) -> np.ndarray:
    n = grid.nt * grid.nx
    raw = raw_block(master_seed, scenario, COIN_STREAM + 2 * salt, first, count, n)
    return (raw >> np.uint64(63)).astype(bool).reshape(count, grid.nt, grid.nx)


def sample_noise_batch(grid: GridSpec, control: VolatilityControl, master_seed: int, scenario: int,
                       first: int, count: int) -> NoiseRealization:
    """Realizations ``first .. first+count-1`` of one scenario, bit-identical to single draws."""
    if control.values is not None and control.values.shape != grid.shape:
        raise DomainError("control and grid disagree on shape")
    xi = draw_normals(grid, master_seed, scenario, first, count)
    coins = draw_coins(grid, master_seed, scenario, first, count, control.seed) if control.kind == "bang_bang_random" else None
    scale = math.sqrt(grid.dt * grid.dx)
    sigma, inc = control.realize(xi, coins, scale)
    sigma_out = sigma if control.kind != "constant" else None
    return NoiseRealization(grid, control.control_id, inc, (int(master_seed), int(scenario), int(first)), sigma_out)


def sample_noise(grid: GridSpec, control: VolatilityControl, seed_path: tuple[int, int, int]) -> NoiseRealization:
    m, s, r = seed_path
    return sample_noise_batch(grid, control, m, s, r, 1)[0]


def rect_value(w: NoiseRealization, rect: GridRect) -> np.ndarray | float:
    """Aggregate increment over ``rect``; row-major summation, batched over leading axes."""
    rect.validate(w.grid)
    block = w.increments[..., rect.i0:rect.i1, rect.j0:rect.j1]
    out = block.reshape(block.shape[:-2] + (-1,)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EnsembleSpec:
    """Scenario dictionary with ``M`` realizations each, generated in chunks."""

    grid: GridSpec
    controls: tuple[VolatilityControl, ...]
    M: int
    master_seed: int = 0
    chunk: int = 4096

    def __post_init__(self):
        if not self.controls:
            raise DomainError("empty scenario dictionary")
        if self.M < 1:
            raise DomainError("M must be positive")

    def batches(self, scenario: int) -> Iterator[NoiseRealization]:
        control = self.controls[scenario]
        cells = max(1, self.grid.nt * self.grid.nx)
        # cap a chunk near 2**23 cells to bound memory
        step = max(1, min(self.chunk, (1 << 23) // cells))
        for first in range(0, self.M, step):
            yield sample_noise_batch(self.grid, control, self.master_seed, scenario, first, min(step, self.M - first))

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "M": self.M, "master_seed": self.master_seed,
                "scenarios": [dict(c.to_dict(), index=k) for k, c in enumerate(self.controls)]}
