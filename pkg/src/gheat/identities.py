"""Per-realization identity checks: stochastic Fubini, its convolution form and
the pairing of the noise with mixed derivatives of a test function.

All comparisons evaluate the same finite sum in two orders, so their only
discrepancy is floating-point reassociation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .grid import DomainError, GridRect, GridSpec
from .integrals import Coefficient, DeterministicKernel, GridMismatchError, SimpleRandomField, _eval_coeff
from .noise import NoiseRealization

FUBINI_RTOL = 1e-10
CONVOLUTION_RTOL = 1e-9

Fn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# double simple fields ---------------------------------------------------------

@dataclass(frozen=True)
class DoublePiece:
    i: int
    a: tuple[int, int]
    l: int
    b: tuple[int, int]
    coeff: Coefficient


@dataclass(frozen=True)
class DoubleSimpleField:
    """``eta(t, x, s, y) = sum X_ialb 1_{t_i}(t) 1_A(x) 1_{s_l}(s) 1_B(y)``, adapted in ``i``."""

    grid: GridSpec
    pieces: tuple[DoublePiece, ...]

    def __post_init__(self):
        for p in self.pieces:
            GridRect(p.i, p.i + 1, *p.a).validate(self.grid)
            GridRect(p.l, p.l + 1, *p.b).validate(self.grid)
        first = {}
        second = {}
        for p in self.pieces:
            for store, key, rect in ((first, p.i, p.a), (second, p.l, p.b)):
                for other in store.get(key, set()):
                    if other != rect and rect[0] < other[1] and other[0] < rect[1]:
                        raise DomainError("rectangles overlap within an axis family")
                store.setdefault(key, set()).add(rect)


def fubini_check_simple(field: DoubleSimpleField, w: NoiseRealization):
    """Bochner-of-stochastic versus stochastic-of-Bochner; returns ``(lhs, rhs, abs_diff)``."""
    if field.grid != w.grid:
        raise GridMismatchError("field and noise live on different grids")
    g = field.grid
    inc = w.increments
    batch = inc.shape[:-2]
    vals = [np.broadcast_to(_eval_coeff(p.coeff, inc), batch) for p in field.pieces]
    dW = [inc[..., p.i, p.a[0]:p.a[1]].sum(axis=-1) for p in field.pieces]
    leb = [g.dt * (p.b[1] - p.b[0]) * g.dx for p in field.pieces]

    # outer sum over (s, y) rectangles, inner stochastic sum
    by_b: dict = {}
    for k, p in enumerate(field.pieces):
        by_b.setdefault((p.l, p.b), []).append(k)
    lhs = np.zeros(batch)
    for key in sorted(by_b):
        inner = np.zeros(batch)
        for k in by_b[key]:
            inner = inner + vals[k] * dW[k]
        lhs = lhs + leb[by_b[key][0]] * inner

    by_a: dict = {}
    for k, p in enumerate(field.pieces):
        by_a.setdefault((p.i, p.a), []).append(k)
    rhs = np.zeros(batch)
    for key in sorted(by_a):
        inner = np.zeros(batch)
        for k in by_a[key]:
            inner = inner + vals[k] * leb[k]
        rhs = rhs + inner * dW[by_a[key][0]]
    return lhs, rhs, np.abs(lhs - rhs)


def random_double_field(grid: GridSpec, rng: np.random.Generator, max_rects: int = 4) -> DoubleSimpleField:
    """Random adapted four-index field with coefficients spanning several magnitudes."""
    scale = math.sqrt(grid.dt * grid.dx)

    def family():
        out = []
        for t in rng.choice(grid.nt, size=rng.integers(1, max_rects + 1), replace=False):
            cuts = np.sort(rng.choice(np.arange(1, grid.nx), size=min(2, grid.nx - 1), replace=False))
            edges = [0, *cuts.tolist(), grid.nx]
            k = int(rng.integers(len(edges) - 1))
            out.append((int(t), (edges[k], edges[k + 1])))
        return out

    pieces = []
    outer, inner = family(), family()
    for i, a in outer:
        for l, b in inner:
            amp = float(rng.normal() * 10.0 ** rng.integers(-2, 4))
            col = int(rng.integers(grid.nx))

            def c(inc, i=i, amp=amp, col=col):
                return amp * (1.0 + np.sin(inc[..., :i, col].sum(axis=-1) / scale))
            pieces.append(DoublePiece(i, a, l, b, c))
    return DoubleSimpleField(grid, tuple(pieces))


# test functions ---------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Smooth ``phi(t, x)`` with closed-form partial derivatives."""

    __test__ = False  # keep pytest from collecting this class

    phi: Fn
    phi_t: Fn
    phi_x: Fn
    phi_xx: Fn
    phi_tx: Fn
    name: str = "phi"

    def on_nodes(self, grid: GridSpec, fn: str = "phi") -> np.ndarray:
        T, X = np.meshgrid(grid.t_nodes(), grid.x_nodes(), indexing="ij")
        return np.broadcast_to(getattr(self, fn)(T, X), grid.node_shape).astype(float)

    def check_spatial_support(self, grid: GridSpec, atol: float = 1e-12) -> None:
        t = grid.t_nodes()
        for x in (grid.x_lo, grid.x_hi):
            for fn in ("phi", "phi_t", "phi_x", "phi_xx", "phi_tx"):
                if np.max(np.abs(getattr(self, fn)(t, np.full_like(t, x)))) >= atol:
                    raise DomainError(f"{self.name}: {fn} does not vanish at x={x}")

    def check_full_support(self, grid: GridSpec, atol: float = 1e-12) -> None:
        self.check_spatial_support(grid, atol)
        x = grid.x_nodes()
        for t in (0.0, grid.t_end):
            if np.max(np.abs(self.phi(np.full_like(x, t), x))) >= atol:
                raise DomainError(f"{self.name}: phi does not vanish at t={t}")

    def check_neumann(self, grid: GridSpec, atol: float = 1e-12) -> None:
        t = grid.t_nodes()
        for x in (grid.x_lo, grid.x_hi):
            if np.max(np.abs(self.phi_x(t, np.full_like(t, x)))) >= atol:
                raise DomainError(f"{self.name}: d phi/dx does not vanish at x={x}")


def _bump(a: float, b: float):
    """``sin^4`` bump on ``[a, b]`` with its first two derivatives."""
    k = math.pi / (b - a)

    def parts(z):
        z = np.asarray(z, dtype=float)
        inside = (z > a) & (z < b)
        s = np.sin(k * (z - a))
        c = np.cos(k * (z - a))
        f = np.where(inside, s**4, 0.0)
        f1 = np.where(inside, 4 * k * s**3 * c, 0.0)
        f2 = np.where(inside, k * k * (12 * s**2 * c**2 - 4 * s**4), 0.0)
        return f, f1, f2
    return parts


def bump_test_function(t_support: tuple[float, float] | None, x_support: tuple[float, float]) -> TestFunction:
    """Product of ``sin^4`` bumps; ``t_support=None`` makes the time factor ``1 + t``."""
    xb = _bump(*x_support)
    if t_support is None:
        def tf(t):
            t = np.asarray(t, dtype=float)
            return 1.0 + t, np.ones_like(t)
    else:
        tb = _bump(*t_support)

        def tf(t):
            f, f1, _ = tb(t)
            return f, f1

    def mk(dt_order, dx_order):
        def fn(t, x):
            tv = tf(t)[dt_order]
            xv = xb(x)[dx_order]
            return tv * xv
        return fn

    return TestFunction(mk(0, 0), mk(1, 0), mk(0, 1), mk(0, 2), mk(1, 1), name="bump")


def neumann_test_function(L: float, mode: int = 1, rate: float = 1.0) -> TestFunction:
    """``exp(-rate t) cos(mode pi x / L)``; its x-derivative vanishes at 0 and L."""
    k = mode * math.pi / L

    def th(t):
        return np.exp(-rate * np.asarray(t, dtype=float))

    return TestFunction(
        lambda t, x: th(t) * np.cos(k * x),
        lambda t, x: -rate * th(t) * np.cos(k * x),
        lambda t, x: -k * th(t) * np.sin(k * x),
        lambda t, x: -k * k * th(t) * np.cos(k * x),
        lambda t, x: rate * k * th(t) * np.sin(k * x),
        name=f"neumann_cos{mode}",
    )


# convolution form -----------------------------------------------------------

def lag_tensor(table: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``H4[i, j, k, l] = table[i - k, j - l]`` for ``k < i`` and zero otherwise.

    ``table`` is indexed ``[m, d + nx - 1]`` as returned by
    :func:`gheat.kernels.line_weight_table`.
    """
    nt, nx = grid.shape
    i = np.arange(nt)
    j = np.arange(nx)
    m = i[:, None] - i[None, :]
    d = j[:, None] - j[None, :] + nx - 1
    H = table[np.clip(m, 0, None)[:, None, :, None], d[None, :, None, :]]
    return np.where((m > 0)[:, None, :, None], H, 0.0)


def kernel_lag_table(h: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: GridSpec) -> np.ndarray:
    """Tabulate ``h(m dt, d dx)`` for lags ``m >= 1``; rejects non-finite values."""
    m = np.arange(grid.nt + 1)[:, None] * grid.dt
    d = np.arange(-(grid.nx - 1), grid.nx + 1)[None, :] * grid.dx
    out = np.zeros((grid.nt + 1, 2 * grid.nx))
    out[1:] = np.broadcast_to(h(m[1:], d), out[1:].shape)
    if not np.all(np.isfinite(out)):
        raise DomainError("kernel is singular on the lag lattice; use cell-averaged weights")
    return out


def convolution_fubini_check(h_table: np.ndarray, phi: TestFunction, field: SimpleRandomField, w: NoiseRealization,
                             H4: np.ndarray | None = None):
    """Two summation orders of ``sum h(t-s, x-y) phi(t, x) eta(s, y) dW(s, y) dt dx``."""
    if field.grid != w.grid:
        raise GridMismatchError("field and noise live on different grids")
    g = field.grid
    if H4 is None:
        H4 = lag_tensor(h_table, g)
    T, X = np.meshgrid(g.t_centers(), g.x_centers(), indexing="ij")
    ph = np.broadcast_to(phi.phi(T, X), g.shape)
    area = g.dt * g.dx
    src = field.cell_values(w.increments) * w.increments
    g_disc = np.tensordot(ph, H4, axes=([0, 1], [0, 1])) * area
    lhs = np.sum(g_disc * src, axis=(-2, -1))
    zeta = np.tensordot(src, H4, axes=([-2, -1], [2, 3]))
    rhs = np.sum(zeta * ph, axis=(-2, -1)) * area
    return lhs, rhs, np.abs(lhs - rhs)


# derivative pairing ---------------------------------------------------------

def mixed_difference(values: np.ndarray) -> np.ndarray:
    """``f(a+1, b+1) - f(a+1, b) - f(a, b+1) + f(a, b)`` over node arrays."""
    return values[1:, 1:] - values[1:, :-1] - values[:-1, 1:] + values[:-1, :-1]


def derivative_pairing_check(phi: TestFunction, w: NoiseRealization, level: int | None = None,
                             rhs_rule: str = "fine"):
    """Compare ``sum W_cum * mixed-difference(phi)`` on a coarse level with ``sum phi dW``.

    ``w`` lives on a fine grid whose cell counts are multiples of ``level``.
    The left side aggregates it to a ``level x level`` grid and pairs the
    cumulative field at upper-right cell corners with the exact mixed
    difference of ``phi``.  ``rhs_rule='fine'`` evaluates ``phi`` at lower-left
    corners of the fine cells; ``'corner'`` does so on the coarse cells, where
    summation by parts makes both sides equal up to rounding.
    """
    g = w.grid
    n = level or g.nt
    if g.nt % n or g.nx % n:
        raise DomainError(f"level {n} does not divide the fine grid {g.nt}x{g.nx}")
    phi.check_full_support(g)
    rt, rx = g.nt // n, g.nx // n
    coarse = GridSpec(g.t_end, g.x_lo, g.x_hi, n, n)
    Wc = w.cumulative()[..., ::rt, ::rx]
    ph_c = phi.on_nodes(coarse)
    lhs = np.sum(Wc[..., 1:, 1:] * mixed_difference(ph_c), axis=(-2, -1))
    if rhs_rule == "fine":
        rhs = np.sum(phi.on_nodes(g)[:-1, :-1] * w.increments, axis=(-2, -1))
    elif rhs_rule == "corner":
        dWc = mixed_difference_batched(Wc)
        rhs = np.sum(ph_c[:-1, :-1] * dWc, axis=(-2, -1))
    else:
        raise ValueError(f"unknown rhs_rule {rhs_rule!r}")
    return lhs, rhs, np.abs(lhs - rhs)


def mixed_difference_batched(values: np.ndarray) -> np.ndarray:
    return values[..., 1:, 1:] - values[..., 1:, :-1] - values[..., :-1, 1:] + values[..., :-1, :-1]


def pairing_constant(phi: TestFunction, grid: GridSpec) -> float:
    """``C_phi = int int (d^2 phi / dt dx)^2`` by adaptive quadrature."""
    val, _ = integrate.dblquad(lambda x, t: float(phi.phi_tx(np.float64(t), np.float64(x))) ** 2,
                               0.0, grid.t_end, grid.x_lo, grid.x_hi, epsabs=1e-10, epsrel=1e-9)
    return val


def pairing_bound(c_phi: float, sigma_hi: float, n: int) -> float:
    return math.sqrt(c_phi * sigma_hi**2 * (2 * n + 1)) / (2 * n)
