"""Heat kernel, Neumann Green's function and the kernel-increment integrals.

The heat equation here is ``u_t = u_xx``, so ``p(t, x) = (4 pi t)^{-1/2}
exp(-x^2 / 4t)`` has variance ``2t``.  Improper integrals are reduced with the
Gaussian product rule ``int p(a, u) p(b, u + c) du = p(a + b, c)`` before any
quadrature, which leaves one-dimensional integrands in the time lag ``r`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .grid import DomainError, GridSpec

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
_SQRT_8PI = math.sqrt(8.0 * math.pi)

Representation = Literal["image_sum", "spectral"]


class CausalityError(DomainError):
    """Kernel weight requested at a time not strictly after the source cell starts."""


@dataclass(frozen=True)
class KernelEval:
    value: float | np.ndarray
    representation_used: str
    truncation_terms: int
    tail_bound: float = 0.0


def heat_kernel(t, x):
    """``p(t, x)``; broadcasts over array arguments."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("heat kernel needs t > 0")
    x_arr = np.asarray(x, dtype=float)
    out = np.exp(-x_arr**2 / (4.0 * t_arr)) / np.sqrt(4.0 * np.pi * t_arr)
    return float(out) if out.ndim == 0 else out


def gaussian_product_integral(a: float, b: float, c: float) -> float:
    """``int_R p(a, u) p(b, u + c) du`` in closed form, i.e. ``p(a + b, c)``."""
    return heat_kernel(a + b, c)


def neumann_crossover(L: float) -> float:
    """Time ``L^2 / pi`` separating the image-sum and spectral regimes."""
    return L * L / math.pi


def _image_terms(t: float, L: float, tol: float) -> tuple[int, float]:
    # images with |n| > N sit at distance >= 2(|n|-1)L >= 2NL from [0, L]
    a = L * L / t
    amp = 4.0 / math.sqrt(4.0 * math.pi * t)
    n = 1
    while True:
        bound = amp * math.exp(-a * n * n) / (-math.expm1(-2.0 * a * n))
        if bound < tol or n > 10_000:
            return n, bound
        n += 1


def _spectral_terms(t: float, L: float, tol: float) -> tuple[int, float]:
    # modes n > N contribute at most (2/L) sum_{m > N} exp(-b m^2)
    b = math.pi**2 * t / (L * L)
    n = 0
    while True:
        m = n + 1
        bound = (2.0 / L) * math.exp(-b * m * m) / (-math.expm1(-b * (2 * m + 1)))
        if bound < tol or n > 100_000:
            return n, bound
        n += 1


def _check_interval(v, L: float, name: str):
    arr = np.asarray(v, dtype=float)
    slack = 1e-12 * max(1.0, L)
    if np.any(arr < -slack) or np.any(arr > L + slack):
        raise DomainError(f"{name} must lie in [0, {L}]")
    return np.clip(arr, 0.0, L)


def green_neumann(t: float, x, y, L: float, tol: float = 1e-13,
                  representation: Representation | None = None,
                  terms: int | None = None) -> KernelEval:
    """Neumann Green's function ``g(t, x, y)`` on ``[0, L]``.

    ``representation=None`` picks the image sum for ``t <= L^2/pi`` and the
    cosine series otherwise.  ``terms`` overrides the automatic truncation
    (image half-width ``N`` or highest mode ``N``) for truncation studies.
    """
    if not (L > 0):
        raise DomainError("L must be positive")
    if not (t > 0):
        raise DomainError("Green's function needs t > 0")
    if not (tol > 0):
        raise DomainError("tol must be positive")
    x = _check_interval(x, L, "x")
    y = _check_interval(y, L, "y")
    rep = representation or ("image_sum" if t <= neumann_crossover(L) else "spectral")
    if rep == "image_sum":
        n_half, bound = _image_terms(t, L, tol)
        if terms is not None:
            n_half = int(terms)
        n = np.arange(-n_half, n_half + 1).reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
        # |x - y| makes the sum bitwise symmetric in (x, y)
        val = (heat_kernel(t, np.abs(x - y) - 2 * n * L) + heat_kernel(t, x + y - 2 * n * L)).sum(axis=0)
        count = 2 * n_half + 1
    elif rep == "spectral":
        n_top, bound = _spectral_terms(t, L, tol)
        if terms is not None:
            n_top = int(terms)
        n = np.arange(1, n_top + 1).reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
        k = n * math.pi / L
        val = 1.0 / L + (2.0 / L) * (np.cos(k * x) * np.cos(k * y) * np.exp(-(k**2) * t)).sum(axis=0)
        count = n_top + 1
    else:
        raise ValueError(f"unknown representation {rep!r}")
    val = np.asarray(val, dtype=float)
    return KernelEval(float(val) if val.ndim == 0 else val, rep, count, bound)


def neumann_domination_constant(L: float, t_end: float, n_t: int = 40, n_xy: int = 41) -> float:
    """Empirical ``C_T = max g(t,x,y) / p(t, x - y)`` over a sample lattice.

    The ratio grows like ``exp(L^2/t)`` near the reflecting walls, so the
    estimate is over the sampled lattice only and is reported, not asserted.
    """
    xs = np.linspace(0.0, L, n_xy)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    best = 0.0
    for t in np.geomspace(t_end / n_t, t_end, n_t):
        g = green_neumann(float(t), X, Y, L).value
        best = max(best, float(np.max(g / heat_kernel(t, X - Y))))
    return best


# kernel increment integrals -------------------------------------------------

def p_increment_x_sq_integral(t: float, delta: float) -> float:
    """``int_0^t int_R |p(r, x + delta - y) - p(r, x - y)|^2 dy dr``.

    The spatial integral is ``2 p(2r, 0) - 2 p(2r, delta)``; with ``r = v^2``
    the remaining integrand is bounded on ``[0, sqrt(t)]``.
    """
    if not (t > 0):
        raise DomainError("t must be positive")
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    if delta == 0:
        return 0.0
    c = delta * delta / 8.0

    def f(v):
        return -4.0 / _SQRT_8PI * math.expm1(-c / v / v) if v > 0 else 4.0 / _SQRT_8PI

    def g(w):
        # f(1/w) / w^2: smooth and bounded, for the slowly decaying tail
        return -4.0 / _SQRT_8PI * math.expm1(-c * w * w) / (w * w) if w > 0 else 4.0 / _SQRT_8PI * c

    top = math.sqrt(t)
    # the integrand changes scale near v ~ delta; split there for robustness
    knots = sorted({0.0, min(delta, top), min(10 * delta, top)})
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi > lo:
            total += integrate.quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)[0]
    if top > knots[-1]:
        total += integrate.quad(g, 1.0 / top, 1.0 / knots[-1], epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                limit=200)[0]
    return total


def p_increment_t_sq_integral(delta: float) -> float:
    """``int_0^inf int_R |p(u + delta, y) - p(u, y)|^2 dy du = (sqrt2 - 1) sqrt(delta / 2pi)``."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    return (math.sqrt(2.0) - 1.0) * math.sqrt(delta / (2.0 * math.pi))


def _inv_sqrt_diff(a: float, b: float) -> float:
    """``a^{-1/2} - b^{-1/2}`` without cancellation for ``0 < a <= b``."""
    sa, sb = math.sqrt(a), math.sqrt(b)
    return (b - a) / (sa * sb * (sa + sb))


def p_increment_t_sq_integral_quad(delta: float) -> float:
    """Quadrature value of :func:`p_increment_t_sq_integral`.

    After the Gaussian reduction the integrand in the lag ``u`` is
    ``(8 pi)^{-1/2} [u^{-1/2} + (u + delta)^{-1/2} - 2 (u + delta/2)^{-1/2}]``.
    ``[0, delta]`` is done with ``u = v^2`` and ``[delta, inf)`` with ``u = delta / w^2``.
    """
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    if delta == 0:
        return 0.0
    h = delta / 2.0

    def f(u):
        return (_inv_sqrt_diff(u, u + h) - _inv_sqrt_diff(u + h, u + delta)) / _SQRT_8PI

    def g(v):
        # f(v^2) * 2v with the u^{-1/2} singularity cancelled analytically
        u = v * v
        if v == 0:
            return 2.0 / _SQRT_8PI
        return 2.0 * v * f(u)

    def k(w):
        # u = delta / w^2 maps [delta, inf) to (0, 1]; integrand ~ w^2 near 0
        return 2.0 * delta / w**3 * f(delta / (w * w)) if w > 0 else 0.0

    opts = dict(epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    head = integrate.quad(g, 0.0, math.sqrt(delta), **opts)[0]
    tail = integrate.quad(k, 0.0, 1.0, **opts)[0]
    return head + tail


def p_tail_sq_integral(delta: float) -> float:
    """``int_0^delta int_R p(r, y)^2 dy dr = sqrt(delta / 2pi)``."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    return math.sqrt(delta / (2.0 * math.pi))


def p_tail_sq_integral_quad(delta: float) -> float:
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    if delta == 0:
        return 0.0
    # p(2r, 0) dr with r = v^2 becomes the constant 2 (8 pi)^{-1/2} dv
    return integrate.quad(lambda v: 2.0 / _SQRT_8PI + 0.0 * v, 0.0, math.sqrt(delta),
                          epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)[0]


# cell-averaged weights ------------------------------------------------------

def phi_interval(a, b):
    """``Phi(a) - Phi(b)`` for ``a >= b`` with the tail evaluated on the small side."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(b > 0, ndtr(-b) - ndtr(-a), ndtr(a) - ndtr(b))


def cell_averaged_p_weight(grid: GridSpec, i_src: int, j_src: int, t_eval: float, x_eval: float) -> float:
    """Cell average of ``p(t_eval - s, x_eval - y)`` over source cell ``(i_src, j_src)``.

    The spatial integral is exact; time uses the midpoint of the part of the
    cell lying before ``t_eval``.
    """
    if not (0 <= i_src < grid.nt and 0 <= j_src < grid.nx):
        raise DomainError(f"source cell ({i_src}, {j_src}) outside the grid")
    t_lo = i_src * grid.dt
    if not (t_eval > t_lo):
        raise CausalityError(f"t_eval={t_eval} is not after the source cell start {t_lo}")
    t_hi = min(t_lo + grid.dt, t_eval)
    r = t_eval - 0.5 * (t_lo + t_hi)
    s = math.sqrt(2.0 * r)
    y_lo = grid.x_lo + j_src * grid.dx
    mass = float(phi_interval((x_eval - y_lo) / s, (x_eval - y_lo - grid.dx) / s))
    return mass * (t_hi - t_lo) / (grid.dt * grid.dx)


def line_weight_table(grid: GridSpec) -> np.ndarray:
    """Toeplitz weights ``K[m, d]`` for the line problem.

    ``K[m, d]`` is the cell-averaged kernel from source cell ``(k, l)`` to node
    ``(k + m, l + d)``; ``m = 0..nt`` (row 0 is zero) and ``d`` is stored at
    column ``d + nx - 1`` for ``d = -(nx-1)..nx``.  Agrees with
    :func:`cell_averaged_p_weight` entry by entry.
    """
    m = np.arange(1, grid.nt + 1)[:, None]
    d = np.arange(-(grid.nx - 1), grid.nx + 1)[None, :]
    s = np.sqrt(2.0 * (m - 0.5) * grid.dt)
    K = np.zeros((grid.nt + 1, 2 * grid.nx))
    K[1:] = phi_interval(d * grid.dx / s, (d - 1) * grid.dx / s) / grid.dx
    return K


def line_point_weights(grid: GridSpec, i_eval: int, j_eval: int) -> np.ndarray:
    """Weights ``w[k, l]`` with ``Z(t_i, x_j) = sum w * dW``; zero for ``k >= i``."""
    K = line_weight_table(grid)
    w = np.zeros(grid.shape)
    k = np.arange(i_eval)
    l = np.arange(grid.nx)
    w[:i_eval] = K[(i_eval - k)[:, None], (j_eval - l)[None, :] + grid.nx - 1]
    return w


@dataclass(frozen=True)
class NeumannModes:
    """Factorized cell-averaged Green's weights on ``[0, L]``.

    ``G[m, j, l] = sum_n coef_n * node_cos[n, j] * cell_cos[n, l] * exp(-lam_n (m - 1/2) dt)``
    is the average of ``g(t_{k+m} - s, x_j, y)`` over source cell ``(k, l)`` with
    the exact cosine average in ``y`` and the time midpoint.
    """

    grid: GridSpec
    lam: np.ndarray
    coef: np.ndarray
    node_cos: np.ndarray
    cell_cos: np.ndarray
    tail_bound: float

    @property
    def n_modes(self) -> int:
        return self.lam.size

    def weights(self, m: int) -> np.ndarray:
        """Dense ``(nx+1, nx)`` weight matrix for lag ``m >= 1``."""
        if m < 1:
            raise CausalityError("lag must be at least one cell")
        decay = self.coef * np.exp(-self.lam * (m - 0.5) * self.grid.dt)
        return (self.node_cos * decay[:, None]).T @ self.cell_cos


def neumann_modes(grid: GridSpec, tol: float = 1e-13) -> NeumannModes:
    if abs(grid.x_lo) > 0:
        raise DomainError("Neumann problems use x_lo = 0")
    L = grid.length
    n_top, bound = _spectral_terms(0.5 * grid.dt, L, tol)
    n = np.arange(n_top + 1)
    k = n * math.pi / L
    lam = k**2
    coef = np.where(n == 0, 1.0 / L, 2.0 / L)
    xs = grid.x_nodes()
    node_cos = np.cos(k[:, None] * xs[None, :])
    edges = grid.x_nodes()
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.sin(k[:, None] * edges[None, 1:]) - np.sin(k[:, None] * edges[None, :-1])
        cell_cos = np.where(n[:, None] == 0, 1.0, diff / (k[:, None] * grid.dx))
    return NeumannModes(grid, lam, coef, node_cos, cell_cos, bound)


def neumann_image_weights(grid: GridSpec, m: int, n_images: int = 6) -> np.ndarray:
    """Image-sum counterpart of :meth:`NeumannModes.weights` (cross-check)."""
    L = grid.length
    s = math.sqrt(2.0 * (m - 0.5) * grid.dt)
    xs = grid.x_nodes()[:, None]
    lo = grid.x_nodes()[None, :-1]
    hi = lo + grid.dx
    out = np.zeros((grid.nx + 1, grid.nx))
    for n in range(-n_images, n_images + 1):
        shift = 2 * n * L
        # y -> x - y - 2nL and y -> -(x + y - 2nL) both map cells to intervals
        out += phi_interval((xs - lo - shift) / s, (xs - hi - shift) / s)
        out += phi_interval((hi + xs - shift) / s, (lo + xs - shift) / s)
    return out / grid.dx
