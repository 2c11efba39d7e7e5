"""Upper and lower expectations over a scenario dictionary, and a G-heat PDE oracle.

The envelope takes the max (min) of per-scenario Monte Carlo means.  Each
scenario is one admissible law, so the upper envelope approximates the
sublinear expectation from below and the lower envelope approximates
``-E[-X]`` from above.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import DomainError
from .integrals import mc_mean
from .noise import EnsembleSpec, NoiseRealization, SigmaBounds

Functional = Callable[[NoiseRealization], np.ndarray]
MIN_REALIZATIONS = 100


@dataclass(frozen=True)
class GFunctionSpec:
    bounds: SigmaBounds

    def G(self, a):
        return self.bounds.G(a)


@dataclass
class ScenarioEnsemble:
    scenario_ids: list[str]
    means: np.ndarray
    stderrs: np.ndarray
    M: int
    values: list[np.ndarray] | None = None

    def __post_init__(self):
        if len(self.scenario_ids) == 0:
            raise DomainError("empty dictionary")

    @property
    def upper(self) -> float:
        return float(np.max(self.means))

    @property
    def lower(self) -> float:
        return float(np.min(self.means))

    @property
    def upper_index(self) -> int:
        return int(np.argmax(self.means))

    @property
    def lower_index(self) -> int:
        return int(np.argmin(self.means))

    @property
    def upper_stderr(self) -> float:
        return float(self.stderrs[self.upper_index])

    @property
    def lower_stderr(self) -> float:
        return float(self.stderrs[self.lower_index])

    def to_dict(self, functional_id: str = "functional", oracle: float | None = None) -> dict:
        out = {
            "functional_id": functional_id,
            "scenarios": [{"id": s, "mean": float(m), "stderr": float(e), "M": self.M}
                          for s, m, e in zip(self.scenario_ids, self.means, self.stderrs)],
            "upper": self.upper, "upper_stderr": self.upper_stderr, "upper_scenario": self.scenario_ids[self.upper_index],
            "lower": self.lower, "lower_stderr": self.lower_stderr, "lower_scenario": self.scenario_ids[self.lower_index],
        }
        if oracle is not None:
            out["oracle"] = oracle
        return out


def _scenario_values(functional: Functional, spec: EnsembleSpec, s: int) -> np.ndarray:
    parts = [np.broadcast_to(np.asarray(functional(w), dtype=float), w.batch_shape) for w in spec.batches(s)]
    return np.concatenate(parts)


def scenario_values(functional: Functional, spec: EnsembleSpec, threads: int = 1) -> list[np.ndarray]:
    """Per-scenario functional values in realization order; threads split scenarios only."""
    idx = range(len(spec.controls))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda s: _scenario_values(functional, spec, s), idx))
    return [_scenario_values(functional, spec, s) for s in idx]


def summarize(ids: Sequence[str], values: Sequence[np.ndarray], keep: bool = False) -> ScenarioEnsemble:
    stats = [mc_mean(v) for v in values]
    return ScenarioEnsemble(list(ids), np.array([m for m, _ in stats]), np.array([e for _, e in stats]),
                            int(values[0].shape[0]), list(values) if keep else None)


def envelope(functional: Functional, spec: EnsembleSpec, threads: int = 1, keep_values: bool = False) -> ScenarioEnsemble:
    """Scenario envelope of ``functional`` (vectorized over a realization batch)."""
    if spec.M < MIN_REALIZATIONS:
        raise DomainError(f"need at least {MIN_REALIZATIONS} realizations per scenario")
    vals = scenario_values(functional, spec, threads)
    return summarize([c.control_id for c in spec.controls], vals, keep_values)


def envelope_scaling_check(functional: Functional, lam: float, spec: EnsembleSpec,
                           other: Functional | None = None, rtol: float = 1e-12) -> dict:
    """Positive homogeneity (and optionally sub-additivity) of the estimator.

    The sample mean is linear, so per-scenario means scale with ``lam`` up to
    rounding; for powers of two the scaling is exact in floating point.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    base = envelope(functional, spec, keep_values=True)
    scaled = summarize(base.scenario_ids, [lam * v for v in base.values])
    diff = float(np.max(np.abs(scaled.means - lam * base.means)))
    scale = max(1.0, float(np.max(np.abs(lam * base.means))))
    report = {
        "lambda": lam,
        "upper": base.upper,
        "upper_scaled": scaled.upper,
        "max_mean_diff": diff,
        "exact": bool(diff == 0.0),
        "homogeneous": bool(diff <= rtol * scale and abs(scaled.upper - lam * base.upper) <= rtol * scale),
    }
    if other is not None:
        o = envelope(other, spec, keep_values=True)
        joint = summarize(base.scenario_ids, [a + b for a, b in zip(base.values, o.values)])
        slack = rtol * max(1.0, abs(base.upper) + abs(o.upper))
        report.update({"upper_sum": joint.upper, "sum_of_uppers": base.upper + o.upper,
                       "subadditive": bool(joint.upper <= base.upper + o.upper + slack)})
    return report


# G-heat equation oracle -----------------------------------------------------

def solve_g_heat_pde(phi: Callable[[np.ndarray], np.ndarray], t_end: float, bounds: SigmaBounds,
                     half_width: float | None = None, nx: int = 801, dt: float | None = None,
                     x_eval: float = 0.0) -> float:
    """``u(t_end, x_eval)`` for ``u_t = G(u_xx)``, ``u(0, .) = phi``, explicit monotone scheme.

    ``u_xx`` at the two boundary nodes is copied from their neighbours.  The
    result approximates the sublinear expectation of ``phi(x_eval + X)`` for a
    G-normal ``X`` with variance interval ``[sigma_lo^2 t, sigma_hi^2 t]``.
    """
    if not (t_end > 0):
        raise DomainError("t_end must be positive")
    if bounds.sigma_hi == 0:
        return float(phi(np.array([x_eval]))[0])
    need = 8.0 * bounds.sigma_hi * math.sqrt(t_end)
    hw = need if half_width is None else half_width
    if hw < need * (1 - 1e-12):
        raise DomainError(f"half width {hw} below 8 sigma_hi sqrt(t) = {need}")
    if nx < 3:
        raise DomainError("need at least three nodes")
    x = x_eval + np.linspace(-hw, hw, nx)
    dx = x[1] - x[0]
    cfl = dx * dx / bounds.sigma_hi**2
    if dt is None:
        steps = math.ceil(t_end / cfl * (1 + 1e-9))
        dt = t_end / steps
    else:
        steps = round(t_end / dt)
        if abs(steps * dt - t_end) > 1e-12 * t_end:
            raise DomainError("dt must divide t_end")
    if dt > cfl / (1 + 1e-9):
        raise DomainError(f"CFL violated: dt={dt} > dx^2/sigma_hi^2={cfl}")
    u = np.asarray(phi(x), dtype=float).copy()
    if not np.all(np.isfinite(u)):
        raise DomainError("payoff is not finite on the grid")
    for _ in range(steps):
        d2 = np.empty_like(u)
        d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
        d2[0], d2[-1] = d2[1], d2[-2]
        u = u + dt * bounds.G(d2)
    mid = int(np.argmin(np.abs(x - x_eval)))
    value = float(u[mid])
    edge = max(abs(float(phi(np.array([x[0]]))[0])), abs(float(phi(np.array([x[-1]]))[0])))
    leak = edge * math.exp(-hw * hw / (2.0 * bounds.sigma_hi**2 * t_end))
    if leak > 1e-8 * max(1.0, abs(value)):
        raise DomainError(f"payoff growth at the truncation boundary contributes {leak:.3g}")
    return value
