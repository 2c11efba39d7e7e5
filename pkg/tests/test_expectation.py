import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gheat.expectation import (
    GFunctionSpec,
    ScenarioEnsemble,
    envelope,
    envelope_scaling_check,
    solve_g_heat_pde,
)
from gheat.grid import DomainError, GridRect, make_grid
from gheat.noise import EnsembleSpec, SigmaBounds, default_dictionary, rect_value

BOUNDS = SigmaBounds(0.5, 1.0)


@pytest.fixture(scope="module")
def ens():
    g = make_grid(1.0, 0.0, 1.0, 4, 4)
    return EnsembleSpec(g, tuple(default_dictionary(g, BOUNDS)), 4000, 1)


@pytest.fixture(scope="module")
def rect(ens):
    return GridRect.full(ens.grid)


def test_constant_functional(ens):
    env = envelope(lambda w: np.full(w.batch_shape, 2.5), ens)
    assert env.upper == env.lower == 2.5
    assert np.all(env.stderrs == 0)


def test_linear_functional_is_centered(ens, rect):
    env = envelope(lambda w: rect_value(w, rect), ens)
    for m, se in zip(env.means, env.stderrs):
        assert abs(m) <= 4 * se


def test_square_bracketed_by_constant_scenarios(ens, rect):
    env = envelope(lambda w: rect_value(w, rect) ** 2, ens)
    assert env.scenario_ids[env.upper_index] in ("const_hi", "bang_bang", "feedback")
    assert abs(env.upper - 1.0) <= 4 * env.upper_stderr
    assert abs(env.lower - 0.25) <= 4 * env.lower_stderr
    d = env.to_dict("sq", oracle=1.0)
    assert d["oracle"] == 1.0 and len(d["scenarios"]) == 7


@pytest.mark.parametrize("lam", [0.0, 2.0, 0.5])
def test_scaling_is_exact_for_powers_of_two(ens, rect, lam):
    rep = envelope_scaling_check(lambda w: rect_value(w, rect) ** 2, lam, ens)
    assert rep["exact"] and rep["homogeneous"]
    assert rep["upper_scaled"] == lam * rep["upper"]


def test_scaling_generic_lambda_and_subadditivity(ens, rect):
    rep = envelope_scaling_check(lambda w: np.cos(rect_value(w, rect)), 0.3, ens,
                                 other=lambda w: -np.abs(rect_value(w, rect)))
    assert rep["homogeneous"]
    assert rep["subadditive"]
    assert rep["upper_sum"] <= rep["sum_of_uppers"] + 1e-12


def test_negative_lambda_rejected(ens, rect):
    with pytest.raises(DomainError):
        envelope_scaling_check(lambda w: rect_value(w, rect), -1.0, ens)


def test_too_few_realizations():
    g = make_grid(1.0, 0.0, 1.0, 2, 2)
    small = EnsembleSpec(g, tuple(default_dictionary(g, BOUNDS)), 99, 0)
    with pytest.raises(DomainError):
        envelope(lambda w: np.zeros(w.batch_shape), small)


def test_threads_do_not_change_results(ens, rect):
    f = lambda w: rect_value(w, rect) ** 2
    a, b = envelope(f, ens, threads=1), envelope(f, ens, threads=3)
    np.testing.assert_array_equal(a.means, b.means)


def test_empty_dictionary_rejected():
    with pytest.raises(DomainError):
        ScenarioEnsemble([], np.array([]), np.array([]), 0)


def test_g_function():
    G = GFunctionSpec(BOUNDS).G
    assert G(2.0) == pytest.approx(1.0)
    assert G(-2.0) == pytest.approx(-0.25)
    assert G(0.0) == 0.0


@pytest.mark.parametrize(
    "phi,expected",
    [
        (lambda x: x**2, 1.0),
        (lambda x: -(x**2), -0.25),
        (lambda x: 3.0 + 0.0 * x, 3.0),
        (lambda x: 2.0 * x, 0.0),
    ],
)
def test_pde_closed_forms(phi, expected):
    assert solve_g_heat_pde(phi, 1.0, BOUNDS, nx=401) == pytest.approx(expected, abs=1e-10)


def test_pde_classical_limit():
    unit = SigmaBounds(1.0, 1.0)
    assert solve_g_heat_pde(np.abs, 1.0, unit) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-4)
    assert solve_g_heat_pde(np.cos, 1.0, unit) == pytest.approx(math.exp(-0.5), abs=1e-4)


def test_pde_convex_payoff_uses_upper_volatility():
    # convex payoff: the G-heat solution is the classical one at sigma_hi
    v = solve_g_heat_pde(np.abs, 1.0, BOUNDS)
    assert v == pytest.approx(math.sqrt(2 / math.pi), abs=1e-4)


def test_pde_errors():
    with pytest.raises(DomainError):
        solve_g_heat_pde(np.cos, 1.0, BOUNDS, nx=401, dt=0.5)
    with pytest.raises(DomainError):
        solve_g_heat_pde(lambda x: np.exp(x * x / 4), 1.0, BOUNDS)
    with pytest.raises(DomainError):
        solve_g_heat_pde(np.cos, 1.0, BOUNDS, half_width=2.0)
    with pytest.raises(DomainError):
        solve_g_heat_pde(np.cos, 0.0, BOUNDS)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(0.2, 3), st.floats(-1, 1), st.floats(0, 2), st.floats(-2, 2))
def test_pde_monotone(a, b, c, d, e):
    phi = lambda x: a * np.cos(b * x) + c * np.abs(x)
    psi = lambda x: phi(x) + d * np.exp(-((x - e) ** 2))
    lo = solve_g_heat_pde(phi, 0.5, BOUNDS, nx=201)
    hi = solve_g_heat_pde(psi, 0.5, BOUNDS, nx=201)
    assert lo <= hi + 1e-12


def test_envelope_monotone(ens, rect):
    f = lambda w: np.cos(rect_value(w, rect))
    g = lambda w: np.cos(rect_value(w, rect)) + rect_value(w, rect) ** 2
    a, b = envelope(f, ens), envelope(g, ens)
    assert np.all(a.means <= b.means)
    assert a.upper <= b.upper and a.lower <= b.lower
