import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gheat.grid import DomainError, make_grid
from gheat.kernels import (
    CausalityError,
    cell_averaged_p_weight,
    gaussian_product_integral,
    green_neumann,
    heat_kernel,
    line_point_weights,
    line_weight_table,
    neumann_crossover,
    neumann_domination_constant,
    neumann_image_weights,
    neumann_modes,
    p_increment_t_sq_integral,
    p_increment_t_sq_integral_quad,
    p_increment_x_sq_integral,
    p_tail_sq_integral,
    p_tail_sq_integral_quad,
)


def test_heat_kernel_values():
    assert heat_kernel(1.0, 0.0) == pytest.approx(0.2820947918, abs=1e-10)
    assert heat_kernel(0.25, 1.0) == pytest.approx(math.exp(-1) / math.sqrt(math.pi), rel=1e-12)
    assert heat_kernel(0.25, 1.0) == pytest.approx(0.2075537, abs=1e-7)


@given(t=st.floats(1e-4, 50), x=st.floats(-20, 20))
def test_heat_kernel_even_and_positive(t, x):
    assert heat_kernel(t, x) == heat_kernel(t, -x)
    assert heat_kernel(t, x) >= 0


@pytest.mark.parametrize("t", [0.01, 0.3, 4.0])
def test_heat_kernel_unit_mass(t):
    m, _ = integrate.quad(lambda x: heat_kernel(t, x), -np.inf, np.inf, epsabs=1e-13)
    assert m == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_heat_kernel_rejects_nonpositive_time(t):
    with pytest.raises(DomainError):
        heat_kernel(t, 0.0)


@pytest.mark.parametrize("a, b, c", [(0.1, 0.2, 0.3), (1.0, 0.05, -0.7), (0.02, 2.0, 1.5)])
def test_gaussian_product_reduction_against_brute_force(a, b, c):
    brute, _ = integrate.quad(lambda u: heat_kernel(a, u) * heat_kernel(b, u + c), -np.inf, np.inf,
                              epsabs=1e-13, limit=200)
    assert gaussian_product_integral(a, b, c) == pytest.approx(brute, rel=1e-9)
    assert gaussian_product_integral(a, b, c) == pytest.approx(heat_kernel(a + b, c), rel=1e-14)


def test_green_equilibrium_and_symmetry():
    assert green_neumann(10.0, 0.3, 0.7, 1.0, 1e-10).value == pytest.approx(1.0, abs=1e-8)
    xs = np.linspace(0, 1, 9)
    X, Y = np.meshgrid(xs, xs)
    for t in (0.01, 0.2, 2.0):
        g = green_neumann(t, X, Y, 1.0).value
        np.testing.assert_array_equal(g, g.T)
        assert np.all(g >= 0)


def test_green_mass_example():
    m, _ = integrate.quad(lambda y: green_neumann(0.05, 0.25, y, 1.0).value, 0, 1, points=[0.25], epsabs=1e-13)
    assert m == pytest.approx(1.0, abs=1e-8)


def test_green_representation_agreement_21x21():
    xs = np.linspace(0, 1, 21)
    X, Y = np.meshgrid(xs, xs)
    for t in np.linspace(0.05, 1.0, 12):
        a = green_neumann(t, X, Y, 1.0, representation="image_sum").value
        b = green_neumann(t, X, Y, 1.0, representation="spectral").value
        assert np.max(np.abs(a - b)) <= 1e-10


def test_green_semigroup_on_512_point_grid():
    z = np.linspace(0, 1, 513)
    xs = np.linspace(0, 1, 21)
    for t in (0.05, 0.1):
        for s in (0.05, 0.1):
            A = green_neumann(t, xs[:, None], z[None, :], 1.0).value
            B = green_neumann(s, z[:, None], xs[None, :], 1.0).value
            w = np.full(z.size, z[1] - z[0])
            w[[0, -1]] *= 0.5
            # trapezoid is spectrally accurate here: the integrand is smooth and even across both walls
            lhs = (A * w) @ B
            rhs = green_neumann(t + s, xs[:, None], xs[None, :], 1.0).value
            assert np.max(np.abs(lhs - rhs)) <= 1e-7


def test_green_picks_representation_by_crossover():
    L = 2.0
    tc = neumann_crossover(L)
    assert green_neumann(0.9 * tc, 0.1, 0.2, L).representation_used == "image_sum"
    assert green_neumann(1.1 * tc, 0.1, 0.2, L).representation_used == "spectral"


@pytest.mark.parametrize("rep", ["image_sum", "spectral"])
def test_green_truncation_monotone_within_bound(rep):
    t = 0.3
    base = green_neumann(t, 0.2, 0.9, 1.0, representation=rep)
    n = (base.truncation_terms - 1) // 2 if rep == "image_sum" else base.truncation_terms - 1
    for extra in (1, 3, 10):
        more = green_neumann(t, 0.2, 0.9, 1.0, representation=rep, terms=n + extra)
        # rounding of the longer sum is allowed on top of the analytic tail
        assert abs(more.value - base.value) <= base.tail_bound + 4e-16 * abs(base.value)


@pytest.mark.parametrize("kw", [dict(t=0.0, x=0.1, y=0.1), dict(t=0.1, x=1.5, y=0.1), dict(t=0.1, x=0.1, y=-0.2)])
def test_green_domain_errors(kw):
    with pytest.raises(DomainError):
        green_neumann(kw["t"], kw["x"], kw["y"], 1.0)
    with pytest.raises(DomainError):
        green_neumann(0.1, 0.1, 0.1, 1.0, tol=0.0)


def test_domination_constant_is_finite():
    c = neumann_domination_constant(1.0, 1.0)
    assert 1.0 <= c < np.inf


@pytest.mark.parametrize("delta", [1e-3, 1e-2, 0.1, 1.0])
def test_increment_identities_quadrature_vs_closed(delta):
    assert p_increment_t_sq_integral_quad(delta) == pytest.approx(p_increment_t_sq_integral(delta), rel=1e-8)
    assert p_tail_sq_integral_quad(delta) == pytest.approx(p_tail_sq_integral(delta), rel=1e-8)


def test_increment_identity_values():
    assert p_increment_t_sq_integral(0.0) == 0.0
    assert p_increment_t_sq_integral(1.0) == pytest.approx(0.16525, abs=1e-5)
    assert p_increment_t_sq_integral(4.0) == 2 * p_increment_t_sq_integral(1.0)
    assert p_tail_sq_integral(0.0) == 0.0
    assert p_tail_sq_integral(1.0) == pytest.approx(0.3989423, abs=1e-6)
    assert p_tail_sq_integral(0.01) == pytest.approx(0.03989423, abs=1e-7)
    for fn in (p_increment_t_sq_integral, p_tail_sq_integral):
        with pytest.raises(DomainError):
            fn(-0.1)


def test_t_increment_brute_force_oracle():
    # independent check: integrate the squared kernel difference over (s, y) directly
    delta = 0.2

    def inner(u):
        f = lambda y: (heat_kernel(u + delta, y) - heat_kernel(u, y)) ** 2
        return integrate.quad(f, -np.inf, np.inf, epsabs=1e-14)[0]

    v1, _ = integrate.quad(lambda v: 2 * v * inner(v * v), 0, 1, epsabs=1e-12, limit=200)
    v2, _ = integrate.quad(inner, 1, np.inf, epsabs=1e-12, limit=200)
    assert v1 + v2 == pytest.approx(p_increment_t_sq_integral(delta), rel=1e-6)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("delta", [0.01, 0.1])
def test_x_increment_bound(t, delta):
    v = p_increment_x_sq_integral(t, delta)
    assert 0 <= v <= delta / 2 + 1e-10
    if t == 10.0:
        assert v >= 0.9 * delta / 2


def test_x_increment_examples():
    assert p_increment_x_sq_integral(1.0, 0.0) == 0.0
    assert 0.045 <= p_increment_x_sq_integral(10.0, 0.1) <= 0.05
    with pytest.raises(DomainError):
        p_increment_x_sq_integral(0.0, 0.1)


@given(t=st.floats(0.01, 20), delta=st.floats(0.0, 2.0))
@settings(max_examples=40, deadline=None)
def test_x_increment_never_exceeds_half_delta(t, delta):
    assert p_increment_x_sq_integral(t, delta) <= delta / 2 + 1e-10


def test_cell_weight_examples():
    g = make_grid(1.0, -6.0, 6.0, 20, 240)
    assert cell_averaged_p_weight(g, 0, 0, 0.5, 4.0) < 1e-12
    with pytest.raises(CausalityError):
        cell_averaged_p_weight(g, 10, 0, 0.5, 0.0)
    # abutting cell: finite thanks to the exact spatial integral
    w = cell_averaged_p_weight(g, 9, 120, 0.5, g.x_nodes()[120])
    assert np.isfinite(w) and w > 0


@pytest.mark.parametrize("i_src", [0, 5, 8])
def test_cell_weight_mass(i_src):
    g = make_grid(1.0, -6.0, 6.0, 20, 240)
    t_eval = 0.5
    ws = [cell_averaged_p_weight(g, i_src, j, t_eval, 0.0) for j in range(g.nx)]
    assert min(ws) >= 0
    assert sum(ws) * g.dx == pytest.approx(1.0, abs=1e-8)


def test_line_table_matches_pointwise_weights():
    g = make_grid(0.2, -1.5, 1.5, 6, 12)
    K = line_weight_table(g)
    assert np.all(K[0] == 0)
    i, j = 5, 7
    w = line_point_weights(g, i, j)
    for k in range(i):
        for l in range(g.nx):
            ref = cell_averaged_p_weight(g, k, l, g.t_nodes()[i], g.x_nodes()[j])
            assert w[k, l] == pytest.approx(ref, rel=1e-12, abs=1e-300)
    assert np.all(w[i:] == 0)


def test_neumann_modes_match_images_and_conserve_mass():
    g = make_grid(0.5, 0.0, 1.0, 16, 20)
    modes = neumann_modes(g)
    for m in (1, 2, 9):
        a = modes.weights(m)
        b = neumann_image_weights(g, m)
        assert np.max(np.abs(a - b)) <= 1e-12
        # the oldest row is a full step past its cell; row sums are exact
        if m >= 2:
            np.testing.assert_allclose(a.sum(axis=1) * g.dx, 1.0, atol=1e-8)


def test_neumann_modes_need_zero_origin():
    with pytest.raises(DomainError):
        neumann_modes(make_grid(1.0, -1.0, 1.0, 4, 4))
