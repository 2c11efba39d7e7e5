import math

import numpy as np
import pytest

from gheat.grid import DomainError, make_grid
from gheat.identities import neumann_test_function
from gheat.linear_she import FieldPath
from gheat.integrals import mc_mean
from gheat.noise import EnsembleSpec, SigmaBounds, default_dictionary
from gheat.nonlinear_she import (
    Coefficients,
    NeumannOperator,
    PicardDivergence,
    PicardTrace,
    anderson_coefficients,
    contraction_diagnostics,
    holder_moment_diagnostics,
    linear_test_coefficients,
    lipschitz_test_coefficients,
    mild_residual,
    picard_solve,
    weak_form_residual_neumann,
)

ZERO = SigmaBounds(0.0, 0.0)
zeros = lambda u: np.zeros_like(np.asarray(u, dtype=float))
ones = lambda u: np.ones_like(np.asarray(u, dtype=float))


def quiet_ensemble(g, M=2):
    return EnsembleSpec(g, tuple(default_dictionary(g, ZERO, ["const_hi"])), M, 0)


@pytest.mark.parametrize("c", [-2.0, 0.0, 1.7])
def test_constants_without_noise_or_drift(c):
    g = make_grid(0.5, 0.0, 1.0, 32, 32)
    coeffs = Coefficients(np.sin, zeros, 1.0, 0.0, lambda x: np.full_like(x, c))
    res, _ = picard_solve(coeffs, g, quiet_ensemble(g), n_max=5, tol=1e-30)
    assert np.max(np.abs(res.fields[0].values - c)) <= 1e-8


def test_decay_ode_oracle():
    g = make_grid(1.0, 0.0, 1.0, 200, 100)
    coeffs = Coefficients(np.sin, lambda u: -u, 1.0, 1.0, ones)
    res, _ = picard_solve(coeffs, g, quiet_ensemble(g, 1), n_max=60, tol=1e-28)
    assert np.max(np.abs(res.fields[0].values[0, -1] - math.exp(-1.0))) <= 1e-3
    # midpoint-in-time weights for the drift give a time-discretization error of order dt
    assert np.max(np.abs(res.fields[0].values[0, -1] - math.exp(-1.0))) > 1e-6


def test_anderson_without_noise_is_one():
    g = make_grid(0.5, 0.0, 1.0, 32, 16)
    res, _ = picard_solve(anderson_coefficients(), g, quiet_ensemble(g), n_max=5, tol=1e-30)
    assert np.max(np.abs(res.fields[0].values - 1.0)) <= 1e-13


def test_neumann_convolution_matches_dense_weights():
    g = make_grid(0.3, 0.0, 1.0, 12, 10)
    op = NeumannOperator(g)
    F = np.random.default_rng(4).standard_normal((g.nt, g.nx))
    out = op.convolve(F)
    for i in (1, 5, 12):
        direct = sum(op.dense_weights(i - k) @ F[k] for k in range(i))
        np.testing.assert_allclose(out[i], direct, rtol=1e-10, atol=1e-12)
    assert np.all(out[0] == 0)


def test_neumann_initial_preserves_constants():
    g = make_grid(0.5, 0.0, 2.0, 16, 20)
    op = NeumannOperator(g)
    np.testing.assert_allclose(op.initial(lambda x: np.full_like(x, 3.0)), 3.0, atol=1e-12)


@pytest.fixture(scope="module")
def lipschitz_run():
    g = make_grid(0.5, 0.0, 1.0, 32, 16)
    ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(0.5, 1.0), ["const_lo", "const_hi", "bang_bang"])),
                       20, 3)
    coeffs = lipschitz_test_coefficients()
    op = NeumannOperator(g)
    res, trace = picard_solve(coeffs, g, ens, n_max=30, tol=1e-14, operator=op)
    return g, coeffs, op, res, trace


def test_converged_output_has_small_mild_residual(lipschitz_run):
    g, coeffs, op, res, trace = lipschitz_run
    assert trace.status == "converged"
    for f, w in zip(res.fields, res.noises):
        assert np.max(mild_residual(f, coeffs, g, w, op)) <= 10 * math.sqrt(trace.tol)  # D_n is a mean square
    diag = contraction_diagnostics(trace)
    assert diag["eventually_decreasing"]
    assert diag["log_concave"]
    assert 0 < diag["geometric_ratio"] < 1


def test_perturbed_field_is_detected(lipschitz_run):
    g, coeffs, op, res, _ = lipschitz_run
    v = res.fields[0].values.copy()
    v[:, g.nt // 2, g.nx // 2] += 1.0
    bad = FieldPath(g, v)
    assert np.all(mild_residual(bad, coeffs, g, res.noises[0], op) >= 0.5)


def test_uniqueness_from_two_starts(lipschitz_run):
    g, coeffs, op, res, _ = lipschitz_run
    ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(0.5, 1.0), ["const_lo", "const_hi", "bang_bang"])),
                       20, 3)
    res2, _ = picard_solve(coeffs, g, ens, n_max=30, tol=1e-14, initial_offset=-2.0, operator=op)
    for a, b in zip(res.fields, res2.fields):
        assert np.max(np.abs(a.values - b.values)) <= 1e-5


def test_linear_problem_converges_and_longer_horizon_is_slower():
    out = []
    for T in (0.5, 1.0):
        g = make_grid(T, 0.0, 1.0, 32, 16)
        ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(0.5, 1.0), ["const_hi"])), 20, 0)
        _, trace = picard_solve(linear_test_coefficients(), g, ens, n_max=40, tol=1e-14)
        first = next(n for n, d in enumerate(trace.diffs, 1) if d < 1e-6)
        out.append((first, contraction_diagnostics(trace)["geometric_ratio"]))
    assert out[0][0] <= 15
    assert out[1][1] >= out[0][1]


def test_zero_coefficients_give_zero_first_difference():
    g = make_grid(0.5, 0.0, 1.0, 8, 8)
    coeffs = Coefficients(zeros, zeros, 0.0, 0.0, lambda x: np.cos(np.pi * x))
    ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(0.5, 1.0), ["const_hi"])), 3, 0)
    _, trace = picard_solve(coeffs, g, ens, n_max=5, tol=1e-30)
    assert trace.diffs[0] == 0.0
    assert contraction_diagnostics(trace)["n_iter"] == 1


def test_short_trace_is_rejected():
    with pytest.raises(DomainError):
        contraction_diagnostics(PicardTrace(diffs=[1.0, 0.1]))


def test_lipschitz_declarations():
    lipschitz_test_coefficients().check_lipschitz()
    with pytest.raises(DomainError):
        Coefficients(lambda u: 3 * u, zeros, 1.0, 0.0, ones).check_lipschitz()
    with pytest.raises(DomainError):
        Coefficients(zeros, np.sin, 0.0, 0.5, ones).check_lipschitz()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    g = make_grid(1.0, 0.0, 1.0, 8, 8)
    coeffs = Coefficients(zeros, lambda u: np.exp(np.abs(u)) * 1e300, 0.0, 1.0, ones)
    with pytest.raises(PicardDivergence):
        picard_solve(coeffs, g, quiet_ensemble(g), n_max=5)


def test_bad_arguments():
    g = make_grid(0.5, 0.0, 1.0, 8, 8)
    ens = quiet_ensemble(g)
    with pytest.raises(ValueError):
        picard_solve(anderson_coefficients(), g, ens, feedback_source="oracle")
    with pytest.raises(DomainError):
        picard_solve(anderson_coefficients(), g, ens, tol=0.0)
    with pytest.raises(DomainError):
        picard_solve(anderson_coefficients(), make_grid(0.5, 0.0, 1.0, 8, 4), ens)


def test_weak_form_neumann_trivial_cases():
    g = make_grid(0.5, 0.0, 1.0, 32, 32)
    phi = neumann_test_function(g.x_hi)
    coeffs = Coefficients(np.sin, zeros, 1.0, 0.0, lambda x: np.full_like(x, 2.0))
    res, _ = picard_solve(coeffs, g, quiet_ensemble(g), n_max=5, tol=1e-30)
    assert np.max(weak_form_residual_neumann(res.fields[0], phi, coeffs, res.noises[0])) <= 1e-10
    zero = type(phi)(*(lambda t, x: 0.0 * t * x for _ in range(5)), name="zero")
    assert np.all(weak_form_residual_neumann(res.fields[0], zero, coeffs, res.noises[0]) == 0)


def test_weak_form_neumann_refines_for_anderson():
    rms = []
    for n in (8, 16, 32):
        g = make_grid(0.25, 0.0, 1.0, 2 * n, n)
        ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(1.0, 1.0), ["const_hi"])), 40, 0)
        coeffs = anderson_coefficients()
        res, _ = picard_solve(coeffs, g, ens, n_max=40, tol=1e-20)
        phi = neumann_test_function(g.x_hi)
        r = weak_form_residual_neumann(res.fields[0], phi, coeffs, res.noises[0])
        rms.append(float(np.sqrt(np.mean(r**2))))
    assert rms[0] > rms[1] > rms[2]


@pytest.fixture(scope="module")
def additive_run():
    g = make_grid(1 / 16, 0.0, 1.0, 512, 128)
    coeffs = Coefficients(ones, zeros, 0.0, 0.0, zeros, None, "additive")
    ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(1.0, 1.0), ["const_hi"])), 500, 0)
    res, _ = picard_solve(coeffs, g, ens, n_max=3, tol=1e-20)
    return res


def test_holder_slopes(additive_run):
    space = holder_moment_diagnostics(additive_run, 1 / 16, 0.25, [0.0, 1 / 16, 1 / 8, 1 / 4], "space")
    time = holder_moment_diagnostics(additive_run, 1 / 32, 0.5, [0.0, 2**-8, 2**-7, 2**-6, 2**-5], "time")
    assert space["rows"][0].empirical == 0.0 and time["rows"][0].empirical == 0.0
    assert abs(space["slope"] - space["target"]) <= 0.15
    assert abs(time["slope"] - time["target"]) <= 0.15
    with pytest.raises(DomainError):
        holder_moment_diagnostics(additive_run, 1 / 16, 0.25, [-0.1], "space")


@pytest.mark.parametrize("alpha,space,time", [(None, 1.0, 0.5), (0.25, 0.5, 0.25), (1.0, 1.0, 0.5)])
def test_holder_targets(additive_run, alpha, space, time):
    assert holder_moment_diagnostics(additive_run, 0.0, 0.5, [1 / 8], "space", alpha)["target"] == space
    assert holder_moment_diagnostics(additive_run, 0.0, 0.5, [1 / 64], "time", alpha)["target"] == time


def test_anderson_top_constant_dominates():
    g = make_grid(0.25, 0.0, 1.0, 32, 16)
    ens = EnsembleSpec(g, tuple(default_dictionary(g, SigmaBounds(0.5, 1.0),
                                                   ["const_lo", "const_mid", "const_hi"])), 400, 0)
    res, _ = picard_solve(anderson_coefficients(), g, ens, n_max=40, tol=1e-20)
    m = [mc_mean(f.values[:, -1, :] ** 2) for f in res.fields]
    hi_mean, hi_se = m[-1]
    for mean, se in m[:-1]:
        assert np.all(hi_mean + 4 * np.hypot(hi_se, se) >= mean)
    assert np.mean(hi_mean) > np.mean(m[0][0])
