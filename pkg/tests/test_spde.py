"""Semigroups, stochastic convolution, Picard iteration, weak residuals."""

import numpy as np
import pytest

from mvmlab.hilbert import sphere_sequence
from mvmlab.integrate import GridIntegrand
from mvmlab.noise import (DiscreteLevy, DiscreteLevyAtom, default_grid,
                          intensity_family, simulate)
from mvmlab.quadvar import bilinear_field, qm_density, qv_supremum
from mvmlab.spde import (CoefficientSpec, DiagonalSemigroup,
                         additive_coefficients, coefficient_spot_check,
                         contraction_factors, convolution_second_moment,
                         default_beta, heat_example_setup, heat_semigroup,
                         linear_drift_coefficients, nemytskii_coefficients,
                         picard_solve, stochastic_convolution, v_beta_distance,
                         weak_residual)


@pytest.fixture(scope="module")
def heat():
    rng = np.random.default_rng(400)
    sigma = rng.standard_normal((2, 4)) / np.arange(1, 5)
    return heat_example_setup(sigma, np.array([1.0, 0.5]))


def qm_qv_for(spec, grid, dim):
    family = intensity_family(spec, grid)
    est = qv_supremum(family, sphere_sequence(dim, max(2, 128 * dim)))
    return qm_density(bilinear_field(family), est), est


# ---------------------------------------------------------------------------
# semigroup


def test_heat_semigroup_rates_and_actions():
    sg = heat_semigroup(5)
    np.testing.assert_allclose(sg.rates,
                               (np.arange(1, 6) * np.pi) ** 2, rtol=1e-15)
    v = np.arange(5.0)
    np.testing.assert_allclose(sg.apply(0.3, v), v * np.exp(-sg.rates * 0.3))
    np.testing.assert_array_equal(sg.apply(0.0, v), v)
    with pytest.raises(ValueError, match="nonempty"):
        DiagonalSemigroup(np.empty(0))
    with pytest.raises(ValueError, match="negative decay"):
        DiagonalSemigroup(np.array([1.0, -2.0]))


def test_kernel_table_matches_loop_oracle():
    sg = DiagonalSemigroup(np.array([0.5, 3.0]))
    times = np.array([0.0, 0.2, 0.5, 0.6, 1.0])
    K = sg.kernel(times)
    assert K.shape == (5, 4, 2)
    for m in range(5):
        for i in range(4):
            for k in range(2):
                expect = (np.exp(-sg.rates[k] * (times[m] - times[i]))
                          if times[m] > times[i] else 0.0)
                assert K[m, i, k] == pytest.approx(expect, rel=1e-15)


# ---------------------------------------------------------------------------
# stochastic convolution


def test_convolution_matches_loop_oracle(heat):
    grid = default_grid(heat.noise_spec, 1.0, 6)
    ens = simulate(heat.noise_spec, grid, 8, 41)
    phi = GridIntegrand.constant(grid, heat.f_matrix)
    conv = stochastic_convolution(heat.semigroup, phi, ens)
    # [DERIVED] oracle: direct triple loop over paths, output times, cells.
    times = np.asarray(grid.time_points)
    for p in range(8):
        for m in range(len(times)):
            acc = np.zeros(heat.semigroup.dim)
            for i in range(grid.n_cells):
                if times[i] >= times[m]:
                    break
                inc = ens.increments[p, i, 0]
                acc += heat.semigroup.decay(times[m] - times[i]) \
                    * (heat.f_matrix @ inc)
            np.testing.assert_allclose(conv.values[p, m], acc, atol=1e-12)


def test_convolution_second_moment_empirical(heat):
    grid = default_grid(heat.noise_spec, 1.0, 16)
    qm, qv = qm_qv_for(heat.noise_spec, grid, 2)
    phi = GridIntegrand.constant(grid, heat.f_matrix)
    target = convolution_second_moment(heat.semigroup, phi, qm, qv)
    ens = simulate(heat.noise_spec, grid, 6000, 43)
    conv = stochastic_convolution(heat.semigroup, phi, ens)
    mean, se = conv.second_moment()
    z = np.abs(mean[1:] - target[1:]) / se[1:]
    assert z.max() < 3.5
    assert target[0] == 0.0


def test_convolution_validation(heat):
    grid = default_grid(heat.noise_spec, 1.0, 4)
    ens = simulate(heat.noise_spec, grid, 4, 47)
    with pytest.raises(ValueError, match="semigroup acts on"):
        stochastic_convolution(DiagonalSemigroup(np.ones(3)),
                               GridIntegrand.constant(grid, heat.f_matrix),
                               ens)
    per_path = GridIntegrand(grid, np.ones((4, 4, 1, 4, 2)))
    qm, qv = qm_qv_for(heat.noise_spec, grid, 2)
    with pytest.raises(ValueError, match="deterministic"):
        convolution_second_moment(heat.semigroup, per_path, qm, qv)


# ---------------------------------------------------------------------------
# contraction bookkeeping


def test_v_beta_distance_matches_loop_oracle():
    rng = np.random.default_rng(16)
    times = np.linspace(0.0, 1.0, 9)
    a = rng.standard_normal((5, 9, 3))
    b = rng.standard_normal((5, 9, 3))
    beta = 2.5
    total = 0.0
    for p in range(5):
        for i in range(8):
            gap = ((a[p, i] - b[p, i]) ** 2).sum()
            total += np.exp(-beta * times[i]) * gap * (times[i + 1] - times[i])
    expect = np.sqrt(total / 5)
    assert v_beta_distance(a, b, times, beta) == pytest.approx(expect,
                                                               rel=1e-12)


def test_default_beta_pins_factors_at_an_eighth():
    sg = heat_semigroup(4)
    coeffs = linear_drift_coefficients(1.7)
    beta = default_beta(sg, coeffs, 1.0)
    fb, ff = contraction_factors(sg, coeffs, 1.0, beta)
    assert fb == pytest.approx(0.125, abs=1e-15)
    assert ff == 0.0
    # No constants at all: the weight defaults to one.
    assert default_beta(sg, CoefficientSpec(), 1.0) == 1.0


def test_coefficient_spec_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        CoefficientSpec(drift_bound=-1.0)
    with pytest.raises(ValueError, match="either a noise map"):
        CoefficientSpec(noise=lambda t, x: x, noise_matrices=np.ones((1, 2, 2)))
    with pytest.raises(ValueError, match="atoms, G, H"):
        CoefficientSpec(noise_matrices=np.ones((2, 2)))


# ---------------------------------------------------------------------------
# Picard iteration


def test_additive_fixed_point_is_semigroup_plus_convolution(heat):
    grid = default_grid(heat.noise_spec, 1.0, 12)
    ens = simulate(heat.noise_spec, grid, 64, 53)
    x0 = np.linspace(1.0, 0.25, heat.semigroup.dim)
    sol = picard_solve(heat.semigroup, heat.coefficients, ens, x0)
    assert sol.converged and sol.iterations <= 2
    times = np.asarray(grid.time_points)
    sem = np.exp(-np.outer(times, heat.semigroup.rates)) * x0
    phi = GridIntegrand(grid, np.broadcast_to(
        heat.f_matrix, (grid.n_cells, 1) + heat.f_matrix.shape).copy())
    conv = stochastic_convolution(heat.semigroup, phi, ens)
    np.testing.assert_allclose(sol.values, sem[None] + conv.values,
                               atol=1e-12)


def test_zero_noise_linear_drift_solves_discrete_mild_equation():
    # [DERIVED] oracle: with no noise the mild equation on the grid is a
    # strict lower-triangular linear system per mode; solve it directly.
    sg = DiagonalSemigroup(np.array([1.0, 4.0, 9.0]))
    gain = 1.0
    coeffs = linear_drift_coefficients(gain)
    silent = DiscreteLevy((DiscreteLevyAtom("z",
                                            brownian_cov=np.zeros((3, 3))),))
    grid = default_grid(silent, 1.0, 16)
    ens = simulate(silent, grid, 2, 59)
    assert np.all(ens.increments == 0.0)
    x0 = np.array([2.0, -1.0, 0.5])
    sol = picard_solve(sg, coeffs, ens, x0, tol=1e-12, max_iter=60)
    assert sol.converged
    times = np.asarray(grid.time_points)
    K = sg.kernel(times)
    dt = np.diff(times)
    for k in range(3):
        a = np.eye(len(times))
        a[:, :-1] -= gain * K[:, :, k] * dt[None, :]
        rhs = np.exp(-sg.rates[k] * times) * x0[k]
        expect = np.linalg.solve(a, rhs)
        np.testing.assert_allclose(sol.values[0, :, k], expect, atol=1e-9)
    np.testing.assert_allclose(sol.values[0], sol.values[1], atol=1e-15)


def test_picard_contraction_diagnostics(heat):
    grid = default_grid(heat.noise_spec, 1.0, 16)
    ens = simulate(heat.noise_spec, grid, 200, 61)
    coeffs = linear_drift_coefficients(1.0, heat.f_matrix[None])
    x0 = np.full(heat.semigroup.dim, 0.5)
    sol = picard_solve(heat.semigroup, coeffs, ens, x0, tol=1e-9)
    assert sol.converged and sol.iterations <= 12
    fb, ff = contraction_factors(heat.semigroup, coeffs, 1.0, sol.beta)
    limit = np.sqrt(2 * (fb + ff))
    assert all(r <= limit + 0.05 for r in sol.ratios())
    assert sol.picard_trace[-1] <= 1e-9
    # Uniqueness: a different starting guess lands on the same fixed point.
    again = picard_solve(heat.semigroup, coeffs, ens, x0, tol=1e-9,
                         initial="zero")
    assert v_beta_distance(sol.values, again.values, sol.times,
                           sol.beta) <= 10 * 1e-9
    with pytest.raises(ValueError, match="unknown initial"):
        picard_solve(heat.semigroup, coeffs, ens, x0, initial="warm")


def test_picard_rejects_weak_contraction(heat):
    grid = default_grid(heat.noise_spec, 1.0, 8)
    ens = simulate(heat.noise_spec, grid, 8, 67)
    coeffs = linear_drift_coefficients(2.0)
    x0 = np.zeros(heat.semigroup.dim)
    with pytest.raises(ValueError, match=">= 1/4"):
        picard_solve(heat.semigroup, coeffs, ens, x0, beta=4.0)
    with pytest.raises(ValueError, match="positive"):
        picard_solve(heat.semigroup, coeffs, ens, x0, beta=-1.0)
    with pytest.raises(ValueError, match="mode count"):
        picard_solve(heat.semigroup, coeffs, ens, np.zeros(3))


# ---------------------------------------------------------------------------
# weak residual


def test_weak_residual_zero_noise_closed_form():
    # [DERIVED] closed form for the pure-decay case: the residual is exactly
    # the left-endpoint quadrature error of the decay integral,
    # x0 (e^{-l t_m} - 1 + l dt (1 - e^{-l t_m}) / (1 - e^{-l dt})).
    sg = DiagonalSemigroup(np.array([2.0, 5.0]))
    silent = DiscreteLevy((DiscreteLevyAtom("z",
                                            brownian_cov=np.zeros((2, 2))),))
    x0 = np.array([1.0, -2.0])

    def max_residual(steps):
        grid = default_grid(silent, 1.0, steps)
        ens = simulate(silent, grid, 2, 71)
        sol = picard_solve(sg, CoefficientSpec(), ens, x0)
        report = weak_residual(sol, sg, CoefficientSpec(), ens, 0)
        times = np.asarray(grid.time_points)
        lam, dt = sg.rates[0], 1.0 / steps
        decay = np.exp(-lam * times)
        expect = x0[0] * (decay - 1.0
                          + lam * dt * (1.0 - decay) / (1.0 - np.exp(-lam * dt)))
        np.testing.assert_allclose(report.residuals[0], expect, atol=1e-12)
        return float(report.max_abs().max())

    coarse, fine = max_residual(16), max_residual(32)
    assert 1.8 <= coarse / fine <= 2.2  # first order in the step size


def test_weak_residual_mode_selection(heat):
    grid = default_grid(heat.noise_spec, 1.0, 8)
    ens = simulate(heat.noise_spec, grid, 16, 73)
    sol = picard_solve(heat.semigroup, heat.coefficients, ens,
                       np.zeros(heat.semigroup.dim))
    by_index = weak_residual(sol, heat.semigroup, heat.coefficients, ens, 1)
    vec = np.zeros(heat.semigroup.dim)
    vec[1] = 3.0  # scale does not matter for mode selection
    by_vector = weak_residual(sol, heat.semigroup, heat.coefficients, ens, vec)
    assert by_index.mode == by_vector.mode == 1
    np.testing.assert_array_equal(by_index.residuals, by_vector.residuals)
    with pytest.raises(ValueError, match="single spectral mode"):
        weak_residual(sol, heat.semigroup, heat.coefficients, ens,
                      np.ones(heat.semigroup.dim))
    with pytest.raises(ValueError, match="outside range"):
        weak_residual(sol, heat.semigroup, heat.coefficients, ens, 99)


# ---------------------------------------------------------------------------
# coefficient families and the worked example


def test_nemytskii_noise_modulates_modes():
    base = np.ones((1, 3, 2))
    coeffs = nemytskii_coefficients(base, 0.5, noise_bound=1.0)
    x = np.array([0.0, 1.0, -1.0])
    field = coeffs.noise(0.0, x)
    mod = 1.0 + 0.5 * np.tanh(x)
    np.testing.assert_allclose(field, base * mod[None, :, None])
    assert not coeffs.additive
    with pytest.raises(ValueError, match="atoms, G, H"):
        nemytskii_coefficients(np.ones((3, 2)), 0.5, 1.0)


def test_coefficient_spot_check_accepts_and_rejects(heat):
    grid = default_grid(heat.noise_spec, 1.0, 8)
    qm, qv = qm_qv_for(heat.noise_spec, grid, 2)
    drift = linear_drift_coefficients(1.3)
    report = coefficient_spot_check(drift, grid, qm, qv,
                                    dim_g=heat.semigroup.dim)
    assert report["passed"]
    assert report["drift_lipschitz"] == pytest.approx(1.0, rel=1e-12)
    assert report["drift_growth"] <= 1.0
    # A generously certified multiplicative bound passes; understating the
    # same bound by 100x must fail.
    base = heat.f_matrix[None]
    generous = nemytskii_coefficients(base, 0.5, noise_bound=50.0)
    assert coefficient_spot_check(generous, grid, qm, qv,
                                  dim_g=heat.semigroup.dim)["passed"]
    stingy = nemytskii_coefficients(base, 0.5, noise_bound=0.5)
    assert not coefficient_spot_check(stingy, grid, qm, qv,
                                      dim_g=heat.semigroup.dim)["passed"]


def test_heat_example_setup_bookkeeping():
    rng = np.random.default_rng(17)
    sigma = rng.standard_normal((3, 5))
    alphas = np.array([1.0, 0.5, 0.25])
    jump = (np.array([1.0, 0.0, 0.0]), 2.0)
    ex = heat_example_setup(sigma, alphas, jumps=(jump,))
    assert ex.f_matrix.shape == (5, 3)
    np.testing.assert_allclose(ex.f_matrix, (alphas[:, None] * sigma).T)
    assert ex.semigroup.dim == 5
    assert ex.coefficients.additive
    atoms = ex.noise_spec.atoms
    assert len(atoms) == 1 and atoms[0].label == "U"
    np.testing.assert_allclose(atoms[0].effective_cov(),
                               np.eye(3) + 2.0 * np.outer(jump[0], jump[0]))
    with pytest.raises(ValueError, match="one gain per"):
        heat_example_setup(sigma, np.ones(2))


def test_solution_summary_csv(heat):
    grid = default_grid(heat.noise_spec, 1.0, 4)
    ens = simulate(heat.noise_spec, grid, 32, 79)
    sol = picard_solve(heat.semigroup, heat.coefficients, ens,
                       np.zeros(heat.semigroup.dim))
    lines = sol.summary_csv().strip().split("\n")
    assert lines[0] == "t,mean_norm2,se"
    assert len(lines) == 6
    assert float(lines[1].split(",")[1]) == 0.0  # starts at the origin
