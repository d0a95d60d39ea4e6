"""Noise drivers: validation, closed-form vs empirical intensities, RNG."""

import numpy as np
import pytest

from mvmlab.haar import haar_cell_integrals, haar_dimension
from mvmlab.noise import (DiscreteLevy, DiscreteLevyAtom, HValuedLevy,
                          IntegralType, NoClosedFormError, WhiteNoise,
                          default_grid, empirical_intensity,
                          ensemble_summary_csv, intensity_closed_form,
                          intensity_family, load_ensemble, orthogonality_check,
                          save_ensemble, simulate)


def wishart(rng, dim):
    a = rng.standard_normal((dim, dim))
    return a.T @ a


@pytest.fixture(scope="module")
def levy_spec():
    rng = np.random.default_rng(100)
    return DiscreteLevy((
        DiscreteLevyAtom("g", brownian_cov=wishart(rng, 3)),
        DiscreteLevyAtom("j", brownian_cov=wishart(rng, 3),
                         jumps=((rng.standard_normal(3), 2.0),)),
    ))


# ---------------------------------------------------------------------------
# specification validation


def test_white_noise_validation():
    with pytest.raises(ValueError):
        WhiteNoise(rates=())
    with pytest.raises(ValueError):
        WhiteNoise(rates=(("a", -1.0),))
    spec = WhiteNoise(rates={"a": 0.5, "b": 2.0})
    assert spec.atom_labels == ("a", "b")
    np.testing.assert_array_equal(spec.rate_values, [0.5, 2.0])
    assert spec.dim == 1


def test_levy_atom_validation():
    with pytest.raises(ValueError, match="neither"):
        DiscreteLevyAtom("empty")
    with pytest.raises(ValueError, match="negative jump rate"):
        DiscreteLevyAtom("bad", jumps=((np.ones(2), -1.0),))
    with pytest.raises(ValueError, match="dimension mismatch"):
        DiscreteLevyAtom("bad", brownian_cov=np.eye(2),
                         jumps=((np.ones(3), 1.0),))
    with pytest.raises(ValueError, match="positive semidefinite"):
        DiscreteLevyAtom("bad", brownian_cov=np.diag([1.0, -1.0]))
    atom = DiscreteLevyAtom("ok", jumps=((np.array([1.0, 0.0]), 0.5),
                                         (np.array([0.0, 2.0]), 0.25)))
    np.testing.assert_allclose(atom.effective_cov(), np.diag([0.5, 1.0]))


def test_levy_menu_validation():
    a = DiscreteLevyAtom("a", brownian_cov=np.eye(2))
    with pytest.raises(ValueError, match="duplicate"):
        DiscreteLevy((a, a))
    with pytest.raises(ValueError, match="disagree"):
        DiscreteLevy((a, DiscreteLevyAtom("b", brownian_cov=np.eye(3))))
    with pytest.raises(ValueError):
        DiscreteLevy(())


def test_hvalued_validation():
    with pytest.raises(ValueError, match="nonzero"):
        HValuedLevy(wiener_cov=np.eye(2), jump_atoms=((np.zeros(2), 1.0),))
    with pytest.raises(ValueError, match="negative"):
        HValuedLevy(wiener_cov=np.eye(2), jump_atoms=((np.ones(2), -0.5),))
    spec = HValuedLevy(wiener_cov=np.eye(2), jump_atoms=((np.ones(2), 0.5),))
    assert spec.atom_labels == ("0", "jump1")


def test_integral_type_validation():
    ok = IntegralType(loadings=(np.ones((2, 4)),) * 3,
                      weights=(np.ones(2),) * 3, selector=(0, 0, 0))
    assert ok.dim == 4
    with pytest.raises(ValueError, match="align"):
        IntegralType(loadings=(np.ones((2, 4)),) * 3,
                     weights=(np.ones(2),) * 2, selector=(0, 0, 0))
    with pytest.raises(ValueError, match="negative variance"):
        IntegralType(loadings=(np.ones((1, 2)),),
                     weights=(np.array([-1.0]),), selector=(0,))
    with pytest.raises(ValueError, match="outside the mark menu"):
        IntegralType(loadings=(np.ones((1, 2)),),
                     weights=(np.ones(1),), selector=(1,))
    grid = default_grid(ok, 1.0, 4)  # driver laid out for 3 cells
    with pytest.raises(ValueError, match="3 time cells"):
        simulate(ok, grid, 1, 0)


def test_grid_driver_atom_mismatch_is_rejected():
    spec = WhiteNoise(rates=(("a", 1.0), ("b", 1.0)))
    from mvmlab.measures import make_grid
    with pytest.raises(ValueError, match="mark atoms"):
        simulate(spec, make_grid(1.0, 4, ["a"]), 2, 0)


# ---------------------------------------------------------------------------
# closed-form intensities


def test_white_noise_intensity_is_dt_times_rate():
    spec = WhiteNoise(rates=(("a", 0.5), ("b", 2.0)))
    grid = default_grid(spec, 1.0, 4)
    nu = intensity_closed_form(spec, grid, np.array([1.0]))
    np.testing.assert_allclose(nu.cell_mass, np.outer(grid.dt, [0.5, 2.0]))
    # nu_x scales with x^2 (dim 1).
    nu3 = intensity_closed_form(spec, grid, np.array([3.0]))
    np.testing.assert_allclose(nu3.cell_mass, 9.0 * nu.cell_mass)


def test_intensity_scaling_is_quadratic(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    family = intensity_family(levy_spec, grid)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.standard_normal(3)
        c = float(rng.uniform(0.1, 3.0))
        np.testing.assert_allclose(family.masses(c * x),
                                   c ** 2 * family.masses(x), rtol=1e-12)


def test_intensity_matches_bilinear_matrices(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    family = intensity_family(levy_spec, grid)
    mats = family.bilinear_matrices()
    rng = np.random.default_rng(1)
    x = rng.standard_normal(3)
    direct = np.einsum("d,cade,e->ca", x, mats, x)
    np.testing.assert_allclose(family.masses(x), direct, rtol=1e-12)


def test_intensity_lipschitz_in_the_test_vector(levy_spec):
    # |nu_x - nu_y|(cell) <= ||R_cell|| (||x|| + ||y||) ||x - y||: the
    # intensities move continuously with the tested direction.
    grid = default_grid(levy_spec, 1.0, 5)
    family = intensity_family(levy_spec, grid)
    mats = family.bilinear_matrices()
    norms = np.linalg.norm(mats, ord=2, axis=(2, 3))
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, y = rng.standard_normal((2, 3))
        lhs = np.abs(family.masses(x) - family.masses(y))
        bound = norms * (np.linalg.norm(x) + np.linalg.norm(y)) \
            * np.linalg.norm(x - y)
        assert np.all(lhs <= bound * (1 + 1e-12))


def test_haar_integral_type_intensities_match_exact_tables():
    # [DERIVED] oracle: the exact dyadic quadrature tables.
    k = 3
    spec = IntegralType.from_haar(k)
    grid = default_grid(spec, 1.0, 2 ** k)
    family = intensity_family(spec, grid)
    table = haar_cell_integrals(k)
    dim = haar_dimension(k)
    for n in (0, 1, 5, dim - 1):
        x = np.zeros(dim)
        x[n] = 1.0
        # The sampling route squares amplitudes like sqrt(2)^j in floats, so
        # it can sit one ulp off the exact squared-value table.
        np.testing.assert_allclose(family.masses(x)[:, 0], table[n],
                                   rtol=1e-15, atol=0)
    # Dense materialization agrees with the low-rank route.
    mats = family.bilinear_matrices()
    x = np.arange(dim, dtype=float) / dim
    np.testing.assert_allclose(np.einsum("d,cade,e->ca", x, mats, x),
                               family.masses(x), rtol=1e-12)


def test_path_dependent_selector_has_no_closed_form():
    spec = IntegralType(loadings=(np.ones((1, 2)),), weights=(np.ones(1),),
                        selector=(0,), path_dependent_selector=True)
    grid = default_grid(spec, 1.0, 1)
    with pytest.raises(NoClosedFormError):
        intensity_family(spec, grid)
    # Sampling still works.
    ens = simulate(spec, grid, 3, 0)
    assert ens.increments.shape == (3, 1, 1, 2)


# ---------------------------------------------------------------------------
# Monte Carlo: empirical intensities, moments, orthogonality


def test_empirical_intensity_within_three_sigma(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    ens = simulate(levy_spec, grid, 4000, 7)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(3)
    emp = empirical_intensity(ens, x)
    target = intensity_closed_form(levy_spec, grid, x)
    z = np.abs(emp.measure.cell_mass - target.cell_mass) / emp.standard_error
    assert z.max() < 3.5
    with pytest.raises(ValueError, match="at least"):
        empirical_intensity(ens, x, min_paths=10 ** 6)


def test_increment_means_are_compensated(levy_spec):
    # Both the Brownian and the compensated jump parts are centred.
    grid = default_grid(levy_spec, 1.0, 5)
    ens = simulate(levy_spec, grid, 4000, 11)
    mean = ens.increments.mean(axis=0)
    se = ens.increments.std(axis=0, ddof=1) / np.sqrt(ens.paths)
    assert np.all(np.abs(mean) <= 3.5 * se + 1e-12)


def test_zero_covariance_atom_yields_exact_zero_increments():
    spec = DiscreteLevy((
        DiscreteLevyAtom("null", brownian_cov=np.zeros((2, 2))),
        DiscreteLevyAtom("live", brownian_cov=np.eye(2)),
    ))
    grid = default_grid(spec, 1.0, 4)
    ens = simulate(spec, grid, 50, 0)
    np.testing.assert_array_equal(ens.increments[:, :, 0], 0.0)
    assert np.any(ens.increments[:, :, 1] != 0.0)
    nu = intensity_closed_form(spec, grid, np.ones(2))
    np.testing.assert_array_equal(nu.cell_mass[:, 0], 0.0)


def test_orthogonality_across_disjoint_mark_sets(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    ens = simulate(levy_spec, grid, 4000, 13)
    report = orthogonality_check(ens, np.array([1.0, -0.5, 0.25]), (0,), (1,))
    assert report.passed
    with pytest.raises(ValueError, match="disjoint"):
        orthogonality_check(ens, np.ones(3), (0, 1), (1,))


def test_hvalued_driver_martingale_second_moment():
    rng = np.random.default_rng(4)
    q = wishart(rng, 3)
    u = rng.standard_normal(3)
    spec = HValuedLevy(wiener_cov=q, jump_atoms=((u, 1.5),))
    grid = default_grid(spec, 1.0, 8)
    ens = simulate(spec, grid, 6000, 17)
    x = rng.standard_normal(3)
    # E M(t, full)^2 = t (<x, Q x> + 1.5 <u, x>^2), per grid time.
    m = ens.cumulative(x)
    sq = m[:, 1:] ** 2
    rate = float(x @ q @ x + 1.5 * (u @ x) ** 2)
    target = np.asarray(grid.time_points)[1:] * rate
    se = sq.std(axis=0, ddof=1) / np.sqrt(ens.paths)
    assert np.abs(sq.mean(axis=0) - target).max() < 3.5 * se.max()


# ---------------------------------------------------------------------------
# reproducibility and persistence


def test_simulation_is_thread_count_invariant(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    one = simulate(levy_spec, grid, 64, 5, threads=1)
    four = simulate(levy_spec, grid, 64, 5, threads=4)
    np.testing.assert_array_equal(one.increments, four.increments)


def test_enlarging_the_ensemble_preserves_existing_paths(levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    small = simulate(levy_spec, grid, 16, 5)
    large = simulate(levy_spec, grid, 64, 5)
    np.testing.assert_array_equal(large.increments[:16], small.increments)
    other = simulate(levy_spec, grid, 16, 6)
    assert np.any(other.increments != small.increments)


def test_seed_validation():
    spec = WhiteNoise(rates=(("a", 1.0),))
    grid = default_grid(spec, 1.0, 2)
    with pytest.raises(ValueError):
        simulate(spec, grid, 0, 0)
    with pytest.raises(ValueError):
        simulate(spec, grid, 1, -3)


def test_ensemble_save_load_round_trip(tmp_path, levy_spec):
    grid = default_grid(levy_spec, 1.0, 5)
    ens = simulate(levy_spec, grid, 10, 21)
    target = tmp_path / "ensemble.mvm"
    save_ensemble(ens, target)
    back = load_ensemble(target)
    assert back.grid == ens.grid
    assert back.driver_meta == ens.driver_meta
    np.testing.assert_array_equal(back.increments, ens.increments)


def test_summary_csv_is_parseable(levy_spec):
    grid = default_grid(levy_spec, 1.0, 3)
    ens = simulate(levy_spec, grid, 200, 23)
    lines = ensemble_summary_csv(ens).strip().split("\n")
    assert lines[0] == "t_lo,t_hi,atom_id,mean_norm2,se_norm2,max_abs_mean_coord"
    assert len(lines) == 1 + grid.n_cells * grid.n_atoms
    cells = [line.split(",") for line in lines[1:]]
    assert all(float(row[3]) >= 0.0 for row in cells)


def test_cumulative_handles_empty_atom_sets(levy_spec):
    grid = default_grid(levy_spec, 1.0, 3)
    ens = simulate(levy_spec, grid, 8, 29)
    m = ens.cumulative(np.ones(3), atoms=())
    np.testing.assert_array_equal(m, 0.0)
    full = ens.cumulative(np.ones(3))
    split = ens.cumulative(np.ones(3), (0,)) + ens.cumulative(np.ones(3), (1,))
    np.testing.assert_allclose(full, split, atol=1e-12)
