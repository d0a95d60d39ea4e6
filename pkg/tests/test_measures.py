"""Measure algebra on the grid: supremum vs partition oracle, serialization."""

import math

import numpy as np
import pytest

from mvmlab.measures import (MAX_BRUTE_FORCE_CELLS, DiscreteMeasure,
                             GridMismatchError, GridSpec, brute_force_sup,
                             compare_signed, iter_partitions, make_grid,
                             monotone_sup, SignedDiscreteMeasure, sum_measures,
                             sup_measures)


def random_family(rng, grid, max_measures=5):
    """Measures with dyadic-rational masses so float sums are exact."""
    count = int(rng.integers(1, max_measures + 1))
    return [DiscreteMeasure(grid, rng.integers(0, 41, size=(
        grid.n_cells, grid.n_atoms)) / 8.0) for _ in range(count)]


# ---------------------------------------------------------------------------
# grid construction


def test_grid_rejects_bad_time_axes():
    with pytest.raises(ValueError):
        GridSpec((0.0, 1.0, 1.0), ("a",))
    with pytest.raises(ValueError):
        GridSpec((0.5, 1.0), ("a",))
    with pytest.raises(ValueError):
        GridSpec((0.0,), ("a",))


def test_grid_rejects_bad_atoms():
    with pytest.raises(ValueError):
        GridSpec((0.0, 1.0), ())
    with pytest.raises(ValueError):
        GridSpec((0.0, 1.0), ("a", "a"))
    with pytest.raises(ValueError):
        GridSpec((0.0, 1.0), ("a",), rings=(frozenset({3}),))


def test_default_rings_are_empty_singletons_full():
    grid = make_grid(1.0, 2, ["a", "b", "c"])
    assert frozenset() in grid.rings
    for j in range(3):
        assert frozenset({j}) in grid.rings
    assert frozenset({0, 1, 2}) in grid.rings


def test_uniform_grid_geometry():
    grid = make_grid(2.0, 4, ["a"])
    assert grid.n_cells == 4
    assert grid.t_max == 2.0
    np.testing.assert_allclose(grid.dt, 0.5)
    assert grid.cells() == [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_measure_shape_and_sign_validation():
    grid = make_grid(1.0, 2, ["a", "b"])
    with pytest.raises(ValueError):
        DiscreteMeasure(grid, np.ones((3, 2)))
    with pytest.raises(ValueError):
        DiscreteMeasure(grid, [[1.0, -0.5], [0.0, 0.0]])
    # The signed variant accepts negative masses.
    nu = SignedDiscreteMeasure(grid, [[1.0, -0.5], [0.0, 0.25]])
    assert nu.total_variation() == 1.75
    with pytest.raises(ValueError):
        SignedDiscreteMeasure(grid, [[np.inf, 0.0], [0.0, 0.0]])


# ---------------------------------------------------------------------------
# partition enumeration oracle


def test_partition_counts_are_bell_numbers():
    # [DERIVED] Bell numbers B_1..B_5 by independent recurrence.
    bell = [1, 1]
    for n in range(1, 6):
        bell.append(sum(math.comb(n, k) * bell[k] for k in range(n + 1)))
    for n in range(1, 6):
        parts = list(iter_partitions(range(n)))
        assert len(parts) == bell[n]
        for part in parts:
            merged = sorted(x for block in part for x in block)
            assert merged == list(range(n))


def test_sup_equals_partition_enumeration_on_random_families():
    # [DERIVED] oracle: enumerate every partition of the queried cells.
    rng = np.random.default_rng(42)
    for _ in range(120):
        grid = make_grid(1.0, int(rng.integers(1, 4)),
                         [f"a{j}" for j in range(rng.integers(1, 3))])
        family = random_family(rng, grid)
        cells = grid.cells()
        size = int(rng.integers(1, min(len(cells), 6) + 1))
        pick = [cells[i] for i in rng.choice(len(cells), size, replace=False)]
        assert sup_measures(family).mass(pick) == brute_force_sup(family, pick)


def test_sup_on_full_cell_set_matches_oracle():
    rng = np.random.default_rng(7)
    grid = make_grid(1.0, 3, ["a", "b"])
    for _ in range(25):
        family = random_family(rng, grid)
        assert sup_measures(family).mass() == \
            brute_force_sup(family, grid.cells())


def test_brute_force_guard_rails():
    grid = make_grid(1.0, 5, ["a", "b"])
    family = [DiscreteMeasure(grid, np.ones((5, 2)))]
    with pytest.raises(ValueError, match="limited to"):
        brute_force_sup(family, grid.cells()[:MAX_BRUTE_FORCE_CELLS + 1])
    with pytest.raises(ValueError, match="duplicate"):
        brute_force_sup(family, [(0, 0), (0, 0)])


def test_sup_dominates_members_and_is_below_sum():
    rng = np.random.default_rng(3)
    grid = make_grid(1.0, 4, ["a", "b", "c"])
    for _ in range(50):
        family = random_family(rng, grid)
        sup = sup_measures(family)
        total = sum_measures(family)
        for mu in family:
            assert np.all(mu.cell_mass <= sup.cell_mass)
        assert np.all(sup.cell_mass <= total.cell_mass)


def test_sup_is_idempotent_and_order_free():
    rng = np.random.default_rng(9)
    grid = make_grid(1.0, 3, ["a", "b"])
    family = random_family(rng, grid, max_measures=4)
    sup = sup_measures(family)
    again = sup_measures(family + [sup])
    np.testing.assert_array_equal(sup.cell_mass, again.cell_mass)
    shuffled = [family[i] for i in rng.permutation(len(family))]
    np.testing.assert_array_equal(sup.cell_mass,
                                  sup_measures(shuffled).cell_mass)


def test_mass_is_additive_over_disjoint_cell_sets():
    rng = np.random.default_rng(11)
    grid = make_grid(1.0, 4, ["a", "b"])
    mu = random_family(rng, grid, max_measures=1)[0]
    cells = grid.cells()
    half = len(cells) // 2
    assert mu.mass(cells[:half]) + mu.mass(cells[half:]) == mu.mass()
    assert mu.interval_mass(1, 3, [0, 1]) == mu.mass(
        [(i, j) for i in (1, 2) for j in (0, 1)])


def test_family_must_share_one_grid():
    a = DiscreteMeasure(make_grid(1.0, 2, ["a"]), [[1.0], [2.0]])
    b = DiscreteMeasure(make_grid(1.0, 3, ["a"]), [[1.0], [2.0], [3.0]])
    with pytest.raises(GridMismatchError):
        sup_measures([a, b])
    with pytest.raises(ValueError):
        sup_measures([])


# ---------------------------------------------------------------------------
# monotone limits and unbounded families


def test_monotone_sup_accepts_nested_restrictions():
    grid = make_grid(1.0, 3, ["a", "b", "c"])
    full = DiscreteMeasure(grid, np.arange(9, dtype=float).reshape(3, 3))
    nested = [full.restrict_atoms(range(j + 1)) for j in range(3)]
    limit = monotone_sup(nested)
    np.testing.assert_array_equal(limit.cell_mass, full.cell_mass)


def test_monotone_sup_names_first_violation():
    grid = make_grid(1.0, 1, ["a"])
    seq = [DiscreteMeasure(grid, [[m]]) for m in (1.0, 2.0, 1.5)]
    with pytest.raises(ValueError, match="index 2"):
        monotone_sup(seq)


def test_scaled_counting_family_grows_without_bound():
    base = DiscreteMeasure(make_grid(1.0, 2, ["a"]), [[1.0], [0.5]])
    for n in (3, 10, 100):
        family = [base.scaled(k) for k in range(1, n + 1)]
        assert sup_measures(family).mass() == n * base.mass()
    with pytest.raises(ValueError):
        base.scaled(-1.0)


# ---------------------------------------------------------------------------
# comparison and serialization


def test_compare_signed_flags_and_failing_cells():
    grid = make_grid(1.0, 2, ["a"])
    alpha = SignedDiscreteMeasure(grid, [[-0.3], [0.3]])
    beta = DiscreteMeasure(grid, [[0.4], [0.4]])
    report = compare_signed(alpha, beta)
    assert report.leq and report.abs_leq and not report.eq
    worse = SignedDiscreteMeasure(grid, [[-0.3], [0.6]])
    report = compare_signed(worse, beta)
    assert not report.leq
    assert report.failing_leq == ((1, 0),)
    assert report.failing_abs == ((1, 0),)
    # |.| can fail where <= holds.
    neg = SignedDiscreteMeasure(grid, [[-0.9], [0.0]])
    report = compare_signed(neg, beta)
    assert report.leq and not report.abs_leq
    with pytest.raises(GridMismatchError):
        compare_signed(alpha, DiscreteMeasure(make_grid(1.0, 3, ["a"]),
                                              np.zeros((3, 1))))


def test_json_round_trip_preserves_masses():
    rng = np.random.default_rng(5)
    grid = make_grid(1.0, 3, ["lo", "hi"])
    mu = DiscreteMeasure(grid, rng.random((3, 2)))
    back = DiscreteMeasure.from_json(mu.to_json())
    assert back.grid == mu.grid
    np.testing.assert_array_equal(back.cell_mass, mu.cell_mass)


def test_csv_layout_and_repr_precision():
    grid = make_grid(1.0, 2, ["a"])
    mu = DiscreteMeasure(grid, [[1 / 3], [0.1]])
    lines = mu.to_csv().strip().split("\n")
    assert lines[0] == "t_lo,t_hi,atom_id,mass"
    assert len(lines) == 3
    # repr round-trips doubles exactly.
    assert float(lines[1].split(",")[-1]) == 1 / 3
