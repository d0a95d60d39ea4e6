"""Quadratic variation of martingale-valued noise, and its operator density.

The quadratic variation is the supremum of the intensity family over a dense
sequence of unit vectors; on the grid this is a cellwise running maximum
whose convergence (or divergence) in the sequence length is tracked
explicitly.  Polarization of the intensities gives a signed bilinear measure
field alpha, and the ratio alpha / quadratic-variation recovers a cellwise
PSD operator density with unit operator norm wherever the variation charges
the cell.  The Haar construction shows the supremum can genuinely diverge;
its partition sums are computed by exact dyadic quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import haar
from .hilbert import psd_part
from .measures import DiscreteMeasure, GridSpec, SignedDiscreteMeasure
from .noise import IntensityFamily

__all__ = [
    "QVEstimate",
    "qv_supremum",
    "BoundednessReport",
    "sequential_boundedness_probe",
    "counterexample_partition_sum",
    "counterexample_trace",
    "alpha_polarization",
    "BilinearMeasureField",
    "bilinear_field",
    "QMField",
    "qm_density",
    "qm_sqrt_field",
    "qm_to_csv",
    "InconsistentDensityError",
]


@dataclass(frozen=True, eq=False)
class QVEstimate:
    """Cellwise supremum of intensities over a finite unit-vector prefix.

    `convergence_trace` records the total mass after growing prefixes of the
    sequence (powers of two plus the full count); a trace that keeps climbing
    signals a driver without a quadratic variation.
    """

    measure: DiscreteMeasure
    sphere_count: int
    convergence_trace: tuple[tuple[int, float], ...]

    @property
    def grid(self) -> GridSpec:
        return self.measure.grid

    def divergence_ratio(self) -> float:
        """Final over initial trace total; large values flag divergence."""
        first = self.convergence_trace[0][1]
        last = self.convergence_trace[-1][1]
        return float("inf") if first == 0.0 else last / first


def _trace_counts(n: int) -> list[int]:
    counts = [1]
    while counts[-1] * 2 < n:
        counts.append(counts[-1] * 2)
    if counts[-1] != n:
        counts.append(n)
    return counts


def qv_supremum(family: IntensityFamily, vectors: np.ndarray) -> QVEstimate:
    """Supremum of the intensity family along a sequence of unit vectors."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[0] < 1:
        raise ValueError("need at least one unit vector")
    masses = family.batch(vectors)
    running = np.maximum.accumulate(masses, axis=0)
    trace = tuple((c, float(running[c - 1].sum())) for c in _trace_counts(len(vectors)))
    return QVEstimate(
        measure=DiscreteMeasure(family.grid, running[-1]),
        sphere_count=len(vectors),
        convergence_trace=trace,
    )


@dataclass(frozen=True, eq=False)
class BoundednessReport:
    """Spot check that sampled intensities stay below the running supremum.

    `violations` lists (trial index, cell, excess) triples; `modulus` holds,
    per trial, the uniform deviations sup over (s, A) of
    ``|nu_{x_n} - nu_x|((s, T] x A)`` along a sequence x_n -> x.
    """

    violations: tuple[tuple[int, tuple[int, int], float], ...]
    modulus: tuple[tuple[float, ...], ...]
    trial_norms: tuple[float, ...]
    passed: bool


def _uniform_deviation(family: IntensityFamily, x_a: np.ndarray,
                       x_b: np.ndarray) -> float:
    """sup over grid times s and ring sets A of |nu_a - nu_b|((s, T] x A)."""
    diff = family.masses(x_a) - family.masses(x_b)
    # Tail sums over (s, T]: reversed cumulative sums per atom.
    tails = np.vstack([diff[::-1].cumsum(axis=0)[::-1],
                       np.zeros((1, diff.shape[1]))])
    best = 0.0
    for ring in family.grid.rings:
        if not ring:
            continue
        vals = tails[:, sorted(ring)].sum(axis=1)
        best = max(best, float(np.abs(vals).max()))
    return best


def sequential_boundedness_probe(family: IntensityFamily,
                                 vectors: np.ndarray,
                                 trials: np.ndarray,
                                 approach_steps: int = 6,
                                 tol: float = 1e-9) -> BoundednessReport:
    """Probe the two ingredients behind the supremum construction.

    For each trial unit vector x the cellwise bound
    ``nu_x <= sup over the sequence`` is checked (dense-sequence surrogate),
    and the uniform deviation of nu along ``x_n -> x`` is reported as a
    convergence modulus, with ``x_n`` walking toward x on the sphere.
    """
    estimate = qv_supremum(family, vectors)
    sup_mass = estimate.measure.cell_mass
    scale = max(1.0, float(sup_mass.max(initial=0.0)))
    trials = np.atleast_2d(np.asarray(trials, dtype=np.float64))
    violations = []
    modulus = []
    for t, x in enumerate(trials):
        excess = family.masses(x) - sup_mass
        for i, j in np.argwhere(excess > tol * scale):
            violations.append((t, (int(i), int(j)), float(excess[i, j])))
        # March toward x from a fixed off-axis starting point.
        probe = np.roll(x, 1) + 0.5
        probe /= np.linalg.norm(probe)
        steps = []
        for n in range(1, approach_steps + 1):
            x_n = x + 2.0 ** (-n) * probe
            x_n /= np.linalg.norm(x_n)
            steps.append(_uniform_deviation(family, x_n, x))
        modulus.append(tuple(steps))
    return BoundednessReport(
        violations=tuple(violations),
        modulus=tuple(modulus),
        trial_norms=tuple(float(np.linalg.norm(x)) for x in trials),
        passed=not violations,
    )


def counterexample_partition_sum(k: int) -> float:
    """Partition sum showing divergence of the Haar-driven supremum.

    Over the generation-k dyadic time grid, sums the best intensity any
    basis function places on each cell:
    ``sum over cells of max_n integral over the cell of h_n^2``.
    All quantities are dyadic rationals and the value is exact; it equals
    ``2^k``, growing without bound in k.
    """
    table = haar.haar_cell_integrals(k)
    return float(table.max(axis=0).sum())


def counterexample_trace(k: int) -> tuple[tuple[int, float], ...]:
    """Partition sums over growing prefixes of the Haar basis."""
    table = haar.haar_cell_integrals(k)
    running = np.maximum.accumulate(table, axis=0)
    return tuple((c, float(running[c - 1].sum()))
                 for c in _trace_counts(table.shape[0]))


def alpha_polarization(family: IntensityFamily, x: np.ndarray,
                       y: np.ndarray) -> SignedDiscreteMeasure:
    """Signed bilinear measure ``(nu_{x+y} - nu_{x-y}) / 4``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    masses = family.batch(np.stack([x + y, x - y]))
    return SignedDiscreteMeasure(family.grid, 0.25 * (masses[0] - masses[1]))


@dataclass(frozen=True, eq=False)
class BilinearMeasureField:
    """Cellwise symmetric matrices <e_i, alpha(cell) e_j> from polarization."""

    grid: GridSpec
    matrices: np.ndarray  # (n_cells, n_atoms, dim, dim)

    @property
    def dim(self) -> int:
        return self.matrices.shape[-1]


def bilinear_field(family: IntensityFamily) -> BilinearMeasureField:
    """Assemble the bilinear field by polarizing over coordinate pairs.

    This is the artifact route (polarization of scalar intensities); the
    quadratic-form matrices a driver was built from serve as its oracle.
    """
    d = family.dim
    out = np.empty((family.grid.n_cells, family.grid.n_atoms, d, d))
    eye = np.eye(d)
    for i in range(d):
        out[:, :, i, i] = family.masses(eye[i])
        for j in range(i + 1, d):
            a = alpha_polarization(family, eye[i], eye[j]).cell_mass
            out[:, :, i, j] = a
            out[:, :, j, i] = a
    return BilinearMeasureField(family.grid, out)


class InconsistentDensityError(ValueError):
    """A cell carries bilinear mass but no quadratic-variation mass."""


@dataclass(frozen=True, eq=False)
class QMField:
    """Cellwise PSD operator density of the bilinear field w.r.t. the QV.

    `matrices[i, j]` is symmetric PSD with operator norm at most (and on
    charged cells, equal to) one; `null_mask` marks cells without
    quadratic-variation mass, where the density is identically zero by
    convention.
    """

    grid: GridSpec
    matrices: np.ndarray  # (n_cells, n_atoms, dim, dim)
    null_mask: np.ndarray  # (n_cells, n_atoms) bool

    @property
    def dim(self) -> int:
        return self.matrices.shape[-1]


def qm_density(alpha: BilinearMeasureField, qv: QVEstimate,
               tol: float = 1e-9) -> QMField:
    """Divide the bilinear field by the quadratic variation, cell by cell.

    Zero-variation cells must carry (numerically) zero bilinear mass and get
    the zero matrix; anything else is reported as an inconsistency.  Each
    quotient matrix is symmetrized and its tiny negative eigenvalue band is
    clipped to zero.
    """
    if alpha.grid != qv.grid:
        raise ValueError("bilinear field and variation live on different grids")
    qv_mass = qv.measure.cell_mass
    scale = max(1.0, float(np.abs(alpha.matrices).max(initial=0.0)))
    null = qv_mass <= 0.0
    bad = null & (np.abs(alpha.matrices).max(axis=(2, 3)) > tol * scale)
    if np.any(bad):
        cell = tuple(np.argwhere(bad)[0])
        raise InconsistentDensityError(
            f"cell {cell} has zero quadratic variation but nonzero bilinear mass")
    out = np.zeros_like(alpha.matrices)
    for i, j in np.argwhere(~null):
        out[i, j] = psd_part(alpha.matrices[i, j] / qv_mass[i, j])
    return QMField(alpha.grid, out, null)


def qm_sqrt_field(qm: QMField) -> np.ndarray:
    """Cellwise symmetric square roots of the density matrices."""
    out = np.zeros_like(qm.matrices)
    for i in range(qm.matrices.shape[0]):
        for j in range(qm.matrices.shape[1]):
            if not qm.null_mask[i, j]:
                w, v = np.linalg.eigh(qm.matrices[i, j])
                out[i, j] = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return out


def qm_to_csv(qm: QMField) -> str:
    """Flatten the density field to rows (t_lo, t_hi, atom_id, row, col, value)."""
    grid = qm.grid
    lines = ["t_lo,t_hi,atom_id,row,col,value"]
    for i in range(grid.n_cells):
        lo, hi = grid.time_points[i], grid.time_points[i + 1]
        for j, label in enumerate(grid.mark_atoms):
            for r in range(qm.dim):
                for c in range(qm.dim):
                    lines.append(f"{lo!r},{hi!r},{label},{r},{c},"
                                 f"{float(qm.matrices[i, j, r, c])!r}")
    return "\n".join(lines) + "\n"
