"""Finite measure algebra on a time x mark grid.

Everything here is exact bookkeeping on atomic measures: a measure is a
nonnegative mass per grid cell, where a cell is one half-open time interval
``(t_i, t_{i+1}]`` paired with one mark atom.  The only nontrivial operation
is the supremum of a family of measures, defined through finite partitions;
on an atomic grid the finest partition always wins, and ``brute_force_sup``
keeps the partition-enumeration definition alive as an independent oracle.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Cell",
    "GridMismatchError",
    "GridSpec",
    "DiscreteMeasure",
    "SignedDiscreteMeasure",
    "ComparisonReport",
    "make_grid",
    "sup_measures",
    "brute_force_sup",
    "monotone_sup",
    "sum_measures",
    "compare_signed",
    "iter_partitions",
]

#: A grid cell: (time-cell index, mark-atom index).
Cell = tuple[int, int]

MAX_BRUTE_FORCE_CELLS = 8


class GridMismatchError(ValueError):
    """Two measures (or a measure and an operand) live on different grids."""


@dataclass(frozen=True)
class GridSpec:
    """Time grid on [0, T] together with a finite menu of mark atoms.

    Parameters
    ----------
    time_points : tuple of float
        Strictly increasing, starting at 0.  Cell ``i`` is ``(t_i, t_{i+1}]``.
    mark_atoms : tuple of str
        Distinct atom labels.
    rings : tuple of frozenset of int, optional
        The mark sets scenarios are allowed to query.  Defaults to the empty
        set, every singleton and the full atom menu.
    """

    time_points: tuple[float, ...]
    mark_atoms: tuple[str, ...]
    rings: tuple[frozenset[int], ...] = ()

    def __post_init__(self) -> None:
        tp = tuple(float(t) for t in self.time_points)
        object.__setattr__(self, "time_points", tp)
        object.__setattr__(self, "mark_atoms", tuple(str(a) for a in self.mark_atoms))
        if len(tp) < 2:
            raise ValueError("need at least two time points")
        if tp[0] != 0.0:
            raise ValueError(f"time grid must start at 0, got {tp[0]}")
        if any(b <= a for a, b in zip(tp, tp[1:])):
            raise ValueError("time points must be strictly increasing")
        if not self.mark_atoms:
            raise ValueError("need at least one mark atom")
        if len(set(self.mark_atoms)) != len(self.mark_atoms):
            raise ValueError("mark atoms must be distinct")
        if not self.rings:
            n = len(self.mark_atoms)
            rings = [frozenset()]
            rings += [frozenset({j}) for j in range(n)]
            if n > 1:
                rings.append(frozenset(range(n)))
            object.__setattr__(self, "rings", tuple(rings))
        else:
            object.__setattr__(self, "rings", tuple(frozenset(r) for r in self.rings))
            for ring in self.rings:
                if any(j < 0 or j >= len(self.mark_atoms) for j in ring):
                    raise ValueError("ring refers to an atom outside the menu")

    @property
    def n_cells(self) -> int:
        return len(self.time_points) - 1

    @property
    def n_atoms(self) -> int:
        return len(self.mark_atoms)

    @property
    def t_max(self) -> float:
        return self.time_points[-1]

    @property
    def dt(self) -> np.ndarray:
        return np.diff(np.asarray(self.time_points))

    def cells(self) -> list[Cell]:
        return [(i, j) for i in range(self.n_cells) for j in range(self.n_atoms)]


def make_grid(t_max: float, steps: int, mark_atoms: Sequence[str],
              rings: Sequence[frozenset[int]] = ()) -> GridSpec:
    """Uniform grid with `steps` cells on [0, t_max]."""
    if steps < 1 or t_max <= 0:
        raise ValueError("need steps >= 1 and t_max > 0")
    tp = tuple(np.linspace(0.0, float(t_max), steps + 1))
    return GridSpec(time_points=tp, mark_atoms=tuple(mark_atoms), rings=tuple(rings))


def _as_mass(grid: GridSpec, cell_mass, *, signed: bool) -> np.ndarray:
    m = np.asarray(cell_mass, dtype=np.float64)
    if m.shape != (grid.n_cells, grid.n_atoms):
        raise ValueError(
            f"cell_mass shape {m.shape} does not match grid "
            f"({grid.n_cells} time cells x {grid.n_atoms} atoms)")
    if not np.all(np.isfinite(m)):
        raise ValueError("cell masses must be finite")
    if not signed and np.any(m < 0):
        bad = np.argwhere(m < 0)[0]
        raise ValueError(f"negative mass at cell {tuple(bad)}")
    return m


@dataclass(frozen=True, eq=False)
class SignedDiscreteMeasure:
    """Signed set function on the grid cells (finite, atomic)."""

    grid: GridSpec
    cell_mass: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "cell_mass",
                           _as_mass(self.grid, self.cell_mass, signed=True))

    def mass(self, cells: Iterable[Cell] | None = None) -> float:
        """Mass of a set of cells (all of them when `cells` is None)."""
        if cells is None:
            return float(self.cell_mass.sum())
        return float(sum(self.cell_mass[i, j] for i, j in cells))

    def total_variation(self) -> float:
        return float(np.abs(self.cell_mass).sum())

    def interval_mass(self, s_index: int, t_index: int, atoms: Iterable[int]) -> float:
        """Mass of ``(t_s, t_t] x atoms``."""
        idx = sorted(atoms)
        return float(self.cell_mass[s_index:t_index, idx].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_lo,t_hi,atom_id,mass\n")
        tp = self.grid.time_points
        for i in range(self.grid.n_cells):
            for j, atom in enumerate(self.grid.mark_atoms):
                buf.write(f"{tp[i]!r},{tp[i + 1]!r},{atom},"
                          f"{float(self.cell_mass[i, j])!r}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        tp = self.grid.time_points
        cells = [
            {"t_lo": tp[i], "t_hi": tp[i + 1], "atom_id": atom,
             "mass": float(self.cell_mass[i, j])}
            for i in range(self.grid.n_cells)
            for j, atom in enumerate(self.grid.mark_atoms)
        ]
        return json.dumps({
            "time_points": list(tp),
            "mark_atoms": list(self.grid.mark_atoms),
            "cells": cells,
        }, indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure(SignedDiscreteMeasure):
    """Nonnegative set function on the grid cells."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "cell_mass",
                           _as_mass(self.grid, self.cell_mass, signed=False))

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        data = json.loads(text)
        grid = GridSpec(tuple(data["time_points"]), tuple(data["mark_atoms"]))
        atom_index = {a: j for j, a in enumerate(grid.mark_atoms)}
        t_index = {t: i for i, t in enumerate(grid.time_points)}
        mass = np.zeros((grid.n_cells, grid.n_atoms))
        for cell in data["cells"]:
            mass[t_index[cell["t_lo"]], atom_index[cell["atom_id"]]] = cell["mass"]
        return cls(grid, mass)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        if factor < 0:
            raise ValueError("use SignedDiscreteMeasure for negative scaling")
        return DiscreteMeasure(self.grid, factor * self.cell_mass)

    def restrict_atoms(self, atoms: Iterable[int]) -> "DiscreteMeasure":
        keep = sorted(set(atoms))
        mass = np.zeros_like(self.cell_mass)
        mass[:, keep] = self.cell_mass[:, keep]
        return DiscreteMeasure(self.grid, mass)


def _check_family(family: Sequence[SignedDiscreteMeasure]) -> GridSpec:
    if not family:
        raise ValueError("empty family of measures")
    grid = family[0].grid
    for k, mu in enumerate(family[1:], start=1):
        if mu.grid != grid:
            raise GridMismatchError(f"measure {k} lives on a different grid")
    return grid


def sup_measures(family: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Smallest measure dominating every member of the family.

    Defined through suprema over finite partitions; on an atomic grid the
    finest partition is optimal, so this is the cellwise maximum.  The
    partition definition survives in :func:`brute_force_sup`, which this
    function must agree with exactly.
    """
    grid = _check_family(family)
    stack = np.stack([mu.cell_mass for mu in family])
    return DiscreteMeasure(grid, stack.max(axis=0))


def iter_partitions(items: Sequence):
    """Yield every partition of `items` as a list of blocks (lists)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in iter_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def brute_force_sup(family: Sequence[DiscreteMeasure],
                    cells: Sequence[Cell]) -> float:
    """Partition-enumeration value of the supremum measure on a cell set.

    Enumerates every partition of `cells` and returns
    ``max over partitions of sum over blocks of max over the family``.
    Exponential in the number of cells, hence the hard cap of
    ``MAX_BRUTE_FORCE_CELLS``; intended purely as an oracle for
    :func:`sup_measures`.
    """
    _check_family(family)
    cells = list(cells)
    if len(set(cells)) != len(cells):
        raise ValueError("duplicate cells in the query set")
    if len(cells) > MAX_BRUTE_FORCE_CELLS:
        raise ValueError(
            f"brute-force supremum limited to {MAX_BRUTE_FORCE_CELLS} cells, "
            f"got {len(cells)}")
    best = 0.0
    for part in iter_partitions(cells):
        value = sum(max(mu.mass(block) for mu in family) for block in part)
        best = max(best, value)
    return best


def monotone_sup(sequence: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Limit (= last element) of a cellwise nondecreasing sequence.

    Raises if the sequence is not monotone, naming the first offending index.
    """
    _check_family(sequence)
    for k in range(len(sequence) - 1):
        if np.any(sequence[k + 1].cell_mass < sequence[k].cell_mass):
            raise ValueError(f"sequence not monotone at index {k + 1}")
    last = sequence[-1]
    return DiscreteMeasure(last.grid, last.cell_mass.copy())


def sum_measures(family: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Setwise sum of finitely many measures."""
    grid = _check_family(family)
    return DiscreteMeasure(grid, np.sum([mu.cell_mass for mu in family], axis=0))


@dataclass(frozen=True)
class ComparisonReport:
    """Cellwise comparison of a signed measure against a reference."""

    leq: bool
    eq: bool
    abs_leq: bool
    tol: float
    failing_leq: tuple[Cell, ...]
    failing_abs: tuple[Cell, ...]


def compare_signed(alpha: SignedDiscreteMeasure, beta: SignedDiscreteMeasure,
                   tol: float = 0.0) -> ComparisonReport:
    """Report whether alpha <= beta, alpha == beta and |alpha| <= beta cellwise."""
    if alpha.grid != beta.grid:
        raise GridMismatchError("comparison across different grids")
    a, b = alpha.cell_mass, beta.cell_mass
    bad_leq = np.argwhere(a > b + tol)
    bad_abs = np.argwhere(np.abs(a) > b + tol)
    return ComparisonReport(
        leq=bad_leq.size == 0,
        eq=bool(np.all(np.abs(a - b) <= tol)),
        abs_leq=bad_abs.size == 0,
        tol=tol,
        failing_leq=tuple(map(tuple, bad_leq[:16])),
        failing_abs=tuple(map(tuple, bad_abs[:16])),
    )
