"""Stochastic integration against martingale-valued noise on the grid.

Integrands are operator-valued fields over (time cell, mark atom): either
simple (finitely many interval x event x mark-set terms, integrated through
the radonification formula term by term) or grid integrands (one operator
per cell, possibly per path).  Both routes must agree; keeping them separate
is the point, since the isometry
``E ||I_T||^2 = E sum_cells ||Phi o Q_M^{1/2}||_HS^2 qv(cell)``
is checked between independently computed sides.

Adaptedness is structural: events, history-dependent operator fields and
stopping rules are hooks that receive only the increments of cells strictly
before the current time, so referencing the future is impossible by
construction and any out-of-range access is surfaced as an error.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .measures import DiscreteMeasure, GridMismatchError, GridSpec
from .noise import MVMPathEnsemble
from .quadvar import QMField, QVEstimate, qm_sqrt_field

__all__ = [
    "AdaptednessError",
    "NormalFormError",
    "GridIntegrand",
    "SimpleTerm",
    "SimpleIntegrand",
    "IntegralPathEnsemble",
    "integrate_grid",
    "integrate_simple",
    "simple_to_grid",
    "cell_costs",
    "lambda2_profile",
    "lambda2_norm",
    "grid_stopping_time",
    "truncate_integrand",
    "stopped_integral",
    "StoppedIntegralReport",
    "restrict_integrand",
    "localize",
    "LocalizationReport",
    "fubini_check",
    "FubiniReport",
    "pushforward_commute",
    "PushforwardReport",
]


class AdaptednessError(ValueError):
    """A hook tried to look at increments at or after its own cell."""


class NormalFormError(ValueError):
    """Simple-integrand terms overlap in a way the normal form forbids."""


def _check_grid(grid: GridSpec, ens: MVMPathEnsemble) -> None:
    if ens.grid != grid:
        raise GridMismatchError("integrand and ensemble live on different grids")


@dataclass(frozen=True, eq=False)
class GridIntegrand:
    """Operator-valued field: one (G x H) matrix per (time cell, mark atom).

    `values` has shape ``(n_cells, n_atoms, dim_g, dim_h)`` for deterministic
    fields or ``(paths, n_cells, n_atoms, dim_g, dim_h)`` for history-built
    ones.  Only the left endpoint of a cell ever sees the field, which is how
    predictability is encoded on the grid.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim not in (4, 5):
            raise ValueError(f"integrand array must be 4- or 5-d, got {v.ndim}-d")
        cells_axis = 0 if v.ndim == 4 else 1
        if v.shape[cells_axis] != self.grid.n_cells \
                or v.shape[cells_axis + 1] != self.grid.n_atoms:
            raise ValueError(f"integrand shape {v.shape} does not match grid")
        object.__setattr__(self, "values", v)

    @property
    def per_path(self) -> bool:
        return self.values.ndim == 5

    @property
    def dim_g(self) -> int:
        return self.values.shape[-2]

    @property
    def dim_h(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, grid: GridSpec, matrix: np.ndarray) -> "GridIntegrand":
        """The same operator on every cell and atom."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("expected a single (G x H) matrix")
        values = np.broadcast_to(
            matrix, (grid.n_cells, grid.n_atoms) + matrix.shape).copy()
        return cls(grid, values)

    @classmethod
    def from_time_profile(cls, grid: GridSpec, matrices: np.ndarray
                          ) -> "GridIntegrand":
        """Deterministic time-varying field, shared by all atoms."""
        matrices = np.asarray(matrices, dtype=np.float64)
        if matrices.shape[0] != grid.n_cells or matrices.ndim != 3:
            raise ValueError("expected one (G x H) matrix per time cell")
        values = np.repeat(matrices[:, None], grid.n_atoms, axis=1)
        return cls(grid, values)

    @classmethod
    def from_history(cls, ens: MVMPathEnsemble,
                     hook: Callable[[np.ndarray, int], np.ndarray]
                     ) -> "GridIntegrand":
        """Build a per-path field from a history hook.

        ``hook(past, i)`` receives only the increments of cells ``< i``
        (shape ``(paths, i, n_atoms, dim)``) and returns the operators for
        cell i, broadcastable to ``(paths, n_atoms, dim_g, dim_h)``.
        """
        grid = ens.grid
        slabs = []
        for i in range(grid.n_cells):
            past = ens.increments[:, :i]
            past.setflags(write=False) if past.base is None else None
            try:
                vals = np.asarray(hook(past, i), dtype=np.float64)
            except IndexError as exc:
                raise AdaptednessError(
                    f"history hook for cell {i} reached outside the past "
                    f"({exc})") from exc
            slabs.append(np.broadcast_to(
                vals, (ens.paths, grid.n_atoms) + vals.shape[-2:]))
        return cls(grid, np.stack(slabs, axis=1))

    def compose(self, op: np.ndarray) -> "GridIntegrand":
        """Push the field forward by a fixed operator: cellwise op @ value."""
        op = np.asarray(op, dtype=np.float64)
        if op.ndim != 2 or op.shape[1] != self.dim_g:
            raise ValueError(f"cannot compose {op.shape} with dim_g={self.dim_g}")
        return GridIntegrand(self.grid,
                             np.einsum("eg,...gh->...eh", op, self.values))

    def scaled_add(self, other: "GridIntegrand", w_self: float = 1.0,
                   w_other: float = 1.0) -> "GridIntegrand":
        if other.grid != self.grid:
            raise GridMismatchError("cannot combine integrands across grids")
        return GridIntegrand(self.grid,
                             w_self * self.values + w_other * other.values)


@dataclass(frozen=True, eq=False)
class IntegralPathEnsemble:
    """Integral paths t -> I_t on the grid: values (paths, n_times, dim_g)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        t = np.asarray(self.times, dtype=np.float64)
        if v.ndim != 3 or v.shape[1] != t.shape[0]:
            raise ValueError(f"integral array shape {v.shape} does not match "
                             f"{t.shape[0]} time points")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)

    @property
    def paths(self) -> int:
        return self.values.shape[0]

    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    def second_moment(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean of ||I_t||^2 over paths with its standard error, per time."""
        sq = (self.values ** 2).sum(axis=2)
        return sq.mean(axis=0), sq.std(axis=0, ddof=1) / np.sqrt(self.paths)

    def summary_csv(self, isometry_target: np.ndarray | None = None) -> str:
        mean, se = self.second_moment()
        buf = io.StringIO()
        buf.write("t,mean_norm2,se,isometry_target\n")
        target = (np.full_like(mean, np.nan) if isometry_target is None
                  else np.asarray(isometry_target, dtype=np.float64))
        for t, m, s, g in zip(self.times, mean, se, target):
            buf.write(f"{float(t)!r},{float(m)!r},{float(s)!r},{float(g)!r}\n")
        return buf.getvalue()


def integrate_grid(phi: GridIntegrand, ens: MVMPathEnsemble
                   ) -> IntegralPathEnsemble:
    """Integrate a grid integrand: cumulative sums of cellwise actions."""
    _check_grid(phi.grid, ens)
    if phi.dim_h != ens.dim:
        raise ValueError(f"integrand expects dim {phi.dim_h}, driver has {ens.dim}")
    if phi.per_path and phi.values.shape[0] != ens.paths:
        raise ValueError("per-path integrand does not match the path count")
    spec = "pcagh,pcah->pcg" if phi.per_path else "cagh,pcah->pcg"
    contrib = np.einsum(spec, phi.values, ens.increments, optimize=True)
    out = np.zeros((ens.paths, len(ens.times), phi.dim_g))
    out[:, 1:] = np.cumsum(contrib, axis=1)
    return IntegralPathEnsemble(ens.times, out)


@dataclass(frozen=True)
class SimpleTerm:
    """One block ``1_{(t_s, t_t]} 1_F 1_{atoms} S`` of a simple integrand.

    `event` may be True (sure event), a per-path boolean array, or a hook
    called with the increments of cells ``< s_index`` only.
    """

    s_index: int
    t_index: int
    atoms: tuple[int, ...]
    matrix: np.ndarray
    event: object = True


@dataclass(frozen=True, eq=False)
class SimpleIntegrand:
    """Simple integrand in overlap normal form, bound to an ensemble.

    Construction evaluates the event hooks against path history (structural
    adaptedness) and enforces the normal form: any two terms must have
    disjoint time intervals, or identical intervals with pathwise disjoint
    events or disjoint mark sets.
    """

    grid: GridSpec
    paths: int
    terms: tuple[tuple[int, int, tuple[int, ...], np.ndarray, np.ndarray], ...]

    @classmethod
    def build(cls, ens: MVMPathEnsemble, terms: Sequence[SimpleTerm]
              ) -> "SimpleIntegrand":
        grid = ens.grid
        shaped = []
        dims = set()
        for term in terms:
            s, t = int(term.s_index), int(term.t_index)
            if not 0 <= s < t <= grid.n_cells:
                raise ValueError(f"bad interval indices ({s}, {t}]")
            atoms = tuple(sorted(set(int(j) for j in term.atoms)))
            if atoms and (atoms[0] < 0 or atoms[-1] >= grid.n_atoms):
                raise ValueError("term mark set outside the grid menu")
            matrix = np.asarray(term.matrix, dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[1] != ens.dim:
                raise ValueError(f"term matrix shape {matrix.shape} does not "
                                 f"accept dim-{ens.dim} increments")
            dims.add(matrix.shape[0])
            if callable(term.event):
                try:
                    ev = np.asarray(term.event(ens.increments[:, :s]), dtype=bool)
                except IndexError as exc:
                    raise AdaptednessError(
                        f"event hook for interval starting at cell {s} reached "
                        f"outside the past ({exc})") from exc
            elif term.event is True:
                ev = np.ones(ens.paths, dtype=bool)
            else:
                ev = np.asarray(term.event, dtype=bool)
            if ev.shape != (ens.paths,):
                raise ValueError("event must resolve to one boolean per path")
            shaped.append((s, t, atoms, matrix, ev))
        if len(dims) > 1:
            raise ValueError("terms disagree on the target dimension")
        cls._check_normal_form(shaped)
        return cls(grid=grid, paths=ens.paths, terms=tuple(shaped))

    @staticmethod
    def _check_normal_form(shaped) -> None:
        for a in range(len(shaped)):
            s1, t1, atoms1, _, ev1 = shaped[a]
            for b in range(a + 1, len(shaped)):
                s2, t2, atoms2, _, ev2 = shaped[b]
                if t1 <= s2 or t2 <= s1:
                    continue  # disjoint intervals
                if (s1, t1) == (s2, t2):
                    if not set(atoms1) & set(atoms2):
                        continue  # same interval, disjoint mark sets
                    if not np.any(ev1 & ev2):
                        continue  # same interval, pathwise disjoint events
                raise NormalFormError(
                    f"terms {a} and {b} overlap: split intervals or make "
                    f"events/mark sets disjoint")

    @property
    def dim_g(self) -> int:
        return self.terms[0][3].shape[0] if self.terms else 0


def integrate_simple(phi: SimpleIntegrand, ens: MVMPathEnsemble
                     ) -> IntegralPathEnsemble:
    """Integrate a simple integrand by the radonification formula.

    Each term contributes ``1_F S(M(t_s .. t, atoms))`` with the increment
    accumulated before S is applied; this is deliberately a different
    summation route than :func:`integrate_grid`.
    """
    _check_grid(phi.grid, ens)
    if phi.paths != ens.paths:
        raise ValueError("integrand was built against a different ensemble size")
    n_times = len(ens.times)
    out = np.zeros((ens.paths, n_times, phi.dim_g))
    for s, t, atoms, matrix, ev in phi.terms:
        if not atoms:
            continue
        seg = ens.increments[:, s:t, atoms].sum(axis=2) @ matrix.T
        cum = np.cumsum(seg, axis=1)
        gated = np.where(ev[:, None, None], cum, 0.0)
        out[:, s + 1:t + 1] += gated
        out[:, t + 1:] += gated[:, -1][:, None]
    return IntegralPathEnsemble(ens.times, out)


def simple_to_grid(phi: SimpleIntegrand) -> GridIntegrand:
    """Materialize a simple integrand as a grid integrand."""
    deterministic = all(ev.all() for *_, ev in phi.terms)
    g = phi.dim_g
    dim_h = phi.terms[0][3].shape[1] if phi.terms else 0
    shape = (phi.grid.n_cells, phi.grid.n_atoms, g, dim_h)
    if not deterministic:
        shape = (phi.paths,) + shape
    values = np.zeros(shape)
    for s, t, atoms, matrix, ev in phi.terms:
        for j in atoms:
            if deterministic:
                values[s:t, j] += matrix
            else:
                values[np.nonzero(ev)[0], s:t, j] += matrix
    return GridIntegrand(phi.grid, values)


def _qv_mass(qv: QVEstimate | DiscreteMeasure) -> np.ndarray:
    measure = qv.measure if isinstance(qv, QVEstimate) else qv
    return measure.cell_mass


def cell_costs(phi: GridIntegrand, qm: QMField,
               qv: QVEstimate | DiscreteMeasure) -> np.ndarray:
    """Cost ``||Phi o Q_M^{1/2}||_HS^2 qv`` per cell (per path if Phi is)."""
    if qm.grid != phi.grid:
        raise GridMismatchError("density field on a different grid")
    roots = qm_sqrt_field(qm)
    weighted = np.einsum("...cagh,cahk->...cagk", phi.values, roots,
                         optimize=True)
    return (weighted ** 2).sum(axis=(-2, -1)) * _qv_mass(qv)


def lambda2_profile(phi: GridIntegrand, qm: QMField,
                    qv: QVEstimate | DiscreteMeasure) -> np.ndarray:
    """Cumulative squared integration norm at every grid time."""
    costs = cell_costs(phi, qm, qv)
    if costs.ndim == 3:
        costs = costs.mean(axis=0)
    out = np.zeros(phi.grid.n_cells + 1)
    out[1:] = np.cumsum(costs.sum(axis=1))
    return out


def lambda2_norm(phi: GridIntegrand, qm: QMField,
                 qv: QVEstimate | DiscreteMeasure) -> float:
    """Integration norm: sqrt of the expected total cell cost."""
    return float(np.sqrt(lambda2_profile(phi, qm, qv)[-1]))


def grid_stopping_time(ens: MVMPathEnsemble,
                       hook: Callable[[np.ndarray, int], np.ndarray]
                       ) -> np.ndarray:
    """First grid index at which an adapted rule fires, per path.

    ``hook(past, i)`` sees the increments of cells ``< i`` and returns a
    boolean per path; the result is the smallest such i (or n_cells when the
    rule never fires, i.e. the stopping time is the horizon).
    """
    n = ens.grid.n_cells
    stop = np.full(ens.paths, n, dtype=np.int64)
    open_mask = np.ones(ens.paths, dtype=bool)
    for i in range(n + 1):
        try:
            fired = np.asarray(hook(ens.increments[:, :i], i), dtype=bool)
        except IndexError as exc:
            raise AdaptednessError(
                f"stopping rule at index {i} reached outside the past "
                f"({exc})") from exc
        newly = open_mask & fired
        stop[newly] = min(i, n)
        open_mask &= ~fired
        if not open_mask.any():
            break
    return stop


def truncate_integrand(phi: GridIntegrand, stop_index: np.ndarray,
                       paths: int) -> GridIntegrand:
    """Multiply the field by ``1_{[0, t_stop]}`` pathwise (zero at and after
    the stopping cell)."""
    stop_index = np.asarray(stop_index, dtype=np.int64)
    if stop_index.shape != (paths,):
        raise ValueError("need one stopping index per path")
    mask = np.arange(phi.grid.n_cells)[None, :] < stop_index[:, None]
    values = phi.values if phi.per_path else phi.values[None]
    values = values * mask[:, :, None, None, None]
    return GridIntegrand(phi.grid, values)


@dataclass(frozen=True, eq=False)
class StoppedIntegralReport:
    truncated: IntegralPathEnsemble
    clamped: IntegralPathEnsemble
    max_abs_gap: float
    scale: float


def stopped_integral(phi: GridIntegrand, ens: MVMPathEnsemble,
                     stop_index: np.ndarray, check: bool = True
                     ) -> StoppedIntegralReport:
    """Both sides of the stopping identity ``I(1_{[0,sigma]} Phi) = I_{. ^ sigma}``.

    The left side integrates the truncated integrand; the right side clamps
    the integral paths at the stopping time.  They agree exactly; `check`
    turns a nonzero gap into an error (regression guard).
    """
    stop_index = np.asarray(stop_index, dtype=np.int64)
    lhs = integrate_grid(truncate_integrand(phi, stop_index, ens.paths), ens)
    full = integrate_grid(phi, ens)
    idx = np.minimum(np.arange(len(ens.times))[None, :], stop_index[:, None])
    rhs_values = np.take_along_axis(full.values, idx[:, :, None], axis=1)
    rhs = IntegralPathEnsemble(ens.times, rhs_values)
    gap = float(np.abs(lhs.values - rhs.values).max(initial=0.0))
    scale = max(1.0, float(np.abs(rhs.values).max(initial=0.0)))
    if check and gap > 0.0:
        raise RuntimeError(f"stopped-integral identity violated (gap {gap:.3e})")
    return StoppedIntegralReport(lhs, rhs, gap, scale)


def restrict_integrand(phi: GridIntegrand, s_index: int, t_index: int,
                       event: np.ndarray | bool = True) -> GridIntegrand:
    """Restrict the field to ``(t_s, t_t] x F``: ``1_{(s, t]} 1_F Phi``."""
    if not 0 <= s_index <= t_index <= phi.grid.n_cells:
        raise ValueError(f"bad restriction window ({s_index}, {t_index}]")
    window = np.zeros(phi.grid.n_cells, dtype=bool)
    window[s_index:t_index] = True
    if phi.per_path:
        values = phi.values * window[None, :, None, None, None]
    else:
        values = phi.values * window[:, None, None, None]
    if event is not True:
        ev = np.asarray(event, dtype=bool)
        if values.ndim == 4:
            values = np.broadcast_to(values, (ev.shape[0],) + values.shape).copy()
        values = values * ev[:, None, None, None, None]
    return GridIntegrand(phi.grid, values)


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    """Truncations of an integrand along cumulative-cost stopping times."""

    thresholds: tuple[float, ...]
    stop_indices: dict
    truncated_norms: dict
    max_consistency_gap: float
    max_cell_cost: float


def localize(phi: GridIntegrand, ens: MVMPathEnsemble, qm: QMField,
             qv: QVEstimate | DiscreteMeasure,
             thresholds: Sequence[float]) -> LocalizationReport:
    """Stop when the running integration cost first reaches each threshold.

    For threshold n, ``tau_n`` is the first grid time at which the pathwise
    cumulative cost reaches n (horizon if never).  Returns the truncations'
    norms and verifies the tower consistency: two truncations agree exactly
    up to the smaller stopping time on every path.
    """
    costs = cell_costs(phi, qm, qv)
    if costs.ndim == 2:
        costs = np.broadcast_to(costs, (ens.paths,) + costs.shape)
    per_cell = costs.sum(axis=2)
    cum = np.zeros((ens.paths, phi.grid.n_cells + 1))
    cum[:, 1:] = np.cumsum(per_cell, axis=1)
    stop_indices: dict = {}
    integrals: dict = {}
    norms: dict = {}
    for n in thresholds:
        reached = cum >= float(n)
        idx = np.where(reached.any(axis=1), reached.argmax(axis=1),
                       phi.grid.n_cells)
        stop_indices[n] = idx
        truncated = truncate_integrand(phi, idx, ens.paths)
        integrals[n] = integrate_grid(truncated, ens)
        mask = np.arange(phi.grid.n_cells)[None, :] < idx[:, None]
        norms[n] = float(np.sqrt((per_cell * mask).sum(axis=1).mean()))
    gap = 0.0
    ordered = sorted(thresholds)
    for lo, hi in zip(ordered, ordered[1:]):
        both = np.minimum(stop_indices[lo], stop_indices[hi])
        keep = np.arange(len(ens.times))[None, :] <= both[:, None]
        diff = (integrals[lo].values - integrals[hi].values) \
            * keep[:, :, None]
        gap = max(gap, float(np.abs(diff).max(initial=0.0)))
    return LocalizationReport(
        thresholds=tuple(float(n) for n in thresholds),
        stop_indices=stop_indices,
        truncated_norms=norms,
        max_consistency_gap=gap,
        max_cell_cost=float(per_cell.max(initial=0.0)),
    )


@dataclass(frozen=True, eq=False)
class FubiniReport:
    combined: IntegralPathEnsemble
    summed: IntegralPathEnsemble
    max_abs_gap: float
    scale: float
    passed: bool


def fubini_check(integrands: Sequence[GridIntegrand], weights: Sequence[float],
                 ens: MVMPathEnsemble, tol: float = 1e-10) -> FubiniReport:
    """Integrate-the-average against average-the-integrals.

    The finite parameter space E carries one integrand and one weight per
    element; the identity compares integrating ``sum_e w_e Phi_e`` with
    ``sum_e w_e I(Phi_e)`` pathwise.
    """
    if len(integrands) != len(weights) or not integrands:
        raise ValueError("need matching, nonempty integrand and weight lists")
    mixed_values = sum(w * phi.values for w, phi in zip(weights, integrands))
    combined = integrate_grid(GridIntegrand(integrands[0].grid, mixed_values), ens)
    parts = [integrate_grid(phi, ens) for phi in integrands]
    summed_values = sum(w * part.values for w, part in zip(weights, parts))
    summed = IntegralPathEnsemble(ens.times, summed_values)
    gap = float(np.abs(combined.values - summed.values).max(initial=0.0))
    scale = max(1.0, float(np.abs(summed.values).max(initial=0.0)))
    return FubiniReport(combined, summed, gap, scale, passed=gap <= tol * scale)


@dataclass(frozen=True, eq=False)
class PushforwardReport:
    composed_first: IntegralPathEnsemble
    mapped_after: IntegralPathEnsemble
    max_abs_gap: float
    scale: float
    passed: bool


def pushforward_commute(op: np.ndarray, phi: GridIntegrand,
                        ens: MVMPathEnsemble, tol: float = 1e-10
                        ) -> PushforwardReport:
    """Compare integrating ``R o Phi`` with applying R to the integral."""
    lhs = integrate_grid(phi.compose(op), ens)
    base = integrate_grid(phi, ens)
    rhs = IntegralPathEnsemble(
        ens.times, np.einsum("eg,ptg->pte", np.asarray(op, dtype=np.float64),
                             base.values))
    gap = float(np.abs(lhs.values - rhs.values).max(initial=0.0))
    scale = max(1.0, float(np.abs(rhs.values).max(initial=0.0)))
    return PushforwardReport(lhs, rhs, gap, scale, passed=gap <= tol * scale)
