"""Martingale-valued noise on a time x mark grid.

A driver produces, per path, one H-valued increment for every grid cell
(time cell x mark atom); cumulative sums over cells give a worthless-drift,
orthogonal family of square-integrable martingales indexed by mark sets.
Four generators are provided:

* ``WhiteNoise`` -- scalar Gaussian white noise with intensity ``dt x rate``;
* ``DiscreteLevy`` -- a finite menu of marks, each carrying an independent
  H-valued increment with covariance ``dt * Q_k`` split into a Brownian part
  and compensated Poisson jumps;
* ``HValuedLevy`` -- the mark space is the state space itself: a Wiener part
  sitting on the origin atom plus one atom per jump vector;
* ``IntegralType`` -- a time-changed scalar Brownian driver routed to marks
  by a deterministic selector, with per-cell loading vectors (this is the
  variant with deterministic but non-homogeneous intensities).

Every generator has deterministic intensities nu_x(cell) = <x, R_cell x>,
exposed as an :class:`IntensityFamily`, except when an integral-type selector
is declared path dependent, in which case only the empirical route exists.

Randomness is counter based: path p of a run with seed s draws from a Philox
stream keyed by (s, p), with cells consumed in a fixed order, so enlarging
the path count or splitting work across threads never reshuffles existing
paths.
"""

from __future__ import annotations

import abc
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .hilbert import psd_part, psd_sqrt
from .measures import DiscreteMeasure, GridSpec, make_grid

__all__ = [
    "NoClosedFormError",
    "WhiteNoise",
    "DiscreteLevyAtom",
    "DiscreteLevy",
    "HValuedLevy",
    "IntegralType",
    "MVMPathEnsemble",
    "simulate",
    "default_grid",
    "IntensityFamily",
    "DenseIntensityFamily",
    "LowRankIntensityFamily",
    "intensity_family",
    "intensity_closed_form",
    "EmpiricalIntensity",
    "empirical_intensity",
    "OrthogonalityReport",
    "orthogonality_check",
    "save_ensemble",
    "load_ensemble",
    "ensemble_summary_csv",
]


class NoClosedFormError(ValueError):
    """The driver has no closed-form intensity; use empirical_intensity."""


def _as_vector(u, dim: int | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or (dim is not None and u.shape[0] != dim):
        raise ValueError(f"expected a vector of dimension {dim}, got shape {u.shape}")
    return u


class NoiseSpecBase(abc.ABC):
    """Shared driver interface: labels, dimension, sampling, intensities."""

    kind: str

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Dimension of the state space H carrying the increments."""

    @property
    @abc.abstractmethod
    def atom_labels(self) -> tuple[str, ...]:
        """Canonical mark-atom labels, in grid order."""

    @abc.abstractmethod
    def _sampler(self, grid: GridSpec) -> Callable[[np.random.Generator], np.ndarray]:
        """Return a closure drawing one path of increments, shape
        (n_cells, n_atoms, dim).  All grid-dependent factors are precomputed
        here so the per-path cost is a handful of vectorized draws."""

    @abc.abstractmethod
    def _intensity_family(self, grid: GridSpec) -> "IntensityFamily":
        """Closed-form intensities, or raise NoClosedFormError."""

    def validate_grid(self, grid: GridSpec) -> None:
        if grid.n_atoms != len(self.atom_labels):
            raise ValueError(
                f"grid has {grid.n_atoms} mark atoms but the {self.kind} driver "
                f"defines {len(self.atom_labels)}")


@dataclass(frozen=True)
class WhiteNoise(NoiseSpecBase):
    """Gaussian space-time white noise: nu(dt, atom) = rate(atom) dt."""

    rates: tuple[tuple[str, float], ...]
    kind = "white_noise"

    def __post_init__(self) -> None:
        rates = tuple((str(a), float(r)) for a, r in
                      (self.rates.items() if isinstance(self.rates, dict)
                       else self.rates))
        if not rates:
            raise ValueError("white noise needs at least one atom")
        if any(r < 0 for _, r in rates):
            raise ValueError("negative intensity rate")
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self) -> int:
        return 1

    @property
    def atom_labels(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.rates)

    @property
    def rate_values(self) -> np.ndarray:
        return np.array([r for _, r in self.rates])

    def _sampler(self, grid: GridSpec):
        std = np.sqrt(np.outer(grid.dt, self.rate_values))

        def sample(rng: np.random.Generator) -> np.ndarray:
            z = rng.standard_normal(std.shape)
            return (std * z)[..., None]

        return sample

    def _intensity_family(self, grid: GridSpec) -> "DenseIntensityFamily":
        mats = np.outer(grid.dt, self.rate_values)[..., None, None]
        return DenseIntensityFamily(grid, 1, mats)


@dataclass(frozen=True)
class DiscreteLevyAtom:
    """One mark of a finite-menu driver.

    The increment on every time cell is an independent H-valued variable
    with covariance ``dt * effective_cov``: a centred Gaussian with
    covariance ``dt * brownian_cov`` plus, per jump entry ``(u, rate)``, a
    compensated Poisson term ``(N - rate dt) u``.
    """

    label: str
    brownian_cov: np.ndarray | None = None
    jumps: tuple[tuple[np.ndarray, float], ...] = ()

    def __post_init__(self) -> None:
        cov = self.brownian_cov
        if cov is not None:
            cov = psd_part(cov)
        jumps = []
        for u, rate in self.jumps:
            if rate < 0:
                raise ValueError(f"negative jump rate on atom {self.label!r}")
            jumps.append((_as_vector(u), float(rate)))
        dim = cov.shape[0] if cov is not None else None
        for u, _ in jumps:
            if dim is None:
                dim = u.shape[0]
            elif u.shape[0] != dim:
                raise ValueError(f"jump dimension mismatch on atom {self.label!r}")
        if dim is None:
            raise ValueError(f"atom {self.label!r} has neither a Brownian part "
                             "nor jumps")
        object.__setattr__(self, "brownian_cov", cov)
        object.__setattr__(self, "jumps", tuple(jumps))
        object.__setattr__(self, "_dim", dim)

    @property
    def dim(self) -> int:
        return self._dim

    def effective_cov(self) -> np.ndarray:
        """Total increment covariance per unit time."""
        cov = np.zeros((self.dim, self.dim))
        if self.brownian_cov is not None:
            cov += self.brownian_cov
        for u, rate in self.jumps:
            cov += rate * np.outer(u, u)
        return cov


@dataclass(frozen=True)
class DiscreteLevy(NoiseSpecBase):
    """Driver with a finite menu of marks and independent per-mark increments."""

    atoms: tuple[DiscreteLevyAtom, ...]
    kind = "discrete_levy"

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("need at least one mark atom")
        if len({a.label for a in atoms}) != len(atoms):
            raise ValueError("duplicate atom labels")
        if len({a.dim for a in atoms}) != 1:
            raise ValueError("atoms disagree on the state dimension")
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    @property
    def atom_labels(self) -> tuple[str, ...]:
        return tuple(a.label for a in self.atoms)

    def _sampler(self, grid: GridSpec):
        dt = grid.dt
        sqrt_dt = np.sqrt(dt)
        roots = [None if a.brownian_cov is None else psd_sqrt(a.brownian_cov)
                 for a in self.atoms]

        def sample(rng: np.random.Generator) -> np.ndarray:
            out = np.zeros((grid.n_cells, len(self.atoms), self.dim))
            for k, atom in enumerate(self.atoms):
                if roots[k] is not None:
                    z = rng.standard_normal((grid.n_cells, self.dim))
                    out[:, k] += sqrt_dt[:, None] * (z @ roots[k].T)
                for u, rate in atom.jumps:
                    mean = rate * dt
                    n = rng.poisson(mean)
                    out[:, k] += (n - mean)[:, None] * u
            return out

        return sample

    def _intensity_family(self, grid: GridSpec) -> "DenseIntensityFamily":
        covs = np.stack([a.effective_cov() for a in self.atoms])
        mats = grid.dt[:, None, None, None] * covs[None]
        return DenseIntensityFamily(grid, self.dim, mats)


@dataclass(frozen=True)
class HValuedLevy(NoiseSpecBase):
    """Driver whose marks live in the state space itself.

    Atom 0 is the origin and carries the Wiener part with covariance Q; each
    further atom is one jump vector u with Poisson rate lam({u}), carrying
    the compensated jump increments.  Intensities:
    nu_h(cell, origin) = dt <h, Q h> and nu_h(cell, u) = dt rate <u, h>^2.
    """

    wiener_cov: np.ndarray
    jump_atoms: tuple[tuple[np.ndarray, float], ...] = ()
    kind = "hvalued_levy"

    def __post_init__(self) -> None:
        cov = psd_part(self.wiener_cov)
        jumps = []
        for u, rate in self.jump_atoms:
            u = _as_vector(u, cov.shape[0])
            if rate < 0:
                raise ValueError("negative jump rate")
            if not np.any(u):
                raise ValueError("jump atoms must be nonzero vectors")
            jumps.append((u, float(rate)))
        object.__setattr__(self, "wiener_cov", cov)
        object.__setattr__(self, "jump_atoms", tuple(jumps))

    @property
    def dim(self) -> int:
        return self.wiener_cov.shape[0]

    @property
    def atom_labels(self) -> tuple[str, ...]:
        return ("0",) + tuple(f"jump{j + 1}" for j in range(len(self.jump_atoms)))

    def _sampler(self, grid: GridSpec):
        dt = grid.dt
        sqrt_dt = np.sqrt(dt)
        root = psd_sqrt(self.wiener_cov)

        def sample(rng: np.random.Generator) -> np.ndarray:
            out = np.zeros((grid.n_cells, 1 + len(self.jump_atoms), self.dim))
            z = rng.standard_normal((grid.n_cells, self.dim))
            out[:, 0] = sqrt_dt[:, None] * (z @ root.T)
            for j, (u, rate) in enumerate(self.jump_atoms):
                mean = rate * dt
                n = rng.poisson(mean)
                out[:, 1 + j] = (n - mean)[:, None] * u
            return out

        return sample

    def _intensity_family(self, grid: GridSpec) -> "DenseIntensityFamily":
        d = self.dim
        covs = np.zeros((1 + len(self.jump_atoms), d, d))
        covs[0] = self.wiener_cov
        for j, (u, rate) in enumerate(self.jump_atoms):
            covs[1 + j] = rate * np.outer(u, u)
        mats = grid.dt[:, None, None, None] * covs[None]
        return DenseIntensityFamily(grid, d, mats)


@dataclass(frozen=True)
class IntegralType(NoiseSpecBase):
    """Time-inhomogeneous driver built from scalar Brownian components.

    Cell i receives the increment ``sum_s eta_{i,s} Z_{i,s}`` at the mark
    chosen by ``selector[i]``, with independent ``Z_{i,s} ~ N(0, w_{i,s})``;
    the loading vectors eta and variance weights w (which already absorb the
    cell length) are deterministic, so the intensities are the deterministic
    measures nu_x(cell) = sum_s w_{i,s} <x, eta_{i,s}>^2.

    A selector marked path dependent disables the closed-form intensity
    route; only sampling and empirical estimation remain.
    """

    loadings: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    selector: tuple[int, ...]
    labels: tuple[str, ...] = ("U",)
    path_dependent_selector: bool = False
    kind = "integral_type"

    def __post_init__(self) -> None:
        loadings = tuple(np.atleast_2d(np.asarray(m, dtype=np.float64))
                         for m in self.loadings)
        weights = tuple(np.atleast_1d(np.asarray(w, dtype=np.float64))
                        for w in self.weights)
        if len(loadings) != len(weights) or len(loadings) != len(self.selector):
            raise ValueError("loadings, weights and selector must align per cell")
        dims = {m.shape[1] for m in loadings}
        if len(dims) != 1:
            raise ValueError("loading vectors disagree on the state dimension")
        for m, w in zip(loadings, weights):
            if m.shape[0] != w.shape[0]:
                raise ValueError("per-cell component counts disagree")
            if np.any(w < 0):
                raise ValueError("negative variance weight")
        sel = tuple(int(j) for j in self.selector)
        if any(j < 0 or j >= len(self.labels) for j in sel):
            raise ValueError("selector points outside the mark menu")
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "selector", sel)
        object.__setattr__(self, "labels", tuple(str(a) for a in self.labels))

    @property
    def dim(self) -> int:
        return self.loadings[0].shape[1]

    @property
    def atom_labels(self) -> tuple[str, ...]:
        return self.labels

    def validate_grid(self, grid: GridSpec) -> None:
        super().validate_grid(grid)
        if grid.n_cells != len(self.selector):
            raise ValueError(
                f"driver is laid out for {len(self.selector)} time cells, "
                f"grid has {grid.n_cells}")

    def _sampler(self, grid: GridSpec):
        self.validate_grid(grid)
        stds = [np.sqrt(w) for w in self.weights]

        def sample(rng: np.random.Generator) -> np.ndarray:
            out = np.zeros((grid.n_cells, len(self.labels), self.dim))
            for i, (eta, std) in enumerate(zip(self.loadings, stds)):
                z = rng.standard_normal(std.shape) * std
                out[i, self.selector[i]] = z @ eta
            return out

        return sample

    def _intensity_family(self, grid: GridSpec) -> "LowRankIntensityFamily":
        if self.path_dependent_selector:
            raise NoClosedFormError(
                "integral-type driver with a path-dependent selector has no "
                "closed-form intensity; use empirical_intensity")
        self.validate_grid(grid)
        comps = tuple((self.selector[i], self.loadings[i], self.weights[i])
                      for i in range(grid.n_cells))
        return LowRankIntensityFamily(grid, self.dim, len(self.labels), comps)

    @classmethod
    def from_haar(cls, k: int) -> "IntegralType":
        """Wiener-integral driver against the Haar system of level k.

        State dimension 2^(k+1); one mark atom; time cells are the 2^k
        dyadic intervals, each split into its two half-cells so that every
        basis function is constant on each loading window.
        """
        from .haar import haar_values

        values = haar_values(k)
        n_cells = 2 ** k
        w = np.full(2, 2.0 ** (-(k + 1)))
        loadings = tuple(values[:, [2 * i, 2 * i + 1]].T.copy()
                         for i in range(n_cells))
        return cls(loadings=loadings, weights=(w,) * n_cells,
                   selector=(0,) * n_cells)


NoiseSpec = WhiteNoise | DiscreteLevy | HValuedLevy | IntegralType


def default_grid(spec: NoiseSpecBase, t_max: float, steps: int) -> GridSpec:
    """Uniform grid whose mark atoms match the driver's canonical labels."""
    return make_grid(t_max, steps, spec.atom_labels)


@dataclass(frozen=True, eq=False)
class MVMPathEnsemble:
    """Monte Carlo ensemble of per-cell increments.

    ``increments[p, i, j]`` is the H-valued mass path p places on time cell
    i at mark atom j; cumulative sums over cells realize the martingales
    ``t -> M(t, A)(x)``.
    """

    grid: GridSpec
    increments: np.ndarray  # (paths, n_cells, n_atoms, dim)
    driver_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        m = np.asarray(self.increments, dtype=np.float64)
        if m.ndim != 4 or m.shape[1] != self.grid.n_cells \
                or m.shape[2] != self.grid.n_atoms:
            raise ValueError(f"increment array shape {m.shape} does not match grid")
        object.__setattr__(self, "increments", m)

    @property
    def paths(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.increments.shape[3]

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.grid.time_points)

    def _atom_list(self, atoms: Iterable[int] | None) -> list[int]:
        if atoms is None:
            return list(range(self.grid.n_atoms))
        atoms = sorted(set(int(j) for j in atoms))
        if atoms and (atoms[0] < 0 or atoms[-1] >= self.grid.n_atoms):
            raise ValueError("atom index outside the grid menu")
        return atoms

    def paired(self, x: np.ndarray) -> np.ndarray:
        """Increments tested against x: array (paths, n_cells, n_atoms)."""
        x = _as_vector(x, self.dim)
        return self.increments @ x

    def cumulative(self, x: np.ndarray, atoms: Iterable[int] | None = None
                   ) -> np.ndarray:
        """Martingale paths t -> M(t, A)(x), shape (paths, n_times)."""
        idx = self._atom_list(atoms)
        out = np.zeros((self.paths, len(self.grid.time_points)))
        if idx:
            per_cell = self.paired(x)[:, :, idx].sum(axis=2)
            out[:, 1:] = np.cumsum(per_cell, axis=1)
        return out


def simulate(spec: NoiseSpecBase, grid: GridSpec, paths: int, seed: int,
             threads: int = 1) -> MVMPathEnsemble:
    """Draw a path ensemble for a driver.

    Reproducible by construction: path p depends only on (seed, p), so
    results are identical across thread counts and stable under enlarging
    `paths`.
    """
    if paths < 1:
        raise ValueError("need at least one path")
    if not 0 <= int(seed) < 2 ** 63:
        raise ValueError("seed must be a nonnegative 63-bit integer")
    spec.validate_grid(grid)
    sampler = spec._sampler(grid)
    out = np.empty((paths, grid.n_cells, grid.n_atoms, spec.dim))

    def fill(lo: int, hi: int) -> None:
        for p in range(lo, hi):
            key = np.array([seed, p], dtype=np.uint64)
            rng = np.random.Generator(np.random.Philox(key=key))
            out[p] = sampler(rng)

    threads = max(1, int(threads))
    if threads == 1:
        fill(0, paths)
    else:
        bounds = np.linspace(0, paths, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fill, lo, hi)
                       for lo, hi in zip(bounds, bounds[1:]) if hi > lo]
            for fut in futures:
                fut.result()
    meta = {"driver": spec.kind, "seed": int(seed), "paths": int(paths)}
    return MVMPathEnsemble(grid, out, meta)


class IntensityFamily(abc.ABC):
    """Deterministic intensities nu_x of a driver, one measure per vector x.

    All implemented drivers have quadratic-form intensities
    ``nu_x(cell) = <x, R_cell x>`` with PSD matrices R_cell, which makes the
    scaling rule nu_{c x} = c^2 nu_x structural.
    """

    def __init__(self, grid: GridSpec, dim: int):
        self.grid = grid
        self.dim = dim

    @abc.abstractmethod
    def batch(self, xs: np.ndarray) -> np.ndarray:
        """Masses for a batch of vectors: (n_vectors, n_cells, n_atoms)."""

    @abc.abstractmethod
    def bilinear_matrices(self) -> np.ndarray:
        """The fields R_cell, shape (n_cells, n_atoms, dim, dim)."""

    def masses(self, x: np.ndarray) -> np.ndarray:
        return self.batch(np.asarray(x, dtype=np.float64)[None])[0]

    def measure(self, x: np.ndarray) -> DiscreteMeasure:
        return DiscreteMeasure(self.grid, self.masses(x))


class DenseIntensityFamily(IntensityFamily):

    def __init__(self, grid: GridSpec, dim: int, matrices: np.ndarray):
        super().__init__(grid, dim)
        matrices = np.asarray(matrices, dtype=np.float64)
        expected = (grid.n_cells, grid.n_atoms, dim, dim)
        if matrices.shape != expected:
            raise ValueError(f"matrix field shape {matrices.shape}, "
                             f"expected {expected}")
        self._matrices = matrices

    def batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return np.einsum("xd,cade,xe->xca", xs, self._matrices, xs,
                         optimize=True)

    def bilinear_matrices(self) -> np.ndarray:
        return self._matrices


class LowRankIntensityFamily(IntensityFamily):
    """Per-cell low-rank quadratic forms sum_s w_s <x, eta_s>^2.

    Used by integral-type drivers whose state dimension is large (for the
    Haar construction, 2^(k+1)); the dense matrix field is only materialized
    on request and refused when it would be absurdly large.
    """

    _DENSE_CAP = 1 << 24

    def __init__(self, grid: GridSpec, dim: int, n_atoms: int,
                 components: tuple[tuple[int, np.ndarray, np.ndarray], ...]):
        super().__init__(grid, dim)
        if len(components) != grid.n_cells:
            raise ValueError("need one component list per time cell")
        self._components = components

    def batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        out = np.zeros((xs.shape[0], self.grid.n_cells, self.grid.n_atoms))
        for i, (atom, etas, w) in enumerate(self._components):
            proj = xs @ etas.T
            out[:, i, atom] = (w * proj ** 2).sum(axis=1)
        return out

    def bilinear_matrices(self) -> np.ndarray:
        size = self.grid.n_cells * self.grid.n_atoms * self.dim ** 2
        if size > self._DENSE_CAP:
            raise ValueError("dense bilinear field would be too large; "
                             "work with the low-rank components instead")
        out = np.zeros((self.grid.n_cells, self.grid.n_atoms, self.dim, self.dim))
        for i, (atom, etas, w) in enumerate(self._components):
            out[i, atom] = (etas.T * w) @ etas
        return out


def intensity_family(spec: NoiseSpecBase, grid: GridSpec) -> IntensityFamily:
    """Closed-form intensity family of a driver on a grid."""
    spec.validate_grid(grid)
    return spec._intensity_family(grid)


def intensity_closed_form(spec: NoiseSpecBase, grid: GridSpec,
                          x: np.ndarray) -> DiscreteMeasure:
    """Closed-form intensity measure nu_x of a driver, as a grid measure."""
    return intensity_family(spec, grid).measure(x)


@dataclass(frozen=True, eq=False)
class EmpiricalIntensity:
    """Monte Carlo estimate of nu_x with per-cell standard errors."""

    measure: DiscreteMeasure
    standard_error: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.measure.grid


def empirical_intensity(ens: MVMPathEnsemble, x: np.ndarray,
                        min_paths: int = 100) -> EmpiricalIntensity:
    """Estimate nu_x(cell) by averaging squared tested increments."""
    if ens.paths < min_paths:
        raise ValueError(f"need at least {min_paths} paths, have {ens.paths}")
    sq = ens.paired(x) ** 2
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / np.sqrt(ens.paths)
    return EmpiricalIntensity(DiscreteMeasure(ens.grid, mean), se)


@dataclass(frozen=True, eq=False)
class OrthogonalityReport:
    """Covariance trace of M(., A)(x) against M(., B)(x) for disjoint A, B."""

    times: np.ndarray
    covariance: np.ndarray
    standard_error: np.ndarray
    passed: bool


def orthogonality_check(ens: MVMPathEnsemble, x: np.ndarray,
                        atoms_a: Iterable[int], atoms_b: Iterable[int],
                        z_threshold: float = 3.0) -> OrthogonalityReport:
    """Empirical orthogonality of the martingales over two disjoint mark sets.

    For each grid time the product of the two martingales is averaged over
    paths; the check passes when every mean product is within `z_threshold`
    standard errors of zero.
    """
    a = set(ens._atom_list(atoms_a))
    b = set(ens._atom_list(atoms_b))
    if a & b:
        raise ValueError(f"mark sets are not disjoint: share {sorted(a & b)}")
    prod = ens.cumulative(x, a) * ens.cumulative(x, b)
    mean = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(ens.paths)
    passed = bool(np.all(np.abs(mean) <= z_threshold * se + 1e-300))
    return OrthogonalityReport(ens.times, mean, se, passed)


def save_ensemble(ens: MVMPathEnsemble, path) -> None:
    """Dump an ensemble as a one-line JSON header plus raw float64 bytes."""
    header = {
        "paths": ens.paths,
        "dim": ens.dim,
        "time_points": list(ens.grid.time_points),
        "mark_atoms": list(ens.grid.mark_atoms),
        "driver_meta": ens.driver_meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(ens.increments).tobytes())


def load_ensemble(path) -> MVMPathEnsemble:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        body = fh.read()
    grid = GridSpec(tuple(header["time_points"]), tuple(header["mark_atoms"]))
    shape = (header["paths"], grid.n_cells, grid.n_atoms, header["dim"])
    data = np.frombuffer(body, dtype=np.float64).reshape(shape).copy()
    return MVMPathEnsemble(grid, data, dict(header.get("driver_meta", {})))


def ensemble_summary_csv(ens: MVMPathEnsemble) -> str:
    """Per-cell summary: empirical mean and second moment of the increments."""
    buf = io.StringIO()
    buf.write("t_lo,t_hi,atom_id,mean_norm2,se_norm2,max_abs_mean_coord\n")
    norm2 = (ens.increments ** 2).sum(axis=3)
    mean2 = norm2.mean(axis=0)
    se2 = norm2.std(axis=0, ddof=1) / np.sqrt(ens.paths)
    mean_coord = np.abs(ens.increments.mean(axis=0)).max(axis=2)
    tp = ens.grid.time_points
    for i in range(ens.grid.n_cells):
        for j, atom in enumerate(ens.grid.mark_atoms):
            buf.write(f"{tp[i]!r},{tp[i + 1]!r},{atom},"
                      f"{float(mean2[i, j])!r},{float(se2[i, j])!r},"
                      f"{float(mean_coord[i, j])!r}\n")
    return buf.getvalue()
