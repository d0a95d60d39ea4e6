"""Mild solutions of spectral evolution equations driven by grid noise.

The state space is spanned by eigenmodes of a diagonal, negative generator,
so the semigroup acts by modewise exponential decay.  Solutions of

    dX = [A X + B(t, X)] dt + integral over marks of F(t, u, X) M(dt, du)

are produced in mild form by Picard iteration on path ensembles, with the
stochastic convolution evaluated at left endpoints.  The iteration is run in
an exponentially weighted path norm (weight ``exp(-beta t)``) whose strength
is chosen from the two contraction factors of the drift and noise parts; the
weak (tested) form of the equation is available as a pathwise residual
against spectral test vectors, which vanishes at first order in the step.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrate import GridIntegrand, IntegralPathEnsemble, integrate_grid
from .measures import DiscreteMeasure, GridMismatchError
from .noise import DiscreteLevy, DiscreteLevyAtom, MVMPathEnsemble
from .quadvar import QMField, QVEstimate

__all__ = [
    "DiagonalSemigroup",
    "heat_semigroup",
    "CoefficientSpec",
    "additive_coefficients",
    "linear_drift_coefficients",
    "nemytskii_coefficients",
    "coefficient_spot_check",
    "stochastic_convolution",
    "convolution_second_moment",
    "v_beta_distance",
    "contraction_factors",
    "default_beta",
    "MildSolutionPath",
    "picard_solve",
    "WeakResidualReport",
    "weak_residual",
    "HeatExample",
    "heat_example_setup",
]


@dataclass(frozen=True, eq=False)
class DiagonalSemigroup:
    """Semigroup ``S(t) = diag(exp(-lambda_k t))`` with growth envelope
    ``||S(t)|| <= N exp(kappa t)`` (for nonnegative rates, N = 1, kappa = 0).
    """

    rates: np.ndarray
    bound_n: float = 1.0
    bound_kappa: float = 0.0

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("need a nonempty vector of decay rates")
        if np.any(rates < 0):
            raise ValueError("negative decay rate; use a growth envelope instead")
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    def decay(self, t: float) -> np.ndarray:
        return np.exp(-self.rates * t)

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec) * self.decay(t)

    def kernel(self, times: np.ndarray) -> np.ndarray:
        """Lower-triangular evaluation table K[m, i, k] = exp(-l_k (t_m - t_i))
        for cells i < m, zero otherwise."""
        times = np.asarray(times, dtype=np.float64)
        n = times.shape[0] - 1
        gaps = times[:, None] - times[None, :n]
        K = np.exp(-np.clip(gaps[:, :, None] * self.rates[None, None, :],
                            0.0, None))
        K[gaps <= 0.0] = 0.0
        return K


def heat_semigroup(n_modes: int) -> DiagonalSemigroup:
    """Dirichlet heat semigroup on the unit interval: rates (k pi)^2."""
    k = np.arange(1, n_modes + 1)
    return DiagonalSemigroup((k * np.pi) ** 2)


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    """Drift and noise coefficients with their growth/Lipschitz constants.

    `drift(t, x)` maps states (shape ``(..., G)``) to states; `noise(t, x)`
    maps states to operator fields ``(..., n_atoms, G, H)``.  For additive
    noise, `noise_matrices` holds the constant field and `noise` is None.
    The constants enter the contraction bookkeeping only; they are validated
    empirically by :func:`coefficient_spot_check`, not derived.
    """

    drift: Callable[[float, np.ndarray], np.ndarray] | None = None
    drift_bound: float = 0.0
    noise: Callable[[float, np.ndarray], np.ndarray] | None = None
    noise_matrices: np.ndarray | None = None
    noise_bound: float = 0.0

    def __post_init__(self) -> None:
        if self.drift_bound < 0 or self.noise_bound < 0:
            raise ValueError("growth constants must be nonnegative")
        if self.noise is not None and self.noise_matrices is not None:
            raise ValueError("give either a noise map or constant matrices")
        if self.noise_matrices is not None:
            mats = np.asarray(self.noise_matrices, dtype=np.float64)
            if mats.ndim != 3:
                raise ValueError("constant noise field must be (atoms, G, H)")
            object.__setattr__(self, "noise_matrices", mats)

    @property
    def additive(self) -> bool:
        return self.noise is None


def additive_coefficients(noise_matrices: np.ndarray) -> CoefficientSpec:
    """State-independent noise, no drift."""
    return CoefficientSpec(noise_matrices=np.asarray(noise_matrices, float))


def linear_drift_coefficients(gain: float,
                              noise_matrices: np.ndarray | None = None
                              ) -> CoefficientSpec:
    """Drift ``B(t, x) = gain * x`` (Lipschitz and growth constant |gain|)."""
    return CoefficientSpec(drift=lambda t, x: gain * x,
                           drift_bound=abs(gain),
                           noise_matrices=noise_matrices)


def nemytskii_coefficients(base: np.ndarray, gain: float,
                           noise_bound: float) -> CoefficientSpec:
    """Diagonal state-dependent noise with a clipped nonlinearity.

    Mode k of every operator row is modulated by ``1 + gain tanh(x_k)``,
    which is bounded and 1-Lipschitz, so a finite `noise_bound` exists; pass
    the value you intend to certify and spot check it.
    """
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 3:
        raise ValueError("base noise field must be (atoms, G, H)")

    def noise(t: float, x: np.ndarray) -> np.ndarray:
        mod = 1.0 + gain * np.tanh(x)
        return base * mod[..., None, :, None]

    return CoefficientSpec(noise=noise, noise_bound=noise_bound)


def _noise_field(coeffs: CoefficientSpec, times: np.ndarray,
                 states: np.ndarray, n_atoms: int) -> np.ndarray:
    """Evaluate F at left endpoints: (paths, n_cells, atoms, G, H)."""
    n = times.shape[0] - 1
    if coeffs.additive:
        mats = coeffs.noise_matrices
        return np.broadcast_to(mats, (states.shape[0], n) + mats.shape)
    slabs = [np.asarray(coeffs.noise(times[i], states[:, i]), dtype=np.float64)
             for i in range(n)]
    return np.stack(slabs, axis=1)


def coefficient_spot_check(coeffs: CoefficientSpec, grid, qm: QMField,
                           qv: QVEstimate | DiscreteMeasure, dim_g: int,
                           samples: int = 32, seed: int = 0,
                           slack: float = 1.001) -> dict:
    """Empirically test the declared growth and Lipschitz constants.

    Draws random state pairs and checks the drift bounds pointwise and the
    noise bounds in integrated form against the actual cell costs.  Returns
    a report dict; `passed` is False when any sampled pair violates a bound
    beyond `slack`.
    """
    from .integrate import cell_costs

    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((samples, dim_g)) * 2.0
    ys = rng.standard_normal((samples, dim_g)) * 2.0
    t_ref = float(grid.time_points[0])
    worst = {"drift_growth": 0.0, "drift_lipschitz": 0.0,
             "noise_growth": 0.0, "noise_lipschitz": 0.0}
    if coeffs.drift is not None:
        bx = coeffs.drift(t_ref, xs)
        by = coeffs.drift(t_ref, ys)
        nx = np.linalg.norm(xs, axis=1)
        growth = np.linalg.norm(bx, axis=1) / (coeffs.drift_bound * (1 + nx))
        lip = np.linalg.norm(bx - by, axis=1) \
            / (coeffs.drift_bound * np.linalg.norm(xs - ys, axis=1))
        worst["drift_growth"] = float(growth.max())
        worst["drift_lipschitz"] = float(lip.max())
    if coeffs.noise is not None:
        t_total = grid.t_max
        for x, y in zip(xs, ys):
            fx = np.asarray(coeffs.noise(t_ref, x[None]))[0]
            fy = np.asarray(coeffs.noise(t_ref, y[None]))[0]
            const = np.broadcast_to(fx, (grid.n_cells,) + fx.shape)
            cost_x = float(cell_costs(GridIntegrand(grid, const), qm, qv).sum())
            diff = np.broadcast_to(fx - fy, (grid.n_cells,) + fx.shape)
            cost_d = float(cell_costs(GridIntegrand(grid, diff), qm, qv).sum())
            growth = cost_x / (coeffs.noise_bound * t_total
                               * (1 + float(x @ x)))
            lip = cost_d / (coeffs.noise_bound * t_total
                            * float((x - y) @ (x - y)))
            worst["noise_growth"] = max(worst["noise_growth"], growth)
            worst["noise_lipschitz"] = max(worst["noise_lipschitz"], lip)
    worst["passed"] = all(v <= slack for k, v in worst.items()
                          if isinstance(v, float))
    return worst


def stochastic_convolution(sg: DiagonalSemigroup, phi: GridIntegrand,
                           ens: MVMPathEnsemble) -> IntegralPathEnsemble:
    """Convolution ``t -> sum_{cells before t} S(t - s_cell) Phi(cell) dM``.

    Unlike the plain integral this is not a cumulative sum: the decay factor
    depends on the output time, so each grid time gets its own weighted sum
    over earlier cells (left endpoints throughout).
    """
    if phi.grid != ens.grid:
        raise GridMismatchError("integrand and ensemble live on different grids")
    if phi.dim_g != sg.dim:
        raise ValueError(f"semigroup acts on dim {sg.dim}, integrand maps to "
                         f"{phi.dim_g}")
    spec = "pcagh,pcah->pcg" if phi.per_path else "cagh,pcah->pcg"
    contrib = np.einsum(spec, phi.values, ens.increments, optimize=True)
    K = sg.kernel(ens.times)
    values = np.einsum("mik,pik->pmk", K, contrib, optimize=True)
    return IntegralPathEnsemble(ens.times, values)


def convolution_second_moment(sg: DiagonalSemigroup, phi: GridIntegrand,
                              qm: QMField, qv: QVEstimate | DiscreteMeasure
                              ) -> np.ndarray:
    """Modewise closed form for ``E ||conv_t||^2`` (deterministic Phi).

    Per cell and mode the convolution picks up variance
    ``exp(-2 l_k (t - s_i)) <row_k Phi, (qv Q_M) row_k Phi>``; summing over
    earlier cells and modes gives the target curve on the grid.
    """
    if phi.per_path:
        raise ValueError("closed form requires a deterministic integrand")
    measure = qv.measure if isinstance(qv, QVEstimate) else qv
    weighted = measure.cell_mass[:, :, None, None] * qm.matrices
    per_mode = np.einsum("iagh,iahl,iagl->ig", phi.values, weighted,
                         phi.values, optimize=True)
    K = sg.kernel(np.asarray(phi.grid.time_points))
    return np.einsum("mik,ik->m", K ** 2, per_mode, optimize=True)


def v_beta_distance(a: np.ndarray, b: np.ndarray, times: np.ndarray,
                    beta: float) -> float:
    """Exponentially weighted path distance, left-endpoint quadrature.

    ``sqrt(mean over paths of sum_i exp(-beta t_i) ||a_i - b_i||^2 dt_i)``.
    """
    times = np.asarray(times, dtype=np.float64)
    dt = np.diff(times)
    w = np.exp(-beta * times[:-1]) * dt
    diff = ((a - b)[:, :-1] ** 2).sum(axis=2)
    return float(np.sqrt((diff * w).sum(axis=1).mean()))


def contraction_factors(sg: DiagonalSemigroup, coeffs: CoefficientSpec,
                        t_max: float, beta: float) -> tuple[float, float]:
    """The two fixed-point contraction factors (drift, noise) at weight beta."""
    env = sg.bound_n ** 2 * np.exp(2 * sg.bound_kappa * t_max)
    return (env * coeffs.drift_bound ** 2 * t_max / beta,
            env * coeffs.noise_bound / beta)


def default_beta(sg: DiagonalSemigroup, coeffs: CoefficientSpec,
                 t_max: float) -> float:
    """Weight making both contraction factors at most 1/8."""
    env = sg.bound_n ** 2 * np.exp(2 * sg.bound_kappa * t_max)
    base = max(env * coeffs.drift_bound ** 2 * t_max, env * coeffs.noise_bound)
    return 8.0 * base if base > 0 else 1.0


@dataclass(frozen=True, eq=False)
class MildSolutionPath:
    """Picard fixed point on the grid, with the iteration's diagnostics."""

    times: np.ndarray
    values: np.ndarray  # (paths, n_times, G)
    picard_trace: tuple[float, ...]
    converged: bool
    beta: float
    tolerance: float

    @property
    def paths(self) -> int:
        return self.values.shape[0]

    @property
    def iterations(self) -> int:
        return len(self.picard_trace)

    def ratios(self) -> tuple[float, ...]:
        return tuple(b / a for a, b in zip(self.picard_trace,
                                           self.picard_trace[1:]) if a > 0)

    def summary_csv(self) -> str:
        sq = (self.values ** 2).sum(axis=2)
        mean = sq.mean(axis=0)
        se = sq.std(axis=0, ddof=1) / np.sqrt(self.paths)
        buf = io.StringIO()
        buf.write("t,mean_norm2,se\n")
        for t, m, s in zip(self.times, mean, se):
            buf.write(f"{float(t)!r},{float(m)!r},{float(s)!r}\n")
        return buf.getvalue()


def _check_finite(x: np.ndarray, iteration: int) -> None:
    if not np.all(np.isfinite(x)):
        p, i = np.argwhere(~np.isfinite(x).all(axis=2))[0]
        raise RuntimeError(f"Picard iterate {iteration} diverged at path {p}, "
                           f"time index {i}")


def picard_solve(sg: DiagonalSemigroup, coeffs: CoefficientSpec,
                 ens: MVMPathEnsemble, x0: np.ndarray,
                 beta: float | None = None, tol: float = 1e-8,
                 max_iter: int = 40, initial: str = "semigroup"
                 ) -> MildSolutionPath:
    """Iterate the mild-form map to its fixed point on the path ensemble.

    The map sends X to ``S(t) x0 + conv(B(., X)) dt + conv(F(., X) dM)``
    with left-endpoint evaluation; successive iterates are compared in the
    ``exp(-beta t)`` weighted norm and iteration stops when the update falls
    below `tol` (`converged` records whether that happened within
    `max_iter`).  Both contraction factors must be below 1/4.
    """
    times = ens.times
    t_max = float(times[-1])
    dt = np.diff(times)
    if beta is None:
        beta = default_beta(sg, coeffs, t_max)
    if beta <= 0:
        raise ValueError("beta must be positive")
    fb, ff = contraction_factors(sg, coeffs, t_max, beta)
    if fb >= 0.25 or ff >= 0.25:
        raise ValueError(
            f"weight beta={beta} leaves contraction factors ({fb:.3f}, "
            f"{ff:.3f}) >= 1/4; increase beta")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[-1] != sg.dim:
        raise ValueError("initial state does not match the mode count")
    n = ens.grid.n_cells
    K = sg.kernel(times)
    decay = np.exp(-np.outer(times, sg.rates))
    sem_term = np.einsum("mk,...k->...mk", decay, x0)
    if sem_term.ndim == 2:
        sem_term = np.broadcast_to(sem_term, (ens.paths,) + sem_term.shape)

    fixed_noise = None
    if coeffs.additive and coeffs.noise_matrices is not None:
        phi = GridIntegrand(ens.grid, np.broadcast_to(
            coeffs.noise_matrices,
            (n,) + coeffs.noise_matrices.shape).copy())
        fixed_noise = stochastic_convolution(sg, phi, ens).values

    def apply_map(x: np.ndarray) -> np.ndarray:
        out = sem_term.copy()
        if coeffs.drift is not None:
            b = np.stack([np.asarray(coeffs.drift(times[i], x[:, i]),
                                     dtype=np.float64) for i in range(n)],
                         axis=1)
            out = out + np.einsum("mik,pik->pmk", K * dt[None, :, None], b,
                                  optimize=True)
        if fixed_noise is not None:
            out = out + fixed_noise
        elif coeffs.noise is not None:
            field = _noise_field(coeffs, times, x, ens.grid.n_atoms)
            contrib = np.einsum("pcagh,pcah->pcg", field, ens.increments,
                                optimize=True)
            out = out + np.einsum("mik,pik->pmk", K, contrib, optimize=True)
        return out

    if initial == "semigroup":
        x = sem_term.copy()
    elif initial == "zero":
        x = np.zeros_like(sem_term)
    else:
        raise ValueError(f"unknown initial guess {initial!r}")

    trace: list[float] = []
    converged = False
    for it in range(1, max_iter + 1):
        x_next = apply_map(x)
        _check_finite(x_next, it)
        dist = v_beta_distance(x_next, x, times, beta)
        trace.append(dist)
        x = x_next
        if dist <= tol:
            converged = True
            break
    return MildSolutionPath(times=times, values=x,
                            picard_trace=tuple(trace), converged=converged,
                            beta=float(beta), tolerance=float(tol))


@dataclass(frozen=True, eq=False)
class WeakResidualReport:
    """Pathwise defect of the tested (weak) form against one spectral mode."""

    mode: int
    residuals: np.ndarray  # (paths, n_times)

    def max_abs(self) -> np.ndarray:
        return np.abs(self.residuals).max(axis=1)


def _mode_index(sg: DiagonalSemigroup, g) -> int:
    if isinstance(g, (int, np.integer)):
        k = int(g)
        if not 0 <= k < sg.dim:
            raise ValueError(f"mode index {k} outside range 0..{sg.dim - 1}")
        return k
    g = np.asarray(g, dtype=np.float64)
    nz = np.nonzero(g)[0]
    if g.shape != (sg.dim,) or len(nz) != 1:
        raise ValueError("test vector must be a single spectral mode")
    return int(nz[0])


def weak_residual(sol: MildSolutionPath, sg: DiagonalSemigroup,
                  coeffs: CoefficientSpec, ens: MVMPathEnsemble,
                  mode) -> WeakResidualReport:
    """Residual of the weak form along one eigenmode, per path and time.

    Tests X against a spectral vector g: the defect is
    ``<X_t - X_0, g> + l_k int <X_s, g> ds - int <B, g> ds - noise term``
    with left-endpoint quadrature; for solutions produced by the mild
    iteration it vanishes at first order in the step size.
    """
    k = _mode_index(sg, mode)
    times = ens.times
    dt = np.diff(times)
    x = sol.values
    xk = x[:, :, k]
    drift_k = np.zeros((ens.paths, len(dt)))
    if coeffs.drift is not None:
        for i in range(len(dt)):
            drift_k[:, i] = np.asarray(
                coeffs.drift(times[i], x[:, i]))[..., k]
    if coeffs.additive and coeffs.noise_matrices is None:
        noise_k = np.zeros((ens.paths, len(dt)))
    else:
        field = _noise_field(coeffs, times, x, ens.grid.n_atoms)
        noise_k = np.einsum("pcah,pcah->pc", field[:, :, :, k, :],
                            ens.increments, optimize=True)
    lam = sg.rates[k]
    inner = (lam * xk[:, :-1] - drift_k) * dt[None, :] - noise_k
    residuals = np.zeros_like(xk)
    residuals[:, 1:] = np.cumsum(inner, axis=1)
    residuals += xk - xk[:, [0]]
    return WeakResidualReport(mode=k, residuals=residuals)


@dataclass(frozen=True, eq=False)
class HeatExample:
    """Heat equation on (0, 1) with multiplicative-structure additive noise.

    The noise pairs a driver on R^{n_sigma} with the operator sending the
    i-th coordinate to ``alpha_i sigma_i`` (sigma given by sine-mode
    coefficients); its squared Hilbert-Schmidt norm is
    ``sum_i alpha_i^2 ||sigma_i||^2`` by construction.
    """

    semigroup: DiagonalSemigroup
    coefficients: CoefficientSpec
    noise_spec: DiscreteLevy
    f_matrix: np.ndarray


def heat_example_setup(sigma_modes: np.ndarray, alphas: np.ndarray,
                       wiener_cov: np.ndarray | None = None,
                       jumps: Sequence[tuple[np.ndarray, float]] = ()
                       ) -> HeatExample:
    """Assemble the heat scenario: semigroup, additive F, and its driver.

    `sigma_modes` holds one row of sine-mode coefficients per noise channel;
    `alphas` the channel gains.  The driver is a single-mark noise on
    R^{n_sigma} with the given Wiener covariance and compensated jumps.
    """
    sigma_modes = np.atleast_2d(np.asarray(sigma_modes, dtype=np.float64))
    alphas = np.asarray(alphas, dtype=np.float64)
    n_sigma, n_modes = sigma_modes.shape
    if alphas.shape != (n_sigma,):
        raise ValueError("one gain per noise channel required")
    f_matrix = (alphas[:, None] * sigma_modes).T  # (G, H)
    hs_sq = float((f_matrix ** 2).sum())
    target = float((alphas ** 2 * (sigma_modes ** 2).sum(axis=1)).sum())
    if abs(hs_sq - target) > 1e-12 * max(1.0, target):
        raise AssertionError("Hilbert-Schmidt bookkeeping mismatch")
    cov = np.eye(n_sigma) if wiener_cov is None else np.asarray(wiener_cov,
                                                                float)
    atom = DiscreteLevyAtom("U", brownian_cov=cov,
                            jumps=tuple((np.asarray(u, float), float(r))
                                        for u, r in jumps))
    spec = DiscreteLevy((atom,))
    coeffs = additive_coefficients(f_matrix[None])
    return HeatExample(semigroup=heat_semigroup(n_modes), coefficients=coeffs,
                       noise_spec=spec, f_matrix=f_matrix)
