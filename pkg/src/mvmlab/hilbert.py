"""Finite-dimensional Hilbert space helpers.

Vectors are plain float64 arrays; operators are dense matrices.  The module
owns the numerically delicate pieces used everywhere else: symmetric PSD
square roots with eigenvalue clipping, spectral pseudo-inverses, weighted
Hilbert-Schmidt norms, and the deterministic quasi-uniform unit-sphere
sequences over which suprema of quadratic forms are taken.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "SYM_TOL",
    "PSD_CLIP",
    "check_symmetric",
    "psd_part",
    "psd_sqrt",
    "pseudo_inverse_sqrt",
    "operator_norm_psd",
    "hs_norm",
    "hq_norm",
    "hq_norm_trace",
    "sphere_sequence",
]

# Relative tolerance for accepting a matrix as symmetric, and the band of
# slightly negative eigenvalues that is clipped to zero rather than rejected.
SYM_TOL = 1e-12
PSD_CLIP = 1e-10


def _scale(q: np.ndarray) -> float:
    return max(1.0, float(np.abs(q).max(initial=0.0)))


def check_symmetric(q: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {q.shape}")
    gap = float(np.abs(q - q.T).max(initial=0.0))
    if gap > tol * _scale(q):
        raise ValueError(f"matrix is not symmetric (asymmetry {gap:.3e})")
    return 0.5 * (q + q.T)


def _clipped_eigh(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = check_symmetric(q)
    w, v = np.linalg.eigh(q)
    floor = -PSD_CLIP * _scale(q)
    if w.min(initial=0.0) < floor:
        raise ValueError(
            f"matrix is not positive semidefinite (eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None), v


def psd_part(q: np.ndarray) -> np.ndarray:
    """Symmetrize and clip the tiny-negative eigenvalue band to zero."""
    w, v = _clipped_eigh(q)
    return (v * w) @ v.T


def psd_sqrt(q: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues in ``[-PSD_CLIP * scale, 0)`` are treated as zero; anything
    more negative is rejected, as is a visibly non-symmetric input.
    """
    w, v = _clipped_eigh(q)
    return (v * np.sqrt(w)) @ v.T


def pseudo_inverse_sqrt(q: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Spectral pseudo-inverse square root ``q^{-1/2}`` on the range of q.

    Eigenvalues below ``rank_tol`` times the largest are treated as exact
    zeros (the orthogonal complement of the range).  The zero matrix maps
    to the zero matrix.
    """
    w, v = _clipped_eigh(q)
    top = w.max(initial=0.0)
    inv = np.zeros_like(w)
    keep = w > rank_tol * top
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ v.T


def operator_norm_psd(q: np.ndarray) -> float:
    """Operator norm (= largest eigenvalue) of a PSD matrix."""
    w, _ = _clipped_eigh(q)
    return float(w.max(initial=0.0))


def hs_norm(a: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def hq_norm(phi: np.ndarray, q: np.ndarray) -> float:
    """Hilbert-Schmidt norm of ``phi`` weighted by the PSD matrix ``q``.

    Returns ``||phi @ q^{1/2}||_HS``, the natural norm for operators acting
    on the range of ``q^{1/2}``; agrees with ``sqrt(trace(phi q phi^T))``
    up to roundoff (see :func:`hq_norm_trace`).
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] != np.asarray(q).shape[0]:
        raise ValueError(
            f"shape mismatch: phi {phi.shape} against weight {np.asarray(q).shape}")
    return hs_norm(phi @ psd_sqrt(q))


def hq_norm_trace(phi: np.ndarray, q: np.ndarray) -> float:
    """Trace-form evaluation ``sqrt(trace(phi q phi^T))`` of :func:`hq_norm`."""
    phi = np.asarray(phi, dtype=np.float64)
    q = check_symmetric(q)
    return float(np.sqrt(max(0.0, np.trace(phi @ q @ phi.T))))


def _farthest_point_fill(axes: np.ndarray, extra: int, pool: np.ndarray) -> np.ndarray:
    """Greedy farthest-point selection under the antipodal (line) metric.

    Quadratic forms cannot distinguish x from -x, so distance is measured
    between lines: d(x, y) = 1 - (x . y)^2.  Starting from the coordinate
    axes keeps the selected set spread out from the mandatory prefix.
    """
    # Distance of every candidate to the axis lines: 1 - max_i x_i^2.
    dmin = 1.0 - (pool ** 2).max(axis=1)
    chosen = np.empty((extra, pool.shape[1]))
    for k in range(extra):
        pick = int(np.argmax(dmin))
        chosen[k] = pool[pick]
        dmin = np.minimum(dmin, 1.0 - (pool @ chosen[k]) ** 2)
    return chosen


@lru_cache(maxsize=32)
def _sphere_sequence_cached(dim: int, count: int, seed: int) -> np.ndarray:
    eye = np.eye(dim)
    axes = np.concatenate([eye, -eye], axis=0)
    if dim == 1:
        out = axes
    elif count <= 2 * dim:
        out = axes[:count]
    else:
        extra = count - 2 * dim
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        pool = rng.standard_normal((min(16 * extra, 1 << 16), dim))
        pool /= np.linalg.norm(pool, axis=1, keepdims=True)
        out = np.concatenate([axes, _farthest_point_fill(axes, extra, pool)])
    out = out.copy()
    out.setflags(write=False)
    return out


def sphere_sequence(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform sequence of unit vectors.

    The first ``2 * dim`` entries are the signed coordinate axes; the rest
    are chosen by greedy farthest-point thinning of a seeded candidate pool,
    so the sequence is reproducible and spreads evenly on the sphere.  In
    dimension one the sphere is exactly ``{+1, -1}`` and `count` is ignored.
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    if count < dim:
        raise ValueError(f"need count >= dim, got {count} < {dim}")
    return _sphere_sequence_cached(int(dim), int(count), int(seed))
