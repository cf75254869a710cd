"""Dense linear-algebra kernels shared by every other module.

The factorizations are implemented locally rather than delegated to LAPACK
wrappers: Householder QR (stable orthonormality is load-bearing for the
subspace error bounds), a cyclic Jacobi eigensolver for the small projected
blocks, Box-Muller Gaussian sampling over a PCG64 stream (reproducible from
the 64-bit seed alone, independent of numpy's own normal sampler), partially
pivoted LU for the small solves, and a power-iteration probe for symmetric
operator norms.  numpy supplies array storage and BLAS-backed products; the
kernels map their failure modes onto the library's exception types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DimensionTooLarge,
    NoConvergence,
    RankDeficient,
    SingularSystem,
)

SMALL_EIG_MAX_DIM = 2048

_SEED_MASK = 0xFFFFFFFFFFFFFFFF
_RANK_TOL = 1e-12
_PIVOT_COND_LIMIT = 1e12
_JACOBI_MAX_SWEEPS = 100
_POWER_MAX_ITERS = 20_000


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a 64-bit child seed from ``seed`` and an integer path.

    Used to give every stochastic sub-step of a driver (batch draw, sketch,
    probe, iteration index) its own stream while keeping the whole run a pure
    function of one user-facing seed.
    """
    entropy = (int(seed) & _SEED_MASK,) + tuple(int(p) & _SEED_MASK for p in path)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Standard Gaussian ``rows x cols`` matrix from a stream keyed solely by ``seed``.

    Box-Muller over PCG64 uniforms: identical (seed, rows, cols) gives a
    byte-identical matrix, and distinct seeds give independent streams.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix shape must be positive, got {rows}x{cols}")
    n = rows * cols
    half = (n + 1) // 2
    rng = np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))
    u1 = 1.0 - rng.random(half)  # shift to (0, 1] so the log is finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
    return z.reshape(rows, cols)


def qr_orthonormal(y: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the column span of ``y`` via Householder reflections.

    Returns the thin Q factor (same shape as ``y``) with column signs chosen
    so the implicit R has a non-negative diagonal.  Raises
    :class:`RankDeficient` when the smallest R pivot falls below 1e-12 of the
    largest, which is the cheap tripwire for numerically dependent columns.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("expected a 2-D array")
    d, l = y.shape
    if d < l:
        raise ValueError(f"need at least as many rows as columns, got {d}x{l}")
    if not np.isfinite(y).all():
        raise ValueError("input contains NaN/Inf")

    r = y.copy()
    reflectors: list[np.ndarray | None] = []
    for k in range(l):
        x = r[k:, k]
        norm_x = float(np.linalg.norm(x))
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0])
        v /= np.linalg.norm(v)
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        reflectors.append(v)

    diag = np.abs(np.diagonal(r)[:l])
    if diag.min() <= _RANK_TOL * diag.max():
        raise RankDeficient(
            f"columns numerically dependent (pivot ratio {diag.min():.3e}/{diag.max():.3e})"
        )

    # Build the thin Q by applying the reflectors, in reverse, to I_{d x l}.
    q = np.zeros((d, l))
    q[:l, :l] = np.eye(l)
    for k in range(l - 1, -1, -1):
        v = reflectors[k]
        if v is not None:
            q[k:, :] -= 2.0 * np.outer(v, v @ q[k:, :])

    signs = np.sign(np.diagonal(r)[:l])
    signs[signs == 0] = 1.0
    return q * signs


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues sorted descending with matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def sym_eig_small(a: np.ndarray, max_dim: int = SMALL_EIG_MAX_DIM) -> EigenPairs:
    """Full eigendecomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    The input is symmetrized internally ((A + A^T)/2); callers are expected
    to pass matrices that are symmetric up to roundoff.  Raises
    :class:`NoConvergence` if the off-diagonal mass has not vanished after
    100 sweeps, which signals pathological input rather than a tight budget.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    k = a.shape[0]
    if k > max_dim:
        raise DimensionTooLarge(f"matrix dimension {k} exceeds small-eig cap {max_dim}")
    if not np.isfinite(a).all():
        raise ValueError("input contains NaN/Inf")

    m = 0.5 * (a + a.T)
    v = np.eye(k)
    norm_ref = float(np.linalg.norm(m))
    if norm_ref == 0.0:
        return EigenPairs(values=np.zeros(k), vectors=v)

    off_tol = 1e-13 * norm_ref
    skip_tol = 1e-15 * norm_ref
    off_diag = np.ones((k, k), dtype=bool)
    np.fill_diagonal(off_diag, False)
    for _ in range(_JACOBI_MAX_SWEEPS):
        # Summed directly; ||A||_F^2 - ||diag||^2 cancels catastrophically near convergence.
        off = math.sqrt(float(np.sum(m[off_diag] ** 2)))
        if off <= off_tol:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = m[p, q]
                if abs(apq) <= skip_tol:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = m[:, p].copy()
                col_q = m[:, q].copy()
                m[:, p] = c * col_p - s * col_q
                m[:, q] = s * col_p + c * col_q
                row_p = m[p, :].copy()
                row_q = m[q, :].copy()
                m[p, :] = c * row_p - s * row_q
                m[q, :] = s * row_p + c * row_q
                m[p, q] = 0.0
                m[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        raise NoConvergence(f"Jacobi sweeps exhausted ({_JACOBI_MAX_SWEEPS}) at off-norm {off:.3e}")

    values = np.diagonal(m).copy()
    order = np.argsort(values)[::-1]
    return EigenPairs(values=values[order], vectors=v[:, order])


def solve_small(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for a small square ``a`` by LU with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides; the result matches
    its shape.  The pivot magnitudes double as a condition tripwire: a zero
    pivot or max/min pivot ratio at or above 1e12 raises
    :class:`SingularSystem`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square system matrix")
    n = a.shape[0]
    b = np.asarray(b, dtype=float)
    vector_rhs = b.ndim == 1
    rhs = b.reshape(n, -1).copy() if vector_rhs else b.copy()
    if rhs.shape[0] != n:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, system has {n}")
    if not (np.isfinite(a).all() and np.isfinite(rhs).all()):
        raise ValueError("input contains NaN/Inf")

    lu = a.copy()
    pivots = np.empty(n)
    for k in range(n):
        i = k + int(np.argmax(np.abs(lu[k:, k])))
        pivot = lu[i, k]
        if pivot == 0.0:
            raise SingularSystem(f"zero pivot at elimination step {k}")
        if i != k:
            lu[[k, i], :] = lu[[i, k], :]
            rhs[[k, i], :] = rhs[[i, k], :]
        pivots[k] = abs(pivot)
        if k + 1 < n:
            mult = lu[k + 1 :, k] / pivot
            lu[k + 1 :, k + 1 :] -= np.outer(mult, lu[k, k + 1 :])
            rhs[k + 1 :, :] -= np.outer(mult, rhs[k, :])

    cond_est = pivots.max() / pivots.min()
    if cond_est >= _PIVOT_COND_LIMIT:
        raise SingularSystem(f"pivot condition estimate {cond_est:.3e} >= 1e12")

    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k, :] = (rhs[k, :] - lu[k, k + 1 :] @ x[k + 1 :, :]) / lu[k, k]
    return x[:, 0] if vector_rhs else x


def spectral_norm_sym(
    apply: Callable[[np.ndarray], np.ndarray],
    d: int,
    tol: float = 1e-6,
    seed: int = 0,
    max_iters: int = _POWER_MAX_ITERS,
    abs_tol: float = 0.0,
) -> float:
    """Largest absolute eigenvalue of a symmetric operator, by power iteration.

    ``apply`` must realize a symmetric linear map on vectors of size ``d``.
    The estimate is ``||A v_k||`` for the normalized iterate, which converges
    to max|lambda| even when the extreme eigenvalues come in +/- pairs.
    Convergence is declared when successive estimates move by less than
    ``tol`` relatively (plus ``abs_tol``, for probing operators that may be
    roundoff-level zero); exceeding the iteration cap raises
    :class:`NoConvergence`.
    """
    v = gaussian_matrix(d, 1, seed)[:, 0]
    norm_v = float(np.linalg.norm(v))
    v /= norm_v
    prev = math.inf
    for it in range(max_iters):
        w = apply(v)
        est = float(np.linalg.norm(w))
        if est == 0.0 or est < 1e-300:
            # Random start annihilated: for a symmetric operator this happens
            # with probability one only for the zero operator.
            return 0.0
        if it >= 2 and abs(est - prev) <= tol * est + abs_tol:
            return est
        prev = est
        v = w / est
    raise NoConvergence(f"power iteration did not settle in {max_iters} steps")
