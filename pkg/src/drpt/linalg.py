"""Dense linear algebra used by the selector.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Every public
function validates its inputs with :func:`as_matrix` / :func:`as_vector` and
never mutates them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DecompositionError,
    ShapeError,
    SingularSystemError,
    ValidationError,
    ZeroMatrixError,
)

EPS = np.finfo(np.float64).eps

#: Largest dimension for which :func:`svd` returns the full decomposition by default.
FULL_SVD_CAP = 2048


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a nonempty, finite, 2-D float64 array."""
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty (shape {arr.shape})")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite entries")
    return arr


def as_vector(b, length: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.array(b, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite entries")
    return arr


@dataclass(frozen=True)
class Svd:
    """Singular value decomposition ``a = u @ diag(sigma) @ vt``.

    For a full decomposition ``u`` is m x m and ``vt`` is n x n. A thin
    decomposition keeps only the leading ``min(m, n)`` singular vectors; the
    orthonormality invariants hold for the retained columns/rows.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.vt.shape[1]

    @property
    def full(self) -> bool:
        m, n = self.shape
        return self.u.shape[1] == m and self.vt.shape[0] == n

    def reconstruct(self) -> np.ndarray:
        r = self.sigma.shape[0]
        return (self.u[:, :r] * self.sigma) @ self.vt[:r]


@dataclass(frozen=True)
class RankInfo:
    numerical_rank: int
    sigma_min_effective: float
    sigma_max: float
    tolerance: float


def svd(a, full: bool | None = None, cap: int = FULL_SVD_CAP) -> Svd:
    """Compute the SVD of ``a``.

    Parameters
    ----------
    a : array_like
        Nonempty finite m x n matrix.
    full : bool, optional
        Force a full (``True``) or thin (``False``) decomposition. By default
        the full decomposition is returned when ``max(m, n) <= cap``.
    cap : int
        Size cap for the default choice.

    Raises
    ------
    DecompositionError
        If LAPACK fails to converge with both the divide-and-conquer and the
        QR-iteration drivers.
    """
    a = as_matrix(a)
    m, n = a.shape
    if full is None:
        full = max(m, n) <= cap
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=full)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=full, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(f"SVD did not converge for {m}x{n} matrix") from exc
    return Svd(u=u, sigma=s, vt=vt)


def rank_tolerance(sigma_max: float, m: int, n: int) -> float:
    return max(m, n) * EPS * sigma_max


def rank_info(dec: Svd, m: int | None = None, n: int | None = None) -> RankInfo:
    """Numerical rank of a decomposed matrix.

    Singular values at or below ``max(m, n) * eps * sigma_max`` count as zero.
    """
    if m is None or n is None:
        m, n = dec.shape
    sigma = dec.sigma
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    tol = rank_tolerance(sigma_max, m, n)
    above = sigma[sigma > tol]
    if above.size == 0:
        raise ZeroMatrixError(f"all singular values of the {m}x{n} matrix are zero")
    return RankInfo(
        numerical_rank=int(above.size),
        sigma_min_effective=float(above[-1]),
        sigma_max=sigma_max,
        tolerance=float(tol),
    )


def pinv_apply(a, b, dec: Svd | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution ``x = pinv(a) @ b``.

    Computed as ``V diag(1/sigma) U^T b`` over the singular values above the
    rank tolerance. A precomputed decomposition of ``a`` may be passed in.
    """
    a = as_matrix(a)
    m, n = a.shape
    b = as_vector(b, m, name="right-hand side")
    if dec is None:
        dec = svd(a, full=False)
    sigma = dec.sigma
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros(n)
    keep = sigma > rank_tolerance(float(sigma[0]), m, n)
    r = int(keep.sum())
    coef = (dec.u[:, :r].T @ b) / sigma[:r]
    return dec.vt[:r].T @ coef


def spectral_norm(a) -> float:
    a = as_matrix(a)
    return float(np.linalg.svd(a, compute_uv=False)[0])


def augmented_solve(a, b) -> np.ndarray:
    """Minimum-norm solution from the nonsingular block system.

    Solves ``[[I, A^T], [A, 0]] [x; y] = [0; b]`` and returns ``x``. Only valid
    when ``a`` has full row rank. The system is assembled sparse so that
    wide matrices do not need an (n+m)^2 dense buffer.
    """
    a = as_matrix(a)
    m, n = a.shape
    b = as_vector(b, m, name="right-hand side")
    info = rank_info(svd(a, full=False), m, n)
    if info.numerical_rank < m:
        raise SingularSystemError(
            f"augmented system is singular: {m}x{n} matrix has rank {info.numerical_rank} < {m}"
        )
    a_sp = scipy.sparse.csc_matrix(a)
    kkt = scipy.sparse.bmat(
        [[scipy.sparse.identity(n, format="csc"), a_sp.T], [a_sp, None]], format="csc"
    )
    rhs = np.concatenate([np.zeros(n), b])
    sol = scipy.sparse.linalg.spsolve(kkt, rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError(f"augmented system for {m}x{n} matrix could not be solved")
    return np.asarray(sol[:n])
