"""Sparse Hermitian operator and the small dense kernels used by the solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp


class NotHermitianError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def _abs_sums(mat: sp.csr_matrix) -> tuple[float, float]:
    absm = abs(mat)
    norm1 = float(absm.sum(axis=0).max()) if mat.nnz else 0.0
    norm_inf = float(absm.sum(axis=1).max()) if mat.nnz else 0.0
    return norm1, norm_inf


@dataclass(frozen=True, eq=False)
class SparseHermitian:
    """Immutable CSR storage of a real symmetric or complex Hermitian matrix.

    Construct through :meth:`from_matrix`, which validates Hermiticity and
    caches the induced 1- and infinity-norms.
    """

    matrix: sp.csr_matrix
    norm1: float = field(init=False)
    norm_inf: float = field(init=False)

    def __post_init__(self) -> None:
        mat = self.matrix
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {mat.shape}")
        if mat.shape[0] < 1:
            raise DimensionError("matrix dimension must be at least 1")
        norm1, norm_inf = _abs_sums(mat)
        object.__setattr__(self, "norm1", norm1)
        object.__setattr__(self, "norm_inf", norm_inf)
        mat.data.setflags(write=False)

    @classmethod
    def from_matrix(cls, mat, symmetrize: bool = False, rtol: float = 1e-14) -> "SparseHermitian":
        """Wrap a dense or sparse square matrix.

        With ``symmetrize=True`` the stored matrix is ``(M + M^H)/2``;
        otherwise the input must already be Hermitian within
        ``rtol * max|M_ij|``.
        """
        mat = sp.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {mat.shape}")
        if not np.iscomplexobj(mat.data):
            mat = mat.astype(np.float64)
        else:
            mat = mat.astype(np.complex128)
        if symmetrize:
            mat = ((mat + mat.conj().T) * 0.5).tocsr()
        else:
            scale = float(abs(mat).max()) if mat.nnz else 0.0
            diff = mat - mat.conj().T
            err = float(abs(diff).max()) if diff.nnz else 0.0
            if err > rtol * scale:
                raise NotHermitianError(
                    f"matrix is not Hermitian: max|A - A^H| = {err:.3e} > {rtol:.1e} * {scale:.3e}"
                )
        if np.iscomplexobj(mat.data) and not np.any(mat.data.imag):
            mat = mat.real.tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def dtype(self):
        return self.matrix.dtype

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix.data)

    @property
    def norm_est(self) -> float:
        """``sqrt(||A||_1 ||A||_inf)``, an upper bound on the spectral norm."""
        return float(np.sqrt(self.norm1 * self.norm_inf))

    def __matmul__(self, X):
        return block_matvec(self, X)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def block_matvec(A: SparseHermitian, X) -> np.ndarray:
    """Return ``A @ X`` for a vector or an n-by-k block."""
    X = np.asarray(X)
    if X.ndim not in (1, 2) or X.shape[0] != A.n:
        raise DimensionError(f"block has shape {X.shape}, operator dimension is {A.n}")
    return A.matrix @ X


@dataclass(frozen=True)
class SpectralBounds:
    lambda_min_est: float
    lambda_max_est: float
    margin: float = 0.0

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")

    @property
    def is_degenerate(self) -> bool:
        lo, hi = self.lambda_min_est, self.lambda_max_est
        scale = max(abs(lo), abs(hi), np.finfo(float).tiny)
        return not hi - lo > 64 * np.finfo(float).eps * scale

    @property
    def center(self) -> float:
        return 0.5 * (self.lambda_max_est + self.lambda_min_est)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.lambda_max_est - self.lambda_min_est)

    @property
    def norm(self) -> float:
        """``max(|lambda_min|, |lambda_max|)`` of the bounds."""
        return max(abs(self.lambda_min_est), abs(self.lambda_max_est))

    def to_dict(self) -> dict:
        return {
            "lambda_min_est": self.lambda_min_est,
            "lambda_max_est": self.lambda_max_est,
            "margin": self.margin,
        }


def estimate_bounds(A: SparseHermitian, margin: float = 0.01, iters: int = 80,
                    seed: int = 0) -> SpectralBounds:
    """Lanczos estimate of the extreme eigenvalues, inflated by ``margin``.

    The Krylov basis is kept and fully reorthogonalized. On breakdown the
    recurrence restarts from a fresh seeded vector orthogonal to the basis,
    at most three times; after that the Ritz values collected so far are used.
    """
    if iters < 20:
        raise ValueError("iters must be at least 20")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    n = A.n
    m = min(iters, n)
    rng = np.random.default_rng(seed)
    dtype = np.complex128 if A.is_complex else np.float64
    basis = np.zeros((n, m), dtype=dtype)
    scale = max(A.norm_est, np.finfo(float).tiny)
    restarts = 0

    def fresh(k):
        for _ in range(4):
            v = rng.standard_normal(n)
            if A.is_complex:
                v = v + 1j * rng.standard_normal(n)
            v = v - basis[:, :k] @ (basis[:, :k].conj().T @ v)
            v = v - basis[:, :k] @ (basis[:, :k].conj().T @ v)
            nv = np.linalg.norm(v)
            if nv > 1e-8 * np.sqrt(n):
                return v / nv
        return None

    v = fresh(0)
    if v is None:
        raise RuntimeError("could not draw a nonzero Lanczos start vector")
    basis[:, 0] = v
    k = 1
    while k < m:
        w = block_matvec(A, basis[:, k - 1])
        w = w - basis[:, :k] @ (basis[:, :k].conj().T @ w)
        w = w - basis[:, :k] @ (basis[:, :k].conj().T @ w)
        beta = np.linalg.norm(w)
        if beta <= 1e-12 * scale:
            if restarts == 3:
                break
            restarts += 1
            v = fresh(k)
            if v is None:
                break
            basis[:, k] = v
        else:
            basis[:, k] = w / beta
        k += 1

    Q = basis[:, :k]
    T = Q.conj().T @ block_matvec(A, Q)
    theta = hermitian_eig(T)[0]
    tmin, tmax = float(theta[0]), float(theta[-1])
    pad = margin * (tmax - tmin)
    return SpectralBounds(tmin - pad, tmax + pad, margin)


def dense_qr(B, mode: str = "economic"):
    """Householder QR ``B = Q R``.

    ``mode="r"`` returns only ``R`` and never forms ``Q``. Rank deficiency
    is allowed; ``R`` then has tiny diagonal entries.
    """
    B = np.asarray(B)
    if B.ndim != 2:
        raise DimensionError("dense_qr expects a 2-D block")
    if mode == "r":
        return la.qr(B, mode="r", check_finite=False)[0]
    if mode != "economic":
        raise ValueError(f"unknown mode {mode!r}")
    if B.shape[0] < B.shape[1]:
        raise DimensionError("dense_qr requires rows >= cols")
    return la.qr(B, mode="economic", check_finite=False)


def dense_svd(B, full_matrices: bool = False):
    """SVD with singular values in nonincreasing order.

    Returns ``(U, s, Vh)``; ``B = U @ diag(s) @ Vh``.
    """
    B = np.asarray(B)
    if B.size == 0:
        raise DimensionError("dense_svd needs a nonempty block")
    try:
        return la.svd(B, full_matrices=full_matrices, lapack_driver="gesvd", check_finite=False)
    except la.LinAlgError:
        warnings.warn("gesvd did not converge; retrying with gesdd", RuntimeWarning, stacklevel=2)
        return la.svd(B, full_matrices=full_matrices, lapack_driver="gesdd", check_finite=False)


def hermitian_eig(B):
    """Eigenvalues (ascending) and orthonormal eigenvectors of ``(B + B^H)/2``."""
    B = np.asarray(B)
    Bs = 0.5 * (B + B.conj().T)
    return la.eigh(Bs, check_finite=False)
