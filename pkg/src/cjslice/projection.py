"""Rayleigh-Ritz and refined Rayleigh-Ritz extraction from an orthonormal basis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filters import Window
from .linalg import SparseHermitian, block_matvec, dense_qr, dense_svd, hermitian_eig

# Smallest singular values closer than this are treated as a tie.
TIE_ATOL = 1e-14


@dataclass
class RitzSet:
    values: np.ndarray
    prim_vectors: np.ndarray
    vectors: np.ndarray
    _resnorms: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.values.size

    def residual_norms(self, A: SparseHermitian) -> np.ndarray:
        if self._resnorms is None:
            X = self.vectors
            R = block_matvec(A, X) - X * self.values[None, :]
            self._resnorms = np.linalg.norm(R, axis=0)
        return self._resnorms


def rayleigh_ritz(A: SparseHermitian, U, AU=None) -> RitzSet:
    """All Ritz pairs of ``A`` on ``range(U)``, values ascending."""
    U = np.asarray(U)
    if AU is None:
        AU = block_matvec(A, U)
    vals, Y = hermitian_eig(U.conj().T @ AU)
    return RitzSet(vals, Y, U @ Y)


def select_potential(ritz: RitzSet, window: Window) -> np.ndarray:
    """Indices of Ritz values in the closed window ``[a, b]``."""
    return np.flatnonzero(window.contains(ritz.values))


@dataclass
class ReducedPencil:
    """``R`` factor of ``(U, AU) = Q (J, H)``; ``Q`` is never formed."""

    J: np.ndarray
    H: np.ndarray

    @property
    def dim(self) -> int:
        return self.J.shape[1]


def build_reduced_pencil(A: SparseHermitian, U, AU=None) -> ReducedPencil:
    U = np.asarray(U)
    if AU is None:
        AU = block_matvec(A, U)
    p = U.shape[1]
    R = dense_qr(np.hstack([U, AU]), mode="r")
    return ReducedPencil(R[:, :p], R[:, p:])


def _min_right_singular(B: np.ndarray) -> tuple[np.ndarray, float, bool]:
    _, s, Vh = dense_svd(B, full_matrices=True)
    ncol = B.shape[1]
    sig = np.zeros(ncol)
    sig[: s.size] = s
    smin = sig[-1]
    tied = np.flatnonzero(sig - smin <= TIE_ATOL)
    # Vh rows are in the same order as sig; the first tied row wins.
    pick = int(tied[0])
    z = Vh[pick].conj()
    return z, float(smin), tied.size > 1


def refined_vector(pencil: ReducedPencil, lambda_tilde: float) -> tuple[np.ndarray, float, bool]:
    """Right singular vector of ``H - lambda_tilde J`` for its smallest singular value.

    Returns ``(z, sigma_min, ambiguous)``.
    """
    return _min_right_singular(pencil.H - lambda_tilde * pencil.J)


def refined_vector_direct(A: SparseHermitian, U, lambda_tilde: float, AU=None):
    """Same minimization through the SVD of the tall ``(A - lambda I) U``."""
    U = np.asarray(U)
    if AU is None:
        AU = block_matvec(A, U)
    return _min_right_singular(AU - lambda_tilde * U)


def _phase_fix(x: np.ndarray) -> complex | float:
    i = int(np.argmax(np.abs(x)))
    if x[i] == 0:
        return 1.0
    ph = np.abs(x[i]) / x[i]
    return ph if np.iscomplexobj(x) else float(np.sign(ph.real))


@dataclass
class RefinedSet:
    base_values: np.ndarray
    prim_refined: np.ndarray
    vectors: np.ndarray
    ref_values: np.ndarray
    residuals: np.ndarray
    resnorms: np.ndarray
    shift_resnorms: np.ndarray
    min_singvals: np.ndarray
    ambiguous: np.ndarray
    norm_a: float = 1.0

    def __len__(self) -> int:
        return self.ref_values.size

    @property
    def relres(self) -> np.ndarray:
        return self.resnorms / self.norm_a

    def subset(self, idx) -> "RefinedSet":
        idx = np.asarray(idx, dtype=int)
        return RefinedSet(
            self.base_values[idx], self.prim_refined[:, idx], self.vectors[:, idx],
            self.ref_values[idx], self.residuals[:, idx], self.resnorms[idx],
            self.shift_resnorms[idx], self.min_singvals[idx], self.ambiguous[idx], self.norm_a,
        )


def refine_set(A: SparseHermitian, U, pencil: ReducedPencil, lambdas, norm_a: float = 1.0,
               AU=None, method: str = "qr") -> RefinedSet:
    """Refined Ritz vectors, values and residuals for each shift in ``lambdas``.

    ``method="direct"`` uses the SVD of ``(A - lambda I) U`` instead of the
    reduced pencil. Each vector is phase-normalized so that its largest
    entry is real and positive.
    """
    U = np.asarray(U)
    lambdas = np.asarray(lambdas, dtype=float)
    p, m = U.shape[1], lambdas.size
    if AU is None:
        AU = block_matvec(A, U)
    dtype = np.result_type(U.dtype, A.dtype)
    Z = np.zeros((p, m), dtype=dtype)
    sig = np.zeros(m)
    amb = np.zeros(m, dtype=bool)
    for i, lam in enumerate(lambdas):
        if method == "qr":
            z, s, flag = refined_vector(pencil, lam)
        elif method == "direct":
            z, s, flag = refined_vector_direct(A, U, lam, AU=AU)
        else:
            raise ValueError(f"unknown refined method {method!r}")
        Z[:, i], sig[i], amb[i] = z, s, flag
    X = U @ Z
    nrm = np.linalg.norm(X, axis=0)
    nrm[nrm == 0] = 1.0
    X /= nrm
    Z /= nrm
    for i in range(m):
        ph = _phase_fix(X[:, i])
        X[:, i] *= ph
        Z[:, i] *= ph
    AX = AU @ Z
    ref_vals = np.real(np.einsum("ij,ij->j", X.conj(), AX))
    Rres = AX - X * ref_vals[None, :]
    shift_res = np.linalg.norm(AX - X * lambdas[None, :], axis=0)
    return RefinedSet(lambdas.copy(), Z, X, ref_vals, Rres, np.linalg.norm(Rres, axis=0),
                      shift_res, sig, amb, float(norm_a))
