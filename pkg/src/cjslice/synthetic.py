"""Test operators with prescribed spectra and exactly known eigenvectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import ortho_group, unitary_group

from .linalg import SparseHermitian

BASES = ("dense", "banded", "diagonal")


@dataclass
class SyntheticProblem:
    A: SparseHermitian
    eigenvalues: np.ndarray  # ascending
    eigenvectors: object  # n x n, columns match eigenvalues; dense or sparse

    def reference(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Exact eigenvalues in ``[a, b]`` and an orthonormal basis of their eigenvectors."""
        idx = np.flatnonzero((self.eigenvalues >= a) & (self.eigenvalues <= b))
        X = self.eigenvectors[:, idx]
        if sp.issparse(X):
            X = X.toarray()
        return self.eigenvalues[idx], np.asarray(X)

    def n_ev(self, a: float, b: float) -> int:
        return int(np.count_nonzero((self.eigenvalues >= a) & (self.eigenvalues <= b)))


def make_spectrum(n: int, lo: float, hi: float, seed: int = 0, kind: str = "uniform",
                  doubles=(), clusters=(), pinned=()) -> np.ndarray:
    """Ascending spectrum of length ``n`` spread over ``[lo, hi]``.

    ``doubles`` are values inserted with multiplicity two; each
    ``(center, spacing)`` in ``clusters`` inserts ``center`` and
    ``center + spacing``; ``pinned`` values are inserted once. The bulk
    fills the remaining slots, either evenly (``linspace``) or uniformly at
    random (``uniform``). ``lo`` and ``hi`` are always present.
    """
    special: list[float] = [lo, hi]
    for v in doubles:
        special += [float(v), float(v)]
    for center, spacing in clusters:
        special += [float(center), float(center) + float(spacing)]
    special += [float(v) for v in pinned]
    m = n - len(special)
    if m < 0:
        raise ValueError("too many prescribed eigenvalues for n")
    if kind == "linspace":
        bulk = np.linspace(lo, hi, m + 2)[1:-1]
    elif kind == "uniform":
        bulk = np.random.default_rng(seed).uniform(lo, hi, m)
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    return np.sort(np.concatenate([bulk, special]))


def _block_orthogonal(n: int, block: int, offset: int, rng, complex_: bool) -> sp.csr_matrix:
    sizes = []
    if offset:
        sizes.append(offset)
    rest = n - offset
    sizes += [block] * (rest // block)
    if rest % block:
        sizes.append(rest % block)
    blocks = []
    for s in sizes:
        if s == 1:
            blocks.append(np.ones((1, 1)))
        elif complex_:
            blocks.append(unitary_group.rvs(s, random_state=rng))
        else:
            blocks.append(ortho_group.rvs(s, random_state=rng))
    return sp.block_diag(blocks, format="csr")


def synthetic_spectrum(n: int, eigenvalues, seed: int = 0, basis: str = "banded",
                       block: int = 8, complex_: bool = False) -> SyntheticProblem:
    """Build ``A = Q diag(eigenvalues) Q^H`` with a seeded random unitary ``Q``.

    ``basis="dense"`` draws a Haar-random ``Q`` (intended for n <= 5000);
    ``"banded"`` uses the product of two staggered block-diagonal random
    orthogonal matrices, so ``A`` stays sparse; ``"diagonal"`` takes ``Q = I``.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    if lam.size != n:
        raise ValueError("need exactly n eigenvalues")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if basis == "diagonal":
        Q = sp.identity(n, format="csr")
        Q = Q[:, perm]
    elif basis == "dense":
        if n > 5000:
            raise ValueError("dense construction is limited to n <= 5000")
        gen = unitary_group if complex_ else ortho_group
        Q = gen.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
        Q = Q[:, perm]
    elif basis == "banded":
        Q1 = _block_orthogonal(n, block, 0, rng, complex_)
        Q2 = _block_orthogonal(n, block, block // 2, rng, complex_)
        Q = (Q2 @ Q1).tocsc()[:, perm]
    else:
        raise ValueError(f"unknown basis {basis!r}; expected one of {BASES}")
    if sp.issparse(Q):
        mat = (Q @ sp.diags(lam) @ Q.conj().T).tocsr()
        mat.data[np.abs(mat.data) < 1e-300] = 0.0
    else:
        mat = (Q * lam[None, :]) @ Q.conj().T
    A = SparseHermitian.from_matrix(mat, symmetrize=True)
    return SyntheticProblem(A, lam, Q)
