import numpy as np
import pytest
import scipy.sparse as sp

from cjslice.filters import Window
from cjslice.linalg import SparseHermitian
from cjslice.projection import (
    build_reduced_pencil,
    rayleigh_ritz,
    refine_set,
    refined_vector,
    refined_vector_direct,
    select_potential,
)

from conftest import random_orthonormal, random_symmetric


def diag_op(values):
    return SparseHermitian.from_matrix(sp.diags(np.asarray(values, dtype=float)))


class TestRayleighRitz:
    def test_invariant_subspace(self):
        A = diag_op([1, 2, 3])
        r = rayleigh_ritz(A, np.eye(3)[:, :2])
        np.testing.assert_allclose(r.values, [1, 2])
        np.testing.assert_allclose(np.abs(r.vectors), np.eye(3)[:, :2], atol=1e-15)

    def test_square_unitary(self):
        M = random_symmetric(10, 1)
        U = random_orthonormal(10, 10, 2)
        r = rayleigh_ritz(SparseHermitian.from_matrix(M), U)
        np.testing.assert_allclose(r.values, np.linalg.eigvalsh(M), atol=1e-12)

    def test_interlacing(self):
        M = random_symmetric(80, 3)
        ev = np.linalg.eigvalsh(M)
        r = rayleigh_ritz(SparseHermitian.from_matrix(M), random_orthonormal(80, 8, 4))
        assert np.all(r.values >= ev[0] - 1e-12) and np.all(r.values <= ev[-1] + 1e-12)
        np.testing.assert_allclose(np.linalg.norm(r.prim_vectors, axis=0), 1.0, atol=1e-13)

    def test_residual_norms(self):
        M = random_symmetric(30, 3)
        A = SparseHermitian.from_matrix(M)
        r = rayleigh_ritz(A, random_orthonormal(30, 5, 1))
        ref = np.linalg.norm(M @ r.vectors - r.vectors * r.values, axis=0)
        np.testing.assert_allclose(r.residual_norms(A), ref, atol=1e-13)


class TestSelectPotential:
    def _ritz(self, values):
        class R:
            pass
        r = R()
        r.values = np.asarray(values, dtype=float)
        return r

    def test_membership(self):
        assert select_potential(self._ritz([0.9, 1.5, 3.1]), Window(1, 3, 0, 0)).tolist() == [1]

    def test_closed_endpoint(self):
        assert select_potential(self._ritz([1.0, 3.0]), Window(1, 3, 0, 0)).tolist() == [0, 1]

    def test_empty(self):
        assert select_potential(self._ritz([5.0]), Window(1, 3, 0, 0)).size == 0


class TestReducedPencil:
    def test_identity(self):
        A = SparseHermitian.from_matrix(sp.identity(8))
        U = random_orthonormal(8, 3, 1)
        pen = build_reduced_pencil(A, U)
        np.testing.assert_allclose(pen.H, pen.J, atol=1e-14)
        z, s, amb = refined_vector(pen, 1.0)
        assert s <= 1e-14 and amb

    def test_orthonormal_J(self):
        M = random_symmetric(40, 2)
        pen = build_reduced_pencil(SparseHermitian.from_matrix(M), random_orthonormal(40, 6, 3))
        np.testing.assert_allclose(np.linalg.svd(pen.J, compute_uv=False), 1.0, atol=1e-12)

    def test_diagonal_case(self):
        vals = np.array([0.1, 0.5, 0.9, 1.3, 2.0, 3.0])
        A = diag_op(vals)
        idx = [1, 3, 4]
        U = np.eye(6)[:, idx]
        pen = build_reduced_pencil(A, U)
        for lam in (0.4, 1.25, 2.7):
            _, s, _ = refined_vector(pen, lam)
            assert s == pytest.approx(np.min(np.abs(vals[idx] - lam)), abs=1e-14)

    def test_matches_direct_sigma(self):
        M = random_symmetric(60, 5)
        A = SparseHermitian.from_matrix(M)
        U = random_orthonormal(60, 6, 6)
        pen = build_reduced_pencil(A, U)
        for lam in np.random.default_rng(0).uniform(-3, 3, 5):
            s_ref = np.linalg.svd((M - lam * np.eye(60)) @ U, compute_uv=False)[-1]
            assert abs(refined_vector(pen, lam)[1] - s_ref) <= 1e-11 * max(1.0, s_ref)


class TestRefinedVector:
    def test_exact_eigenpair(self):
        vals = np.arange(1.0, 9.0)
        A = diag_op(vals)
        x = np.eye(8)[:, 3]
        U = np.column_stack([x, random_orthonormal(8, 2, 1)])
        U = np.linalg.qr(U)[0]
        z, s, _ = refined_vector(build_reduced_pencil(A, U), 4.0)
        assert s <= 1e-14
        assert abs(abs(np.vdot(U @ z, x)) - 1) <= 1e-13

    def test_direct_diagonal(self):
        vals = np.array([0.1, 0.5, 0.9, 1.3])
        z, s, _ = refined_vector_direct(diag_op(vals), np.eye(4)[:, :3], 0.8)
        assert np.argmax(np.abs(z)) == 2
        assert s == pytest.approx(0.1)

    def test_direct_far_shift(self):
        M = random_symmetric(30, 2)
        ev = np.linalg.eigvalsh(M)
        lam = ev[-1] + 10
        _, s, _ = refined_vector_direct(SparseHermitian.from_matrix(M), random_orthonormal(30, 4, 1), lam)
        assert s >= 10 - 1e-12

    def test_zero_matrix(self):
        A = SparseHermitian.from_matrix(sp.csr_matrix((5, 5)))
        _, s, _ = refined_vector_direct(A, np.eye(5)[:, :2], 0.0)
        assert s == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_qr_vs_direct(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(40, 300))
        p = int(rng.integers(2, 12))
        cplx = seed % 3 == 0
        M = random_symmetric(n, seed, complex_=cplx)
        A = SparseHermitian.from_matrix(M)
        U = random_orthonormal(n, p, seed + 100, complex_=cplx)
        pen = build_reduced_pencil(A, U)
        lam = rng.uniform(-2, 2)
        zq, sq, _ = refined_vector(pen, lam)
        zd, sd, _ = refined_vector_direct(A, U, lam)
        assert abs(sq - sd) <= 1e-10 * sd
        assert abs(np.vdot(zq, zd)) >= 1 - 1e-8


class TestRefineSet:
    def setup_method(self):
        M = random_symmetric(120, 8)
        self.M = M
        self.A = SparseHermitian.from_matrix(M)
        self.U = random_orthonormal(120, 10, 9)
        self.ritz = rayleigh_ritz(self.A, self.U)
        self.pen = build_reduced_pencil(self.A, self.U)

    def test_optimality_chain(self):
        lams = self.ritz.values
        rs = refine_set(self.A, self.U, self.pen, lams)
        nrmA = np.linalg.norm(self.M, 2)
        ritz_res = self.ritz.residual_norms(self.A)
        assert np.all(rs.resnorms <= rs.shift_resnorms + 1e-13 * nrmA)
        assert np.all(rs.shift_resnorms <= ritz_res + 1e-13 * nrmA)
        ev = np.linalg.eigvalsh(self.M)
        assert np.all((rs.ref_values >= ev[0] - 1e-12) & (rs.ref_values <= ev[-1] + 1e-12))

    def test_definitions(self):
        rs = refine_set(self.A, self.U, self.pen, self.ritz.values[:4])
        X = rs.vectors
        np.testing.assert_allclose(np.linalg.norm(rs.prim_refined, axis=0), 1.0, atol=1e-13)
        np.testing.assert_allclose(X, self.U @ rs.prim_refined, atol=1e-13)
        lam = np.einsum("ij,ij->j", X, self.M @ X)
        np.testing.assert_allclose(rs.ref_values, lam, atol=1e-12)
        np.testing.assert_allclose(rs.resnorms, np.linalg.norm(self.M @ X - X * lam, axis=0), atol=1e-12)
        # phase: largest entry real positive
        for i in range(X.shape[1]):
            assert X[np.argmax(np.abs(X[:, i])), i] > 0

    def test_exact_subspace(self):
        lam, Xe = np.linalg.eigh(self.M)
        U = Xe[:, 50:56]
        pen = build_reduced_pencil(self.A, U)
        rs = refine_set(self.A, U, pen, rayleigh_ritz(self.A, U).values)
        assert np.all(rs.resnorms <= 1e-13 * np.linalg.norm(self.M, 2))

    def test_direct_method(self):
        a = refine_set(self.A, self.U, self.pen, self.ritz.values[:3])
        b = refine_set(self.A, self.U, self.pen, self.ritz.values[:3], method="direct")
        np.testing.assert_allclose(a.ref_values, b.ref_values, atol=1e-12)
        np.testing.assert_allclose(np.abs(np.einsum("ij,ij->j", a.vectors, b.vectors)), 1.0, atol=1e-8)

    def test_deterministic(self):
        a = refine_set(self.A, self.U, self.pen, self.ritz.values)
        b = refine_set(self.A, self.U, self.pen, self.ritz.values)
        np.testing.assert_array_equal(a.vectors, b.vectors)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            refine_set(self.A, self.U, self.pen, self.ritz.values[:1], method="nope")
