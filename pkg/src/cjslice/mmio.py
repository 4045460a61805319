"""Matrix Market coordinate files for Hermitian operators."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .linalg import SparseHermitian

log = logging.getLogger(__name__)

_FIELDS = ("real", "complex", "integer")
_SYMMETRIES = ("symmetric", "hermitian", "general")


class MatrixMarketError(ValueError):
    pass


def _read_header(path: Path) -> tuple[str, str, str, str]:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        first = fh.readline()
    parts = first.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(f"{path}: missing '%%MatrixMarket' header line")
    obj, fmt, field, symmetry = (p.lower() for p in parts[1:])
    return obj, fmt, field, symmetry


def load_matrix_market(path, rtol: float = 1e-10) -> SparseHermitian:
    """Read a coordinate Matrix Market file into a :class:`SparseHermitian`.

    Symmetric and Hermitian storage is expanded. A ``general`` file is
    accepted when its content is Hermitian to ``rtol`` (relative to the
    largest entry); a warning is logged and the stored matrix is the
    Hermitian part.
    """
    path = Path(path)
    obj, fmt, field, symmetry = _read_header(path)
    if obj != "matrix":
        raise MatrixMarketError(f"{path}: object must be 'matrix', got {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only the coordinate format is supported, got {fmt!r}")
    if field == "pattern":
        raise MatrixMarketError(f"{path}: pattern files carry no values")
    if field not in _FIELDS:
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")
    try:
        rows, cols, _, _, _, _ = scipy.io.mminfo(str(path))
        mat = scipy.io.mmread(str(path))
    except Exception as exc:  # scipy raises a mix of ValueError/IndexError
        raise MatrixMarketError(f"{path}: could not parse entries: {exc}") from exc
    if rows != cols:
        raise MatrixMarketError(f"{path}: matrix is {rows}x{cols}, must be square")
    mat = sp.csr_matrix(mat)
    if field == "integer":
        mat = mat.astype(np.float64)
    if symmetry == "general":
        scale = float(abs(mat).max()) if mat.nnz else 0.0
        diff = mat - mat.conj().T
        err = float(abs(diff).max()) if diff.nnz else 0.0
        if err > rtol * scale:
            raise MatrixMarketError(
                f"{path}: matrix is not Hermitian (max|A - A^H| = {err:.3e}, tolerance {rtol * scale:.3e})"
            )
        log.warning("%s: general storage with Hermitian content; using the Hermitian part", path)
        return SparseHermitian.from_matrix(mat, symmetrize=True)
    return SparseHermitian.from_matrix(mat)


def write_matrix_market(path, A: SparseHermitian, comment: str = "") -> None:
    symmetry = "hermitian" if A.is_complex else "symmetric"
    scipy.io.mmwrite(str(path), A.matrix.tocoo(), comment=comment, symmetry=symmetry, precision=17)
