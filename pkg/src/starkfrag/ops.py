"""Sparse operators and the matrix-exponential-times-vector kernel.

Storage sits on scipy CSR; assembly goes through sorted triplets with
duplicate summation so a rebuild from the same triplets is bit-identical.
``expm_multiply`` computes exp(-i t H) v for hermitian H: below
``DENSE_DIM_MAX`` it diagonalises once (exact), above it runs a restarted
Lanczos iteration with full reorthogonalisation and an adaptive substep
fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DENSE_DIM_MAX = 4096


class NumericError(RuntimeError):
    """Propagation or assembly produced non-finite or non-convergent numbers."""


@dataclass
class SparseOperator:
    """A dim x dim sparse matrix plus the hermiticity promise of its builder."""

    matrix: sp.csr_matrix
    hermitian: bool = False
    _eig: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @classmethod
    def from_triplets(cls, dim, rows, cols, vals, hermitian=False):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.complex128)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= dim or cols.min() < 0 or cols.max() >= dim):
            raise ValueError(f"triplet index outside 0..{dim - 1}")
        if len(vals) and not np.all(np.isfinite(vals)):
            raise NumericError("non-finite value in operator triplets")
        m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(m, hermitian=hermitian)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.dim:
            raise ValueError(f"vector length {v.shape[0]} != operator dim {self.dim}")
        return self.matrix @ v

    def hermiticity_defect(self) -> float:
        """max |A - A^dagger| entry, useful when hermitian is not promised."""
        d = self.matrix - self.matrix.getH()
        return float(np.abs(d.data).max()) if d.nnz else 0.0

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self):
        """Row-major sorted (row, col, value) triplets of stored entries."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def write_triplets(self, path) -> None:
        """Dump entries as text lines "row col re im" in row-major order."""
        rows, cols, vals = self.triplets()
        with open(path, "w") as fh:
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def add_scaled(a: SparseOperator, b: SparseOperator, alpha: complex) -> SparseOperator:
    """a + alpha * b as a new operator."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    herm = a.hermitian and b.hermitian and complex(alpha).imag == 0.0
    m = (a.matrix + alpha * b.matrix).tocsr()
    m.sort_indices()
    return SparseOperator(m, hermitian=herm)


def _dense_eig(op: SparseOperator):
    if op._eig is None:
        w, V = np.linalg.eigh(op.to_dense())
        op._eig = (w, V)
    return op._eig


def _lanczos_expm(H, v, t, tol, m_max=48):
    """One Lanczos pass for exp(-i t H) v; returns (w, error_estimate)."""
    dim = len(v)
    beta0 = np.linalg.norm(v)
    V = np.empty((m_max + 1, dim), dtype=np.complex128)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max + 1)
    V[0] = v / beta0
    m = 0
    for k in range(m_max):
        r = H @ V[k]
        if k:
            r -= beta[k] * V[k - 1]
        a = np.vdot(V[k], r).real
        alpha[k] = a
        r -= a * V[k]
        # full reorthogonalisation; m stays small so this is cheap
        r -= V[: k + 1].conj() @ r @ V[: k + 1]
        b = np.linalg.norm(r)
        beta[k + 1] = b
        m = k + 1
        if b < 1e-14 * beta0:
            break
        V[k + 1] = r / b
    T = np.diag(alpha[:m]) + np.diag(beta[1:m], 1) + np.diag(beta[1:m], -1)
    ew, eV = np.linalg.eigh(T)
    small = eV @ (np.exp(-1j * t * ew) * eV[0].conj())
    w = (small * beta0) @ V[:m]
    # residual estimate: weight leaking past the Krylov space
    err = float(beta[m] * abs(small[m - 1]) * abs(t))
    return w, err


def expm_multiply(op: SparseOperator, v: np.ndarray, t: float, tol: float = 1e-9):
    """exp(-i t H) v for hermitian H, preserving the norm of v.

    Dense path (dim <= DENSE_DIM_MAX): exact through one cached
    eigendecomposition.  Iterative path: restarted Lanczos; when a restart
    fails to reach tol the step is halved and retried.
    """
    if not op.hermitian:
        raise ValueError("expm_multiply needs a hermitian operator")
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[0] != op.dim:
        raise ValueError(f"vector length {v.shape[0]} != operator dim {op.dim}")
    if t == 0.0:
        return v.copy()
    if op.dim <= DENSE_DIM_MAX:
        w_eig, V = _dense_eig(op)
        if v.ndim == 1:
            out = V @ (np.exp(-1j * t * w_eig) * (V.conj().T @ v))
        else:
            out = V @ (np.exp(-1j * t * w_eig)[:, None] * (V.conj().T @ v))
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite result in dense propagation")
        return out
    if v.ndim != 1:
        raise ValueError("iterative path propagates one vector at a time")
    # shift out the mean diagonal to keep the Lanczos phase span small
    mu = float(op.matrix.diagonal().real.mean())
    H = op.matrix - mu * sp.identity(op.dim, dtype=np.complex128, format="csr")
    norm0 = np.linalg.norm(v)

    def step(w, dt, depth):
        if depth > 40:
            raise NumericError("expm_multiply failed to converge after 40 halvings")
        out, err = _lanczos_expm(H, w, dt, tol)
        if err > tol * norm0:
            half = step(w, dt / 2, depth + 1)
            return step(half, dt / 2, depth + 1)
        return out

    out = step(v, t, 0) * np.exp(-1j * t * mu)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite result in Lanczos propagation")
    # the Lanczos step is unitary on the Krylov space; rescaling guards
    # against tolerance-level drift over long chains of calls
    nrm = np.linalg.norm(out)
    if abs(nrm - norm0) > 1e-6 * max(norm0, 1.0):
        raise NumericError(f"norm drift {abs(nrm - norm0):.2e} in propagation")
    return out * (norm0 / nrm)
