"""Sparse direct factorization and the dense Schur kernel.

Compressed row storage is ``scipy.sparse.csr_matrix``; the LU factors come
from SuperLU with a minimum-degree ordering on the pattern of ``A^T + A``,
which suits the structurally symmetric finite-element pencils.  The dense
Schur step uses LAPACK through ``scipy.linalg``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "COUNTERS",
    "SingularShiftError",
    "SchurConvergenceError",
    "LuFactors",
    "lu_factor",
    "as_csr",
    "hessenberg_eigs",
    "ordered_schur",
    "schur_eigenvalues",
]

PIVOT_THRESHOLD = 1e-12

# process-wide instrumentation, read by tests of the offline/online split
COUNTERS = {"factorizations": 0, "eigensolves": 0}


class SingularShiftError(ArithmeticError):
    """The shifted matrix is numerically singular; move the shift."""


class SchurConvergenceError(ArithmeticError):
    """Dense QR iteration failed to converge or lost accuracy."""


def as_csr(m) -> sp.csr_matrix:
    """CSR copy with sorted, duplicate-free column indices."""
    out = sp.csr_matrix(m, dtype=float, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    return out


class LuFactors:
    """``P m Q = L U`` with a solve for ``m x = b`` and ``m^T x = b``."""

    def __init__(self, matrix: sp.spmatrix, shift: float = 0.0, ordering: str = "MMD_AT_PLUS_A"):
        self.shift = float(shift)
        self.shape = matrix.shape
        csc = sp.csc_matrix(matrix, dtype=float)
        COUNTERS["factorizations"] += 1
        try:
            self._lu = spla.splu(
                csc,
                permc_spec=ordering,
                diag_pivot_thresh=1.0,
                options={"SymmetricMode": False},
            )
        except RuntimeError as exc:
            raise SingularShiftError(f"factorization failed at shift {self.shift}: {exc}") from exc
        udiag = np.abs(self._lu.U.diagonal())
        colmax = abs(csc).max(axis=0).toarray().ravel()[self._lu.perm_c]
        bad = udiag <= PIVOT_THRESHOLD * np.maximum(colmax, np.finfo(float).tiny)
        if np.any(bad):
            raise SingularShiftError(
                f"{int(bad.sum())} pivot(s) below {PIVOT_THRESHOLD:g} relative at shift {self.shift}"
            )

    @property
    def perm_r(self) -> np.ndarray:
        return self._lu.perm_r

    @property
    def perm_c(self) -> np.ndarray:
        return self._lu.perm_c

    @property
    def L(self) -> sp.csc_matrix:
        return self._lu.L

    @property
    def U(self) -> sp.csc_matrix:
        return self._lu.U

    @property
    def nnz(self) -> int:
        return self._lu.L.nnz + self._lu.U.nnz

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        b = np.asarray(b)
        trans = "T" if transpose else "N"
        if np.iscomplexobj(b):
            return self._lu.solve(b.real.copy(), trans=trans) + 1j * self._lu.solve(
                b.imag.copy(), trans=trans
            )
        return self._lu.solve(np.ascontiguousarray(b, dtype=float), trans=trans)


def lu_factor(m: sp.spmatrix, shift: float = 0.0, ordering: str = "MMD_AT_PLUS_A") -> LuFactors:
    """Factor ``m``; ``ordering`` is any SuperLU ``permc_spec`` (e.g. "COLAMD")."""
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    return LuFactors(m, shift, ordering)


def schur_eigenvalues(t: np.ndarray) -> np.ndarray:
    """Eigenvalues read off the 1x1 / 2x2 diagonal blocks of a real Schur form.

    Conjugate pairs come out as ``(a - bi, a + bi)`` with exactly equal
    real parts and negated imaginary parts.
    """
    n = t.shape[0]
    out = np.empty(n, dtype=complex)
    k = 0
    while k < n:
        if k + 1 < n and t[k + 1, k] != 0.0:
            a, b, c, d = t[k, k], t[k, k + 1], t[k + 1, k], t[k + 1, k + 1]
            re = 0.5 * (a + d)
            disc = 0.25 * (a - d) ** 2 + b * c
            im = np.sqrt(-disc) if disc < 0.0 else 0.0
            if im == 0.0:
                s = np.sqrt(disc)
                out[k], out[k + 1] = re - s, re + s
            else:
                out[k], out[k + 1] = complex(re, -im), complex(re, im)
            k += 2
        else:
            out[k] = t[k, k]
            k += 1
    return out


def hessenberg_eigs(h: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Real Schur decomposition ``h = Z T Z^T`` of a small dense matrix.

    Returns ``(eigenvalues, T, Z)``.  The backward error is checked against
    ``tol * ||h||``.
    """
    h = np.asarray(h, dtype=float)
    try:
        t, z = sla.schur(h, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SchurConvergenceError(f"QR iteration failed: {exc}") from exc
    _check_backward(h, t, z, tol)
    return schur_eigenvalues(t), t, z


def _check_backward(h, t, z, tol):
    scale = max(np.linalg.norm(h), np.finfo(float).tiny)
    err = np.linalg.norm(z @ t @ z.T - h)
    if err > tol * scale * max(1.0, np.sqrt(h.shape[0])):
        raise SchurConvergenceError(f"Schur backward error {err / scale:.3e} exceeds {tol:g}")


def ordered_schur(h: np.ndarray, select) -> tuple[np.ndarray, np.ndarray, int]:
    """Real Schur form with a selected part of the spectrum moved to the top.

    ``select(eigenvalues) -> bool array`` flags the wanted eigenvalues; if
    one member of a conjugate pair is flagged, both are kept.  Returns
    ``(T, Z, k)`` where the leading ``k x k`` block of ``T`` holds the
    selected eigenvalues.
    """
    h = np.asarray(h, dtype=float)
    t, z = sla.schur(h, output="real")
    vals = schur_eigenvalues(t)
    want = np.asarray(select(vals), dtype=bool).copy()
    n = len(vals)
    k = 0
    while k < n:
        if k + 1 < n and t[k + 1, k] != 0.0:
            want[k] = want[k + 1] = want[k] or want[k + 1]
            k += 2
        else:
            k += 1
    if want.all() or not want.any():
        return t, z, int(want.sum())
    trsen = sla.get_lapack_funcs("trsen", (t,))
    ts, zs, _, _, k, _, _, info = trsen(want.astype(np.int32), t, z, job="N", wantq=1)
    if info != 0:
        # swap rejected as ill-conditioned (nearly equal eigenvalues)
        return _reorder_via_complex(h, vals, want)
    return ts, zs, int(k)


def _reorder_via_complex(h, vals, want):
    """Fallback: complex Schur reordering, then a real orthonormal basis of the subspace."""
    k = int(want.sum())
    wanted_vals = vals[want]

    def pick(x):
        return np.min(np.abs(wanted_vals - x)) <= 1e-12 * max(1.0, abs(x))

    tc, zc, sdim = sla.schur(h.astype(complex), output="complex", sort=pick)
    if sdim != k:
        raise SchurConvergenceError(f"reordering selected {sdim} values, expected {k}")
    sub = zc[:, :k]
    # the selected set is closed under conjugation, so Re/Im span a real k-space
    q, _, _ = np.linalg.svd(np.concatenate([sub.real, sub.imag], axis=1), full_matrices=True)
    t = q.T @ h @ q
    t[k:, :k] = 0.0
    return t, q, k
