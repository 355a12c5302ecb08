"""Modal expansions of the semi-discrete kinetics system.

A solution is represented as ``u(t) = sum_n a_n(t) w_n`` where the ``w_n``
are real functions: the eigenvector of a real mode, or ``Re v`` and
``Im v`` for a conjugate pair ``(v, conj v)``.  Coefficients ``b_n`` are the
amplitudes at the start of a state interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .eigensolver import CLUSTER_TOL, EigenMode, dual_basis, real_basis
from .fem import BlockOperator

__all__ = [
    "BasisError",
    "ModalBasis",
    "ModalCoefficients",
    "project_biorthogonal",
    "project_least_squares",
    "project_orthogonal_approx",
    "amplitudes",
    "evolve",
    "coefficients_for",
    "safe_cut",
    "EXP_LIMIT",
]

EXP_LIMIT = 700.0

Method = Literal["biorthogonal", "least-squares", "orthogonal-approx"]
EvolutionKind = Literal["exact-complex", "real-part-only"]


class BasisError(ArithmeticError):
    """The modal basis is too ill-conditioned for the requested projection."""


@dataclass(eq=False)
class ModalBasis:
    """Dominant direct modes of one reactor state, plus optional adjoints."""

    state_label: str
    modes: list[EigenMode]
    op: BlockOperator
    adjoint_modes: list[EigenMode] | None = None

    def __post_init__(self):
        if not self.modes:
            raise ValueError("modal basis needs at least one mode")
        re = [m.value.real for m in self.modes]
        if any(b < a - 1e-12 * (abs(a) + 1.0) for a, b in zip(re, re[1:])):
            raise ValueError("modes must be sorted by ascending real part")
        k = 0
        while k < len(self.modes):
            if self.modes[k].kind == "pair":
                if k + 1 >= len(self.modes) or self.modes[k + 1].kind != "pair":
                    raise ValueError(f"conjugate pair starting at mode {k} is incomplete")
                k += 2
            else:
                k += 1

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def values(self) -> np.ndarray:
        return np.array([m.value for m in self.modes])

    @cached_property
    def functions(self) -> np.ndarray:
        """Real basis functions ``w_n`` as columns."""
        return np.stack(real_basis(self.modes), axis=1)

    def precursor_functions(self) -> np.ndarray:
        return self.op.precursors(self.functions.T).T

    def precursor_inner(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """L2 inner products ``x^T M y`` of precursor blocks (all families)."""
        return x.T @ _mass_blocks(self.op, y)


@dataclass
class ModalCoefficients:
    """Amplitudes ``b_n`` of the real basis functions at ``t_origin``."""

    b: np.ndarray
    method: Method
    t_origin: float = 0.0
    residual: float | None = None
    meta: dict = field(default_factory=dict)

    def __add__(self, other: "ModalCoefficients") -> "ModalCoefficients":
        if self.t_origin != other.t_origin:
            raise ValueError("coefficients refer to different time origins")
        return ModalCoefficients(self.b + other.b, self.method, self.t_origin)

    def scaled(self, factor: float) -> "ModalCoefficients":
        return ModalCoefficients(self.b * factor, self.method, self.t_origin, self.residual)


def project_biorthogonal(u0: np.ndarray, basis: ModalBasis, t_origin: float = 0.0) -> ModalCoefficients:
    """Coefficients from the biorthogonal (adjoint) system, full state vector.

    For a pair ``beta v + conj(beta v)`` the real amplitudes are
    ``(2 Re beta, -2 Im beta)`` on ``(Re v, Im v)``.
    """
    if basis.adjoint_modes is None:
        raise ValueError("biorthogonal projection needs adjoint modes")
    b_mat = basis.op.b_matrix
    V = np.stack([m.vector for m in basis.modes], axis=1).astype(complex)
    W = dual_basis(basis.modes, basis.adjoint_modes, b_mat)
    C = W.T @ (b_mat @ V)
    if np.any(np.abs(np.diag(C)) <= 1e-12) or not np.all(np.isfinite(C)):
        raise BasisError("biorthogonal denominators vanish; basis is ill-conditioned")
    beta = W.T @ (b_mat @ np.asarray(u0, dtype=float))
    b = np.empty(len(basis.modes))
    k = 0
    while k < len(basis.modes):
        if basis.modes[k].kind == "pair":
            b[k], b[k + 1] = 2.0 * beta[k].real, -2.0 * beta[k].imag
            k += 2
        else:
            b[k] = beta[k].real
            k += 1
    return ModalCoefficients(b, "biorthogonal", t_origin, meta={"projection": "full state"})


def project_least_squares(u0_c: np.ndarray, basis: ModalBasis, t_origin: float = 0.0) -> ModalCoefficients:
    """Best L2 fit of the precursor block by the modes' precursor blocks."""
    Cn = basis.precursor_functions()
    u0_c = np.asarray(u0_c, dtype=float)
    if Cn.shape[1] > Cn.shape[0]:
        raise ValueError("more modes than precursor unknowns")
    G = basis.precursor_inner(Cn, Cn)
    rhs = basis.precursor_inner(Cn, u0_c)
    G = 0.5 * (G + G.T)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise BasisError("precursor Gram matrix is not positive definite") from exc
    d = np.diag(L)
    if d.min() <= 1e-7 * d.max():
        raise BasisError(f"precursor Gram matrix is rank deficient (pivot ratio {d.min() / d.max():.1e})")
    b = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    r = u0_c - Cn @ b
    res = float(np.sqrt(max(basis.precursor_inner(r, r), 0.0)))
    return ModalCoefficients(b, "least-squares", t_origin, residual=res, meta={"projection": "precursor block"})


def project_orthogonal_approx(u0_c: np.ndarray, basis: ModalBasis, t_origin: float = 0.0) -> ModalCoefficients:
    """``b_n = (c, c_n) / (c_n, c_n)``, treating the precursor blocks as orthogonal."""
    Cn = basis.precursor_functions()
    u0_c = np.asarray(u0_c, dtype=float)
    num = basis.precursor_inner(Cn, u0_c)
    den = np.einsum("ij,ij->j", Cn, _mass_blocks(basis.op, Cn))
    b = num / den
    return ModalCoefficients(b, "orthogonal-approx", t_origin, meta={"projection": "precursor block"})


def _mass_blocks(op: BlockOperator, X: np.ndarray) -> np.ndarray:
    """Apply the scalar mass matrix to each ``n_dofs`` block of ``X`` (along axis 0)."""
    n = op.n_dofs
    return np.concatenate([op.mass @ X[k * n:(k + 1) * n] for k in range(X.shape[0] // n)], axis=0)


def amplitudes(
    basis: ModalBasis, coeff: ModalCoefficients, t: float, kind: EvolutionKind = "exact-complex"
) -> np.ndarray:
    """Time-dependent amplitudes ``a_n(t)`` of the real basis functions.

    With ``alpha = a + i w`` and ``v = x + i y`` the pair solutions are
    ``Re(exp(-alpha s) v) = exp(-a s) (x cos ws + y sin ws)`` and
    ``Im(exp(-alpha s) v) = exp(-a s) (y cos ws - x sin ws)``.
    """
    s = float(t) - coeff.t_origin
    if s < 0.0:
        raise ValueError(f"t={t} precedes the time origin {coeff.t_origin}")
    vals = basis.values
    exponent = -vals.real * s
    # only growth can overflow; a decaying term just underflows to zero
    bad = np.flatnonzero(exponent > EXP_LIMIT)
    if bad.size:
        n = int(bad[0])
        raise OverflowError(
            f"mode {n + 1} (alpha={vals[n]:.6g}) overflows: -alpha (t - t0) = {exponent[n]:.4g} > {EXP_LIMIT:g}"
        )
    decay = np.exp(exponent)
    b = coeff.b
    if kind == "real-part-only":
        return b * decay
    if kind != "exact-complex":
        raise ValueError(f"unknown evolution kind {kind!r}")
    out = np.empty(len(b))
    k = 0
    while k < len(b):
        if basis.modes[k].kind == "pair":
            w = vals[k].imag
            c, sn = np.cos(w * s), np.sin(w * s)
            # b_n Re(..) + b_{n+1} Im(..) expressed on (x, y)
            out[k] = decay[k] * (b[k] * c - b[k + 1] * sn)
            out[k + 1] = decay[k] * (b[k] * sn + b[k + 1] * c)
            k += 2
        else:
            out[k] = b[k] * decay[k]
            k += 1
    return out


def evolve(
    basis: ModalBasis, coeff: ModalCoefficients, t: float, kind: EvolutionKind = "exact-complex"
) -> np.ndarray:
    """Dof vector of the truncated modal solution at time ``t``."""
    return basis.functions @ amplitudes(basis, coeff, t, kind)


def coefficients_for(
    method: Method, u0: np.ndarray, basis: ModalBasis, t_origin: float = 0.0
) -> ModalCoefficients:
    """Dispatch on the projection method name."""
    if method == "biorthogonal":
        return project_biorthogonal(u0, basis, t_origin)
    c = basis.op.precursors(np.asarray(u0, dtype=float))
    if method == "least-squares":
        return project_least_squares(c, basis, t_origin)
    if method == "orthogonal-approx":
        return project_orthogonal_approx(c, basis, t_origin)
    raise ValueError(f"unknown projection method {method!r}")



def safe_cut(modes: list[EigenMode], n: int) -> int:
    """Smallest count ``>= n`` that splits no conjugate pair or degenerate cluster.

    Solver output never ends inside such a group, so the count is at most
    ``len(modes)``.
    """
    k = max(n, 1)
    while k < len(modes):
        last, nxt = modes[k - 1].value, modes[k].value
        same = abs(nxt - last) <= CLUSTER_TOL * (abs(last) + 1.0)
        paired = modes[k].kind == "pair" and last.imag != 0.0 and nxt == np.conj(last)
        if not (same or paired):
            break
        k += 1
    return min(k, len(modes))
