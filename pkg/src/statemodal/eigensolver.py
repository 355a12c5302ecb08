"""Dominant alpha-eigenpairs of the pencil ``A v = alpha B v``.

Shift-invert Arnoldi with Krylov-Schur restarting, written against the
real Schur form of the projected matrix.  "Dominant" means smallest real
part: a mode decays like ``exp(-alpha t)``.  With a real shift ``sigma``
below the spectrum, the modes nearest ``sigma`` are the ones with the
smallest real parts, and those are the largest-magnitude eigenvalues
``theta = 1 / (alpha - sigma)`` of ``(A - sigma B)^{-1} B``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .fem import BlockOperator
from .linalg import COUNTERS, SingularShiftError, lu_factor, ordered_schur

__all__ = [
    "EigenMode",
    "SpectrumRequest",
    "SolveStats",
    "ConvergenceError",
    "MatchingError",
    "solve_alpha",
    "auto_shift",
    "pencil",
    "real_basis",
    "check_biorthogonality",
    "max_offdiagonal",
    "gram_matrix",
    "match_modes",
    "dual_basis",
]

log = logging.getLogger(__name__)


class ConvergenceError(ArithmeticError):
    """Krylov-Schur did not converge within the restart budget."""


class MatchingError(ValueError):
    """Direct and adjoint eigenvalues cannot be paired unambiguously."""


@dataclass(frozen=True)
class SpectrumRequest:
    """What to compute.  ``shift=None`` picks one automatically."""

    n_modes: int = 10
    which: Literal["direct", "adjoint"] = "direct"
    shift: float | None = None
    subspace_dim: int | None = None
    tol: float = 1e-10
    max_restarts: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.which not in ("direct", "adjoint"):
            raise ValueError(f"which must be 'direct' or 'adjoint', got {self.which!r}")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.subspace_dim is not None and self.subspace_dim <= self.n_modes + 2:
            raise ValueError("subspace_dim must exceed n_modes + 2")

    @property
    def krylov_dim(self) -> int:
        if self.subspace_dim is not None:
            return self.subspace_dim
        return max(2 * self.n_modes + 10, 40)


@dataclass(eq=False)
class EigenMode:
    """One eigenpair.  Pair members carry complex vectors, exact conjugates."""

    value: complex
    vector: np.ndarray
    kind: Literal["real", "pair"]
    residual: float

    @property
    def alpha(self) -> complex:
        return self.value


@dataclass
class SolveStats:
    factorizations: int = 0
    solves: int = 0
    restarts: int = 0
    shift: float = float("nan")
    history: list = field(default_factory=list)


def pencil(a, b) -> BlockOperator:
    """Wrap a bare pencil as a single-field operator with identity inner product."""
    a = sp.csr_matrix(a, dtype=float)
    b = sp.csr_matrix(b, dtype=float)
    n = a.shape[0]
    return BlockOperator(a, b, sp.identity(n, format="csr"), n, 1, 0)


def auto_shift(alpha_estimate: float) -> float:
    """Shift strictly left of an estimate of the leading eigenvalue."""
    re = float(np.real(alpha_estimate))
    return re - abs(re) - 1.0


def solve_alpha(
    op: BlockOperator,
    req: SpectrumRequest = SpectrumRequest(),
    stats: SolveStats | None = None,
) -> list[EigenMode]:
    """Return at least ``req.n_modes`` modes sorted by ascending real part.

    A conjugate pair is never split: if the cut falls inside a pair, one
    extra mode is returned.  ``which="adjoint"`` solves the transposed
    pencil ``A^T w = alpha B^T w``.
    """
    stats = stats if stats is not None else SolveStats()
    COUNTERS["eigensolves"] += 1
    n = op.a_matrix.shape[0]
    if req.n_modes > n:
        raise ValueError(f"n_modes={req.n_modes} exceeds the problem size {n}")
    a, b = op.a_matrix, op.b_matrix
    if req.which == "adjoint":
        a, b = a.T.tocsr(), b.T.tocsr()

    if req.n_modes >= n - 2:
        # (nearly) the whole spectrum: a full Arnoldi on B^-1 A keeps every
        # eigenvalue accurate to about eps ||B^-1 A||; shift-invert would
        # lose the far end of the spectrum
        modes = _solve_full(a, b, req, n, stats)
    else:
        if req.shift is None:
            sigma = auto_shift(_locate_fundamental(op, a, b, req, n))
        else:
            sigma = float(req.shift)
        modes = _solve(a, b, req, n, stats, sigma=sigma)
    _normalize_all(modes, op)
    _orthonormalize_degenerate(modes, op)
    for m in modes:
        m.residual = _residual(a, b, m.value, m.vector)
    return modes


def _orthonormalize_degenerate(modes: list[EigenMode], op: BlockOperator) -> None:
    """Pick an L2-orthonormal basis (group-1 block) inside degenerate real eigenspaces.

    Eigenvectors of a repeated eigenvalue are defined only up to a basis
    change; the symmetric (Loewdin) choice stays closest to the Ritz vectors.
    """
    values = np.array([m.value for m in modes])
    for group in _clusters(values):
        if len(group) < 2 or any(modes[i].kind != "real" for i in group):
            continue
        V = np.stack([modes[i].vector for i in group], axis=1)
        F = op.block(V.T, 0).T
        G = F.T @ (op.mass @ F)
        w, U = np.linalg.eigh(0.5 * (G + G.T))
        V = V @ (U @ np.diag(w ** -0.5) @ U.T)
        for col, i in enumerate(group):
            modes[i].vector = V[:, col]
            _normalize(modes[i], op)


def _single_signed(op: BlockOperator, v: np.ndarray) -> bool:
    f = np.real(op.block(v, 0)) if np.all(np.abs(np.imag(v)) == 0) else None
    if f is None or not np.any(f):
        return False
    return abs(f.sum()) >= 0.99 * np.abs(f).sum()


def _locate_fundamental(op, a, b, req, n) -> float:
    """Rough estimate of the leftmost eigenvalue.

    Shifts step left by decades.  For a reactor pencil the leftmost mode
    is the only one with a single-signed flux, which ends the search; for
    other pencils the leftmost value seen over all shifts is used.
    """
    seen = []
    for sigma in (-1.0, -10.0, -100.0, -1000.0, -10000.0):
        rough = SpectrumRequest(
            n_modes=min(4, n - 2) if n > 3 else 1, which=req.which, shift=sigma,
            subspace_dim=min(24, n) if n > 26 else None, tol=1e-6,
            max_restarts=req.max_restarts, seed=req.seed,
        )
        try:
            modes = _solve(a, b, rough, n, SolveStats(), sigma=sigma)
        except ConvergenceError:
            continue
        seen += [m.value.real for m in modes]
        fundamental = [m.value.real for m in modes if m.kind == "real" and _single_signed(op, m.vector)]
        if fundamental:
            return min(fundamental)
    if not seen:
        raise ConvergenceError("could not locate the leading eigenvalue for an automatic shift")
    return min(seen)


def _near_shift_lu(a, b, centre, stats):
    """LU of ``A - mu B`` for ``mu`` just off ``centre`` (inverse iteration)."""
    for offset in (1e-8, -3e-8, 1e-7, -3e-7, 1e-6):
        # stay off the eigenvalues themselves
        mu = centre + offset * (abs(centre) + 1.0)
        try:
            lu = lu_factor((a - mu * b).tocsc(), shift=mu)
        except SingularShiftError:
            continue
        stats.factorizations += 1
        return lu
    raise SingularShiftError(f"no usable shift near {centre}")


def _factor_with_retry(a, b, sigma, stats, attempts=6):
    for _ in range(attempts):
        try:
            lu = lu_factor((a - sigma * b).tocsc(), shift=sigma)
            stats.factorizations += 1
            stats.shift = sigma
            return lu, sigma
        except SingularShiftError:
            log.warning("shift %g is singular, moving left", sigma)
            sigma = sigma - 0.1 * (abs(sigma) + 1.0)
    raise SingularShiftError(f"no usable shift found near {sigma}")


def _solve(a, b, req: SpectrumRequest, n: int, stats: SolveStats, sigma: float | None = None):
    sigma = req.shift if sigma is None else sigma
    lu, sigma = _factor_with_retry(a, b, sigma, stats)

    def apply(x):
        stats.solves += 1
        return lu.solve(b @ x)

    def accept(ritz, Y):
        alphas = sigma + 1.0 / ritz
        # rounding puts a floor near eps |alpha| ||B|| under the residual,
        # so the test is scaled for fast modes
        return all(_residual(a, b, al, Y[:, i]) <= req.tol * (1.0 + abs(al)) for i, al in enumerate(alphas))

    nev = req.n_modes
    m = min(req.krylov_dim, n)
    rng = np.random.default_rng(req.seed)
    thetas, vecs = _krylov_schur(apply, n, nev, m, req, stats, rng.standard_normal(n), rng, accept)
    thetas, vecs = _complete_degenerate(apply, n, nev, m, req, stats, rng, accept, thetas, vecs, sigma)

    return _build_modes(a, b, sigma + 1.0 / thetas, vecs)


def _solve_full(a, b, req: SpectrumRequest, n: int, stats: SolveStats):
    lu = lu_factor(b.tocsc())
    stats.factorizations += 1

    def apply(x):
        stats.solves += 1
        return lu.solve(a @ x)

    def accept(alphas, Y):
        return all(_residual(a, b, al, Y[:, i]) <= req.tol * (1.0 + abs(al)) for i, al in enumerate(alphas))

    rng = np.random.default_rng(req.seed)
    full = dataclasses.replace(req, n_modes=n, subspace_dim=None)
    alphas, vecs = _krylov_schur(apply, n, n, n, full, stats, rng.standard_normal(n), rng, None)
    alphas, vecs = _polish(a, b, alphas, vecs, req.tol, stats, everything=True)
    if not accept(alphas, vecs):
        res = max(_residual(a, b, al, vecs[:, i]) / (1.0 + abs(al)) for i, al in enumerate(alphas))
        raise ConvergenceError(f"full spectrum: scaled residual {res:.2e} above tol {req.tol:g}")
    return _build_modes(a, b, alphas, vecs)


def _rayleigh_ritz(a_ext, b_ext, Q, centre):
    """Ritz pairs of the pencil on ``span(Q)``, accurate to the last bit.

    The projection of ``A - centre B`` is formed in extended precision, so
    only the small deviations from ``centre`` pass through a double
    precision eigensolve.
    """
    q = Q.astype(np.longdouble)
    c = np.longdouble(centre)
    at = q.T @ (a_ext @ q - c * (b_ext @ q))
    bt = q.T @ (b_ext @ q)
    dev, X = sla.eig(at.astype(float), bt.astype(float))
    ritz = np.array([complex(float(c + np.longdouble(d.real)), d.imag) for d in dev])
    return ritz, Q @ X


def _polish(a, b, alphas, vecs, tol, stats, gap=1e-2, sweeps=6, everything=False):
    """Block inverse iteration and Rayleigh-Ritz on groups of nearby eigenvalues.

    The unshifted Krylov space resolves tightly packed eigenvectors only to
    about ``eps ||B^-1 A|| / spacing``.  The invariant subspace of a whole
    group (eigenvalues chained within ``gap`` relative) is well determined,
    so a shift at the group centre followed by an extended-precision
    Rayleigh-Ritz step recovers the individual pairs.
    """
    alphas = np.array(alphas, dtype=complex)
    vecs = np.array(vecs, dtype=complex)
    scaled = np.array([_residual(a, b, al, vecs[:, i]) / (1.0 + abs(al)) for i, al in enumerate(alphas)])
    bad = np.arange(len(alphas)) if everything else np.flatnonzero(scaled > tol)
    if bad.size == 0:
        return alphas, vecs
    # group by chained closeness of the real parts, whole groups of all modes
    order = np.argsort(alphas.real, kind="stable")
    groups, cur = [], [order[0]]
    for i, j in zip(order, order[1:]):
        if abs(alphas[j] - alphas[i]) <= gap * (1.0 + abs(alphas[i])):
            cur.append(j)
        else:
            groups.append(cur)
            cur = [j]
    groups.append(cur)
    a_ext, b_ext = a.astype(np.longdouble), b.astype(np.longdouble)
    for g in groups:
        if not np.any(np.isin(g, bad)):
            continue
        Q = _real_span(vecs[:, g])
        centre = float(np.mean(alphas[g].real))
        lu = _near_shift_lu(a, b, centre, stats)
        for sweep in range(sweeps):
            Q, _ = np.linalg.qr(lu.solve(b @ Q))
            ritz, Y = _rayleigh_ritz(a_ext, b_ext, Q, centre)
            res = [_residual(a, b, r, Y[:, i]) / (1.0 + abs(r)) for i, r in enumerate(ritz)]
            if sweep >= 1 and max(res) <= tol:
                break
        idx = np.argsort(ritz.real, kind="stable")
        ritz, Y = ritz[idx], Y[:, idx]
        if len(ritz) != len(g):
            continue
        tgt = np.array(sorted(g, key=lambda i: alphas[i].real))
        alphas[tgt] = ritz
        vecs[:, tgt] = Y
    return alphas, vecs


def _build_modes(a, b, alphas, vecs) -> list[EigenMode]:
    modes = []
    k = 0
    while k < len(alphas):
        al = alphas[k]
        if al.imag != 0.0 and abs(al.imag) <= CLUSTER_TOL * (abs(al) + 1.0) and k + 1 < len(alphas):
            # numerically split double root: a real eigenspace spanned by Re v, Im v
            for v in (vecs[:, k].real.copy(), vecs[:, k].imag.copy()):
                modes.append(EigenMode(complex(al.real, 0.0), v, "real", _residual(a, b, al.real, v)))
            k += 2
        elif al.imag != 0.0 and k + 1 < len(alphas):
            # store (a - bi, a + bi) as exact conjugates
            lead = complex(al.real, -abs(al.imag))
            vec = vecs[:, k] if al.imag < 0 else np.conj(vecs[:, k])
            for val, v in ((lead, vec), (lead.conjugate(), np.conj(vec))):
                modes.append(EigenMode(val, v, "pair", _residual(a, b, val, v)))
            k += 2
        else:
            v = np.real(vecs[:, k]).copy()
            modes.append(EigenMode(complex(al.real, 0.0), v, "real", _residual(a, b, al.real, v)))
            k += 1
    order = _pair_aware_order(modes)
    return [modes[i] for i in order]


def _real_span(Y: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal real basis of span(Re Y, Im Y)."""
    cols = np.concatenate([Y.real, Y.imag], axis=1)
    q, r, _ = sla.qr(cols, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > rtol * d[0])) if d.size else 0
    return q[:, :rank]


def _wanted_count(ritz: np.ndarray, nev: int, sigma: float) -> int:
    """``nev`` extended so that no conjugate pair or degenerate cluster is cut."""
    alphas = sigma + 1.0 / ritz
    k = nev
    while k < len(ritz):
        last, nxt = alphas[k - 1], alphas[k]
        if abs(nxt - last) <= CLUSTER_TOL * (abs(last) + 1.0) or (
            last.imag != 0.0 and nxt == np.conj(last)
        ):
            k += 1
        else:
            break
    return k


def _complete_degenerate(apply, n, nev, m, req, stats, rng, accept, thetas, vecs, sigma, sweeps=4):
    """Recover eigenvectors a single-vector Krylov space cannot see.

    In exact arithmetic a Krylov space holds one vector per eigenspace, so
    the second member of a degenerate pair may be missed.  Lock the
    converged subspace, search its complement from a fresh start vector,
    and merge the two by Rayleigh-Ritz until nothing new enters.
    """
    for _ in range(sweeps):
        Q = _real_span(vecs)
        r = Q.shape[1]
        nev_d = min(max(2, nev // 2), n - r - 3)
        m_d = min(m, n - r - 1)
        if nev_d < 1 or m_d <= nev_d + 2:
            break

        def apply_d(x, Q=Q):
            y = apply(x)
            for _ in range(2):
                y = y - Q @ (Q.T @ y)
            return y

        v0 = rng.standard_normal(n)
        for _ in range(2):
            v0 -= Q @ (Q.T @ v0)
        sub = dataclasses.replace(req, n_modes=nev_d, subspace_dim=None)
        try:
            extra, extra_vecs = _krylov_schur(apply_d, n, nev_d, m_d, sub, SolveStats(), v0, rng, None)
        except ConvergenceError:
            break
        if np.max(np.abs(extra)) < np.min(np.abs(thetas)) * (1.0 - 1e-8):
            break
        U = _real_span(np.concatenate([Q, extra_vecs], axis=1))
        AU = np.stack([apply(U[:, j]) for j in range(U.shape[1])], axis=1)
        ritz, X = np.linalg.eig(U.T @ AU)
        order = np.argsort(-np.abs(ritz), kind="stable")
        ritz, X = ritz[order], X[:, order]
        k = _wanted_count(ritz, nev, sigma)
        new_thetas, new_vecs = ritz[:k], U @ X[:, :k]
        if not accept(new_thetas, new_vecs):
            break
        thetas, vecs = new_thetas, new_vecs
    return thetas, vecs


def _pair_aware_order(modes: list[EigenMode]) -> list[int]:
    groups = []
    k = 0
    while k < len(modes):
        if modes[k].kind == "pair":
            groups.append((modes[k].value.real, [k, k + 1]))
            k += 2
        else:
            groups.append((modes[k].value.real, [k]))
            k += 1
    groups.sort(key=lambda g: g[0])
    return [i for _, idx in groups for i in idx]


def _residual(a, b, alpha, v) -> float:
    """``||A v - alpha B v|| / ||v||``."""
    return float(np.linalg.norm(a @ v - alpha * (b @ v)) / max(np.linalg.norm(v), np.finfo(float).tiny))


def _krylov_schur(apply, n, nev, m, req, stats, v0, rng, accept):
    """Thick-restart Arnoldi on ``apply``; returns the ``nev`` largest Ritz pairs.

    ``accept(ritz, vectors)`` is the final true-residual test; with
    ``accept=None`` the Arnoldi residual estimate alone decides.
    """
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = v0 / np.linalg.norm(v0)
    k = 0
    keep_target = m if m == n else min(m - 1, nev + max((m - nev) // 2, 1))
    for restart in range(req.max_restarts + 1):
        stats.restarts = restart
        for j in range(k, m):
            w = apply(V[:, j])
            basis = V[:, : j + 1]
            h = basis.T @ w
            w -= basis @ h
            h2 = basis.T @ w
            w -= basis @ h2
            h += h2
            beta = np.linalg.norm(w)
            H[: j + 1, j] = h
            if j + 1 >= n or beta <= 1e-14 * max(np.linalg.norm(h), 1.0):
                # invariant subspace found: continue with a fresh direction
                H[j + 1, j] = 0.0
                if j + 1 >= n:
                    V[:, j + 1] = 0.0
                    continue
                w = rng.standard_normal(n)
                for _ in range(2):
                    w -= basis @ (basis.T @ w)
                V[:, j + 1] = w / np.linalg.norm(w)
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta

        def select(vals, count=keep_target):
            mag = np.abs(vals)
            cut = np.sort(mag)[::-1][count - 1]
            # never split a (near-)degenerate cluster: the swap would be ill-conditioned
            return mag >= cut * (1.0 - 1e-8)

        T, Z, kk = ordered_schur(H[:m, :m], select)
        ritz, X = np.linalg.eig(T[:kk, :kk])
        order = np.argsort(-np.abs(ritz), kind="stable")
        ritz, X = ritz[order], X[:, order]
        n_want = nev
        if n_want < kk and ritz[n_want - 1].imag != 0.0 and ritz[n_want] == np.conj(ritz[n_want - 1]):
            n_want += 1
        bvec = H[m, :m] @ Z[:, :kk]
        est = np.abs(bvec @ X[:, :n_want]) / np.linalg.norm(X[:, :n_want], axis=0)
        stats.history.append(float(np.max(est / np.abs(ritz[:n_want]))))
        if np.all(est <= req.tol * np.abs(ritz[:n_want])):
            Y = V[:, :m] @ (Z[:, :kk] @ X[:, :n_want])
            if accept is None or accept(ritz[:n_want], Y):
                return ritz[:n_want], Y
        if restart == req.max_restarts:
            break
        # thick restart on the kept Schur vectors
        V[:, :kk] = V[:, :m] @ Z[:, :kk]
        V[:, kk] = V[:, m]
        H[:] = 0.0
        H[:kk, :kk] = T[:kk, :kk]
        H[kk, :kk] = bvec
        k = kk
    why = ("Ritz estimates met tol but true residuals did not" if stats.history[-1] <= req.tol
           else f"worst estimate {stats.history[-1]:.2e}")
    raise ConvergenceError(
        f"Krylov-Schur: {nev} modes not converged after {req.max_restarts} restarts "
        f"({why}, tol {req.tol:g})"
    )


def _normalize_all(modes: list[EigenMode], op: BlockOperator) -> None:
    """Normalize every mode; the second member of a pair is the exact conjugate of the first."""
    k = 0
    while k < len(modes):
        _normalize(modes[k], op)
        if modes[k].kind == "pair":
            modes[k + 1].vector = np.conj(modes[k].vector)
            k += 2
        else:
            k += 1


def _normalize(mode: EigenMode, op: BlockOperator) -> None:
    """Unit L2 norm of the group-1 block; fix the phase.

    Real modes: largest-magnitude group-1 entry positive.  Pair members:
    phase chosen so that the real and imaginary parts of the group-1 block
    are L2-orthogonal with the real part the larger one, then the
    largest real entry made positive.
    """
    v = mode.vector
    f = op.block(v, 0)
    M = op.mass
    nrm = np.sqrt(abs(np.vdot(f, M @ f)))
    v = v / nrm
    f = op.block(v, 0)
    if mode.kind == "real":
        v = np.real(v)
        if f.real[np.argmax(np.abs(f.real))] < 0:
            v = -v
    else:
        x, y = f.real, f.imag
        aa, bb, cc = x @ (M @ x), x @ (M @ y), y @ (M @ y)
        phi = 0.5 * np.arctan2(-2.0 * bb, aa - cc)
        v = v * np.exp(1j * phi)
        re = op.block(v, 0).real
        if re[np.argmax(np.abs(re))] < 0:
            v = -v
    mode.vector = v


def real_basis(modes: Sequence[EigenMode]) -> list[np.ndarray]:
    """Real functions spanning the modal space, aligned with ``modes``.

    A real mode contributes its vector; a pair ``(n, n+1)`` contributes
    ``Re v_n`` and ``Im v_n``.
    """
    out = []
    k = 0
    while k < len(modes):
        m = modes[k]
        if m.kind == "pair":
            out += [m.vector.real.copy(), m.vector.imag.copy()]
            k += 2
        else:
            out.append(np.real(m.vector).copy())
            k += 1
    return out


CLUSTER_TOL = 1e-9


def _clusters(values: np.ndarray, rel: float = CLUSTER_TOL) -> list[list[int]]:
    """Group indices of numerically coincident eigenvalues (input order kept)."""
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        for g in groups:
            if abs(values[g[0]] - v) <= rel * (abs(v) + 1.0):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def match_modes(direct, adjoint, rel_tol: float = 1e-6) -> list[tuple[list[int], list[int]]]:
    """Pair clusters of direct eigenvalues with clusters of adjoint ones.

    Eigenvalues that coincide to ``CLUSTER_TOL`` form one cluster (a
    degenerate eigenspace); clusters match when their sizes agree and
    their values agree to ``rel_tol * (|alpha| + 1)``.
    """
    if len(direct) != len(adjoint):
        raise MatchingError("direct and adjoint lists differ in length")
    a = np.array([m.value for m in direct])
    t = np.array([m.value for m in adjoint])
    ca, ct = _clusters(a), _clusters(t)
    if len(ca) != len(ct):
        raise MatchingError("direct and adjoint spectra have different cluster structure")
    ra = np.array([a[g].mean() for g in ca])
    rt = np.array([t[g].mean() for g in ct])
    dist = np.abs(ra[:, None] - rt[None, :])
    rows, cols = linear_sum_assignment(dist)
    out = []
    for r, c in zip(rows, cols):
        tol = rel_tol * (abs(ra[r]) + 1.0)
        if dist[r, c] > tol or len(ca[r]) != len(ct[c]):
            raise MatchingError(f"no adjoint eigenvalue matches {ra[r]}")
        near = np.sort(dist[r])
        if len(near) > 1 and near[1] <= tol and near[1] < 10.0 * near[0]:
            raise MatchingError(f"ambiguous adjoint match for {ra[r]}")
        out.append((ca[r], ct[c]))
    out.sort(key=lambda pair: pair[0][0])
    return out


def dual_basis(direct, adjoint, b, rel_tol: float = 1e-6) -> np.ndarray:
    """Adjoint vectors aligned with ``direct`` and scaled so ``W^T B V = I``.

    Inside a degenerate cluster the adjoint vectors are recombined, since
    eigenvectors of a repeated eigenvalue are not unique.  Columns of the
    result belong to the corresponding direct modes.
    """
    V = np.stack([m.vector for m in direct], axis=1).astype(complex)
    W_in = np.stack([m.vector for m in adjoint], axis=1).astype(complex)
    W = np.zeros_like(V)
    BV = b @ V
    for di, ai in match_modes(direct, adjoint, rel_tol):
        w = W_in[:, ai]
        C = w.T @ BV[:, di]
        W[:, di] = np.linalg.solve(C, w.T).T
    return W


def check_biorthogonality(direct, adjoint, b) -> np.ndarray:
    """Normalized ``|(B v_n, w_m)| / sqrt(|(B v_n, w_n)| |(B v_m, w_m)|)``.

    Uses the bilinear (unconjugated) product, under which left and right
    eigenvectors of distinct eigenvalues are orthogonal.  Adjoint vectors
    of a degenerate cluster are first recombined into the dual basis.
    """
    W = dual_basis(direct, adjoint, b)
    V = np.stack([m.vector for m in direct], axis=1).astype(complex)
    C = (W.T @ (b @ V)).T  # C[n, m] = w_m^T B v_n
    d = np.sqrt(np.abs(np.diag(C)))
    return np.abs(C) / np.outer(d, d)


def max_offdiagonal(matrix: np.ndarray) -> float:
    off = np.abs(matrix - np.diag(np.diag(matrix)))
    return float(off.max()) if off.size > 1 else 0.0


def gram_matrix(modes: Sequence[EigenMode], op: BlockOperator, field_index: int = 0) -> np.ndarray:
    """L2 Gram matrix of one field block of the (real) modal functions.

    Each function is normalized to unit L2 norm first.
    """
    if not modes:
        raise ValueError("no modes")
    F = np.stack([op.block(v, field_index) for v in real_basis(modes)], axis=1)
    G = F.T @ (op.mass @ F)
    d = np.sqrt(np.diag(G))
    G = G / np.outer(d, d)
    return 0.5 * (G + G.T)
