"""Lagrange P1-P3 finite elements on triangles and block-system assembly.

Global dof numbering: mesh vertices first, then ``p - 1`` nodes per edge
(edges in :meth:`TriMesh.edges` order, nodes running from the lower to the
higher vertex index), then one interior node per triangle for ``p = 3``.
Multi-field vectors are stacked block by field: all group-1 flux dofs,
then group 2, ..., then each precursor family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .core import ReactorState, StateDataError
from .hexmesh import TriMesh

__all__ = [
    "FeSpace",
    "BlockOperator",
    "triangle_quadrature",
    "reference_basis",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_albedo",
    "assemble_block_system",
    "dump_coo",
]


# ---------------------------------------------------------------------------
# reference element

def triangle_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Legendre rule on the unit triangle, exact to ``degree``.

    Returns points ``(n, 2)`` and weights summing to 1/2.
    """
    n = degree // 2 + 2
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([u.ravel(), ((1.0 - u) * v).ravel()], axis=1)
    wts = (wu * wv * (1.0 - u)).ravel()
    return pts, wts


def _reference_nodes(p: int) -> np.ndarray:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = [v for v in verts]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for k in range(1, p):
            nodes.append(verts[a] + (verts[b] - verts[a]) * k / p)
    if p == 3:
        nodes.append(verts.mean(axis=0))
    return np.array(nodes)


def _monomials(p: int) -> list[tuple[int, int]]:
    return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]


@dataclass(frozen=True)
class ReferenceBasis:
    degree: int
    nodes: np.ndarray
    coeffs: np.ndarray  # monomial coefficients, one column per basis function

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Basis values, shape ``(n_pts, n_basis)``."""
        mono = np.stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in _monomials(self.degree)], 1)
        return mono @ self.coeffs

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        """Basis gradients, shape ``(n_pts, n_basis, 2)``."""
        x, y = pts[:, 0], pts[:, 1]
        dx, dy = [], []
        for a, b in _monomials(self.degree):
            dx.append(a * x ** max(a - 1, 0) * y ** b if a else np.zeros_like(x))
            dy.append(b * x ** a * y ** max(b - 1, 0) if b else np.zeros_like(x))
        gx = np.stack(dx, 1) @ self.coeffs
        gy = np.stack(dy, 1) @ self.coeffs
        return np.stack([gx, gy], axis=-1)


_BASIS_CACHE: dict[int, ReferenceBasis] = {}


def reference_basis(p: int) -> ReferenceBasis:
    if p not in (1, 2, 3):
        raise ValueError(f"degree must be 1, 2 or 3, got {p}")
    if p not in _BASIS_CACHE:
        nodes = _reference_nodes(p)
        vander = np.stack([nodes[:, 0] ** a * nodes[:, 1] ** b for a, b in _monomials(p)], 1)
        _BASIS_CACHE[p] = ReferenceBasis(p, nodes, np.linalg.inv(vander))
    return _BASIS_CACHE[p]


def _edge_mass_1d(p: int) -> np.ndarray:
    """Mass matrix of 1D Lagrange nodes ``[0, 1, 1/p, ..., (p-1)/p]`` on [0, 1]."""
    t_nodes = np.array([0.0, 1.0] + [k / p for k in range(1, p)])
    g, w = np.polynomial.legendre.leggauss(p + 1)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    vander = np.vander(t_nodes, p + 1, increasing=True)
    coeffs = np.linalg.inv(vander)
    vals = np.vander(g, p + 1, increasing=True) @ coeffs
    return (vals * w[:, None]).T @ vals


# ---------------------------------------------------------------------------
# function space

class _CsrScatter:
    """Fixed COO -> CSR summation map; sums duplicates in a deterministic order."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        key = rows.astype(np.int64) * shape[1] + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self.inverse = inverse.ravel()
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        r = uniq // shape[1]
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int32)
        np.add.at(self.indptr, r + 1, 1)
        self.indptr = np.cumsum(self.indptr).astype(np.int32)

    def __call__(self, data: np.ndarray) -> sp.csr_matrix:
        vals = np.bincount(self.inverse, weights=data.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((vals, self.indices.copy(), self.indptr.copy()), shape=self.shape)


@dataclass(eq=False)
class FeSpace:
    """Continuous Lagrange space of degree ``p`` on a triangle mesh."""

    mesh: TriMesh
    degree: int
    dof_map: np.ndarray = field(init=False)
    n_dofs: int = field(init=False)
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = self.degree
        if p not in (1, 2, 3):
            raise ValueError(f"degree must be 1, 2 or 3, got {p}")
        tri = self.mesh.triangles
        nv, nf = self.mesh.n_vertices, self.mesh.n_triangles
        local_edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        key = np.sort(local_edges, axis=1)
        self.edges, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel().reshape(3, nf).T  # (F, 3) edge id of local edge k
        ne = len(self.edges)
        cols = [tri]
        if p > 1:
            forward = (local_edges[:, 0] < local_edges[:, 1]).reshape(3, nf).T
            for k in range(3):
                base = nv + inv[:, k] * (p - 1)
                steps = np.arange(p - 1)
                offs = np.where(forward[:, k, None], steps, p - 2 - steps)
                cols.append(base[:, None] + offs)
        if p == 3:
            cols.append((nv + ne * (p - 1) + np.arange(nf))[:, None])
        self.dof_map = np.concatenate(cols, axis=1).astype(np.int64)
        self.n_dofs = nv + ne * (p - 1) + (nf if p == 3 else 0)

    @property
    def n_local(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @cached_property
    def basis(self) -> ReferenceBasis:
        return reference_basis(self.degree)

    @cached_property
    def _geometry(self):
        p = self.mesh.vertices[self.mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        return p, jac, det

    @cached_property
    def dof_coords(self) -> np.ndarray:
        p, jac, _ = self._geometry
        pts = p[:, 0, None, :] + np.einsum("fij,nj->fni", jac, self.basis.nodes)
        coords = np.empty((self.n_dofs, 2))
        coords[self.dof_map.ravel()] = pts.reshape(-1, 2)
        return coords

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        """Per boundary edge: ``[start vertex, end vertex, interior nodes start->end]``."""
        p = self.degree
        be = self.mesh.boundary_edges
        out = [be[:, :1], be[:, 1:]]
        if p > 1:
            key = np.sort(be, axis=1)
            # edge ids via searchsorted on the lexicographically sorted edge table
            code = self.edges[:, 0] * self.mesh.n_vertices + self.edges[:, 1]
            eid = np.searchsorted(code, key[:, 0] * self.mesh.n_vertices + key[:, 1])
            forward = be[:, 0] < be[:, 1]
            steps = np.arange(p - 1)
            offs = np.where(forward[:, None], steps, p - 2 - steps)
            out.append(self.mesh.n_vertices + eid[:, None] * (p - 1) + offs)
        return np.concatenate(out, axis=1)

    @cached_property
    def _element_scatter(self) -> _CsrScatter:
        n = self.n_local
        rows = np.repeat(self.dof_map, n, axis=1)
        cols = np.tile(self.dof_map, (1, n))
        return _CsrScatter(rows.ravel(), cols.ravel(), (self.n_dofs, self.n_dofs))

    @cached_property
    def _boundary_scatter(self) -> _CsrScatter:
        bd = self.boundary_dofs
        n = bd.shape[1]
        rows = np.repeat(bd, n, axis=1)
        cols = np.tile(bd, (1, n))
        return _CsrScatter(rows.ravel(), cols.ravel(), (self.n_dofs, self.n_dofs))

    @cached_property
    def element_mass(self) -> np.ndarray:
        """Unit-weight element mass matrices, shape ``(F, n, n)``."""
        pts, wts = triangle_quadrature(2 * self.degree)
        vals = self.basis.values(pts)
        ref = (vals * wts[:, None]).T @ vals
        return np.abs(self._geometry[2])[:, None, None] * ref

    @cached_property
    def element_stiffness(self) -> np.ndarray:
        """Unit-coefficient element stiffness matrices, shape ``(F, n, n)``."""
        pts, wts = triangle_quadrature(max(2 * self.degree - 2, 0))
        grads = self.basis.gradients(pts)  # (q, n, 2)
        ref = np.einsum("q,qia,qjb->abij", wts, grads, grads)
        _, jac, det = self._geometry
        inv = np.linalg.inv(jac)
        metric = np.einsum("fai,fbi->fab", inv, inv)  # J^-1 J^-T
        return np.abs(det)[:, None, None] * np.einsum("fab,abij->fij", metric, ref)

    def element_weights(self, weight: Mapping[int, float] | float) -> np.ndarray:
        """Per-triangle coefficient from a per-material mapping or a scalar."""
        mats = self.mesh.materials
        if np.isscalar(weight):
            return np.full(len(mats), float(weight))
        missing = set(np.unique(mats).tolist()) - set(weight)
        if missing:
            raise StateDataError(f"no coefficient for material(s) {sorted(missing)}")
        ids = np.array(sorted(weight))
        vals = np.array([float(weight[i]) for i in ids])
        return vals[np.searchsorted(ids, mats)]

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``."""
        c = self.dof_coords
        return np.asarray(func(c[:, 0], c[:, 1]), dtype=float)

    def prolong(self, coarse: "FeSpace", values: np.ndarray) -> np.ndarray:
        """Interpolate a function of a lower-degree space on the same mesh."""
        if coarse.mesh is not self.mesh:
            raise ValueError("spaces live on different meshes")
        phi = coarse.basis.values(self.basis.nodes)  # (n_fine, n_coarse)
        local = values[coarse.dof_map] @ phi.T
        out = np.empty(self.n_dofs)
        out[self.dof_map.ravel()] = local.ravel()
        return out

    def integrate(self, values: np.ndarray, weight: Mapping[int, float] | float = 1.0) -> float:
        """Exact integral of ``weight * u_h`` over the domain."""
        pts, wts = triangle_quadrature(self.degree)
        w_ref = self.basis.values(pts).T @ wts  # integral of each reference basis
        w_e = self.element_weights(weight) * np.abs(self._geometry[2])
        return float(np.einsum("f,fi,i->", w_e, values[self.dof_map], w_ref))


# ---------------------------------------------------------------------------
# assembly

def assemble_mass(space: FeSpace, weight: Mapping[int, float] | float = 1.0) -> sp.csr_matrix:
    """Mass matrix ``int w N_i N_j`` with piecewise-constant ``w``."""
    w = space.element_weights(weight)
    return space._element_scatter(w[:, None, None] * space.element_mass)


def assemble_stiffness(space: FeSpace, diffusion: Mapping[int, float] | float) -> sp.csr_matrix:
    """Stiffness matrix ``int D grad N_i . grad N_j``."""
    d = space.element_weights(diffusion)
    if np.any(d <= 0.0):
        raise StateDataError("diffusion coefficients must be positive")
    return space._element_scatter(d[:, None, None] * space.element_stiffness)


def assemble_albedo(space: FeSpace, gamma: float) -> sp.csr_matrix:
    """Boundary term ``int_{dOmega} gamma N_i N_j ds``."""
    if gamma < 0.0:
        raise StateDataError("albedo factor must be >= 0")
    be = space.mesh.boundary_edges
    d = space.mesh.vertices[be[:, 1]] - space.mesh.vertices[be[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    ref = _edge_mass_1d(space.degree)
    return space._boundary_scatter(gamma * length[:, None, None] * ref)


@dataclass(eq=False)
class BlockOperator:
    """Sparse pencil ``(A, B)`` of the semi-discrete system ``B u' + A u = 0``."""

    a_matrix: sp.csr_matrix
    b_matrix: sp.csr_matrix
    mass: sp.csr_matrix          # unit-weight scalar mass matrix, for inner products
    n_dofs: int                  # scalar dofs per field
    n_groups: int
    n_precursors: int
    space: FeSpace | None = None
    state: ReactorState | None = None

    @property
    def n_fields(self) -> int:
        return self.n_groups + self.n_precursors

    @property
    def size(self) -> int:
        return self.n_fields * self.n_dofs

    @property
    def block_offsets(self) -> list[int]:
        return [k * self.n_dofs for k in range(self.n_fields + 1)]

    def block(self, u: np.ndarray, field_index: int) -> np.ndarray:
        """Slice of one field (groups first, then precursor families)."""
        n = self.n_dofs
        return u[..., field_index * n:(field_index + 1) * n]

    def flux(self, u: np.ndarray, group: int = 0) -> np.ndarray:
        return self.block(u, group)

    def precursors(self, u: np.ndarray) -> np.ndarray:
        """All precursor blocks concatenated."""
        return u[..., self.n_groups * self.n_dofs:]


def assemble_block_system(state: ReactorState, space: FeSpace) -> BlockOperator:
    """Assemble ``A_h`` and ``B_h`` for the multigroup diffusion-precursor system."""
    kin = state.kinetics
    G, M = state.n_groups, state.n_precursors
    mats = {m: gc for m, gc in state.materials.items()}
    used = set(np.unique(space.mesh.materials).tolist())
    missing = used - set(mats)
    if missing:
        raise StateDataError(f"state lacks material(s) {sorted(missing)}")
    mats = {m: gc for m, gc in mats.items() if m in used}

    def per_mat(fn):
        return {m: fn(gc) for m, gc in mats.items()}

    mass = assemble_mass(space, 1.0)
    beta = kin.beta_total
    blocks: list[list[sp.csr_matrix | None]] = [[None] * (G + M) for _ in range(G + M)]
    for g in range(G):
        diag = (
            assemble_stiffness(space, per_mat(lambda gc: gc.diffusion[g]))
            + assemble_mass(space, per_mat(lambda gc: gc.removal[g]))
            + assemble_albedo(space, state.albedo[g])
        )
        blocks[g][g] = diag
        for gp in range(G):
            coupling = None
            if gp != g:
                sc = per_mat(lambda gc: gc.scatter[gp][g])
                if any(sc.values()):
                    coupling = -assemble_mass(space, sc)
            if kin.chi_prompt[g] != 0.0:
                fis = per_mat(lambda gc: (1.0 - beta) * kin.chi_prompt[g] * gc.nu_fission[gp])
                term = -assemble_mass(space, fis)
                coupling = term if coupling is None else coupling + term
            if coupling is not None:
                blocks[g][gp] = coupling if blocks[g][gp] is None else blocks[g][gp] + coupling
        for m in range(M):
            if kin.chi_delayed[g] != 0.0:
                blocks[g][G + m] = (-kin.chi_delayed[g] * kin.decay[m]) * mass
    for m in range(M):
        for gp in range(G):
            blocks[G + m][gp] = -assemble_mass(space, per_mat(lambda gc: kin.beta[m] * gc.nu_fission[gp]))
        blocks[G + m][G + m] = kin.decay[m] * mass

    # explicit zeros keep the block pattern structurally symmetric
    structural_zero = mass * 0.0
    for i in range(G + M):
        for j in range(G + M):
            if blocks[i][j] is None and blocks[j][i] is not None:
                blocks[i][j] = structural_zero
    a = sp.bmat(blocks, format="csr")
    b_blocks = [mass / kin.velocities[g] for g in range(G)] + [mass] * M
    b = sp.block_diag(b_blocks, format="csr")
    a.sort_indices()
    b.sort_indices()
    return BlockOperator(a, b, mass, space.n_dofs, G, M, space=space, state=state)


def dump_coo(matrix: sp.spmatrix, path: str | Path) -> None:
    """Write ``row col value`` lines sorted by (row, col)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {matrix.shape[0]} {matrix.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v!r}\n")
