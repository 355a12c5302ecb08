import numpy as np
import pytest
from scipy import integrate

from statemodal.core import GroupConstants, KineticsParams, ReactorState
from statemodal.fem import (
    FeSpace,
    assemble_albedo,
    assemble_block_system,
    assemble_mass,
    assemble_stiffness,
    triangle_quadrature,
)
from statemodal.hexmesh import CoreLayout, TriMesh, build_mesh, parse_layout

from .oracles.meshes import SEVEN


def one_triangle(p0=(0.0, 0.0), p1=(1.0, 0.0), p2=(0.0, 1.0), boundary=((0, 1), (1, 2), (2, 0))):
    return TriMesh(
        vertices=np.array([p0, p1, p2], dtype=float),
        triangles=np.array([[0, 1, 2]]),
        materials=np.array([1]),
        assemblies=np.array([0]),
        boundary_edges=np.array(boundary),
    )


def test_p1_mass_analytic():
    mesh = one_triangle((0.3, -0.2), (2.1, 0.4), (0.7, 1.9))
    T = mesh.total_area()
    m = assemble_mass(FeSpace(mesh, 1), 1.0).toarray()
    expect = T / 12.0 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.allclose(m, expect, rtol=0, atol=1e-12 * T)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_mass_total_is_area(degree):
    mesh = build_mesh(parse_layout(SEVEN), 24)
    m = assemble_mass(FeSpace(mesh, degree), 1.0)
    assert m.sum() == pytest.approx(mesh.total_area(), rel=1e-12)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_mass_linear_in_weight(single_hex, degree):
    space = FeSpace(build_mesh(single_hex, 24), degree)
    a = assemble_mass(space, {1: 0.37}).toarray()
    b = assemble_mass(space, {1: 0.74}).toarray()
    assert np.array_equal(b, 2.0 * a)


def test_p1_stiffness_right_triangle():
    k = assemble_stiffness(FeSpace(one_triangle(), 1), 1.0).toarray()
    expect = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.allclose(k, expect, rtol=0, atol=1e-12)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_stiffness_null_vector(single_hex, degree):
    space = FeSpace(build_mesh(single_hex, 24), degree)
    k = assemble_stiffness(space, 1.3)
    assert np.abs(k @ np.ones(space.n_dofs)).max() <= 1e-12 * abs(k).max()


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_stiffness_scale_invariant(degree):
    a = build_mesh(CoreLayout(23.6, ((1, 2),)), 24)
    b = build_mesh(CoreLayout(23.6 * 3.7, ((1, 2),)), 24)
    ka = assemble_stiffness(FeSpace(a, degree), 1.0).toarray()
    kb = assemble_stiffness(FeSpace(b, degree), 1.0).toarray()
    assert np.allclose(ka, kb, rtol=0, atol=1e-12 * np.abs(ka).max())


def test_albedo_zero(single_hex):
    space = FeSpace(build_mesh(single_hex, 6), 2)
    assert assemble_albedo(space, 0.0).count_nonzero() == 0


def test_albedo_single_edge():
    space = FeSpace(one_triangle(boundary=((0, 1),)), 1)
    m = assemble_albedo(space, 0.5).toarray()
    assert np.allclose(m[:2, :2], [[1 / 6, 1 / 12], [1 / 12, 1 / 6]], rtol=0, atol=1e-15)
    assert np.all(m[2] == 0.0) and np.all(m[:, 2] == 0.0)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_albedo_total_is_perimeter(single_hex, degree):
    mesh = build_mesh(single_hex, 24)
    m = assemble_albedo(FeSpace(mesh, degree), 1.0)
    assert m.sum() == pytest.approx(mesh.perimeter(), rel=1e-12)


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_quadrature_exactness(degree):
    pts, wts = triangle_quadrature(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = integrate.dblquad(lambda y, x: x**a * y**b, 0, 1, 0, lambda x: 1 - x, epsabs=1e-14)[0]
            got = float(np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b))
            assert got == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_element_mass_against_adaptive_quadrature(degree):
    """Each entry is the integral of a degree-2p polynomial over the element."""
    mesh = one_triangle((0.1, 0.2), (1.3, 0.5), (0.4, 1.4))
    space = FeSpace(mesh, degree)
    m = assemble_mass(space, 1.0).toarray()
    basis = space.basis
    v0, v1, v2 = mesh.vertices
    J = np.column_stack([v1 - v0, v2 - v0])
    Jinv = np.linalg.inv(J)

    def ref(x, y):
        return Jinv @ (np.array([x, y]) - v0)

    dofs = space.dof_map[0]
    for i in range(space.n_local):
        for j in range(i, space.n_local):
            def f(y, x):
                r = ref(x, y)[None, :]
                val = basis.values(r)[0]
                return val[i] * val[j]

            exact = _integrate_over_triangle(f, mesh.vertices)
            assert m[dofs[i], dofs[j]] == pytest.approx(exact, rel=1e-12, abs=1e-15)


def _integrate_over_triangle(f, verts):
    """Adaptive quadrature over a triangle split at its middle x-vertex."""
    order = np.argsort(verts[:, 0])
    a, b, c = verts[order]

    def line(p, q):
        return lambda x: p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0])

    total = 0.0
    for lo_pt, hi_pt, other in ((a, b, c), (b, c, a)):
        if hi_pt[0] - lo_pt[0] < 1e-15:
            continue
        edge = line(lo_pt, hi_pt)
        long = line(a, c)
        y1 = lambda x, e=edge: min(e(x), long(x))
        y2 = lambda x, e=edge: max(e(x), long(x))
        total += integrate.dblquad(f, lo_pt[0], hi_pt[0], y1, y2, epsabs=1e-15, epsrel=1e-13)[0]
    return total


@pytest.mark.parametrize("fine", [2, 3])
def test_p_nesting_preserves_forms(single_hex, fine):
    mesh = build_mesh(single_hex, 24)
    coarse_space, fine_space = FeSpace(mesh, 1), FeSpace(mesh, fine)
    rng = np.random.default_rng(7)
    u, v = rng.standard_normal((2, coarse_space.n_dofs))
    uf, vf = fine_space.prolong(coarse_space, u), fine_space.prolong(coarse_space, v)
    for assemble in (lambda s: assemble_mass(s, 1.0), lambda s: assemble_stiffness(s, 1.0),
                     lambda s: assemble_albedo(s, 0.5)):
        c = u @ assemble(coarse_space) @ v
        f = uf @ assemble(fine_space) @ vf
        assert f == pytest.approx(c, rel=1e-12)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_b_symmetric_positive_definite(state, single_hex, degree):
    op = assemble_block_system(state, FeSpace(build_mesh(single_hex, 6), degree))
    b = op.b_matrix
    assert abs(b - b.T).max() <= 1e-15
    assert np.linalg.eigvalsh(b.toarray()).min() > 0.0


def test_block_dimensions_and_pattern(hex_op):
    assert hex_op.size == 3 * 7 == 21
    s = hex_op.a_matrix.copy()
    s.data[:] = 1.0
    assert (s != s.T).nnz == 0


def test_block_entries(state, single_hex):
    space = FeSpace(build_mesh(single_hex, 6), 2)
    op = assemble_block_system(state, space)
    n = space.n_dofs
    gc, kin = state.materials[1], state.kinetics
    M = assemble_mass(space, 1.0).toarray()
    K = assemble_stiffness(space, 1.0).toarray()
    R = assemble_albedo(space, 1.0).toarray()
    beta, lam = kin.beta[0], kin.decay[0]
    A = op.a_matrix.toarray()
    blk = lambda i, j: A[i * n:(i + 1) * n, j * n:(j + 1) * n]
    expect = {
        (0, 0): gc.diffusion[0] * K + gc.removal[0] * M + state.albedo[0] * R - (1 - beta) * gc.nu_fission[0] * M,
        (0, 1): -(1 - beta) * gc.nu_fission[1] * M,
        (0, 2): -lam * M,
        (1, 0): -gc.scatter_down * M,
        (1, 1): gc.diffusion[1] * K + gc.removal[1] * M + state.albedo[1] * R,
        (1, 2): 0 * M,
        (2, 0): -beta * gc.nu_fission[0] * M,
        (2, 1): -beta * gc.nu_fission[1] * M,
        (2, 2): lam * M,
    }
    for (i, j), e in expect.items():
        assert np.allclose(blk(i, j), e, rtol=0, atol=1e-14 * max(1.0, np.abs(e).max()))
    B = op.b_matrix.toarray()
    for i, scale in enumerate([1 / v for v in kin.velocities] + [1.0]):
        assert np.allclose(B[i * n:(i + 1) * n, i * n:(i + 1) * n], scale * M, rtol=1e-15, atol=0)


def test_no_feedback_structure(single_hex):
    gc = GroupConstants.two_group(1.3, 0.4, 0.025, 0.067, 0.016, 0.0, 0.0)
    kin = KineticsParams((1.25e7, 2.5e5), (0.0,), (0.0,), (1.0, 0.0), (1.0, 0.0))
    space = FeSpace(build_mesh(single_hex, 6), 1)
    op = assemble_block_system(ReactorState({1: gc}, kin, (0.5, 0.5)), space)
    n = space.n_dofs
    A = op.a_matrix.toarray()
    assert np.all(A[:n, n:] == 0.0)            # block lower triangular
    assert np.all(A[2 * n:, :] == 0.0)         # decoupled, zero precursor block
    assert np.all(A[:, 2 * n:] == 0.0)


def test_missing_material(state):
    with pytest.raises(ValueError):
        assemble_block_system(state, FeSpace(build_mesh(CoreLayout(23.6, ((9,),)), 6), 1))
