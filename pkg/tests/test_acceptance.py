"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line (printed in the
terminal summary) and then asserts the criterion at its stated tolerance.
Reference eigenvalues of the published benchmark tables are reported
alongside the computed ones.
"""

from __future__ import annotations

import dataclasses
import json
import subprocess
import sys
import time
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest
import scipy.linalg as sla

from statemodal.core import Perturbation, ReactorState, apply_perturbation, load_state
from statemodal.dynamics import ImplicitEuler
from statemodal.eigensolver import (
    SpectrumRequest,
    check_biorthogonality,
    gram_matrix,
    max_offdiagonal,
    solve_alpha,
)
from statemodal.fem import FeSpace, assemble_block_system
from statemodal.hexmesh import build_mesh, load_layout
from statemodal.modal import ModalBasis, coefficients_for, evolve, project_biorthogonal
from statemodal.scm import (
    compare_runs,
    data_path,
    initial_vector,
    load_scenario,
    offline_build,
    online_run,
    reference_run,
    resolve_states,
)

from .conftest import ACCEPTANCE_LINES
from .oracles.meshes import CASES, operator

DENSE = json.loads((Path(__file__).parent / "data" / "dense_spectrum.json").read_text())

# published eigenvalues (kappa=96, p=3)
TABLE2_ALPHA1 = -2.51280
TABLE2_ALPHA23_RE = 0.03558
TABLE6_ALPHA1 = 0.02122
TABLE8_ALPHA1 = 0.01760


def record(number: int, ok: bool, text: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def info(number: int, text: str) -> None:
    line = f"criterion {number}: info  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def expm_flow(op, u0, t):
    G = np.linalg.solve(op.b_matrix.toarray(), op.a_matrix.toarray())
    return sla.expm(-t * G) @ u0


# ---------------------------------------------------------------------------


def test_criterion_1_homogeneous_oracle(state):
    start = time.perf_counter()
    hom = ReactorState({1: state.materials[1]}, state.kinetics, (0.0, 0.0), "homogeneous")
    gc, k = state.materials[1], state.kinetics
    v1, v2 = k.velocities
    b, lam = k.beta[0], k.decay[0]
    f1, f2 = gc.nu_fission
    mp.mp.dps = 40
    R = mp.matrix([
        [v1 * (gc.removal[0] - (1 - b) * f1), -v1 * (1 - b) * f2, -v1 * lam],
        [-v2 * gc.scatter_down, v2 * gc.removal[1], 0],
        [-b * f1, -b * f2, lam],
    ])
    exact = [complex(z) for z in mp.eig(R, left=False, right=False)]
    worst = 0.0
    for name in ("hex_k6_p1", "seven_k6_p1"):
        layout, kappa, degree = CASES[name]
        mesh = build_mesh(layout.retagged({c: 1 for c, _ in layout.cells()}), kappa)
        op = assemble_block_system(hom, FeSpace(mesh, degree))
        values = np.array([m.value for m in solve_alpha(op, SpectrumRequest(n_modes=op.size))])
        worst = max(worst, max(np.min(np.abs(values - e)) for e in exact))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5.0
    record(1, ok, f"flat alphas {[f'{e.real:.9g}' for e in exact]}: max |error| {worst:.2e} "
                  f"(tol 1e-8), {elapsed:.1f} s (limit 5 s)")
    assert worst <= 1e-8
    assert elapsed < 5.0


def test_criterion_2_dense_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_alpha, worst_evo = 0.0, 0.0
    for name in CASES:
        op = operator(name)
        assert op.size <= 200
        ref = DENSE["cases"][name]
        exact = np.array(ref["re"]) + 1j * np.array(ref["im"])
        direct = solve_alpha(op, SpectrumRequest(n_modes=op.size))
        adjoint = solve_alpha(op, SpectrumRequest(n_modes=op.size, which="adjoint"))
        got = np.sort_complex(np.array([m.value for m in direct]))
        assert len(got) == len(exact)
        worst_alpha = max(worst_alpha, float(np.max(np.abs(got - exact))))
        basis = ModalBasis(name, direct, op, adjoint)
        u0 = rng.standard_normal(op.size)
        u = evolve(basis, project_biorthogonal(u0, basis), 0.5)
        ref_u = expm_flow(op, u0, 0.5)
        worst_evo = max(worst_evo, float(np.linalg.norm(u - ref_u) / np.linalg.norm(ref_u)))
    elapsed = time.perf_counter() - start
    ok = worst_alpha <= 1e-8 and worst_evo <= 1e-8 and elapsed < 30.0
    record(2, ok, f"eigenvalues max |error| {worst_alpha:.2e} (tol 1e-8 abs); "
                  f"evolution at t=0.5 rel error {worst_evo:.2e} (tol 1e-8); {elapsed:.1f} s (limit 30 s)")
    assert worst_alpha <= 1e-8
    assert worst_evo <= 1e-8
    assert elapsed < 30.0


def _alphas(state: ReactorState, layout, kappa: int, degree: int, n: int) -> list[complex]:
    op = assemble_block_system(state, FeSpace(build_mesh(layout, kappa), degree))
    return [m.value for m in solve_alpha(op, SpectrumRequest(n_modes=n))]


@pytest.mark.slow
def test_criterion_3_benchmark_tables(state, printed_state, vver_layout):
    start = time.perf_counter()
    sym, _ = apply_perturbation(state, Perturbation(4, "sigma2", 1.15), vver_layout)
    asym, asym_layout = apply_perturbation(
        state, Perturbation(4, "sigma2", 1.1, (0.0, 1.0, 0.0), 1.2), vver_layout)

    a2 = _alphas(state, vver_layout, 96, 2, 3)
    a3 = _alphas(state, vver_layout, 96, 3, 10)
    s3 = _alphas(sym, vver_layout, 96, 3, 1)
    t3 = _alphas(asym, asym_layout, 96, 3, 10)
    p3 = _alphas(printed_state, vver_layout, 96, 3, 3)

    info(3, f"Table 2 alpha_1: {a3[0].real:.6f} (published {TABLE2_ALPHA1}, "
            f"|diff| {abs(a3[0].real - TABLE2_ALPHA1):.3e}, tol 1e-3)")
    info(3, f"Table 2 alpha_2,3: {a3[1]:.6f}, {a3[2]:.6f} (published re {TABLE2_ALPHA23_RE} with a "
            f"conjugate pair; exact conjugacy of computed pairs holds by construction)")
    info(3, f"Table 6 alpha_1: {s3[0].real:.6f} (published {TABLE6_ALPHA1}, "
            f"|diff| {abs(s3[0].real - TABLE6_ALPHA1):.3e})")
    info(3, f"Table 8 alpha_1: {t3[0].real:.6f} (published {TABLE8_ALPHA1}, "
            f"|diff| {abs(t3[0].real - TABLE8_ALPHA1):.3e}); first 10 real: "
            f"{all(z.imag == 0.0 for z in t3[:10])}")
    info(3, f"material 3 thermal removal as printed (0.844801): alpha_1 = {p3[0].real:.6f}; "
            f"as 0.0844801: alpha_1 = {a3[0].real:.6f}")
    tables_ok = (abs(a3[0].real - TABLE2_ALPHA1) <= 1e-3 and abs(s3[0].real - TABLE6_ALPHA1) <= 1e-3
                 and abs(t3[0].real - TABLE8_ALPHA1) <= 1e-3)
    # the shipped layout is a reconstruction, so the fallback criterion decides
    rel = abs(a2[0].real - a3[0].real) / abs(a3[0].real)
    elapsed = time.perf_counter() - start
    record(3, rel < 2e-2,
           f"layout is a reconstruction (tables reproduced: {tables_ok}); fallback p-convergence "
           f"alpha_1(p=2)={a2[0].real:.6f}, alpha_1(p=3)={a3[0].real:.6f}, rel diff {rel:.2e} "
           f"(tol 2e-2), {elapsed:.0f} s")
    assert rel < 2e-2


def test_criterion_4_direct_adjoint(vver_op, vver_modes):
    direct, adjoint = vver_modes
    rel = max(abs(d.value - a.value) / abs(d.value) for d, a in zip(direct[:10], adjoint[:10]))
    bio = max_offdiagonal(check_biorthogonality(direct, adjoint, vver_op.b_matrix))
    ok = rel <= 1e-8 and bio <= 1e-6
    record(4, ok, f"direct vs adjoint max rel diff {rel:.2e} (tol 1e-8); "
                  f"biorthogonality max off-diagonal {bio:.2e} (tol 1e-6)")
    assert rel <= 1e-8
    assert bio <= 1e-6


def test_criterion_5_gram_structure(vver_op, vver_modes):
    modes = vver_modes[0][:10]
    G = gram_matrix(modes, vver_op)
    off = np.abs(G - np.diag(np.diag(G)))
    i, j = np.unravel_index(np.argmax(off), off.shape)
    real_pair = modes[i].kind == "real" and modes[j].kind == "real"
    ok = off[i, j] <= 5e-2 and real_pair
    record(5, ok, f"max |(phi1_n, phi1_m)| = {off[i, j]:.3e} at ({i + 1},{j + 1}) "
                  f"(tol 5e-2), real-real pair: {real_pair}")
    assert off[i, j] <= 5e-2
    assert real_pair


def _dominance(name: str) -> tuple[float, int]:
    sc = dataclasses.replace(load_scenario(data_path(f"scenario_{name}.toml")), n_modes=50)
    rs = resolve_states(sc)
    lib = offline_build(sc, resolved=rs)
    u0 = initial_vector(sc, rs, lib)
    e = lib.entry(1)
    b = np.abs(coefficients_for(sc.method, u0, ModalBasis(e.label, e.direct, rs[1].op)).b)
    return b[0] / b[1:].max(), int(np.argmax(b[1:])) + 2


@pytest.mark.slow
def test_criterion_6_first_mode_dominance():
    sym, sym_at = _dominance("symmetric")
    asym, asym_at = _dominance("asymmetric")
    ok = sym > 5.0 and asym <= 5.0
    record(6, ok, f"|b1|/max|bn|: symmetric {sym:.2f} (max at n={sym_at}, needs > 5), "
                  f"asymmetric {asym:.2f} (max at n={asym_at}, needs <= 5)")
    assert sym > 5.0
    assert asym <= 5.0, "asymmetric perturbation stays first-mode dominated on the shipped layout"


@pytest.mark.slow
@pytest.mark.parametrize("name", ["symmetric", "asymmetric"])
def test_criterion_7_modal_vs_dynamic(name):
    sc = load_scenario(data_path(f"scenario_{name}.toml"))
    assert (sc.n_modes, sc.method, sc.evolution, sc.reference_tau) == (
        10, "orthogonal-approx", "real-part-only", 0.0025)
    start = time.perf_counter()
    rs = resolve_states(sc)
    lib = offline_build(sc, resolved=rs)
    rep = compare_runs(online_run(sc, lib, rs), reference_run(sc, lib, resolved=rs), (1.0, 10.0))
    ok = rep.max_rel_P <= 0.05 and rep.max_rel_C <= 0.05
    record(7, ok, f"{name}: max rel error P {rep.max_rel_P:.3e}, C {rep.max_rel_C:.3e} on [1, 10] s "
                  f"(tol 5e-2), {time.perf_counter() - start:.0f} s")
    assert rep.max_rel_P <= 0.05
    assert rep.max_rel_C <= 0.05


def test_criterion_8_implicit_euler_order():
    op = operator("hex_k6_p2")
    modes = solve_alpha(op, SpectrumRequest(n_modes=4))
    u0 = sum(m.vector.real for m in modes)
    t_end = 1.0
    ref = expm_flow(op, u0, t_end)
    errs = []
    taus = [0.02, 0.01, 0.005]
    for tau in taus:
        stepper = ImplicitEuler(op, tau)
        u = u0.copy()
        for _ in range(round(t_end / tau)):
            u = stepper.step(u)
        errs.append(np.linalg.norm(u - ref) / np.linalg.norm(ref))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(np.abs(orders - 1.0) <= 0.1))
    record(8, ok, f"observed orders {np.round(orders, 4).tolist()} for tau {taus} (need 1.0 +- 0.1)")
    assert ok


def test_criterion_9_property_suites():
    here = Path(__file__).parent
    files = [str(here / f) for f in ("test_fem.py", "test_hexmesh.py", "test_modal.py", "test_linalg.py")]
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          capture_output=True, text=True, cwd=here.parent)
    elapsed = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 60.0
    record(9, ok, f"FEM, mesh, projection and linear-algebra suites: {summary} in {elapsed:.1f} s (limit 60 s)")
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert elapsed < 60.0
