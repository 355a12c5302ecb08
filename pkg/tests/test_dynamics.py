import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from statemodal.core import Perturbation, apply_perturbation
from statemodal.dynamics import (
    ImplicitEuler,
    Trajectory,
    implicit_step,
    integral_weights,
    power_integrals,
    run_dynamics,
    run_switched,
)
from statemodal.eigensolver import SpectrumRequest, pencil, solve_alpha
from statemodal.fem import FeSpace, assemble_block_system
from statemodal.hexmesh import build_mesh
from statemodal.linalg import COUNTERS



def expm_solution(op, u0, t):
    G = np.linalg.solve(op.b_matrix.toarray(), op.a_matrix.toarray())
    return sla.expm(-t * G) @ u0


def test_no_dynamics():
    op = pencil(sp.csr_matrix((3, 3)), sp.identity(3))
    u = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(implicit_step(op, u, 0.1), u)


def test_scalar_backward_euler():
    a, b, tau = 3.0, 0.5, 0.01
    op = pencil(sp.csr_matrix([[a]]), sp.csr_matrix([[b]]))
    u = implicit_step(op, np.array([2.0]), tau)
    assert u[0] == pytest.approx(2.0 / (1.0 + tau * a / b), rel=1e-15)


def test_step_validation(hex_op):
    for tau in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            ImplicitEuler(hex_op, tau)


def test_factorization_cached(hex_op, rng):
    u = rng.standard_normal(hex_op.size)
    implicit_step(hex_op, u, 0.0123)
    before = COUNTERS["factorizations"]
    for _ in range(5):
        u = implicit_step(hex_op, u, 0.0123)
    assert COUNTERS["factorizations"] == before


def observed_orders(op, u0, t_end, taus):
    ref = expm_solution(op, u0, t_end)
    errs = []
    for tau in taus:
        u = u0.copy()
        stepper = ImplicitEuler(op, tau)
        for _ in range(round(t_end / tau)):
            u = stepper.step(u)
        errs.append(np.linalg.norm(u - ref) / np.linalg.norm(ref))
    return np.log2(np.array(errs[:-1]) / np.array(errs[1:])), errs


def test_first_order_convergence(hex_op):
    modes = solve_alpha(hex_op, SpectrumRequest(n_modes=4))
    u0 = sum(m.vector.real for m in modes[:4])
    orders, _ = observed_orders(hex_op, u0, 1.0, [0.04, 0.02, 0.01])
    assert np.all(np.abs(orders - 1.0) <= 0.1)


def test_eigenmode_decay(vver_op, vver_modes):
    v1 = vver_modes[0][0].vector.real
    alpha = vver_modes[0][0].value.real
    errs = []
    for tau in (0.01, 0.005):
        traj = run_dynamics(vver_op, v1, tau, 1.0, stride=None)
        exact = np.exp(-alpha * traj.times)
        err = np.abs(traj.P / traj.P[0] - exact).max()
        assert err <= alpha**2 * tau * 1.0
        errs.append(err)
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)


def test_zero_initial_state(hex_op):
    traj = run_dynamics(hex_op, np.zeros(hex_op.size), 0.01, 0.1)
    assert np.all(traj.P == 0.0) and np.all(traj.C == 0.0)
    assert len(traj) == 11
    assert np.allclose(traj.times, np.linspace(0.0, 0.1, 11))


def test_snapshots(hex_op, rng):
    traj = run_dynamics(hex_op, rng.standard_normal(hex_op.size), 0.01, 0.1, stride=5)
    assert np.allclose(traj.snapshot_times, [0.0, 0.05, 0.1])
    assert traj.snapshots.shape == (3, hex_op.size)


def test_power_integrals_flat(state, single_hex):
    space = FeSpace(build_mesh(single_hex, 24), 2)
    n = space.n_dofs
    area = space.mesh.total_area()
    P, C = power_integrals(np.ones(3 * n), state, space)
    gc = state.materials[1]
    assert P == pytest.approx((gc.nu_fission[0] + gc.nu_fission[1]) * area, rel=1e-12)
    assert C == pytest.approx(area, rel=1e-12)
    assert power_integrals(np.zeros(3 * n), state, space) == (0.0, 0.0)
    # unit group-1 flux only
    u = np.concatenate([np.ones(n), np.zeros(2 * n)])
    P1, C1 = power_integrals(u, state, space)
    assert P1 == pytest.approx(4.81619e-3 * 482.3415, rel=1e-6)
    assert P1 == pytest.approx(4.81619e-3 * 482.333, rel=3e-5)
    assert C1 == 0.0


def test_integrals_are_linear(vver_op, rng):
    p, c = integral_weights(vver_op.state, vver_op.space)
    u, w = rng.standard_normal((2, vver_op.size))
    for weights in (p, c):
        assert weights @ (2 * u + 3 * w) == pytest.approx(2 * (weights @ u) + 3 * (weights @ w), rel=1e-12)


@pytest.mark.parametrize("tau", [1e-3, 1e-2, 1e-1])
def test_unconditional_stability(hex_op, rng, tau):
    assert solve_alpha(hex_op, SpectrumRequest(n_modes=1))[0].value.real > 0.0  # subcritical
    u = rng.standard_normal(hex_op.size)
    stepper = ImplicitEuler(hex_op, tau)
    norms = []
    for k in range(round(5.0 / tau)):
        u = stepper.step(u)
        if (k + 1) * tau >= 1.0:
            norms.append(np.linalg.norm(u))
    norms = np.array(norms)
    assert np.all(np.diff(norms) <= 1e-12 * norms[:-1])


def test_switched_run(state, single_hex):
    space = FeSpace(build_mesh(single_hex, 6), 1)
    op1 = assemble_block_system(state, space)
    hot, _ = apply_perturbation(state, Perturbation(1, "nu_fission2", 1.05))
    op2 = assemble_block_system(hot, space)
    u0 = np.ones(op1.size)
    traj = run_switched([(0.0, op1), (0.2, op2)], u0, 0.01, 0.5, stride=None)
    assert len(traj) == 51
    k = 20
    assert traj.times[k] == pytest.approx(0.2)
    # P at the switch uses the new state's functional on the same vector
    plain = run_dynamics(op1, u0, 0.01, 0.2, stride=None)
    u_switch = march(op1, u0, 0.01, 20)
    p_new, _ = integral_weights(hot, space)
    assert traj.P[k] == pytest.approx(p_new @ u_switch, rel=1e-14)
    assert traj.P[k] != plain.P[-1]
    assert traj.C[k] == plain.C[-1]
    assert traj.meta["switch_times"] == [0.2]


def march(op, u, tau, steps):
    stepper = ImplicitEuler(op, tau)
    for _ in range(steps):
        u = stepper.step(u)
    return u


def test_switched_validation(hex_op):
    u0 = np.ones(hex_op.size)
    with pytest.raises(ValueError):
        run_switched([], u0, 0.01, 1.0)
    with pytest.raises(ValueError):
        run_switched([(0.0, hex_op), (0.0, hex_op)], u0, 0.01, 1.0)
    with pytest.raises(ValueError):
        run_switched([(0.0, hex_op)], u0, 0.03, 0.1)
    with pytest.raises(ValueError):
        run_dynamics(hex_op, u0, 0.01, 0.0)
    with pytest.raises(ValueError):
        run_dynamics(hex_op, u0[:-1], 0.01, 0.1)


def test_trajectory_csv_round_trip(tmp_path, rng):
    t = np.cumsum(rng.random(20))
    traj = Trajectory(t, rng.standard_normal(20), rng.standard_normal(20))
    traj.to_csv(tmp_path / "t.csv")
    back = Trajectory.from_csv(tmp_path / "t.csv")
    for name in ("times", "P", "C"):
        assert np.array_equal(getattr(back, name), getattr(traj, name))
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,P,C"
    Trajectory.empty().to_csv(tmp_path / "e.csv")
    assert len(Trajectory.from_csv(tmp_path / "e.csv")) == 0


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [1.0], [1.0, 1.0])
    w = Trajectory([0.0, 1.0, 2.0, 3.0], [1, 2, 3, 4], [4, 3, 2, 1]).window(0.5, 2.0)
    assert list(w.times) == [1.0, 2.0]

