"""Fully implicit (backward Euler) reference solution of ``B u' + A u = 0``.

Each step solves ``(B/tau + A) u+ = (B/tau) u`` with a factorization that is
cached per operator and step size.  The integral characteristics

    P(t) = int (nu Sigma_f1 phi_1 + nu Sigma_f2 phi_2) dx,   C(t) = int c dx

are linear functionals of the dof vector and are evaluated as exact inner
products with precomputed weight vectors.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .core import ReactorState
from .fem import BlockOperator, FeSpace, assemble_mass
from .linalg import LuFactors, lu_factor

__all__ = [
    "Trajectory",
    "ImplicitEuler",
    "implicit_step",
    "run_dynamics",
    "run_switched",
    "power_integrals",
    "integral_weights",
    "SOLVE_RTOL",
]

log = logging.getLogger(__name__)

SOLVE_RTOL = 1e-11
_CACHE_SIZE = 4


@dataclass
class Trajectory:
    """Time series of ``P`` and ``C`` with optional thinned dof snapshots."""

    times: np.ndarray
    P: np.ndarray
    C: np.ndarray
    snapshot_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if not (self.times.shape == self.P.shape == self.C.shape):
            raise ValueError("times, P and C must have equal length")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def empty(cls, **meta) -> "Trajectory":
        return cls(np.empty(0), np.empty(0), np.empty(0), meta=dict(meta))

    def window(self, t_a: float, t_b: float) -> "Trajectory":
        keep = (self.times >= t_a) & (self.times <= t_b)
        return Trajectory(self.times[keep], self.P[keep], self.C[keep], meta=dict(self.meta))

    def to_csv(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        """Write ``t,P,C`` (plus any extra columns) with full float precision."""
        cols = {"t": self.times, "P": self.P, "C": self.C}
        cols.update(extra or {})
        data = np.column_stack(list(cols.values())) if len(self) else np.empty((0, len(cols)))
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path) as fh:
            lines = fh.read().splitlines()[1:]
        if not any(line.strip() for line in lines):
            return cls.empty()
        data = np.loadtxt(lines, delimiter=",", ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def integral_weights(state: ReactorState, space: FeSpace) -> tuple[np.ndarray, np.ndarray]:
    """Vectors ``p, c`` with ``P = p . u`` and ``C = c . u`` for the block layout."""
    n = space.n_dofs
    ones = np.ones(n)
    G, M = state.n_groups, state.n_precursors
    used = set(np.unique(space.mesh.materials).tolist())
    p = np.zeros((G + M) * n)
    for g in range(G):
        w = {m: gc.nu_fission[g] for m, gc in state.materials.items() if m in used}
        p[g * n:(g + 1) * n] = assemble_mass(space, w) @ ones
    c = np.zeros((G + M) * n)
    mass_row = assemble_mass(space, 1.0) @ ones
    for m in range(M):
        c[(G + m) * n:(G + m + 1) * n] = mass_row
    return p, c


def power_integrals(u: np.ndarray, state: ReactorState, space: FeSpace) -> tuple[float, float]:
    """``(P, C)`` of one dof vector, exact for the finite-element fields."""
    p, c = integral_weights(state, space)
    u = np.asarray(u, dtype=float)
    return float(p @ u), float(c @ u)


def _op_weights(op: BlockOperator) -> tuple[np.ndarray, np.ndarray]:
    if op.state is None or op.space is None:
        raise ValueError("operator carries no state/space; P and C are undefined")
    return integral_weights(op.state, op.space)


class ImplicitEuler:
    """Backward Euler stepper with a factorization of ``B/tau + A``."""

    def __init__(self, op: BlockOperator, tau: float):
        if not (tau > 0.0 and math.isfinite(tau)):
            raise ValueError(f"step must be positive, got {tau}")
        self.op = op
        self.tau = float(tau)
        self.b_tau = (op.b_matrix / self.tau).tocsr()
        self.system = (self.b_tau + op.a_matrix).tocsr()
        self.lu: LuFactors = lu_factor(self.system.tocsc(), shift=-1.0 / self.tau)

    def step(self, u: np.ndarray) -> np.ndarray:
        rhs = self.b_tau @ u
        x = self.lu.solve(rhs)
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            return x
        for _ in range(3):
            r = rhs - self.system @ x
            if np.linalg.norm(r) <= SOLVE_RTOL * scale:
                return x
            x = x + self.lu.solve(r)
        r = rhs - self.system @ x
        rel = np.linalg.norm(r) / scale
        if rel > SOLVE_RTOL:
            raise ArithmeticError(f"implicit step residual {rel:.2e} exceeds {SOLVE_RTOL:g}")
        return x


_steppers: "OrderedDict[tuple[int, float], ImplicitEuler]" = OrderedDict()


def _stepper(op: BlockOperator, tau: float) -> ImplicitEuler:
    key = (id(op), float(tau))
    st = _steppers.get(key)
    if st is not None and st.op is op:
        _steppers.move_to_end(key)
        return st
    st = ImplicitEuler(op, tau)
    _steppers[key] = st
    while len(_steppers) > _CACHE_SIZE:
        _steppers.popitem(last=False)
    return st


def implicit_step(op: BlockOperator, u: np.ndarray, tau: float) -> np.ndarray:
    """One backward Euler step; the factorization is reused for repeated ``tau``."""
    return _stepper(op, tau).step(np.asarray(u, dtype=float))


def _step_count(tau: float, duration: float) -> int:
    n = round(duration / tau)
    if n < 1 or abs(n * tau - duration) > 1e-9 * max(duration, tau):
        raise ValueError(f"interval {duration} is not a whole number of steps tau={tau}")
    return n


def run_dynamics(
    op: BlockOperator,
    u0: np.ndarray,
    tau: float,
    t_end: float,
    stride: int | None = 10,
    t0: float = 0.0,
) -> Trajectory:
    """March from ``t0`` to ``t_end`` on a uniform grid, recording P and C every step.

    Snapshots are kept every ``stride`` steps (``None`` keeps none).
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed the start time")
    return run_switched([(t0, op)], u0, tau, t_end, stride)


def run_switched(
    segments: list[tuple[float, BlockOperator]],
    u0: np.ndarray,
    tau: float,
    t_end: float,
    stride: int | None = 10,
) -> Trajectory:
    """Backward Euler through a sequence of states switching at given times.

    ``segments`` lists ``(t_start, op)`` in increasing ``t_start``; every
    operator must share the dof layout.  At a switch time the recorded
    P and C use the state that starts there.
    """
    if not segments:
        raise ValueError("no states to integrate")
    starts = [t for t, _ in segments]
    if any(b <= a for a, b in zip(starts, starts[1:])) or t_end <= starts[-1]:
        raise ValueError("switch times must increase and precede t_end")
    size = segments[0][1].size
    if any(op.size != size for _, op in segments):
        raise ValueError("operators in a switched run must share the dof layout")
    u = np.asarray(u0, dtype=float).copy()
    if u.shape != (size,):
        raise ValueError(f"initial vector has shape {u.shape}, expected ({size},)")

    bounds = starts[1:] + [t_end]
    counts = [_step_count(tau, b - a) for a, b in zip(starts, bounds)]
    total = sum(counts)
    times = np.empty(total + 1)
    P = np.empty(total + 1)
    C = np.empty(total + 1)
    snap_t, snaps = [], []

    k = 0
    for (t_s, op), n_steps in zip(segments, counts):
        pw, cw = _op_weights(op)
        stepper = ImplicitEuler(op, tau)
        if k == 0:
            times[0], P[0], C[0] = t_s, pw @ u, cw @ u
            if stride:
                snap_t.append(t_s)
                snaps.append(u.copy())
        else:
            # same vector, new state's functional
            P[k] = pw @ u
        for i in range(1, n_steps + 1):
            u = stepper.step(u)
            k += 1
            times[k] = t_s + i * tau
            P[k], C[k] = pw @ u, cw @ u
            if stride and k % stride == 0:
                snap_t.append(times[k])
                snaps.append(u.copy())
    snapshots = np.array(snaps) if snaps else np.empty((0, size))
    return Trajectory(
        times, P, C, np.array(snap_t), snapshots,
        meta={"method": "implicit-euler", "tau": tau, "switch_times": starts[1:]},
    )
