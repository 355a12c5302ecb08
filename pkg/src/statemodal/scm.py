"""State change modal (SCM) driver.

A transient is a sequence of constant-coefficient reactor states switching
instantaneously at given times.  Offline, the dominant alpha-modes of every
state are computed and stored; online, the solution is carried across each
switch by projecting onto the next state's modes and evolving the modal
amplitudes in closed form.  See ``docs/formats.md`` for the file layouts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
import struct
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import Perturbation, ReactorState, _toml_str, apply_perturbation, load_state
from .dynamics import Trajectory, integral_weights, run_switched
from .eigensolver import EigenMode, SolveStats, SpectrumRequest, solve_alpha
from .fem import BlockOperator, FeSpace, assemble_block_system
from .hexmesh import CoreLayout, TriMesh, build_mesh, load_layout
from .linalg import COUNTERS
from .modal import EvolutionKind, Method, ModalBasis, amplitudes, coefficients_for, evolve, safe_cut

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ScenarioError",
    "LibraryError",
    "OfflineError",
    "StateSpec",
    "Scenario",
    "ResolvedState",
    "LibraryEntry",
    "StateLibrary",
    "ErrorReport",
    "load_scenario",
    "parse_scenario",
    "resolve_states",
    "fingerprint",
    "initial_vector",
    "offline_build",
    "online_run",
    "reference_run",
    "compare_runs",
    "data_path",
]

log = logging.getLogger(__name__)

METHODS = ("biorthogonal", "least-squares", "orthogonal-approx")
EVOLUTIONS = ("exact-complex", "real-part-only")
INITIALS = ("first-mode", "flat", "file")
FORMAT_VERSION = 1
MAGIC = b"SCMMODES"
_HEADER = struct.Struct("<8sII q q 64s")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


class LibraryError(RuntimeError):
    """Missing, corrupt or stale state library."""


class OfflineError(RuntimeError):
    """An eigensolve failed for one state of a scenario."""


def data_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files("statemodal") / "data" / name))


def _resolve_path(ref: str, base: Path) -> Path:
    if ref.startswith("package:"):
        return data_path(ref[len("package:"):])
    p = Path(ref)
    return p if p.is_absolute() else base / p


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class StateSpec:
    """One state of a scenario: a full state file or a perturbation of the prior state."""

    t_start: float
    state: ReactorState | None = None
    perturbation: Perturbation | None = None

    def __post_init__(self):
        if (self.state is None) == (self.perturbation is None):
            raise ScenarioError("each state needs exactly one of 'state' or 'perturbation'")


@dataclass
class Scenario:
    label: str
    layout: CoreLayout
    states: list[StateSpec]
    kappa: int = 24
    degree: int = 2
    n_modes: int = 10
    method: Method = "orthogonal-approx"
    evolution: EvolutionKind = "real-part-only"
    t_end: float = 10.0
    output_step: float = 0.01
    initial: str = "first-mode"
    initial_vector: np.ndarray | None = None
    reference_tau: float = 0.0025
    tol: float = 1e-10

    def __post_init__(self):
        if not self.states:
            raise ScenarioError("scenario has no states")
        if self.states[0].state is None:
            raise ScenarioError("the first state must be a full state, not a perturbation")
        if self.n_modes < 1:
            raise ScenarioError("n_modes must be at least 1")
        if self.method not in METHODS:
            raise ScenarioError(f"method must be one of {METHODS}")
        if self.evolution not in EVOLUTIONS:
            raise ScenarioError(f"evolution must be one of {EVOLUTIONS}")
        if self.initial not in INITIALS:
            raise ScenarioError(f"initial must be one of {INITIALS}")
        if self.initial == "file" and self.initial_vector is None:
            raise ScenarioError("initial = 'file' needs initial_file")
        if not (self.output_step > 0.0 and self.reference_tau > 0.0):
            raise ScenarioError("output_step and reference_tau must be positive")
        t = [s.t_start for s in self.states]
        # state 0 may have zero length: it then only supplies the initial data
        if any(b <= a for a, b in zip(t[1:], t[2:])) or (len(t) > 1 and t[1] < t[0]):
            raise ScenarioError(f"switch times must increase: {t}")
        if self.t_end < t[-1]:
            raise ScenarioError(f"t_end={self.t_end} precedes the last switch at {t[-1]}")

    @property
    def t0(self) -> float:
        return self.states[0].t_start

    @property
    def switch_times(self) -> list[float]:
        return [s.t_start for s in self.states[1:]]

    def active(self) -> list[int]:
        """Indices of states with a non-empty interval."""
        t = [s.t_start for s in self.states] + [self.t_end]
        return [k for k in range(len(self.states)) if t[k + 1] > t[k]]


_SCENARIO_KEYS = {
    "label", "layout", "kappa", "degree", "n_modes", "method", "evolution", "t_end",
    "output_step", "initial", "initial_file", "reference_tau", "tol", "states",
}
_STATE_KEYS = {"t_start", "state", "perturbation"}
_PERT_KEYS = {"material", "quantity", "factor", "region", "factor_bottom"}


def _strict(table: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) in {where}: {sorted(unknown)}")


def parse_scenario(text: str, base: str | Path = ".") -> Scenario:
    """Parse a scenario TOML document; relative paths resolve against ``base``."""
    base = Path(base)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"invalid TOML: {exc}") from exc
    _strict(doc, _SCENARIO_KEYS, "scenario")
    for key in ("layout", "states"):
        if key not in doc:
            raise ScenarioError(f"scenario lacks '{key}'")
    layout = load_layout(_resolve_path(doc["layout"], base))
    specs = []
    for i, entry in enumerate(doc["states"]):
        _strict(entry, _STATE_KEYS, f"states[{i}]")
        if "t_start" not in entry:
            raise ScenarioError(f"states[{i}] lacks t_start")
        state = pert = None
        if "state" in entry:
            state = load_state(_resolve_path(entry["state"], base))
        if "perturbation" in entry:
            p = entry["perturbation"]
            _strict(p, _PERT_KEYS, f"states[{i}].perturbation")
            try:
                pert = Perturbation(
                    int(p["material"]), str(p["quantity"]), float(p["factor"]),
                    tuple(p["region"]) if "region" in p else "all",
                    p.get("factor_bottom"),
                )
            except KeyError as exc:
                raise ScenarioError(f"states[{i}].perturbation lacks {exc}") from exc
        specs.append(StateSpec(float(entry["t_start"]), state, pert))

    init_vec = None
    if "initial_file" in doc:
        path = _resolve_path(doc["initial_file"], base)
        init_vec = np.load(path) if path.suffix == ".npy" else np.loadtxt(path)
    kw = {k: doc[k] for k in ("label", "kappa", "degree", "n_modes", "method", "evolution",
                              "t_end", "output_step", "initial", "reference_tau", "tol") if k in doc}
    kw.setdefault("label", "scenario")
    return Scenario(layout=layout, states=specs, initial_vector=init_vec, **kw)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.parent)


# ---------------------------------------------------------------------------
# resolved states and fingerprints


@dataclass(eq=False)
class ResolvedState:
    index: int
    t_start: float
    state: ReactorState
    layout: CoreLayout
    mesh: TriMesh
    space: FeSpace
    fingerprint: str

    _op: BlockOperator | None = field(default=None, repr=False)

    @property
    def op(self) -> BlockOperator:
        if self._op is None:
            self._op = assemble_block_system(self.state, self.space)
        return self._op


def fingerprint(state: ReactorState, mesh: TriMesh, degree: int) -> str:
    """SHA-256 of the physics data, the mesh and the element degree (label excluded)."""
    canon = dataclasses.replace(state, label="", materials=dict(sorted(state.materials.items())))
    from .core import state_to_toml

    h = hashlib.sha256()
    h.update(f"scm-v{FORMAT_VERSION};degree={int(degree)};kappa={mesh.kappa}\n".encode())
    h.update(state_to_toml(canon).encode())
    for arr in (mesh.vertices, mesh.triangles, mesh.materials):
        h.update(np.ascontiguousarray(arr).astype("<f8" if arr.dtype.kind == "f" else "<i8").tobytes())
    return h.hexdigest()


def resolve_states(scenario: Scenario) -> list[ResolvedState]:
    """Apply perturbations in order and build one mesh and space per state."""
    out = []
    state, layout = None, scenario.layout
    ref_vertices = None
    for k, spec in enumerate(scenario.states):
        if spec.state is not None:
            state, layout = spec.state, scenario.layout
        else:
            state, layout = apply_perturbation(state, spec.perturbation, layout)
            state = state.with_label(f"{scenario.label}, state {k}")
        mesh = build_mesh(layout, scenario.kappa)
        if ref_vertices is None:
            ref_vertices = mesh.vertices
        elif mesh.vertices.shape != ref_vertices.shape or not np.array_equal(mesh.vertices, ref_vertices):
            raise ScenarioError(f"state {k} changes the core geometry; states must share one mesh")
        space = FeSpace(mesh, scenario.degree)
        out.append(ResolvedState(k, spec.t_start, state, layout, mesh, space,
                                 fingerprint(state, mesh, scenario.degree)))
    return out


# ---------------------------------------------------------------------------
# library


@dataclass
class LibraryEntry:
    index: int
    label: str
    fingerprint: str
    direct: list[EigenMode]
    adjoint: list[EigenMode] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([m.value for m in self.direct])


def _modes_to_columns(modes: list[EigenMode]) -> np.ndarray:
    from .eigensolver import real_basis

    return np.stack(real_basis(modes), axis=0)


def _columns_to_modes(cols: np.ndarray, values, kinds, residuals) -> list[EigenMode]:
    modes = []
    k = 0
    while k < len(kinds):
        if kinds[k] == "pair":
            v = cols[k] + 1j * cols[k + 1]
            modes.append(EigenMode(complex(values[k]), v, "pair", residuals[k]))
            modes.append(EigenMode(complex(values[k + 1]), np.conj(v), "pair", residuals[k + 1]))
            k += 2
        else:
            modes.append(EigenMode(complex(values[k]), cols[k].copy(), "real", residuals[k]))
            k += 1
    return modes


def _write_vectors(path: Path, cols: np.ndarray, fp: str) -> None:
    n_vec, length = cols.shape
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, length, n_vec, fp.encode("ascii"))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(cols, dtype="<f8").tobytes())


def _read_vectors(path: Path, fp: str) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise LibraryError(f"{path.name}: truncated header")
    magic, version, _, length, n_vec, stored = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise LibraryError(f"{path.name}: not a mode file of format version {FORMAT_VERSION}")
    if stored.decode("ascii") != fp:
        raise LibraryError(f"{path.name}: fingerprint does not match its metadata")
    body = raw[_HEADER.size:]
    if len(body) != 8 * length * n_vec:
        raise LibraryError(f"{path.name}: expected {n_vec}x{length} values, file size disagrees")
    return np.frombuffer(body, dtype="<f8").reshape(n_vec, length).astype(float)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return _toml_str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return repr(f)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


@dataclass
class StateLibrary:
    """Per-state dominant modes, persisted as a directory."""

    kappa: int
    degree: int
    entries: list[LibraryEntry]
    label: str = ""

    def entry(self, index: int) -> LibraryEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise LibraryError(f"library has no entry for state {index}")

    def save(self, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        lines = [
            f"format_version = {FORMAT_VERSION}",
            f"label = {_toml_value(self.label)}",
            f"kappa = {self.kappa}",
            f"degree = {self.degree}",
        ]
        for e in self.entries:
            stem = f"state{e.index:02d}"
            _write_vectors(d / f"{stem}.direct.bin", _modes_to_columns(e.direct), e.fingerprint)
            if e.adjoint is not None:
                _write_vectors(d / f"{stem}.adjoint.bin", _modes_to_columns(e.adjoint), e.fingerprint)
            lines += ["", "[[entries]]", f"index = {e.index}", f"label = {_toml_value(e.label)}",
                      f"fingerprint = {_toml_value(e.fingerprint)}",
                      f"has_adjoint = {_toml_value(e.adjoint is not None)}"]
            for tag, modes in (("direct", e.direct), ("adjoint", e.adjoint)):
                if modes is None:
                    continue
                lines += [
                    f"{tag}_re = {_toml_value([m.value.real for m in modes])}",
                    f"{tag}_im = {_toml_value([m.value.imag for m in modes])}",
                    f"{tag}_kind = {_toml_value([m.kind for m in modes])}",
                    f"{tag}_residual = {_toml_value([m.residual for m in modes])}",
                ]
            for key, val in sorted(e.meta.items()):
                lines.append(f"meta_{key} = {_toml_value(val)}")
        (d / "library.toml").write_text("\n".join(lines) + "\n")
        return d

    @classmethod
    def load(cls, directory: str | Path) -> "StateLibrary":
        d = Path(directory)
        index = d / "library.toml"
        if not index.is_file():
            raise LibraryError(f"no library at {d}")
        try:
            doc = tomllib.loads(index.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise LibraryError(f"corrupt library index: {exc}") from exc
        if doc.get("format_version") != FORMAT_VERSION:
            raise LibraryError(f"library format {doc.get('format_version')} is not {FORMAT_VERSION}")
        entries = []
        for raw in doc.get("entries", []):
            stem = f"state{raw['index']:02d}"
            fp = raw["fingerprint"]
            modes = {}
            for tag in ("direct", "adjoint"):
                if tag == "adjoint" and not raw["has_adjoint"]:
                    modes[tag] = None
                    continue
                cols = _read_vectors(d / f"{stem}.{tag}.bin", fp)
                vals = [complex(r, i) for r, i in zip(raw[f"{tag}_re"], raw[f"{tag}_im"])]
                if len(vals) != cols.shape[0]:
                    raise LibraryError(f"{stem}.{tag}.bin holds {cols.shape[0]} vectors, index lists {len(vals)}")
                modes[tag] = _columns_to_modes(cols, vals, raw[f"{tag}_kind"], raw[f"{tag}_residual"])
            meta = {k[5:]: v for k, v in raw.items() if k.startswith("meta_")}
            entries.append(LibraryEntry(raw["index"], raw["label"], fp, modes["direct"], modes["adjoint"], meta))
        return cls(doc["kappa"], doc["degree"], entries, doc.get("label", ""))

    def check(self, scenario: Scenario, resolved: list[ResolvedState] | None = None) -> list[ResolvedState]:
        """Reject the library unless every state's fingerprint matches the scenario."""
        if (self.kappa, self.degree) != (scenario.kappa, scenario.degree):
            raise LibraryError(
                f"library built for kappa={self.kappa}, p={self.degree}; "
                f"scenario asks kappa={scenario.kappa}, p={scenario.degree}"
            )
        resolved = resolved or resolve_states(scenario)
        for rs in resolved:
            e = self.entry(rs.index)
            if e.fingerprint != rs.fingerprint:
                raise LibraryError(f"stale library entry for state {rs.index} ({e.label!r}): fingerprint mismatch")
            if len(e.direct) < min(scenario.n_modes, 1):
                raise LibraryError(f"library entry {rs.index} has no modes")
            if scenario.method == "biorthogonal" and e.adjoint is None:
                raise LibraryError(f"library entry {rs.index} lacks adjoint modes for the biorthogonal method")
        return resolved


def _needed_states(scenario: Scenario) -> list[int]:
    active = scenario.active()
    if 0 not in active and scenario.initial == "first-mode":
        return [0] + active
    return active


def offline_build(
    scenario: Scenario,
    directory: str | Path | None = None,
    threads: int = 1,
    resolved: list[ResolvedState] | None = None,
) -> StateLibrary:
    """Compute the dominant modes of every state; adjoints only for the biorthogonal method.

    A zero-length first state that only supplies the initial mode gets a
    single mode.  With ``directory`` the library is written there.
    """
    resolved = resolved or resolve_states(scenario)
    needed = _needed_states(scenario)
    active = set(scenario.active())
    want_adjoint = scenario.method == "biorthogonal"

    def build(k: int) -> LibraryEntry:
        rs = resolved[k]
        n = scenario.n_modes if k in active else 1
        stats = SolveStats()
        label = rs.state.label
        try:
            direct = solve_alpha(rs.op, SpectrumRequest(n_modes=n, tol=scenario.tol), stats)
            adjoint = None
            if want_adjoint and k in active:
                adjoint = solve_alpha(rs.op, SpectrumRequest(n_modes=n, which="adjoint", tol=scenario.tol))
        except Exception as exc:
            raise OfflineError(f"state {k} ({label!r}): {exc}") from exc
        meta = {"shift": stats.shift, "restarts": stats.restarts, "solves": stats.solves,
                "n_dofs": rs.op.size}
        return LibraryEntry(k, label, rs.fingerprint, direct, adjoint, meta)

    if threads > 1 and len(needed) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(build, needed))
    else:
        entries = [build(k) for k in needed]
    lib = StateLibrary(scenario.kappa, scenario.degree, entries, scenario.label)
    if directory is not None:
        lib.save(directory)
    return lib


# ---------------------------------------------------------------------------
# online stage


def initial_vector(scenario: Scenario, resolved: list[ResolvedState], library: StateLibrary | None) -> np.ndarray:
    size = resolved[0].op.size
    if scenario.initial == "first-mode":
        if library is None:
            raise LibraryError("first-mode initial data needs the library entry of state 0")
        return ModalBasis("", library.entry(0).direct, resolved[0].op).functions[:, 0].copy()
    if scenario.initial == "flat":
        return np.ones(size)
    u = np.asarray(scenario.initial_vector, dtype=float).ravel()
    if u.shape != (size,):
        raise ScenarioError(f"initial vector has {u.size} values, expected {size}")
    return u


def _output_grid(scenario: Scenario) -> np.ndarray:
    t0, t1, h = scenario.t0, scenario.t_end, scenario.output_step
    n = int(math.floor((t1 - t0) / h + 1e-9))
    grid = t0 + h * np.arange(n + 1)
    pts = np.concatenate([grid, [t1], scenario.switch_times])
    pts = np.unique(pts)
    # merge points closer than rounding noise
    keep = np.concatenate([[True], np.diff(pts) > 1e-9 * max(1.0, abs(t1))])
    return pts[keep]


def online_run(
    scenario: Scenario,
    library: StateLibrary,
    resolved: list[ResolvedState] | None = None,
    n_modes: int | None = None,
) -> Trajectory:
    """Modal trajectory across all state switches; no eigensolves or factorizations.

    At a switch time the recorded values belong to the projected initial
    condition of the new state (the fast phase is not modelled), and the
    time is listed under ``meta["discontinuities"]``.
    """
    if scenario.t_end <= scenario.t0:
        warnings.warn("zero-length scenario: the trajectory is empty", stacklevel=2)
        return Trajectory.empty(method=scenario.method, evolution=scenario.evolution)
    before = dict(COUNTERS)
    resolved = library.check(scenario, resolved)
    N = scenario.n_modes if n_modes is None else n_modes
    u = initial_vector(scenario, resolved, library)

    grid = _output_grid(scenario)
    bounds = [s.t_start for s in scenario.states] + [scenario.t_end]
    times, P, C = [], [], []
    interval_meta = []
    for k in scenario.active():
        rs = resolved[k]
        e = library.entry(k)
        cut = safe_cut(e.direct, N)
        direct = e.direct[:cut]
        adjoint = None if e.adjoint is None else e.adjoint[:cut]
        basis = ModalBasis(e.label, direct, rs.op, adjoint)
        coeff = coefficients_for(scenario.method, u, basis, bounds[k])
        pw, cw = integral_weights(rs.state, rs.space)
        pf, cf = pw @ basis.functions, cw @ basis.functions
        last = k == scenario.active()[-1]
        sel = (grid >= bounds[k]) & ((grid <= bounds[k + 1]) if last else (grid < bounds[k + 1]))
        for t in grid[sel]:
            a = amplitudes(basis, coeff, t, scenario.evolution)
            times.append(t)
            P.append(pf @ a)
            C.append(cf @ a)
        interval_meta.append({"state": k, "t_start": bounds[k], "n_modes": basis.n_modes,
                              "b": coeff.b.tolist(), "residual": coeff.residual})
        u = evolve(basis, coeff, bounds[k + 1], scenario.evolution)

    if COUNTERS != before:
        raise RuntimeError("online stage performed an eigensolve or factorization")
    return Trajectory(
        np.array(times), np.array(P), np.array(C),
        meta={"method": scenario.method, "evolution": scenario.evolution, "n_modes": N,
              "discontinuities": [bounds[k] for k in scenario.active()[1:]] or [],
              "intervals": interval_meta},
    )


def reference_run(
    scenario: Scenario,
    library: StateLibrary | None = None,
    tau: float | None = None,
    resolved: list[ResolvedState] | None = None,
    stride: int | None = None,
) -> Trajectory:
    """Implicit Euler through the same states and initial condition."""
    resolved = resolved or resolve_states(scenario)
    u0 = initial_vector(scenario, resolved, library)
    segments = [(resolved[k].t_start, resolved[k].op) for k in scenario.active()]
    return run_switched(segments, u0, tau or scenario.reference_tau, scenario.t_end, stride)


@dataclass
class ErrorReport:
    window: tuple[float, float]
    n_points: int
    max_rel_P: float
    l2_rel_P: float
    max_rel_C: float
    l2_rel_C: float

    def as_text(self) -> str:
        return "\n".join([
            f"window = [{self.window[0]:g}, {self.window[1]:g}] s, {self.n_points} points",
            f"P: max relative error {self.max_rel_P:.6e}, L2 relative error {self.l2_rel_P:.6e}",
            f"C: max relative error {self.max_rel_C:.6e}, L2 relative error {self.l2_rel_C:.6e}",
        ]) + "\n"


def compare_runs(modal: Trajectory, reference: Trajectory, t_window: tuple[float, float]) -> ErrorReport:
    """Relative errors of P and C on the modal times inside ``t_window``.

    The reference is interpolated linearly onto those times.
    """
    t_a, t_b = t_window
    if not t_b >= t_a:
        raise ValueError("window end precedes its start")
    lo = max(t_a, modal.times[0] if len(modal) else math.inf, reference.times[0] if len(reference) else math.inf)
    hi = min(t_b, modal.times[-1] if len(modal) else -math.inf, reference.times[-1] if len(reference) else -math.inf)
    if lo > hi:
        raise ValueError("trajectories do not overlap inside the window")
    sel = (modal.times >= lo) & (modal.times <= hi)
    t = modal.times[sel]
    if t.size == 0:
        raise ValueError("no modal output times inside the window")
    out = {}
    for name in ("P", "C"):
        m = getattr(modal, name)[sel]
        r = np.interp(t, reference.times, getattr(reference, name))
        out[name] = (float(np.max(np.abs(m - r) / np.abs(r))), float(np.linalg.norm(m - r) / np.linalg.norm(r)))
    return ErrorReport((t_a, t_b), int(t.size), out["P"][0], out["P"][1], out["C"][0], out["C"][1])
