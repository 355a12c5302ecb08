"""Group constants, kinetics parameters, reactor states and perturbations.

A :class:`ReactorState` is one constant-coefficient configuration of the
core.  States are immutable; :func:`apply_perturbation` always returns a
new state (and, for spatially split perturbations, a new layout).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Mapping

import numpy as np
import tomli

if TYPE_CHECKING:
    from .hexmesh import CoreLayout

__all__ = [
    "GroupConstants",
    "KineticsParams",
    "ReactorState",
    "Perturbation",
    "StateDataError",
    "apply_perturbation",
    "removal_split",
    "load_state",
    "dump_state",
    "state_to_toml",
    "parse_state",
    "validate_state",
]


class StateDataError(ValueError):
    """Inconsistent or malformed reactor-state data."""


def _as_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class GroupConstants:
    """Few-group diffusion constants of one material.

    ``removal`` is the total removal cross-section of each group
    (absorption plus out-scatter).  ``scatter[g_from][g_to]`` holds the
    transfer cross-sections; the diagonal is ignored.
    """

    diffusion: tuple[float, ...]
    removal: tuple[float, ...]
    scatter: tuple[tuple[float, ...], ...]
    nu_fission: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "diffusion", _as_tuple(self.diffusion))
        object.__setattr__(self, "removal", _as_tuple(self.removal))
        object.__setattr__(self, "nu_fission", _as_tuple(self.nu_fission))
        object.__setattr__(
            self, "scatter", tuple(_as_tuple(row) for row in self.scatter)
        )
        g = len(self.diffusion)
        if len(self.removal) != g or len(self.nu_fission) != g:
            raise StateDataError("group-constant vectors differ in length")
        if len(self.scatter) != g or any(len(r) != g for r in self.scatter):
            raise StateDataError(f"scatter matrix must be {g}x{g}")
        for name in ("diffusion", "removal", "nu_fission"):
            vals = getattr(self, name)
            if not all(math.isfinite(v) and v >= 0.0 for v in vals):
                raise StateDataError(f"{name} must be finite and >= 0: {vals}")
        for row in self.scatter:
            if not all(math.isfinite(v) and v >= 0.0 for v in row):
                raise StateDataError(f"scatter must be finite and >= 0: {row}")

    @classmethod
    def two_group(
        cls,
        d1: float,
        d2: float,
        removal1: float,
        sigma2: float,
        scatter12: float,
        nu_fission1: float,
        nu_fission2: float,
    ) -> "GroupConstants":
        """Build two-group constants from a table column.

        ``removal1`` is the tabulated sum of group-1 absorption and
        down-scatter; ``sigma2`` is the group-2 removal.
        """
        return cls(
            diffusion=(d1, d2),
            removal=(removal1, sigma2),
            scatter=((0.0, scatter12), (0.0, 0.0)),
            nu_fission=(nu_fission1, nu_fission2),
        )

    @property
    def n_groups(self) -> int:
        return len(self.diffusion)

    @property
    def scatter_down(self) -> float:
        """Group 1 -> group 2 transfer (two-group shorthand)."""
        return self.scatter[0][1]

    def scatter_out(self) -> tuple[float, ...]:
        return tuple(
            sum(v for gt, v in enumerate(row) if gt != g)
            for g, row in enumerate(self.scatter)
        )

    def scaled(self, quantity: str, factor: float) -> "GroupConstants":
        """Return a copy with one named quantity multiplied by ``factor``.

        Quantity names: ``D<g>``, ``removal<g>`` (alias ``sigma<g>``),
        ``nu_fission<g>``, ``scatter<g><h>`` with 1-based group indices.
        """
        kind, idx = _parse_quantity(quantity, self.n_groups)
        if kind == "scatter":
            gf, gt = idx
            rows = [list(r) for r in self.scatter]
            rows[gf][gt] *= factor
            return dataclasses.replace(self, scatter=tuple(map(tuple, rows)))
        vals = list(getattr(self, kind))
        vals[idx] *= factor
        return dataclasses.replace(self, **{kind: tuple(vals)})


_QUANTITY_PREFIXES = {
    "d": "diffusion",
    "diffusion": "diffusion",
    "removal": "removal",
    "sigma": "removal",
    "nu_fission": "nu_fission",
    "nusigf": "nu_fission",
    "scatter": "scatter",
}


def _parse_quantity(name: str, n_groups: int):
    key = name.strip().lower()
    for prefix in sorted(_QUANTITY_PREFIXES, key=len, reverse=True):
        if key.startswith(prefix) and key[len(prefix):].isdigit():
            kind = _QUANTITY_PREFIXES[prefix]
            digits = key[len(prefix):]
            if kind == "scatter":
                if len(digits) != 2:
                    break
                gf, gt = int(digits[0]) - 1, int(digits[1]) - 1
                if not (0 <= gf < n_groups and 0 <= gt < n_groups) or gf == gt:
                    break
                return kind, (gf, gt)
            g = int(digits) - 1
            if not 0 <= g < n_groups:
                break
            return kind, g
    raise StateDataError(f"unknown quantity name {name!r}")


@dataclass(frozen=True)
class KineticsParams:
    """Neutron velocities, delayed-neutron data and fission spectra."""

    velocities: tuple[float, ...]
    beta: tuple[float, ...]
    decay: tuple[float, ...]
    chi_prompt: tuple[float, ...]
    chi_delayed: tuple[float, ...]

    def __post_init__(self):
        for name in ("velocities", "beta", "decay", "chi_prompt", "chi_delayed"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        g = len(self.velocities)
        if len(self.chi_prompt) != g or len(self.chi_delayed) != g:
            raise StateDataError("fission spectra must have one entry per group")
        if len(self.decay) != len(self.beta):
            raise StateDataError("beta and decay constants differ in length")
        if not all(v > 0.0 for v in self.velocities):
            raise StateDataError("velocities must be positive")
        if not all(math.isfinite(lam) and lam >= 0.0 for lam in self.decay):
            raise StateDataError("decay constants must be finite and >= 0")
        if any(b < 0.0 for b in self.beta) or not self.beta_total < 1.0:
            raise StateDataError("delayed fractions must be >= 0 and sum below 1")
        for name in ("chi_prompt", "chi_delayed"):
            if abs(sum(getattr(self, name)) - 1.0) > 1e-12:
                raise StateDataError(f"{name} must sum to 1")

    @property
    def beta_total(self) -> float:
        return float(sum(self.beta))

    @property
    def n_groups(self) -> int:
        return len(self.velocities)

    @property
    def n_precursors(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class ReactorState:
    """One constant-coefficient reactor configuration."""

    materials: Mapping[int, GroupConstants]
    kinetics: KineticsParams
    albedo: tuple[float, ...]
    label: str = "state"

    def __post_init__(self):
        object.__setattr__(
            self, "materials", dict(sorted((int(k), v) for k, v in self.materials.items()))
        )
        object.__setattr__(self, "albedo", _as_tuple(self.albedo))
        g = self.kinetics.n_groups
        if len(self.albedo) != g:
            raise StateDataError("albedo needs one value per group")
        if any(a < 0.0 for a in self.albedo):
            raise StateDataError("albedo factors must be >= 0")
        for mid, gc in self.materials.items():
            if gc.n_groups != g:
                raise StateDataError(f"material {mid} has {gc.n_groups} groups, expected {g}")

    @property
    def n_groups(self) -> int:
        return self.kinetics.n_groups

    @property
    def n_precursors(self) -> int:
        return self.kinetics.n_precursors

    def __eq__(self, other):
        if not isinstance(other, ReactorState):
            return NotImplemented
        return (
            dict(self.materials) == dict(other.materials)
            and self.kinetics == other.kinetics
            and self.albedo == other.albedo
            and self.label == other.label
        )

    def __hash__(self):
        return hash((tuple(self.materials.items()), self.kinetics, self.albedo, self.label))

    def with_label(self, label: str) -> "ReactorState":
        return dataclasses.replace(self, label=label)


def removal_split(gc: GroupConstants) -> tuple[float, ...]:
    """Recover per-group absorption from removal minus out-scatter.

    >>> gc = GroupConstants.two_group(1.3832, 0.386277, 2.48836e-2, 6.73049e-2,
    ...                               1.64977e-2, 4.81619e-3, 8.46154e-2)
    >>> [round(v, 10) for v in removal_split(gc)]
    [0.0083859, 0.0673049]
    """
    out = []
    for g, (rem, sc) in enumerate(zip(gc.removal, gc.scatter_out())):
        absorption = rem - sc
        if absorption < 0.0:
            raise StateDataError(
                f"group {g + 1}: removal {rem} below out-scatter {sc}"
            )
        out.append(absorption)
    return tuple(out)


@dataclass(frozen=True)
class Perturbation:
    """Multiplicative change of one cross-section in one material.

    ``region`` is ``"all"`` or a half-plane split ``(nx, ny, offset)``: an
    assembly with centre ``x`` lies on the "top" side when
    ``nx*x + ny*y - offset >= 0``.  ``factor`` applies to the whole
    material; for a split, ``factor`` is used on the top side and
    ``factor_bottom`` on the other.
    """

    target_material: int
    target_quantity: str
    factor: float
    region: Literal["all"] | tuple[float, float, float] = "all"
    factor_bottom: float | None = None

    def __post_init__(self):
        if not self.factor > 0.0:
            raise StateDataError("perturbation factor must be positive")
        if self.region != "all":
            if len(self.region) != 3:
                raise StateDataError("region must be 'all' or (nx, ny, offset)")
            object.__setattr__(self, "region", _as_tuple(self.region))
            if self.factor_bottom is None or not self.factor_bottom > 0.0:
                raise StateDataError("split perturbation needs a positive factor_bottom")

    @property
    def is_split(self) -> bool:
        return self.region != "all"


def apply_perturbation(
    state: ReactorState,
    pert: Perturbation,
    layout: "CoreLayout | None" = None,
) -> tuple[ReactorState, "CoreLayout | None"]:
    """Scale one quantity of one material, returning ``(state, layout)``.

    For a whole-domain perturbation the layout is returned unchanged.  For
    a half-plane split, two fresh material ids are minted (top and bottom)
    and the returned layout re-tags the affected assemblies.
    """
    if pert.target_material not in state.materials:
        raise StateDataError(f"unknown material id {pert.target_material}")
    base = state.materials[pert.target_material]
    materials = dict(state.materials)
    if not pert.is_split:
        materials[pert.target_material] = base.scaled(pert.target_quantity, pert.factor)
        return dataclasses.replace(state, materials=materials), layout

    if layout is None:
        raise StateDataError("split perturbation requires a core layout")
    from .hexmesh import split_region

    tags = split_region(layout, pert.region)
    next_id = max(max(materials), max(layout.material_ids())) + 1
    top_id, bottom_id = next_id, next_id + 1
    materials[top_id] = base.scaled(pert.target_quantity, pert.factor)
    materials[bottom_id] = base.scaled(pert.target_quantity, pert.factor_bottom)
    remap = {}
    for cell, mid in layout.cells():
        if mid == pert.target_material:
            remap[cell] = top_id if tags[cell] == "top" else bottom_id
    new_layout = layout.retagged(remap)
    used = set(new_layout.material_ids())
    if pert.target_material not in used:
        del materials[pert.target_material]
    return dataclasses.replace(state, materials=materials), new_layout


def validate_state(state: ReactorState) -> list[str]:
    """Return human-readable warnings for suspicious but legal data."""
    warnings = []
    for mid, gc in state.materials.items():
        removal_split(gc)
        others = [
            other.removal[-1] for oid, other in state.materials.items() if oid != mid
        ]
        if others:
            med = float(np.median(others))
            if gc.removal[-1] > 5.0 * med:
                warnings.append(
                    f"material {mid}: thermal removal {gc.removal[-1]:.6g} exceeds "
                    f"5x the median of other materials ({med:.6g}); check transcription"
                )
    return warnings


# ---------------------------------------------------------------------------
# state file (TOML subset)

_TOP_KEYS = {"label", "kinetics", "albedo", "materials"}
_KIN_KEYS = {"velocities", "beta", "decay", "chi_prompt", "chi_delayed"}
_MAT_KEYS = {"diffusion", "removal", "scatter", "nu_fission"}


def _check_keys(table: Mapping, allowed: set[str], where: str, required=True):
    unknown = set(table) - allowed
    if unknown:
        raise StateDataError(f"unknown key(s) in {where}: {sorted(unknown)}")
    if required:
        missing = allowed - set(table) - {"label"}
        if missing:
            raise StateDataError(f"missing key(s) in {where}: {sorted(missing)}")


def parse_state(text: str) -> ReactorState:
    """Parse the TOML state format (see ``docs/formats.md``)."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise StateDataError(f"malformed state file: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, "state")
    kin = doc["kinetics"]
    _check_keys(kin, _KIN_KEYS, "[kinetics]")
    kinetics = KineticsParams(**{k: kin[k] for k in _KIN_KEYS})
    materials = {}
    for key, table in doc["materials"].items():
        if not key.isdigit():
            raise StateDataError(f"material key must be an integer id, got {key!r}")
        _check_keys(table, _MAT_KEYS, f"[materials.{key}]")
        materials[int(key)] = GroupConstants(**{k: table[k] for k in _MAT_KEYS})
    return ReactorState(
        materials=materials,
        kinetics=kinetics,
        albedo=doc["albedo"],
        label=str(doc.get("label", "state")),
    )


def _fmt(values) -> str:
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def state_to_toml(state: ReactorState) -> str:
    k = state.kinetics
    lines = [
        f"label = {_toml_str(state.label)}",
        f"albedo = {_fmt(state.albedo)}",
        "",
        "[kinetics]",
        f"velocities = {_fmt(k.velocities)}",
        f"beta = {_fmt(k.beta)}",
        f"decay = {_fmt(k.decay)}",
        f"chi_prompt = {_fmt(k.chi_prompt)}",
        f"chi_delayed = {_fmt(k.chi_delayed)}",
    ]
    for mid, gc in state.materials.items():
        lines += [
            "",
            f"[materials.{mid}]",
            f"diffusion = {_fmt(gc.diffusion)}",
            f"removal = {_fmt(gc.removal)}",
            "scatter = [" + ", ".join(_fmt(r) for r in gc.scatter) + "]",
            f"nu_fission = {_fmt(gc.nu_fission)}",
        ]
    return "\n".join(lines) + "\n"


def _toml_str(s: str) -> str:
    """TOML basic string; control characters and DEL become ``\\uXXXX``."""
    out = []
    for ch in s:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def load_state(path: str | Path) -> ReactorState:
    return parse_state(Path(path).read_text())


def dump_state(state: ReactorState, path: str | Path) -> None:
    Path(path).write_text(state_to_toml(state))
