"""Regular triangulations of hexagonal-assembly core layouts.

Layouts are stored in odd-row offset coordinates for pointy-top hexagons:
row ``r`` runs left to right, odd rows are shifted right by half an
assembly.  ``orientation = "flat"`` rotates the finished geometry by 90
degrees.  All mesh vertices sit on a triangular lattice, so vertex
identification is done on exact integer lattice coordinates.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

__all__ = [
    "CoreLayout",
    "TriMesh",
    "LayoutError",
    "KAPPA_LEVELS",
    "build_mesh",
    "split_region",
    "parse_layout",
    "load_layout",
    "layout_to_text",
    "hexagon_area",
]

KAPPA_LEVELS = {6: 1, 24: 2, 96: 4}  # triangles per hexagon -> fan subdivisions

Cell = tuple[int, int]


class LayoutError(ValueError):
    """Invalid core layout or mesh request."""


def hexagon_area(wrench: float) -> float:
    """Area of a regular hexagon with the given across-flats size."""
    return math.sqrt(3.0) / 2.0 * wrench * wrench


def _neighbors(cell: Cell) -> list[Cell]:
    r, c = cell
    if r % 2 == 0:
        return [(r, c - 1), (r, c + 1), (r - 1, c - 1), (r - 1, c), (r + 1, c - 1), (r + 1, c)]
    return [(r, c - 1), (r, c + 1), (r - 1, c), (r - 1, c + 1), (r + 1, c), (r + 1, c + 1)]


@dataclass(frozen=True)
class CoreLayout:
    """Hex-grid map of assembly material ids.

    ``rows[r][c]`` is a material id or ``None`` for an empty position.
    """

    wrench: float
    rows: tuple[tuple[int | None, ...], ...]
    orientation: Literal["pointy", "flat"] = "pointy"

    def __post_init__(self):
        object.__setattr__(
            self, "rows", tuple(tuple(None if v is None else int(v) for v in row) for row in self.rows)
        )
        if not self.wrench > 0.0:
            raise LayoutError("wrench size must be positive")
        if self.orientation not in ("pointy", "flat"):
            raise LayoutError(f"unknown orientation {self.orientation!r}")

    def cells(self) -> Iterator[tuple[Cell, int]]:
        """Occupied cells in row-major order."""
        for r, row in enumerate(self.rows):
            for c, mid in enumerate(row):
                if mid is not None:
                    yield (r, c), mid

    def n_assemblies(self) -> int:
        return sum(1 for _ in self.cells())

    def material_ids(self) -> list[int]:
        return sorted({mid for _, mid in self.cells()})

    def material_of(self, cell: Cell) -> int | None:
        r, c = cell
        if 0 <= r < len(self.rows) and 0 <= c < len(self.rows[r]):
            return self.rows[r][c]
        return None

    def retagged(self, remap: dict[Cell, int]) -> "CoreLayout":
        rows = [list(row) for row in self.rows]
        for (r, c), mid in remap.items():
            if rows[r][c] is None:
                raise LayoutError(f"cannot retag empty cell {(r, c)}")
            rows[r][c] = mid
        return CoreLayout(self.wrench, tuple(map(tuple, rows)), self.orientation)

    def is_connected(self) -> bool:
        occupied = {cell for cell, _ in self.cells()}
        if not occupied:
            return False
        start = next(iter(occupied))
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in _neighbors(queue.popleft()):
                if nb in occupied and nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return len(seen) == len(occupied)

    def validate(self) -> None:
        if self.n_assemblies() == 0:
            raise LayoutError("layout has no assemblies")
        if not self.is_connected():
            raise LayoutError("layout is not connected")

    # geometry -----------------------------------------------------------

    def _lattice_center(self, cell: Cell) -> tuple[int, int]:
        r, c = cell
        i = 2 * c + (r % 2)
        return i, -(3 * r + i) // 2

    def _lattice_to_xy(self, ij: np.ndarray, scale: int) -> np.ndarray:
        R = self.wrench / math.sqrt(3.0)
        i = ij[..., 0].astype(float) / scale
        j = ij[..., 1].astype(float) / scale
        x = i * (self.wrench / 2.0)
        y = i * (R / 2.0) + j * R
        if self.orientation == "flat":
            x, y = -y, x
        return np.stack([x, y], axis=-1)

    def raw_centers(self) -> np.ndarray:
        lat = np.array([self._lattice_center(cell) for cell, _ in self.cells()])
        return self._lattice_to_xy(lat, 1)

    def origin(self) -> np.ndarray:
        """Centroid of the assembly centres; mesh coordinates are relative to it."""
        return self.raw_centers().mean(axis=0)

    def centers(self) -> dict[Cell, np.ndarray]:
        pts = self.raw_centers() - self.origin()
        return {cell: pts[k] for k, (cell, _) in enumerate(self.cells())}


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation with per-triangle material and assembly tags."""

    vertices: np.ndarray          # (V, 2) cm
    triangles: np.ndarray         # (F, 3) counter-clockwise vertex indices
    materials: np.ndarray         # (F,) material id
    assemblies: np.ndarray        # (F,) parent assembly index (row-major cell order)
    boundary_edges: np.ndarray    # (B, 2) vertex pairs, oriented along the outer boundary
    kappa: int = 6
    _lattice: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def total_area(self) -> float:
        return float(self.areas().sum())

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, lexicographic order."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def perimeter(self) -> float:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, degrees."""
        p = self.vertices[self.triangles]
        best = 180.0
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            best = min(best, float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min()))
        return best

    def summary(self) -> dict:
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "boundary_edges": len(self.boundary_edges),
            "area": self.total_area(),
        }


def build_mesh(layout: CoreLayout, kappa: int) -> TriMesh:
    """Triangulate every assembly into ``kappa`` triangles.

    ``kappa = 6`` is the centre-to-corner fan; 24 and 96 split each fan
    triangle uniformly into 4 and 16 congruent triangles.
    """
    if kappa not in KAPPA_LEVELS:
        raise LayoutError(f"unsupported kappa {kappa}; choose from {sorted(KAPPA_LEVELS)}")
    layout.validate()
    n = KAPPA_LEVELS[kappa]

    # pointy-top corner offsets in lattice units, counter-clockwise from 30 deg
    corners = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    local = [(i, j) for i in range(n + 1) for j in range(n + 1 - i)]
    local_index = {p: k for k, p in enumerate(local)}
    sub = []
    for i in range(n):
        for j in range(n - i):
            sub.append((local_index[(i, j)], local_index[(i + 1, j)], local_index[(i, j + 1)]))
            if i + j < n - 1:
                sub.append(
                    (local_index[(i + 1, j)], local_index[(i + 1, j + 1)], local_index[(i, j + 1)])
                )
    local_arr = np.array(local)
    sub_arr = np.array(sub)

    vertex_id: dict[tuple[int, int], int] = {}
    lattice_pts: list[tuple[int, int]] = []
    tris, mats, assy = [], [], []
    for a_idx, (cell, mid) in enumerate(layout.cells()):
        ci, cj = layout._lattice_center(cell)
        for k in range(6):
            e1 = corners[k]
            e2 = corners[(k + 1) % 6]
            pts = (
                np.array([ci * n, cj * n])
                + local_arr[:, :1] * np.array(e1)
                + local_arr[:, 1:] * np.array(e2)
            )
            ids = []
            for p in map(tuple, pts.tolist()):
                vid = vertex_id.get(p)
                if vid is None:
                    vid = len(lattice_pts)
                    vertex_id[p] = vid
                    lattice_pts.append(p)
                ids.append(vid)
            ids = np.array(ids)
            tris.append(ids[sub_arr])
            mats.append(np.full(len(sub_arr), mid))
            assy.append(np.full(len(sub_arr), a_idx))

    lattice = np.array(lattice_pts, dtype=np.int64)
    xy = layout._lattice_to_xy(lattice, n) - layout.origin()
    triangles = np.concatenate(tris).astype(np.int64)
    return TriMesh(
        vertices=xy,
        triangles=triangles,
        materials=np.concatenate(mats).astype(np.int64),
        assemblies=np.concatenate(assy).astype(np.int64),
        boundary_edges=_boundary_edges(triangles),
        kappa=kappa,
        _lattice=lattice,
    )


def _boundary_edges(triangles: np.ndarray) -> np.ndarray:
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inverse.ravel()] == 1]


def split_region(
    layout: CoreLayout, predicate: Sequence[float]
) -> dict[Cell, Literal["top", "bottom"]]:
    """Tag assemblies by a half-plane test on their centres.

    ``predicate = (nx, ny, offset)``; a centre with
    ``nx*x + ny*y - offset >= 0`` is "top" (ties go to "top").
    Coordinates are relative to the centroid of assembly centres.
    """
    nx, ny, off = (float(v) for v in predicate)
    out = {}
    for cell, xy in layout.centers().items():
        s = nx * xy[0] + ny * xy[1] - off
        if abs(s) < 1e-9 * layout.wrench:
            s = 0.0
        out[cell] = "top" if s >= 0.0 else "bottom"
    return out


# ---------------------------------------------------------------------------
# layout file

def parse_layout(text: str) -> CoreLayout:
    """Parse the line-oriented layout format (see ``docs/formats.md``)."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise LayoutError("empty layout file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "wrench" or head[2] != "orientation":
        raise LayoutError("header must read: wrench <cm> orientation <flat|pointy>")
    try:
        wrench = float(head[1])
    except ValueError as exc:
        raise LayoutError(f"bad wrench size {head[1]!r}") from exc
    rows = []
    for line in lines[1:]:
        row = []
        for tok in line.split():
            if tok == ".":
                row.append(None)
            elif tok.isdigit():
                row.append(int(tok))
            else:
                raise LayoutError(f"bad layout token {tok!r}")
        rows.append(tuple(row))
    return CoreLayout(wrench, tuple(rows), head[3])


def load_layout(path: str | Path) -> CoreLayout:
    return parse_layout(Path(path).read_text())


def layout_to_text(layout: CoreLayout) -> str:
    width = max((len(str(m)) for _, m in layout.cells()), default=1)
    out = [f"wrench {layout.wrench!r} orientation {layout.orientation}"]
    for row in layout.rows:
        out.append(" ".join(("." if v is None else str(v)).rjust(width) for v in row))
    return "\n".join(out) + "\n"
