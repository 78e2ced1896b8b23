"""Occupancy-grid geometry: FOV/ROI rasterization and shared-interest values.

A single global grid covers the road region. A cell belongs to a triangle
iff the cell's *center* lies inside it or on its boundary (center-sampling
rule); degenerate triangles cover nothing. Coverage fractions are measured
over the in-grid cells of the region of interest.

The pairwise shared-interest value between users i and k combines the two
directional coverage gains

    g(i<-k) = |cells(ROI_i) & cells(FOV_k) \\ cells(FOV_i)| / |cells(ROI_i)|

i.e. the fraction of i's region of interest that k's field of view covers
and i's own does not (non-redundant gain; 0 when ROI_i is empty).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyRoi
from .model import Roi, VehicleState

TriangleLike = Optional[Sequence[Sequence[float]]]


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the shared occupancy grid (origin at a cell corner)."""

    origin_x: float
    origin_y: float
    cell_size: float
    width: int   # cells along x
    height: int  # cells along y

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid must have positive extent")

    @classmethod
    def for_region(cls, width_m: float, height_m: float, cell_size: float = 1.0,
                   origin: tuple[float, float] = (0.0, 0.0)) -> "GridSpec":
        return cls(origin[0], origin[1], cell_size,
                   int(round(width_m / cell_size)), int(round(height_m / cell_size)))

    def center_x(self, col: np.ndarray | int):
        return self.origin_x + (np.asarray(col) + 0.5) * self.cell_size

    def center_y(self, row: np.ndarray | int):
        return self.origin_y + (np.asarray(row) + 0.5) * self.cell_size


@dataclass(frozen=True)
class OccupancyGrid:
    """Binary raster over the region; bits is row-major (height, width)."""

    spec: GridSpec
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.shape != (self.spec.height, self.spec.width):
            raise ValueError("bit count must equal width x height")
        object.__setattr__(self, "bits", self.bits.astype(bool))

    def count(self) -> int:
        return int(self.bits.sum())


def _edge_values(ax, ay, bx, by, px, py):
    # Cross product (b - a) x (p - a); same formula as the scalar oracle so
    # boundary cells resolve identically.
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize_triangle(tri: TriangleLike, grid_spec: GridSpec) -> OccupancyGrid:
    """Rasterize a triangle: cell set iff its center is inside or on the edge."""
    bits = np.zeros((grid_spec.height, grid_spec.width), dtype=bool)
    if tri is None:
        return OccupancyGrid(grid_spec, bits)
    (ax, ay), (bx, by), (cx, cy) = [(float(v[0]), float(v[1])) for v in tri]
    area2 = _edge_values(ax, ay, bx, by, cx, cy)
    if area2 == 0.0:
        return OccupancyGrid(grid_spec, bits)

    cs, ox, oy = grid_spec.cell_size, grid_spec.origin_x, grid_spec.origin_y
    lo_col = max(0, int(math.floor((min(ax, bx, cx) - ox) / cs - 0.5)) - 1)
    hi_col = min(grid_spec.width - 1, int(math.ceil((max(ax, bx, cx) - ox) / cs)) + 1)
    lo_row = max(0, int(math.floor((min(ay, by, cy) - oy) / cs - 0.5)) - 1)
    hi_row = min(grid_spec.height - 1, int(math.ceil((max(ay, by, cy) - oy) / cs)) + 1)
    if lo_col > hi_col or lo_row > hi_row:
        return OccupancyGrid(grid_spec, bits)

    cols = np.arange(lo_col, hi_col + 1)
    rows = np.arange(lo_row, hi_row + 1)
    px = grid_spec.center_x(cols)[None, :]
    py = grid_spec.center_y(rows)[:, None]
    d1 = _edge_values(ax, ay, bx, by, px, py)
    d2 = _edge_values(bx, by, cx, cy, px, py)
    d3 = _edge_values(cx, cy, ax, ay, px, py)
    if area2 > 0:
        inside = (d1 >= 0) & (d2 >= 0) & (d3 >= 0)
    else:
        inside = (d1 <= 0) & (d2 <= 0) & (d3 <= 0)
    bits[lo_row:hi_row + 1, lo_col:hi_col + 1] = inside
    return OccupancyGrid(grid_spec, bits)


def fov_triangle(v: VehicleState, range_m: float, half_angle: float) -> tuple:
    """Isosceles sensor triangle: apex at the vehicle, axis along its heading."""
    if range_m <= 0:
        raise ValueError(f"range must be positive, got {range_m}")
    x, y = v.position
    ux, uy = math.cos(v.heading), math.sin(v.heading)
    # perpendicular (left of the axis)
    nx, ny = -uy, ux
    half_base = range_m * math.tan(half_angle)
    base_x, base_y = x + range_m * ux, y + range_m * uy
    return (
        (x, y),
        (base_x + half_base * nx, base_y + half_base * ny),
        (base_x - half_base * nx, base_y - half_base * ny),
    )


def _roi_triangle(roi) -> TriangleLike:
    if isinstance(roi, Roi):
        return roi.triangle
    return roi


def _rasterize_all(tris: Mapping[int, TriangleLike], grid_spec: GridSpec) -> dict[int, np.ndarray]:
    return {uid: rasterize_triangle(_roi_triangle(t), grid_spec).bits
            for uid, t in tris.items()}


def detected_awareness(i: int, collaborators: Iterable[int],
                       rois: Mapping, fovs: Mapping,
                       grid_spec: GridSpec) -> float:
    """Fraction of user i's ROI covered by its own FOV plus collaborators' FOVs."""
    roi_bits = rasterize_triangle(_roi_triangle(rois[i]), grid_spec).bits
    total = int(roi_bits.sum())
    if total == 0:
        raise EmptyRoi(f"user {i} ROI rasterizes to zero cells")
    cover = rasterize_triangle(fovs[i], grid_spec).bits
    for k in sorted(set(collaborators)):
        if k == i:
            continue
        cover = cover | rasterize_triangle(fovs[k], grid_spec).bits
    return int((roi_bits & cover).sum()) / total


def _directional_gain(roi_bits: np.ndarray, fov_own: np.ndarray,
                      fov_other: np.ndarray) -> float:
    total = int(roi_bits.sum())
    if total == 0:
        return 0.0
    gained = roi_bits & fov_other & ~fov_own
    return int(gained.sum()) / total


def _combine(g_ik: float, g_ki: float, mode: str) -> float:
    if mode == "sum":
        return g_ik + g_ki
    if mode == "max":
        return max(g_ik, g_ki)
    if mode == "mean":
        return 0.5 * (g_ik + g_ki)
    raise ValueError(f"unknown pair mode {mode!r}")


def shared_interest(i: int, k: int, rois: Mapping, fovs: Mapping,
                    grid_spec: GridSpec, mode: str = "sum") -> float:
    """Symmetric pairwise value of information between users i and k."""
    if i == k:
        raise ValueError("shared interest is defined for distinct users")
    roi_i = rasterize_triangle(_roi_triangle(rois[i]), grid_spec).bits
    roi_k = rasterize_triangle(_roi_triangle(rois[k]), grid_spec).bits
    fov_i = rasterize_triangle(fovs[i], grid_spec).bits
    fov_k = rasterize_triangle(fovs[k], grid_spec).bits
    return _combine(_directional_gain(roi_i, fov_i, fov_k),
                    _directional_gain(roi_k, fov_k, fov_i), mode)


@dataclass(frozen=True)
class QualityMatrix:
    """Symmetric matrix of pairwise shared-interest values, zero diagonal."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("quality matrix must be square")
        if not np.array_equal(q, q.T):
            raise ValueError("quality matrix must be symmetric")
        if np.any(np.diagonal(q) != 0.0):
            raise ValueError("quality matrix diagonal must be zero")
        if q.size and (q.min() < 0.0 or q.max() > 2.0 + 1e-9):
            raise ValueError("quality values must lie in [0, 2]")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]


def build_quality_matrix(flagged_users: Sequence[int], rois: Mapping, fovs: Mapping,
                         grid_spec: GridSpec, mode: str = "sum") -> QualityMatrix:
    """Pairwise shared interest for all unordered pairs of the flagged queue.

    Row/column order follows ``flagged_users``.
    """
    ids = list(flagged_users)
    n = len(ids)
    roi_bits = {u: rasterize_triangle(_roi_triangle(rois[u]), grid_spec).bits for u in ids}
    fov_bits = {u: rasterize_triangle(fovs[u], grid_spec).bits for u in ids}
    q = np.zeros((n, n), dtype=float)
    for a in range(n):
        i = ids[a]
        for b in range(a + 1, n):
            k = ids[b]
            val = _combine(
                _directional_gain(roi_bits[i], fov_bits[i], fov_bits[k]),
                _directional_gain(roi_bits[k], fov_bits[k], fov_bits[i]),
                mode,
            )
            q[a, b] = q[b, a] = val
    return QualityMatrix(q)


def write_pgm(grid: OccupancyGrid, path) -> None:
    """Debug dump of an occupancy grid as a binary PGM (P5) image."""
    img = np.where(grid.bits, 255, 0).astype(np.uint8)
    header = f"P5\n{grid.spec.width} {grid.spec.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        # top image row = highest y row of the grid
        fh.write(img[::-1].tobytes())
