"""Planar obstacle scenes, occupancy grids and signed distance fields.

Distances are stored at cell centres and are positive in free space,
negative inside obstacles. Queries interpolate bilinearly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError

__all__ = [
    "Box",
    "Disk",
    "Scene2D",
    "OccupancyGrid",
    "SignedDistanceField2D",
    "rasterize",
    "build_sdf",
    "query",
    "gradient",
    "query_and_gradient",
    "scene_from_dict",
    "load_scene",
    "write_sdf_csv",
    "read_sdf_csv",
]


@dataclass(frozen=True)
class Box:
    center: tuple[float, float]
    half_extents: tuple[float, float]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.abs(pts - np.asarray(self.center)) <= np.asarray(self.half_extents)
        return d.all(axis=-1)

    def to_dict(self) -> dict:
        return {"type": "box", "center": list(self.center), "half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(self.center), axis=-1) <= self.radius

    def to_dict(self) -> dict:
        return {"type": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Scene2D:
    bounds_min: tuple[float, float]
    bounds_max: tuple[float, float]
    obstacles: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        lo, hi = np.asarray(self.bounds_min, float), np.asarray(self.bounds_max, float)
        if lo.shape != (2,) or hi.shape != (2,) or np.any(hi <= lo):
            raise InvalidArgumentError("scene bounds must be a non-empty rectangle")
        for ob in self.obstacles:
            c = np.asarray(ob.center, float)
            ext = np.asarray(ob.half_extents if isinstance(ob, Box) else (ob.radius, ob.radius))
            if np.any(c + ext < lo) or np.any(c - ext > hi):
                raise InvalidArgumentError(f"obstacle {ob} does not intersect the scene bounds")

    def to_dict(self, cell_size: float | None = None) -> dict:
        out = {
            "bounds": {"min": list(self.bounds_min), "max": list(self.bounds_max)},
            "obstacles": [ob.to_dict() for ob in self.obstacles],
        }
        if cell_size is not None:
            out["cell_size"] = cell_size
        return out


def scene_from_dict(data: dict) -> Scene2D:
    obstacles = []
    for ob in data.get("obstacles", []):
        kind = ob.get("type")
        if kind == "box":
            obstacles.append(Box(tuple(map(float, ob["center"])), tuple(map(float, ob["half_extents"]))))
        elif kind == "disk":
            obstacles.append(Disk(tuple(map(float, ob["center"])), float(ob["radius"])))
        else:
            raise InvalidArgumentError(f"unknown obstacle type {kind!r}")
    b = data["bounds"]
    return Scene2D(tuple(map(float, b["min"])), tuple(map(float, b["max"])), tuple(obstacles))


def load_scene(path) -> tuple[Scene2D, float | None]:
    """Read a scene JSON file; returns the scene and its ``cell_size`` (if given)."""
    data = json.loads(Path(path).read_text())
    cs = data.get("cell_size")
    return scene_from_dict(data), (float(cs) if cs is not None else None)


@dataclass(frozen=True)
class OccupancyGrid:
    origin: np.ndarray  # world coordinates of the grid corner (min x, min y)
    cell_size: float
    occupied: np.ndarray  # (height, width) bool, row index = y

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    def cell_centers(self) -> np.ndarray:
        """(height, width, 2) array of cell-centre coordinates."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


def rasterize(scene: Scene2D, cell_size: float) -> OccupancyGrid:
    """Mark each cell whose centre lies inside any obstacle primitive."""
    if not cell_size > 0:
        raise InvalidArgumentError("cell_size must be > 0")
    lo, hi = np.asarray(scene.bounds_min, float), np.asarray(scene.bounds_max, float)
    extent = hi - lo
    if np.any(cell_size > extent):
        raise InvalidArgumentError("cell_size is larger than the scene bounds")
    width, height = (int(v) for v in np.ceil(extent / cell_size - 1e-9))
    grid = OccupancyGrid(lo, float(cell_size), np.zeros((height, width), dtype=bool))
    centers = grid.cell_centers()
    occ = np.zeros((height, width), dtype=bool)
    for ob in scene.obstacles:
        occ |= ob.contains(centers)
    return OccupancyGrid(lo, float(cell_size), occ)


@dataclass(frozen=True)
class SignedDistanceField2D:
    origin: np.ndarray
    cell_size: float
    values: np.ndarray  # (height, width), row index = y

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # method forms so that cost code can accept any object exposing these two
    def query(self, point):
        return query(self, point)

    def query_and_gradient(self, point):
        return query_and_gradient(self, point)


def build_sdf(occupancy: OccupancyGrid) -> SignedDistanceField2D:
    """Exact signed Euclidean distance between cell centres.

    Free cells hold the distance to the nearest occupied centre, occupied
    cells minus the distance to the nearest free centre. Grids without any
    obstacle (or without any free cell) are capped at the grid diagonal.
    """
    occ = np.asarray(occupancy.occupied, dtype=bool)
    if occ.size == 0:
        raise InvalidArgumentError("empty occupancy grid")
    cs = occupancy.cell_size
    cap = cs * float(np.hypot(*occ.shape))
    if occ.any():
        outside = ndimage.distance_transform_edt(~occ, sampling=cs)
    else:
        outside = np.full(occ.shape, cap)
    if (~occ).any():
        inside = ndimage.distance_transform_edt(occ, sampling=cs)
    else:
        inside = np.full(occ.shape, cap)
    return SignedDistanceField2D(occupancy.origin, cs, outside - inside)


def _bilinear(sdf: SignedDistanceField2D, pts: np.ndarray):
    """Value and exact gradient of the clamped bilinear interpolant."""
    cs = sdf.cell_size
    # continuous index in cell-centre coordinates
    u = (pts[..., 0] - sdf.origin[0]) / cs - 0.5
    v = (pts[..., 1] - sdf.origin[1]) / cs - 0.5
    umax, vmax = sdf.width - 1, sdf.height - 1
    uc = np.clip(u, 0.0, umax)
    vc = np.clip(v, 0.0, vmax)
    i0 = np.minimum(np.floor(uc).astype(int), max(umax - 1, 0))
    j0 = np.minimum(np.floor(vc).astype(int), max(vmax - 1, 0))
    i1 = np.minimum(i0 + 1, umax)
    j1 = np.minimum(j0 + 1, vmax)
    fu = uc - i0
    fv = vc - j0
    V = sdf.values
    v00, v10 = V[j0, i0], V[j0, i1]
    v01, v11 = V[j1, i0], V[j1, i1]
    val = (1 - fu) * (1 - fv) * v00 + fu * (1 - fv) * v10 + (1 - fu) * fv * v01 + fu * fv * v11
    gu = ((1 - fv) * (v10 - v00) + fv * (v11 - v01)) / cs
    gv = ((1 - fu) * (v01 - v00) + fu * (v11 - v10)) / cs
    # clamped axes do not vary inside the grid; outside they follow the distance term
    du = (u - uc) * cs
    dv = (v - vc) * cs
    outside = np.hypot(du, dv)
    gu = np.where(u != uc, 0.0, gu)
    gv = np.where(v != vc, 0.0, gv)
    safe = np.where(outside > 0, outside, 1.0)
    gu = gu + np.where(outside > 0, du / safe, 0.0)
    gv = gv + np.where(outside > 0, dv / safe, 0.0)
    return val + outside, np.stack([gu, gv], axis=-1)


def query(sdf: SignedDistanceField2D, point) -> np.ndarray | float:
    """Signed distance at one point (shape (2,)) or a batch (shape (..., 2)).

    Points outside the lattice of cell centres are clamped onto it and the
    Euclidean distance to the clamped point is added.
    """
    pts = np.asarray(point, dtype=float)
    val, _ = _bilinear(sdf, pts)
    return float(val) if pts.ndim == 1 else val


def query_and_gradient(sdf: SignedDistanceField2D, point):
    """Signed distance and its exact derivative (the gradient of ``query``).

    This is the gradient used by the optimizers: it is consistent with
    ``query`` everywhere except on cell boundaries, where the bilinear
    interpolant has kinks.
    """
    pts = np.asarray(point, dtype=float)
    val, grad = _bilinear(sdf, pts)
    if pts.ndim == 1:
        return float(val), grad
    return val, grad


def gradient(sdf: SignedDistanceField2D, point) -> np.ndarray:
    """Central-difference gradient of ``query`` with a step of one cell."""
    pts = np.asarray(point, dtype=float)
    h = sdf.cell_size
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    gx = (_bilinear(sdf, pts + ex)[0] - _bilinear(sdf, pts - ex)[0]) / (2 * h)
    gy = (_bilinear(sdf, pts + ey)[0] - _bilinear(sdf, pts - ey)[0]) / (2 * h)
    return np.stack([gx, gy], axis=-1)


def write_sdf_csv(sdf: SignedDistanceField2D, path) -> None:
    """Row-major CSV dump with a ``width,height,cell_size,origin_x,origin_y`` header."""
    lines = [f"{sdf.width},{sdf.height},{float(sdf.cell_size)!r},{float(sdf.origin[0])!r},{float(sdf.origin[1])!r}"]
    for row in sdf.values:
        lines.append(",".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_sdf_csv(path) -> SignedDistanceField2D:
    rows = Path(path).read_text().strip().splitlines()
    w, h, cs, ox, oy = rows[0].split(",")
    values = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    if values.shape != (int(h), int(w)):
        raise InvalidArgumentError("SDF CSV body does not match its header")
    return SignedDistanceField2D(np.array([float(ox), float(oy)]), float(cs), values)
