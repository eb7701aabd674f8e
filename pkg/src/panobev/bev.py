"""World-frame transforms and top-down (bird's-eye-view) rasterization.

A camera pose maps camera-frame points into the world frame as

    [x, y, z]^T = R^{-1} [X, Y, Z]^T - t

The BEV grid is an S x S array of square cells covering a
``range x range`` square centered on the camera footprint, with

    u = floor((x + range/2) / cell_size)    (u axis <-> world x)
    v = floor((z + range/2) / cell_size)    (v axis <-> world z)

All S x S arrays in this module are indexed ``[u, v]``. Rasterization is
height-band filtered and deterministic: within a cell the point with the
greatest height wins, ties broken by the smaller source index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geo import AngleGrid, PointCloud, depth_to_points

__all__ = [
    "CameraPose",
    "BevGridSpec",
    "BevGrid",
    "MaskMap",
    "OrthoCells",
    "identity_pose",
    "compose_poses",
    "invert_pose",
    "apply_pose",
    "orthographic_cells",
    "rasterize_semantic_bev",
    "build_mask_map",
    "bev_reference_points",
]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraPose:
    """Rigid pose: a 3x3 rotation ``R`` and a translation ``t`` in meters.

    ``R`` must be orthonormal with determinant +1 (checked to 1e-9).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-6):
            raise ValueError("rotation determinant must be +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


def identity_pose() -> CameraPose:
    return CameraPose(np.eye(3), np.zeros(3))


def compose_poses(first: CameraPose, second: CameraPose) -> CameraPose:
    """Pose equivalent to applying ``first`` then ``second``."""
    r = first.rotation @ second.rotation
    t = second.rotation.T @ first.translation + second.translation
    return CameraPose(r, t)


def invert_pose(pose: CameraPose) -> CameraPose:
    """Pose that undoes ``pose``: apply_pose(apply_pose(p, pose), inv) == p."""
    return CameraPose(pose.rotation.T, -pose.rotation @ pose.translation)


def apply_pose(points: PointCloud, pose: CameraPose) -> PointCloud:
    """Map camera-frame points into the world frame; validity is preserved."""
    pts = points.points @ pose.rotation  # row vectors: (R^{-1} p)^T = p^T R
    pts = pts - pose.translation
    pts = np.where(points.valid[..., None], pts, 0.0)
    return PointCloud(points=pts, valid=points.valid)


def transform_points(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Pose transform for a bare (N, 3) array (no validity flags)."""
    return np.asarray(points, dtype=np.float64) @ pose.rotation - pose.translation


@dataclass(frozen=True)
class BevGridSpec:
    """Geometry of the top-down grid.

    Defaults follow the reference setup: 500 x 500 cells spanning
    10 m x 10 m (2 cm cells), with the scored height band
    [-1.5 m, +1.2 m] relative to the camera so ceilings stay out of the
    map.
    """

    size: int = 500
    range_m: float = 10.0
    floor_cut: float = -1.5
    ceiling_cut: float = 1.2
    void_label: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if self.range_m <= 0:
            raise ValueError("range_m must be positive")
        if not self.floor_cut < self.ceiling_cut:
            raise ValueError("floor_cut must be below ceiling_cut")

    @property
    def cell_size(self) -> float:
        return self.range_m / self.size

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World (x, z) coordinates of every cell center, each (S,)."""
        idx = np.arange(self.size, dtype=np.float64)
        coords = (idx + 0.5) * self.cell_size - self.range_m / 2.0
        return coords, coords.copy()


@dataclass
class BevGrid:
    """Semantic top-down map: labels, per-cell heights, observed flags."""

    spec: BevGridSpec
    labels: np.ndarray  # (S, S) int, void_label where unobserved
    heights: np.ndarray  # (S, S) float, winning height where observed
    observed: np.ndarray  # (S, S) bool


@dataclass
class MaskMap:
    """Boolean BEV occupancy with the winning height per occupied cell."""

    spec: BevGridSpec
    mask: np.ndarray  # (S, S) bool
    ref_heights: np.ndarray  # (S, S) float, defined where mask is true


class OrthoCells(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    height: np.ndarray
    in_bounds: np.ndarray


def orthographic_cells(points: np.ndarray, spec: BevGridSpec) -> OrthoCells:
    """Project world points straight down onto grid cell indices.

    Out-of-range points are flagged via ``in_bounds`` rather than raising;
    their (u, v) are still the raw floored indices.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    half = spec.range_m / 2.0
    u = np.floor((pts[:, 0] + half) / spec.cell_size).astype(np.int64)
    v = np.floor((pts[:, 2] + half) / spec.cell_size).astype(np.int64)
    in_bounds = (u >= 0) & (u < spec.size) & (v >= 0) & (v < spec.size)
    return OrthoCells(u=u, v=v, height=pts[:, 1].copy(), in_bounds=in_bounds)


def _cell_winners(points: np.ndarray, spec: BevGridSpec, valid: np.ndarray | None):
    """Pick the winning point per occupied cell.

    Eligible points are in-bounds and inside the height band. The winner
    has maximal height; equal heights resolve to the smaller source index,
    which makes the result independent of input order. Returns
    (flat cell ids, winning source indices).
    """
    cells = orthographic_cells(points, spec)
    eligible = cells.in_bounds & (cells.height >= spec.floor_cut) & (
        cells.height <= spec.ceiling_cut
    )
    if valid is not None:
        eligible &= np.asarray(valid, dtype=bool).reshape(-1)
    idx = np.nonzero(eligible)[0]
    if idx.size == 0:
        return np.zeros(0, dtype=np.int64), idx
    flat = cells.u[idx] * spec.size + cells.v[idx]
    # lexsort: primary key last. Sort by cell, then height descending,
    # then source index ascending.
    order = np.lexsort((idx, -cells.height[idx], flat))
    flat_sorted = flat[order]
    first = np.ones(flat_sorted.size, dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    return flat_sorted[first], idx[order][first]


def rasterize_semantic_bev(
    points: np.ndarray,
    payload: np.ndarray,
    spec: BevGridSpec,
    valid: np.ndarray | None = None,
) -> BevGrid:
    """Rasterize labeled world points into a semantic BEV grid.

    ``payload`` carries one integer label per point (any integer payload
    works, e.g. packed RGB for early projection). Raises ValueError when
    the payload length differs from the point count.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    payload = np.asarray(payload)
    if payload.shape[0] != pts.shape[0]:
        raise ValueError(
            f"payload length {payload.shape[0]} != point count {pts.shape[0]}"
        )
    labels = np.full((spec.size, spec.size), spec.void_label, dtype=np.int64)
    heights = np.zeros((spec.size, spec.size), dtype=np.float64)
    observed = np.zeros((spec.size, spec.size), dtype=bool)
    flat_cells, winners = _cell_winners(pts, spec, valid)
    if winners.size:
        uu, vv = flat_cells // spec.size, flat_cells % spec.size
        labels[uu, vv] = payload[winners]
        heights[uu, vv] = pts[winners, 1]
        observed[uu, vv] = True
    return BevGrid(spec=spec, labels=labels, heights=heights, observed=observed)


def build_mask_map(
    depth: np.ndarray, grid: AngleGrid, pose: CameraPose, spec: BevGridSpec
) -> MaskMap:
    """Project a depth panorama down into the BEV occupancy mask.

    Shares the cell-winner selection with rasterize_semantic_bev, so the
    mask equals the observed flags of a rasterization of the same inputs
    bit for bit.
    """
    cloud = apply_pose(depth_to_points(depth, grid), pose)
    pts = cloud.points.reshape(-1, 3)
    mask = np.zeros((spec.size, spec.size), dtype=bool)
    ref_heights = np.zeros((spec.size, spec.size), dtype=np.float64)
    flat_cells, winners = _cell_winners(pts, spec, cloud.valid.reshape(-1))
    if winners.size:
        uu, vv = flat_cells // spec.size, flat_cells % spec.size
        mask[uu, vv] = True
        ref_heights[uu, vv] = pts[winners, 1]
    return MaskMap(spec=spec, mask=mask, ref_heights=ref_heights)


def bev_reference_points(mask_map: MaskMap) -> np.ndarray:
    """3D world reference points for the occupied cells of a mask map.

    One point per true cell, at the cell center (x, z) with y taken from
    the recorded per-cell height. Returns (M, 5): columns are
    (u, v, x, y, z), scanned in row-major [u, v] order so rows align with
    the flattened mask.
    """
    spec = mask_map.spec
    uu, vv = np.nonzero(mask_map.mask)
    xs, zs = spec.cell_centers()
    out = np.empty((uu.size, 5), dtype=np.float64)
    out[:, 0] = uu
    out[:, 1] = vv
    out[:, 2] = xs[uu]
    out[:, 3] = mask_map.ref_heights[uu, vv]
    out[:, 4] = zs[vv]
    return out
