"""Dataset construction: panorama stitching, global XYZ images, BEV
ground truth, and an analytic synthetic-scene generator used as the test
oracle throughout the package.

Synthetic scenes are axis-aligned box rooms containing axis-aligned box
objects, rendered by exact ray casting in the camera-centered world frame
(the camera sits at the origin, +Y up). Their top-down layout is known in
closed form, which is what makes them usable as a rasterization oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bev import BevGrid, BevGridSpec, CameraPose, apply_pose, rasterize_semantic_bev
from .geo import AngleGrid, PointCloud, depth_to_points, make_angle_grid
from .vocab import RESERVED_LABEL, Vocabulary, load_vocabulary

__all__ = [
    "PinholeView",
    "XYZImage",
    "Box",
    "SceneConfig",
    "SynthScene",
    "stitch_views",
    "generate_global_xyz",
    "generate_bev_gt",
    "synth_scene",
    "render_pinhole_view",
    "cubemap_rig",
    "three_ring_rig",
    "analytic_agreement",
]


# ---------------------------------------------------------------------------
# Pinhole views and stitching


@dataclass
class PinholeView:
    """One narrow-FoV view taken from the panorama center.

    ``rotation`` maps panorama-frame directions into the view frame whose
    +Z is the optical axis; ``translation`` is carried as rig metadata but
    rays are treated as concentric during stitching. The image convention
    ties pixel right to -x and pixel down to -y, matching the panorama's
    column/row direction at the forward axis.
    """

    raster: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tag: str = ""

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("view rotation is not orthonormal")

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]


def _panorama_directions(height: int, width: int) -> np.ndarray:
    grid = make_angle_grid(height, width)
    sin_t = np.sin(grid.theta)
    return np.stack(
        [sin_t * np.sin(grid.phi), np.cos(grid.theta), sin_t * np.cos(grid.phi)],
        axis=-1,
    )


def stitch_views(
    views: list[PinholeView],
    out_height: int,
    out_width: int,
    payload: str = "label",
) -> tuple[np.ndarray, np.ndarray]:
    """Merge narrow views into an equirectangular panorama.

    Each output pixel casts its panorama ray into every view; among the
    views that contain the ray, the one whose optical axis is angularly
    closest wins. Labels are looked up nearest-neighbor, RGB bilinearly.
    Returns (panorama, coverage mask); uncovered label pixels are 255,
    uncovered RGB pixels 0.
    """
    if not views:
        raise ValueError("need at least one view")
    if payload not in ("label", "rgb"):
        raise ValueError(f"unknown payload kind {payload!r}")
    dirs = _panorama_directions(out_height, out_width).reshape(-1, 3)
    n = dirs.shape[0]
    best_score = np.full(n, -np.inf)
    best_view = np.full(n, -1, dtype=np.int64)
    proj_rows = np.zeros((len(views), n))
    proj_cols = np.zeros((len(views), n))

    for k, view in enumerate(views):
        dv = dirs @ view.rotation.T
        z = dv[:, 2]
        in_front = z > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            px = view.cx - view.fx * dv[:, 0] / z
            py = view.cy - view.fy * dv[:, 1] / z
        if payload == "label":
            ri = np.rint(py)
            ci = np.rint(px)
            inside = (
                in_front
                & (ri >= 0)
                & (ri <= view.height - 1)
                & (ci >= 0)
                & (ci <= view.width - 1)
            )
            proj_rows[k] = np.where(inside, ri, 0)
            proj_cols[k] = np.where(inside, ci, 0)
        else:
            inside = (
                in_front
                & (px >= 0)
                & (px <= view.width - 1)
                & (py >= 0)
                & (py <= view.height - 1)
            )
            proj_rows[k] = np.where(inside, py, 0)
            proj_cols[k] = np.where(inside, px, 0)
        score = np.where(inside, z, -np.inf)
        better = score > best_score
        best_score = np.where(better, score, best_score)
        best_view = np.where(better, k, best_view)

    coverage = best_view >= 0
    if payload == "label":
        pano = np.full(n, RESERVED_LABEL, dtype=np.int64)
        for k, view in enumerate(views):
            sel = best_view == k
            rows = proj_rows[k, sel].astype(np.int64)
            cols = proj_cols[k, sel].astype(np.int64)
            pano[sel] = view.raster[rows, cols]
        return pano.reshape(out_height, out_width), coverage.reshape(
            out_height, out_width
        )

    pano = np.zeros((n, 3), dtype=np.float64)
    for k, view in enumerate(views):
        sel = best_view == k
        if not sel.any():
            continue
        r = proj_rows[k, sel]
        c = proj_cols[k, sel]
        r0 = np.floor(r).astype(np.int64)
        c0 = np.floor(c).astype(np.int64)
        r1 = np.minimum(r0 + 1, view.height - 1)
        c1 = np.minimum(c0 + 1, view.width - 1)
        fr = (r - r0)[:, None]
        fc = (c - c0)[:, None]
        img = view.raster.astype(np.float64)
        pano[sel] = (
            (1 - fr) * (1 - fc) * img[r0, c0]
            + (1 - fr) * fc * img[r0, c1]
            + fr * (1 - fc) * img[r1, c0]
            + fr * fc * img[r1, c1]
        )
    return pano.reshape(out_height, out_width, 3), coverage.reshape(
        out_height, out_width
    )


def _axis_rotation(azimuth: float, elevation: float) -> np.ndarray:
    """Rotation taking panorama-frame directions into a view frame whose
    optical axis points at the given azimuth/elevation."""
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    yaw = np.array([[ca, 0.0, -sa], [0.0, 1.0, 0.0], [sa, 0.0, ca]])
    pitch = np.array([[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]])
    return pitch @ yaw


def _square_intrinsics(size: int, fov_deg: float):
    f = (size / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    c = (size - 1) / 2.0
    return f, f, c, c


def cubemap_rig(face_size: int) -> list[dict]:
    """Six 90-degree views covering the full sphere."""
    fx, fy, cx, cy = _square_intrinsics(face_size, 90.0)
    axes = [
        ("front", 0.0, 0.0),
        ("right", math.pi / 2, 0.0),
        ("back", math.pi, 0.0),
        ("left", -math.pi / 2, 0.0),
        ("up", 0.0, math.pi / 2),
        ("down", 0.0, -math.pi / 2),
    ]
    return [
        {
            "tag": tag,
            "fx": fx,
            "fy": fy,
            "cx": cx,
            "cy": cy,
            "size": face_size,
            "rotation": _axis_rotation(az, el),
        }
        for tag, az, el in axes
    ]


def three_ring_rig(
    face_size: int, fov_deg: float = 90.0, elevations_deg=(45.0, 0.0, -45.0)
) -> list[dict]:
    """18 views: 6 azimuths at high / medium / low elevation rings."""
    fx, fy, cx, cy = _square_intrinsics(face_size, fov_deg)
    tags = {0: "high", 1: "medium", 2: "low"}
    rig = []
    for ring, elev in enumerate(elevations_deg):
        for step in range(6):
            az = step * math.pi / 3.0
            rig.append(
                {
                    "tag": tags.get(ring, str(ring)),
                    "fx": fx,
                    "fy": fy,
                    "cx": cx,
                    "cy": cy,
                    "size": face_size,
                    "rotation": _axis_rotation(az, math.radians(elev)),
                }
            )
    return rig


# ---------------------------------------------------------------------------
# Global XYZ


@dataclass
class XYZImage:
    """Per-pixel world coordinates with a validity mask."""

    xyz: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W) bool


def generate_global_xyz(depth: np.ndarray, pose: CameraPose) -> XYZImage:
    """Unproject a depth panorama and move it into the world frame."""
    depth = np.asarray(depth, dtype=np.float64)
    grid = make_angle_grid(depth.shape[0], depth.shape[1])
    world = apply_pose(depth_to_points(depth, grid), pose)
    return XYZImage(xyz=world.points, valid=world.valid)


def generate_bev_gt(
    sem: np.ndarray, depth: np.ndarray, pose: CameraPose, spec: BevGridSpec
) -> BevGrid:
    """Top-down semantic ground truth from a labeled depth panorama.

    This is exactly the composition of the public projection ops:
    unproject, pose into world, rasterize with the semantic payload.
    """
    sem = np.asarray(sem)
    depth = np.asarray(depth, dtype=np.float64)
    if sem.shape != depth.shape:
        raise ValueError(f"semantic shape {sem.shape} != depth shape {depth.shape}")
    grid = make_angle_grid(depth.shape[0], depth.shape[1])
    world = apply_pose(depth_to_points(depth, grid), pose)
    return rasterize_semantic_bev(
        world.points.reshape(-1, 3),
        sem.reshape(-1),
        spec,
        valid=world.valid.reshape(-1),
    )


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass(frozen=True)
class Box:
    lo: np.ndarray  # (3,)
    hi: np.ndarray  # (3,)
    label: int


@dataclass
class SceneConfig:
    """Knobs for the synthetic box-room generator.

    Bounds are in the camera-centered world frame (+Y up). The defaults
    keep the ceiling above the BEV height band and every object below the
    camera, so object tops stay visible from above.
    """

    height: int = 128
    width: int = 256
    # Bounds land mid-cell on the default 2 cm grid, keeping the wall ring
    # stable against rounding of ray-cast hit points.
    room_min: tuple = (-3.81, -1.37, -4.37)
    room_max: tuple = (4.23, 1.31, 3.43)
    n_objects: int = 3
    object_extent: tuple = (0.5, 1.1)  # footprint side range, meters
    object_height: tuple = (0.4, 0.9)
    wall_margin: float = 0.4
    camera_clearance: float = 0.6
    wall_label: int = 1
    floor_label: int = 2
    ceiling_label: int = 14
    object_labels: tuple = (3, 5, 7, 10, 11)
    max_yaw: float = math.pi
    vocabulary: str = "matterport20-bev"
    grid: BevGridSpec = field(default_factory=BevGridSpec)


@dataclass
class SynthScene:
    config: SceneConfig
    objects: list[Box]
    pose: CameraPose
    rgb: np.ndarray  # (H, W, 3) float in [0, 1]
    depth: np.ndarray  # (H, W) meters
    labels: np.ndarray  # (H, W) class ids
    analytic_gt: BevGrid


def _cast_rays(
    origin: np.ndarray,
    dirs: np.ndarray,
    config: SceneConfig,
    objects: list[Box],
) -> tuple[np.ndarray, np.ndarray]:
    """Exact ray casting against the room shell and object boxes.

    ``dirs`` are unit world-frame directions, (N, 3). Returns (distance,
    label) per ray; the room shell always terminates a ray.
    """
    n = dirs.shape[0]
    room_lo = np.asarray(config.room_min, dtype=np.float64)
    room_hi = np.asarray(config.room_max, dtype=np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        bounds = np.where(dirs > 0, room_hi, room_lo)
        t_axis = (bounds - origin) / dirs
    t_axis = np.where(np.isfinite(t_axis), t_axis, np.inf)
    exit_axis = np.argmin(t_axis, axis=1)
    dist = t_axis[np.arange(n), exit_axis]

    label = np.full(n, config.wall_label, dtype=np.int64)
    down = (exit_axis == 1) & (dirs[:, 1] < 0)
    up = (exit_axis == 1) & (dirs[:, 1] > 0)
    label[down] = config.floor_label
    label[up] = config.ceiling_label

    for box in objects:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (box.lo - origin) / dirs
            t2 = (box.hi - origin) / dirs
        near = np.nanmax(np.minimum(t1, t2), axis=1)
        far = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (near <= far) & (near > 1e-9) & (near < dist)
        dist = np.where(hit, near, dist)
        label = np.where(hit, box.label, label)
    return dist, label


def _sample_objects(rng: np.random.Generator, config: SceneConfig) -> list[Box]:
    room_lo = np.asarray(config.room_min)
    room_hi = np.asarray(config.room_max)
    floor_y = room_lo[1]
    boxes: list[Box] = []
    attempts = 0
    while len(boxes) < config.n_objects and attempts < 500:
        attempts += 1
        ex = rng.uniform(*config.object_extent)
        ez = rng.uniform(*config.object_extent)
        h = rng.uniform(*config.object_height)
        x0 = rng.uniform(
            room_lo[0] + config.wall_margin, room_hi[0] - config.wall_margin - ex
        )
        z0 = rng.uniform(
            room_lo[2] + config.wall_margin, room_hi[2] - config.wall_margin - ez
        )
        lo = np.array([x0, floor_y, z0])
        hi = np.array([x0 + ex, floor_y + h, z0 + ez])
        # Keep the camera column clear and the footprints disjoint.
        near_cam = (
            lo[0] - config.camera_clearance < 0 < hi[0] + config.camera_clearance
        ) and (lo[2] - config.camera_clearance < 0 < hi[2] + config.camera_clearance)
        if near_cam:
            continue
        overlap = any(
            lo[0] < b.hi[0] + 0.2
            and hi[0] > b.lo[0] - 0.2
            and lo[2] < b.hi[2] + 0.2
            and hi[2] > b.lo[2] - 0.2
            for b in boxes
        )
        if overlap:
            continue
        label = int(rng.choice(config.object_labels))
        boxes.append(Box(lo=lo, hi=hi, label=label))
    if len(boxes) < config.n_objects:
        raise ValueError("could not place the requested objects; room too small")
    return boxes


def _analytic_bev(config: SceneConfig, objects: list[Box]) -> BevGrid:
    """Closed-form top-down layout of a scene (no ray casting involved)."""
    spec = config.grid
    s = spec.size
    half = spec.range_m / 2.0
    cell = spec.cell_size
    labels = np.full((s, s), spec.void_label, dtype=np.int64)
    heights = np.zeros((s, s), dtype=np.float64)
    centers = (np.arange(s) + 0.5) * cell - half

    room_lo = np.asarray(config.room_min)
    room_hi = np.asarray(config.room_max)
    u_lo = int(math.floor((room_lo[0] + half) / cell))
    u_hi = int(math.floor((room_hi[0] + half) / cell))
    v_lo = int(math.floor((room_lo[2] + half) / cell))
    v_hi = int(math.floor((room_hi[2] + half) / cell))
    u_lo_c, u_hi_c = max(u_lo, 0), min(u_hi, s - 1)
    v_lo_c, v_hi_c = max(v_lo, 0), min(v_hi, s - 1)

    floor_y = room_lo[1]
    wall_top = min(spec.ceiling_cut, room_hi[1])

    # Interior floor, then objects stamped over it, then the wall ring.
    labels[u_lo_c + 1 : u_hi_c, v_lo_c + 1 : v_hi_c] = config.floor_label
    heights[u_lo_c + 1 : u_hi_c, v_lo_c + 1 : v_hi_c] = floor_y
    for box in objects:
        iu = np.nonzero((centers >= box.lo[0]) & (centers <= box.hi[0]))[0]
        iv = np.nonzero((centers >= box.lo[2]) & (centers <= box.hi[2]))[0]
        labels[np.ix_(iu, iv)] = box.label
        heights[np.ix_(iu, iv)] = box.hi[1]
    for u in (u_lo, u_hi):
        if 0 <= u < s:
            labels[u, v_lo_c : v_hi_c + 1] = config.wall_label
            heights[u, v_lo_c : v_hi_c + 1] = wall_top
    for v in (v_lo, v_hi):
        if 0 <= v < s:
            labels[u_lo_c : u_hi_c + 1, v] = config.wall_label
            heights[u_lo_c : u_hi_c + 1, v] = wall_top

    observed = labels != spec.void_label
    heights[~observed] = 0.0
    return BevGrid(spec=spec, labels=labels, heights=heights, observed=observed)


def synth_scene(seed: int, config: SceneConfig | None = None) -> SynthScene:
    """Deterministic synthetic scene: renders plus closed-form BEV layout.

    The camera yaw is drawn from the seed, so the camera-to-world pose is
    a real rotation, not the identity.
    """
    config = config or SceneConfig()
    room_lo = np.asarray(config.room_min, dtype=np.float64)
    room_hi = np.asarray(config.room_max, dtype=np.float64)
    if np.any(room_hi - room_lo <= 0):
        raise ValueError("degenerate room bounds")
    if np.any(room_lo >= 0) or np.any(room_hi <= 0):
        raise ValueError("camera (the origin) must be inside the room")

    rng = np.random.default_rng(seed)
    yaw = rng.uniform(-config.max_yaw, config.max_yaw)
    c, s = math.cos(yaw), math.sin(yaw)
    # World-from-camera is R^{-1}; store R so that R^{-1} applies the yaw.
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]).T
    pose = CameraPose(rotation, np.zeros(3))

    objects = _sample_objects(rng, config)

    dirs_cam = _panorama_directions(config.height, config.width).reshape(-1, 3)
    dirs_world = dirs_cam @ pose.rotation  # row form of R^{-1} d
    depth, labels = _cast_rays(np.zeros(3), dirs_world, config, objects)

    vocab = load_vocabulary(config.vocabulary)
    rgb = vocab.palette[labels].astype(np.float64) / 255.0

    return SynthScene(
        config=config,
        objects=objects,
        pose=pose,
        rgb=rgb.reshape(config.height, config.width, 3),
        depth=depth.reshape(config.height, config.width),
        labels=labels.reshape(config.height, config.width),
        analytic_gt=_analytic_bev(config, objects),
    )


def render_pinhole_view(scene: SynthScene, rig_entry: dict) -> PinholeView:
    """Ray-cast one rig view of a synthetic scene (label payload)."""
    size = rig_entry["size"]
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x = -(cols - rig_entry["cx"]) / rig_entry["fx"]
    y = -(rows - rig_entry["cy"]) / rig_entry["fy"]
    d_view = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
    d_view /= np.linalg.norm(d_view, axis=1, keepdims=True)
    # View frame -> panorama camera frame -> world frame.
    d_cam = d_view @ rig_entry["rotation"]
    d_world = d_cam @ scene.pose.rotation
    _, labels = _cast_rays(np.zeros(3), d_world, scene.config, scene.objects)
    return PinholeView(
        raster=labels.reshape(size, size),
        fx=rig_entry["fx"],
        fy=rig_entry["fy"],
        cx=rig_entry["cx"],
        cy=rig_entry["cy"],
        rotation=rig_entry["rotation"],
        tag=rig_entry.get("tag", ""),
    )


def analytic_agreement(scene: SynthScene, raster_gt: BevGrid) -> float:
    """Fraction of raster-observed cells whose label matches the
    closed-form layout."""
    observed = raster_gt.observed
    if not observed.any():
        return 0.0
    return float(
        np.mean(raster_gt.labels[observed] == scene.analytic_gt.labels[observed])
    )
