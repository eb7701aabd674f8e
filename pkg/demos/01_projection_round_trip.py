"""Angle grids, depth unprojection, and the pixel-index round trip.

Every pixel of an equirectangular panorama is a ray on the sphere. This
script unprojects a few pixels into 3D, projects them back, and shows the
round trip is exact to machine precision.
"""

import numpy as np

from panobev.geo import (
    depth_to_points,
    inverse_radial_projection,
    make_angle_grid,
    point_to_pixel,
    points_to_pixels,
)

H, W = 512, 1024
grid = make_angle_grid(H, W)
print(f"angle grid {H}x{W}")
print(f"  first-row polar angle: {grid.theta[0, 0]:.10f} rad (pi/{H * 2} from the pole)")
print(f"  azimuth spans ({grid.phi[0, -1]:.6f}, {grid.phi[0, 0]:.6f}] rad")

# Unproject a synthetic depth panorama.
rng = np.random.default_rng(0)
depth = rng.uniform(0.5, 20.0, size=(H, W))
cloud = depth_to_points(depth, grid)
norms = np.linalg.norm(cloud.points, axis=-1)
print(f"\nunprojected {H * W} pixels; max |point| vs depth error: "
      f"{np.abs(norms - depth).max():.2e} m")

# A point straight ahead lands exactly between the two middle rows/columns.
forward = point_to_pixel(np.array([0.0, 0.0, 3.0]), H, W)
print(f"\nforward point -> continuous pixel ({forward.row:.6f}, {forward.col:.6f})")

# Round trip: pick random pixels, unproject, invert, compare.
n = 10_000
rows = rng.integers(0, H, n)
cols = rng.integers(0, W, n)
pts = cloud.points[rows, cols]
continuous = points_to_pixels(pts, H, W)
indices = inverse_radial_projection(pts, H, W)
print(f"\n{n} random pixels through the round trip:")
print(f"  worst continuous error: "
      f"{max(np.abs(continuous[:, 0] - rows).max(), np.abs(continuous[:, 1] - cols).max()):.2e} px")
print(f"  integer indices exact: {bool(np.array_equal(indices, np.stack([rows, cols], axis=-1)))}")
