"""Panoramic bird's-eye-view semantic mapping toolkit.

Submodules:

  geo      equirectangular angle grids, depth unprojection, pixel inverse
  bev      camera poses, orthographic rasterization, occupancy mask maps
  attn     masked deformable attention over panoramic feature maps
  mapper   toy end-to-end panorama-to-BEV model and training loop
  metrics  confusion-matrix segmentation metrics (Acc/mRecall/mPrecision/mIoU)
  datagen  stitching, global XYZ, BEV ground truth, synthetic scenes
  vocab    class vocabularies and render palettes
  rasters  PNG / raw raster file formats
"""

from . import attn, bev, cli, datagen, geo, mapper, metrics, rasters, vocab

__version__ = "0.1.0"

__all__ = [
    "attn",
    "bev",
    "cli",
    "datagen",
    "geo",
    "mapper",
    "metrics",
    "rasters",
    "vocab",
    "__version__",
]
