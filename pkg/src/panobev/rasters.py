"""Raster file I/O.

Four on-disk kinds are supported:

  - rgb8     8-bit RGB PNG
  - label8   8-bit PNG of class ids (indexed when a palette is given);
             255 is reserved for void/ignore
  - depth16mm  16-bit grayscale PNG, depth in millimeters, 0 = invalid
  - depthf32   raw little-endian float32 meters, with a JSON sidecar
               {"height": H, "width": W, "unit": "m"} at <path>.json
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "read_label",
    "write_label",
    "read_rgb",
    "write_rgb",
    "read_depth",
    "write_depth_png16",
    "write_depth_raw",
    "read_depth_raw",
]


def write_label(path, labels: np.ndarray, palette: np.ndarray | None = None) -> None:
    """Write a class-id raster as an 8-bit PNG.

    With a (K, 3) palette the file is written indexed so viewers show the
    class colors directly; ids are preserved either way.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError("label raster must be 2D")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("labels must fit in 8 bits")
    img = Image.fromarray(arr.astype(np.uint8), mode="L")
    if palette is not None:
        img = img.convert("P")
        flat = np.zeros((256, 3), dtype=np.uint8)
        flat[: palette.shape[0]] = palette
        img.putpalette(flat.reshape(-1).tolist())
    img.save(path)


def read_label(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("L", "P"):
        raise ValueError(f"{path}: expected an 8-bit label PNG, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def write_rgb(path, rgb: np.ndarray) -> None:
    """Write an RGB image; float input is taken as [0, 1]."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("rgb raster must be H x W x 3")
    if arr.dtype != np.uint8:
        arr = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def read_rgb(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def write_depth_png16(path, depth_m: np.ndarray) -> None:
    """Write depth in meters as a 16-bit millimeter PNG (0 = invalid)."""
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.zeros(d.shape, dtype=np.uint16)
    valid = np.isfinite(d) & (d > 0)
    mm[valid] = np.clip(np.rint(d[valid] * 1000.0), 1, 65535).astype(np.uint16)
    Image.frombytes("I;16", (mm.shape[1], mm.shape[0]), mm.tobytes()).save(path)


def _read_depth_png16(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float64)
    return arr / 1000.0


def write_depth_raw(path, depth_m: np.ndarray) -> None:
    d = np.asarray(depth_m, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(d.tobytes())
    sidecar = {"height": d.shape[0], "width": d.shape[1], "unit": "m"}
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)


def read_depth_raw(path) -> np.ndarray:
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("unit") != "m":
        raise ValueError(f"{path}: unsupported depth unit {sidecar.get('unit')!r}")
    h, w = sidecar["height"], sidecar["width"]
    data = np.fromfile(path, dtype="<f4", count=h * w)
    if data.size != h * w:
        raise ValueError(f"{path}: expected {h * w} floats, found {data.size}")
    return data.reshape(h, w).astype(np.float64)


def read_depth(path) -> np.ndarray:
    """Read depth in meters; dispatches on extension (.png vs raw)."""
    if str(path).lower().endswith(".png"):
        return _read_depth_png16(path)
    return read_depth_raw(path)
