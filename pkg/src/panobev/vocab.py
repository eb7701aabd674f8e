"""Class vocabularies and render palettes.

Two vocabularies ship as package data: the 13 Stanford2D3D object
classes and the 20 retained Matterport3D categories, each with its
conventional render color. Top-down maps additionally use a ``void``
class (rendered black) for never-observed cells; ``with_void`` prepends
it, shifting the real classes up by one.

Label 255 is reserved in raster files for void/ignore and may not be
assigned to a real class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = ["Vocabulary", "load_vocabulary", "BUILTIN_VOCABULARIES"]

RESERVED_LABEL = 255

BUILTIN_VOCABULARIES = ("stanford13", "matterport20")


@dataclass(frozen=True)
class Vocabulary:
    name: str
    names: tuple[str, ...]
    palette: np.ndarray  # (K, 3) uint8

    def __post_init__(self):
        if len(self.names) != self.palette.shape[0]:
            raise ValueError("palette size must match class count")
        if len(self.names) > RESERVED_LABEL:
            raise ValueError(f"at most {RESERVED_LABEL} classes (255 is reserved)")
        if len({tuple(c) for c in self.palette.tolist()}) != len(self.names):
            raise ValueError("palette colors must be distinct")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def with_void(self) -> "Vocabulary":
        """Vocabulary for top-down maps: void (black) as class 0."""
        if self.names and self.names[0] == "void":
            return self
        palette = np.vstack([np.zeros((1, 3), dtype=np.uint8), self.palette])
        return Vocabulary(
            name=self.name + "-bev", names=("void",) + self.names, palette=palette
        )


def _from_payload(name: str, payload: dict) -> Vocabulary:
    colors = np.asarray(payload["palette"], dtype=np.float64)
    return Vocabulary(
        name=name,
        names=tuple(payload["names"]),
        palette=np.rint(colors * 255.0).astype(np.uint8),
    )


def load_vocabulary(name_or_path: str, include_void: bool = False) -> Vocabulary:
    """Load a built-in vocabulary by name or a JSON file by path.

    The JSON schema is {"names": [...], "palette": [[r, g, b], ...]} with
    colors in [0, 1]. A trailing "-bev" on a built-in name, or
    ``include_void=True``, prepends the void class.
    """
    want_void = include_void
    key = name_or_path
    if key.endswith("-bev") and key[:-4] in BUILTIN_VOCABULARIES:
        key = key[:-4]
        want_void = True
    if key in BUILTIN_VOCABULARIES:
        data = resources.files("panobev.data").joinpath(f"{key}.json").read_text()
        vocab = _from_payload(key, json.loads(data))
    else:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            vocab = _from_payload(name_or_path, json.load(fh))
    return vocab.with_void() if want_void else vocab
