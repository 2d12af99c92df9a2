"""Compose rendered digits into a 3x3 grid on a black 96x96 canvas."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attributes import AttributeAssignment
from .errors import TooManyObjects

CANVAS = 96
CELL = 28
GRID = 3
MARGIN = (CANVAS - GRID * CELL) // 2
CENTER_CELL = 4
N_CELLS = GRID * GRID


def cell_origin(cell: int) -> tuple[int, int]:
    """Top-left (row, col) pixel of a grid cell."""
    if not 0 <= cell < N_CELLS:
        raise ValueError(f"cell must be in 0..{N_CELLS - 1}, got {cell}")
    row, col = divmod(cell, GRID)
    return MARGIN + CELL * row, MARGIN + CELL * col


@dataclass(frozen=True)
class ObjectSpec:
    digit: int
    source_index: int
    attributes: AttributeAssignment
    cell: int | None = None
    salient: bool = False
    render_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "digit": self.digit,
            "source_index": self.source_index,
            "attributes": dict(self.attributes),
            "cell": self.cell,
            "salient": self.salient,
            "render_seed": self.render_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectSpec":
        return cls(int(d["digit"]), int(d["source_index"]), AttributeAssignment(d["attributes"]),
                   None if d["cell"] is None else int(d["cell"]), bool(d["salient"]),
                   int(d["render_seed"]))


@dataclass
class SceneImage:
    pixels: np.ndarray
    objects: list[ObjectSpec] = field(default_factory=list)

    @property
    def salient_object(self) -> ObjectSpec | None:
        return next((o for o in self.objects if o.salient), None)


def blank_canvas() -> np.ndarray:
    return np.zeros((CANVAS, CANVAS, 3), dtype=np.float32)


def paste(canvas: np.ndarray, cell: int, image: np.ndarray) -> None:
    r, c = cell_origin(cell)
    canvas[r:r + CELL, c:c + CELL] = image


def place_objects(rendered: Sequence[tuple[np.ndarray, ObjectSpec]], salient_first: bool,
                  rng: np.random.Generator) -> SceneImage:
    """Drop 1-2 rendered digits into distinct random cells.

    With ``salient_first`` the first object goes to the centre cell and is
    flagged salient; the rest draw from the remaining eight cells.
    """
    if not 1 <= len(rendered) <= 2:
        raise TooManyObjects(f"scenes hold 1 or 2 objects, got {len(rendered)}")
    if salient_first:
        others = [c for c in range(N_CELLS) if c != CENTER_CELL]
        cells = [CENTER_CELL] + list(rng.choice(others, size=len(rendered) - 1, replace=False))
    else:
        cells = list(rng.choice(N_CELLS, size=len(rendered), replace=False))
    canvas = blank_canvas()
    objects = []
    for k, ((img, spec), cell) in enumerate(zip(rendered, cells)):
        paste(canvas, int(cell), img)
        objects.append(dataclasses.replace(spec, cell=int(cell), salient=salient_first and k == 0))
    return SceneImage(canvas, objects)


def extract_cells(scene: SceneImage | np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Non-black cells of a scene as (cell index, 28x28x3 crop)."""
    pixels = scene.pixels if isinstance(scene, SceneImage) else scene
    out = []
    for cell in range(N_CELLS):
        r, c = cell_origin(cell)
        crop = pixels[r:r + CELL, c:c + CELL]
        if np.any(crop != 0):
            out.append((cell, crop.copy()))
    return out


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
