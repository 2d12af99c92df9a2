"""Attribute catalog and the six digit transformations.

Morphological edits (thickness, swelling, fracture) work on a 4x upsampled,
binarized copy of the digit and are downsampled back afterwards, following
the Morpho-MNIST recipe. Geometric edits (scaling, rotation) act directly on
the continuous 28x28 intensities, and colour is applied last.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import ndimage
from skimage import morphology, transform

from .errors import EmptyImage, UnknownAttribute

DIGIT_SIZE = 28
UPSCALE = 4
BINARY_THRESHOLD = 0.5


@dataclass(frozen=True)
class AttributeCategory:
    name: str
    values: tuple[str, ...]
    identity: str | None

    @property
    def n_values(self) -> int:
        return len(self.values)


CATEGORIES: tuple[AttributeCategory, ...] = (
    AttributeCategory("thickness", ("no-thickthinning", "thickening", "thinning"), "no-thickthinning"),
    AttributeCategory("swelling", ("no-swelling", "swelling"), "no-swelling"),
    AttributeCategory("fracture", ("no-fracture", "fracture"), "no-fracture"),
    AttributeCategory("scaling", ("large", "small"), "large"),
    AttributeCategory("rotation", ("no-rotation", "rotate-p36", "rotate-n36"), "no-rotation"),
    AttributeCategory("color", ("gray", "red", "green", "blue", "cyan", "magenta", "yellow"), None),
)
CATEGORY_NAMES: tuple[str, ...] = tuple(c.name for c in CATEGORIES)
CATEGORY_BY_NAME: Mapping[str, AttributeCategory] = MappingProxyType({c.name: c for c in CATEGORIES})
# pipeline order == canonical caption order == catalog order
PIPELINE_ORDER = CATEGORY_NAMES

COLORS: Mapping[str, tuple[float, float, float]] = MappingProxyType({
    "gray": (0.5, 0.5, 0.5),
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
})


def n_combinations() -> int:
    return int(np.prod([c.n_values for c in CATEGORIES]))


def category_of(value: str) -> str:
    for cat in CATEGORIES:
        if value in cat.values:
            return cat.name
    raise UnknownAttribute(value)


def check_value(category: str, value: str) -> None:
    cat = CATEGORY_BY_NAME.get(category)
    if cat is None:
        raise UnknownAttribute(f"unknown attribute category {category!r}")
    if value not in cat.values:
        raise UnknownAttribute(f"{value!r} is not a value of {category!r}")


class AttributeAssignment(Mapping[str, str]):
    """Immutable total map category -> value over all six categories."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, str]):
        missing = set(CATEGORY_NAMES) - set(values)
        extra = set(values) - set(CATEGORY_NAMES)
        if missing or extra:
            raise UnknownAttribute(f"assignment must cover exactly {CATEGORY_NAMES}; "
                                   f"missing={sorted(missing)} extra={sorted(extra)}")
        for k, v in values.items():
            check_value(k, v)
        self._values = {k: values[k] for k in CATEGORY_NAMES}

    @classmethod
    def identity(cls, color: str = "gray") -> "AttributeAssignment":
        vals = {c.name: c.identity for c in CATEGORIES if c.identity is not None}
        vals["color"] = color
        return cls(vals)

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "AttributeAssignment":
        return cls({c.name: c.values[rng.integers(c.n_values)] for c in CATEGORIES})

    def replace(self, **changes: str) -> "AttributeAssignment":
        vals = dict(self._values)
        vals.update(changes)
        return AttributeAssignment(vals)

    def __getitem__(self, key: str) -> str:
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        if isinstance(other, Mapping):
            return dict(self._values) == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._values.items()))

    def __repr__(self) -> str:
        return f"AttributeAssignment({self._values!r})"


@dataclass(frozen=True)
class TransformParams:
    """Tunable knobs of the stochastic and proportional transforms."""

    thickness_amount: float = 0.7
    swelling_radius: float = 3.5
    swelling_exponent: float = 0.7
    fracture_count: int = 3
    fracture_width: float = 1.5
    scale_factor: float = 0.75
    rotation_degrees: float = 36.0


DEFAULT_PARAMS = TransformParams()


# --------------------------------------------------------------------------
# morphology helpers

def _foreground_check(img: np.ndarray) -> None:
    if not np.any(img > BINARY_THRESHOLD):
        raise EmptyImage("image has no pixel above the binarization threshold")


def _upscale_binary(img: np.ndarray, scale: int = UPSCALE) -> np.ndarray:
    up = transform.pyramid_expand(np.asarray(img, dtype=np.float64), upscale=scale, order=3)
    return up >= BINARY_THRESHOLD


def _downscale(binary: np.ndarray, scale: int = UPSCALE) -> np.ndarray:
    out = transform.pyramid_reduce(binary.astype(np.float64), downscale=scale, order=1)
    return np.clip(out, 0.0, 1.0)


def canonicalize(img: np.ndarray, scale: int = UPSCALE) -> np.ndarray:
    """Round-trip a digit through the upsample/binarize/downsample path.

    Source digits are canonicalized once so untouched and morphologically
    edited digits share the same intensity profile.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.max() > 1.0:
        img = img / 255.0
    _foreground_check(img)
    return _downscale(_upscale_binary(img, scale), scale)


def _skeleton(binary: np.ndarray) -> np.ndarray:
    return morphology.skeletonize(binary)


def _thickness_hires(binary: np.ndarray) -> float:
    skel = _skeleton(binary)
    dist = ndimage.distance_transform_edt(binary)
    return 2.0 * float(dist[skel].mean())


def measure_thickness(img: np.ndarray, scale: int = UPSCALE) -> float:
    """Mean stroke thickness in pixels (2x mean distance transform on the skeleton)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.max(axis=-1)
    _foreground_check(img)
    binary = _upscale_binary(img, scale)
    if not binary.any():
        raise EmptyImage("foreground vanished after upsampling")
    return _thickness_hires(binary) / scale


def _change_thickness(img, amount, thicken, scale=UPSCALE):
    binary = _upscale_binary(img, scale)
    radius = amount * _thickness_hires(binary) / 2.0
    if thicken:
        out = binary | (ndimage.distance_transform_edt(~binary) <= radius)
    else:
        skel = _skeleton(binary)
        # keep a stroke at least one native pixel wide
        core = ndimage.distance_transform_edt(~skel) <= scale / 2.0
        out = (ndimage.distance_transform_edt(binary) > radius) | (core & binary)
    return _downscale(out, scale)


def _swell(img, rng, params: TransformParams, scale=UPSCALE):
    binary = _upscale_binary(img, scale)
    pts = np.argwhere(_skeleton(binary))
    centre = pts[rng.integers(len(pts))].astype(np.float64)
    radius = params.swelling_radius * scale
    rows, cols = np.indices(binary.shape, dtype=np.float64)
    dr, dc = rows - centre[0], cols - centre[1]
    dist = np.hypot(dr, dc)
    weight = np.ones_like(dist)
    inside = dist < radius
    weight[inside] = (dist[inside] / radius) ** params.swelling_exponent
    coords = np.stack([centre[0] + weight * dr, centre[1] + weight * dc])
    warped = ndimage.map_coordinates(binary.astype(np.float64), coords, order=1, mode="constant")
    return _downscale(warped >= 0.5, scale)


def _fracture(img, rng, params: TransformParams, scale=UPSCALE):
    binary = _upscale_binary(img, scale)
    skel = _skeleton(binary)
    pts = np.argwhere(skel)
    thickness = _thickness_hires(binary)
    rows, cols = np.indices(binary.shape, dtype=np.float64)
    out = binary.copy()
    n = min(params.fracture_count, len(pts))
    chosen = rng.choice(len(pts), size=n, replace=False)
    half_width = params.fracture_width * scale / 2.0
    half_len = thickness / 2.0 + 1.5 * scale
    for idx in chosen:
        p = pts[idx].astype(np.float64)
        near = pts[np.hypot(*(pts - p).T) <= 3 * scale].astype(np.float64)
        if len(near) >= 2:
            centred = near - near.mean(axis=0)
            _, _, vt = np.linalg.svd(centred, full_matrices=False)
            along = vt[0]
        else:
            along = np.array([1.0, 0.0])
        normal = np.array([-along[1], along[0]])
        dr, dc = rows - p[0], cols - p[1]
        a = dr * along[0] + dc * along[1]
        b = dr * normal[0] + dc * normal[1]
        out &= ~((np.abs(a) <= half_width) & (np.abs(b) <= half_len))
    return _downscale(out, scale)


def _rescale(img, factor):
    c = (DIGIT_SIZE - 1) / 2.0
    inv = 1.0 / factor
    return ndimage.affine_transform(img, np.diag([inv, inv]), offset=c - c * inv, order=1,
                                    mode="constant", cval=0.0)


def _rotate(img, degrees):
    # positive angle = anticlockwise as displayed (row 0 on top)
    return ndimage.rotate(img, degrees, reshape=False, order=1, mode="constant", cval=0.0)


def colorize(img: np.ndarray, color: str) -> np.ndarray:
    if color not in COLORS:
        raise UnknownAttribute(f"{color!r} is not a color")
    return img[..., None] * np.asarray(COLORS[color], dtype=img.dtype)


_MORPHOLOGICAL = frozenset({"thickness", "swelling", "fracture"})


def apply_transform(img: np.ndarray, category: str, value: str, rng: np.random.Generator,
                    params: TransformParams = DEFAULT_PARAMS) -> np.ndarray:
    """Apply one attribute value to a grayscale 28x28 digit.

    Colour returns an RGB (28, 28, 3) image, every other category returns
    grayscale. Identity values return the input unchanged.
    """
    check_value(category, value)
    img = np.asarray(img, dtype=np.float64)
    cat = CATEGORY_BY_NAME[category]
    if category in _MORPHOLOGICAL and value != cat.identity:
        _foreground_check(img)
    elif not np.any(img > 0):
        raise EmptyImage("image is entirely background")
    if category == "color":
        return colorize(img, value)
    if value == cat.identity:
        return img.copy()
    if category == "thickness":
        out = _change_thickness(img, params.thickness_amount, thicken=(value == "thickening"))
    elif category == "swelling":
        out = _swell(img, rng, params)
    elif category == "fracture":
        out = _fracture(img, rng, params)
    elif category == "scaling":
        out = _rescale(img, params.scale_factor)
    else:
        sign = 1.0 if value == "rotate-p36" else -1.0
        out = _rotate(img, sign * params.rotation_degrees)
    return np.clip(out, 0.0, 1.0)


def render_object(img: np.ndarray, assignment: Mapping[str, str], rng: np.random.Generator,
                  params: TransformParams = DEFAULT_PARAMS) -> np.ndarray:
    """Render a digit with a full attribute assignment; returns (28, 28, 3) RGB in [0, 1]."""
    out = np.asarray(img, dtype=np.float64)
    for category in PIPELINE_ORDER:
        out = apply_transform(out, category, assignment[category], rng, params)
    return out
