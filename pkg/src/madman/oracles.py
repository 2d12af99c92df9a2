"""Reference scorers and a tiny exhaustive world for checking the evaluator.

The scorers read the image directly (no learning): they find the occupied
grid cells, name each object's colour and digit, and compare that to the
caption. One keeps objects intact (compositional), the other throws every
concept into a single bag.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .attributes import COLORS, AttributeAssignment, render_object
from .captions import VOCAB, CaptionSpec, render_caption
from .data import SampleRecord
from .mnist import DigitSource, load_digits
from .scene import N_CELLS, ObjectSpec, blank_canvas, extract_cells, paste, to_uint8

_COLOR_NAMES = tuple(COLORS)
_COLOR_DIRS = np.array([np.asarray(COLORS[c]) / np.linalg.norm(COLORS[c]) for c in _COLOR_NAMES])


def _phrases(ids: np.ndarray) -> list[tuple[int | None, str | None]]:
    """(digit, colour) for each noun phrase of a token id row."""
    out, digit, color = [], None, None
    for tok in VOCAB.decode(ids):
        if tok in ("<start>", "<pad>"):
            continue
        if tok in ("and", "<end>"):
            out.append((digit, color))
            digit, color = None, None
            if tok == "<end>":
                break
        elif tok.isdigit():
            digit = int(tok)
        elif tok in COLORS:
            color = tok
    return out


def object_color(crop: np.ndarray) -> str:
    ink = crop.reshape(-1, 3).astype(np.float64)
    ink = ink[ink.max(axis=1) > 0.3 * ink.max()]
    mean = ink.mean(axis=0)
    return _COLOR_NAMES[int(np.argmax(_COLOR_DIRS @ (mean / np.linalg.norm(mean))))]


@dataclass
class TemplateReader:
    """Reads (digit, colour) of every object by matching against known renders."""

    templates: dict[int, np.ndarray]      # digit -> 28x28 grayscale

    def read(self, image: np.ndarray) -> list[tuple[int, str]]:
        out = []
        for _, crop in extract_cells(image):
            gray = crop.astype(np.float64).max(axis=-1)
            gray /= max(gray.max(), 1e-9)
            digit = min(self.templates, key=lambda d: np.abs(self.templates[d] - gray).sum())
            out.append((digit, object_color(crop)))
        return out


class CompositionalScorer:
    """Counts caption phrases whose (digit, colour) matches one object."""

    def __init__(self, reader: TemplateReader):
        self.reader = reader

    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray:
        out = np.zeros(caption_ids.shape[:2])
        for n, img in enumerate(images):
            objects = set(self.reader.read(img))
            for k, ids in enumerate(caption_ids[n]):
                out[n, k] = sum(p in objects for p in _phrases(ids))
        return out


class BagOfWordsScorer:
    """Multiset overlap between caption concepts and image concepts."""

    def __init__(self, reader: TemplateReader):
        self.reader = reader

    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray:
        out = np.zeros(caption_ids.shape[:2])
        for n, img in enumerate(images):
            bag = Counter(x for obj in self.reader.read(img) for x in obj)
            for k, ids in enumerate(caption_ids[n]):
                words = Counter(x for p in _phrases(ids) for x in p if x is not None)
                out[n, k] = sum((bag & words).values())
        return out


class RandomScorer:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray:
        return self.rng.random(caption_ids.shape[:2])


class ConstantScorer:
    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray:
        return np.zeros(caption_ids.shape[:2])


class OracleScorer:
    """Scores the first candidate (ground truth) 1 and everything else 0."""

    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray:
        out = np.zeros(caption_ids.shape[:2])
        out[:, 0] = 1.0
        return out


def micro_world(digit_pair: tuple[int, int] = (1, 7), color_pair: tuple[str, str] = ("red", "blue"),
                digits: DigitSource | None = None) -> tuple[list[SampleRecord], TemplateReader]:
    """Every two-object scene over 2 digits x 2 colours, captioned with colour only.

    Both objects differ in digit and colour, so each scene has a distinct
    attribute swap. Enumerates colour assignment x ordered cell pair x
    caption order.
    """
    digits = digits or load_digits()
    idx = {d: digits.index_of("test", d, 0) for d in digit_pair}
    base = {d: digits.get("test", idx[d]) for d in digit_pair}
    reader = TemplateReader({d: base[d] / base[d].max() for d in digit_pair})
    records = []
    for colors in itertools.permutations(color_pair):
        objs = [ObjectSpec(d, idx[d], AttributeAssignment.identity(c)) for d, c in zip(digit_pair, colors)]
        rendered = [render_object(base[o.digit], o.attributes, np.random.default_rng(0)) for o in objs]
        for cells in itertools.permutations(range(N_CELLS), 2):
            canvas = blank_canvas()
            placed = []
            for o, img, cell in zip(objs, rendered, cells):
                paste(canvas, cell, img)
                placed.append(ObjectSpec(o.digit, o.source_index, o.attributes, cell))
            for order in ((0, 1), (1, 0)):
                caption: CaptionSpec = render_caption([(placed[i], ["color"]) for i in order])
                records.append(SampleRecord(len(records), to_uint8(canvas), placed, caption, list(order),
                                            target="color"))
    return records, reader


__all__ = ["BagOfWordsScorer", "CompositionalScorer", "ConstantScorer", "OracleScorer", "RandomScorer",
           "TemplateReader", "micro_world", "object_color"]
