"""Caption grammar, vocabulary and the attributes-per-object distributions.

Grammar::

    caption := <start> NP ("and" NP)? <end>
    NP      := attribute-value* digit      (attributes in catalog order)
"""
from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .attributes import CATEGORIES, CATEGORY_NAMES, category_of, check_value
from .errors import TooManyObjects, UnknownToken

PAD, START, END, AND = "<pad>", "<start>", "<end>", "and"
SPECIAL_TOKENS = (PAD, START, END, AND)
ATTRIBUTE_TOKENS = tuple(v for c in CATEGORIES for v in c.values)
DIGIT_TOKENS = tuple(str(d) for d in range(10))
CONTEXT_LENGTH = 20
MAX_CAPTION_TOKENS = 2 * (len(CATEGORIES) + 1) + 1 + 2


class Vocabulary:
    def __init__(self, tokens: Sequence[str] = SPECIAL_TOKENS + ATTRIBUTE_TOKENS + DIGIT_TOKENS):
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def start_id(self) -> int:
        return self.index[START]

    @property
    def end_id(self) -> int:
        return self.index[END]

    def to_json(self) -> str:
        return json.dumps(self.index, indent=1)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def encode(self, tokens: Sequence[str], context_length: int = CONTEXT_LENGTH) -> np.ndarray:
        if len(tokens) > context_length:
            raise ValueError(f"caption of {len(tokens)} tokens exceeds context {context_length}")
        ids = np.full(context_length, self.pad_id, dtype=np.int64)
        for i, tok in enumerate(tokens):
            try:
                ids[i] = self.index[tok]
            except KeyError:
                raise UnknownToken(tok) from None
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise UnknownToken(f"id {i}")
            if i != self.pad_id:
                out.append(self.tokens[i])
        return out


VOCAB = Vocabulary()


def tokenize(tokens: Sequence[str] | str, context_length: int = CONTEXT_LENGTH) -> np.ndarray:
    if isinstance(tokens, str):
        tokens = tokens.split()
    return VOCAB.encode(tokens, context_length)


def detokenize(ids: Iterable[int]) -> list[str]:
    return VOCAB.decode(ids)


# --------------------------------------------------------------------------
# attributes-per-object distributions

N_ATTR_MAX = len(CATEGORIES)
SHARED_MASS = 0.35  # p(n_a = 3) + p(n_a = 4) for the non-extreme presets
PRESET_MEANS = (0.57, 1.0, 1.8, 2.6, 3.5, 4.5, 5.5, 6.0)


@dataclass(frozen=True)
class AttrCountDistribution:
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (N_ATTR_MAX + 1,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"need {N_ATTR_MAX + 1} nonnegative probabilities summing to 1")

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(N_ATTR_MAX + 1), self.probs))

    def sample(self, rng: np.random.Generator) -> int:
        return sample_attr_count(self, rng)


def sample_attr_count(dist: AttrCountDistribution, rng: np.random.Generator) -> int:
    return int(rng.choice(N_ATTR_MAX + 1, p=np.asarray(dist.probs)))


def _maxent(mean: float, shared_mass: float | None) -> np.ndarray:
    k = np.arange(N_ATTR_MAX + 1, dtype=np.float64)
    ind = np.isin(k, (3, 4)).astype(np.float64)
    if shared_mass is None:
        feats, target = k[:, None], np.array([mean])
    else:
        feats, target = np.stack([k, ind], axis=1), np.array([mean, shared_mass])

    def dual(theta):
        z = feats @ theta
        zmax = z.max()
        logz = zmax + np.log(np.exp(z - zmax).sum())
        p = np.exp(z - logz)
        return logz - theta @ target, feats.T @ p - target

    res = optimize.minimize(dual, np.zeros(feats.shape[1]), jac=True, method="BFGS",
                            options={"gtol": 1e-12, "maxiter": 1000})
    z = feats @ res.x
    p = np.exp(z - z.max())
    return p / p.sum()


def _shared_mass_feasible(mean: float) -> bool:
    rest = 1.0 - SHARED_MASS
    lo = SHARED_MASS * 3
    hi = SHARED_MASS * 4 + rest * N_ATTR_MAX
    return lo < mean < hi


@functools.lru_cache(maxsize=None)
def attr_distribution(mean: float) -> AttrCountDistribution:
    """Maximum-entropy distribution on 0..6 with the given mean.

    Where feasible the distribution also puts exactly ``SHARED_MASS`` on
    n_a in {3, 4}; otherwise only the mean is constrained.
    """
    if not 0.0 <= mean <= N_ATTR_MAX:
        raise ValueError(f"mean must lie in [0, {N_ATTR_MAX}], got {mean}")
    if mean in (0.0, float(N_ATTR_MAX)):
        p = np.zeros(N_ATTR_MAX + 1)
        p[int(mean)] = 1.0
    else:
        p = _maxent(mean, SHARED_MASS if _shared_mass_feasible(mean) else None)
    return AttrCountDistribution(tuple(float(x) for x in p))


def point_mass(k: int) -> AttrCountDistribution:
    p = [0.0] * (N_ATTR_MAX + 1)
    p[k] = 1.0
    return AttrCountDistribution(tuple(p))


# --------------------------------------------------------------------------
# captions

@dataclass(frozen=True)
class NounPhrase:
    digit: int
    attributes: tuple[tuple[str, str], ...]  # (category, value) in canonical order

    @classmethod
    def make(cls, digit: int, attributes: Mapping[str, str]) -> "NounPhrase":
        for cat, val in attributes.items():
            check_value(cat, val)
        ordered = tuple((c, attributes[c]) for c in CATEGORY_NAMES if c in attributes)
        return cls(int(digit), ordered)

    @property
    def attribute_map(self) -> dict[str, str]:
        return dict(self.attributes)

    @property
    def tokens(self) -> list[str]:
        return [v for _, v in self.attributes] + [str(self.digit)]


@dataclass(frozen=True)
class CaptionSpec:
    phrases: tuple[NounPhrase, ...]

    @property
    def tokens(self) -> list[str]:
        out = [START]
        for i, np_ in enumerate(self.phrases):
            if i:
                out.append(AND)
            out.extend(np_.tokens)
        out.append(END)
        return out

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def ids(self, context_length: int = CONTEXT_LENGTH) -> np.ndarray:
        return tokenize(self.tokens, context_length)

    def with_phrase(self, slot: int, phrase: NounPhrase) -> "CaptionSpec":
        phrases = list(self.phrases)
        phrases[slot] = phrase
        return CaptionSpec(tuple(phrases))


def render_caption(objects: Sequence[tuple[object, Iterable[str]]]) -> CaptionSpec:
    """Caption for ``(ObjectSpec, described categories)`` pairs, in the given order."""
    if not 1 <= len(objects) <= 2:
        raise TooManyObjects(f"captions describe 1 or 2 objects, got {len(objects)}")
    phrases = []
    for spec, subset in objects:
        subset = set(subset)
        unknown = subset - set(CATEGORY_NAMES)
        if unknown:
            raise ValueError(f"unknown categories {sorted(unknown)}")
        phrases.append(NounPhrase.make(spec.digit, {c: spec.attributes[c] for c in subset}))
    return CaptionSpec(tuple(phrases))


def parse_caption(tokens: Sequence[str] | str) -> CaptionSpec:
    """Reference parser: inverse of :func:`render_caption` on token sequences."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = [t for t in tokens if t != PAD]
    if len(tokens) < 3 or tokens[0] != START or tokens[-1] != END:
        raise ValueError(f"not a caption: {tokens}")
    body = tokens[1:-1]
    chunks: list[list[str]] = [[]]
    for tok in body:
        if tok == AND:
            chunks.append([])
        else:
            chunks[-1].append(tok)
    if len(chunks) > 2:
        raise ValueError("at most two noun phrases")
    phrases = []
    for chunk in chunks:
        if not chunk or chunk[-1] not in DIGIT_TOKENS:
            raise ValueError(f"noun phrase must end with a digit: {chunk}")
        attrs: dict[str, str] = {}
        last = -1
        for tok in chunk[:-1]:
            if tok not in VOCAB or tok in DIGIT_TOKENS or tok in SPECIAL_TOKENS:
                raise ValueError(f"unexpected token {tok!r}")
            cat = category_of(tok)
            pos = CATEGORY_NAMES.index(cat)
            if pos <= last:
                raise ValueError(f"attributes out of canonical order: {chunk}")
            last = pos
            attrs[cat] = tok
        phrases.append(NounPhrase.make(int(chunk[-1]), attrs))
    return CaptionSpec(tuple(phrases))


def swap_attribute(caption: CaptionSpec, category: str) -> CaptionSpec:
    """Exchange the values of ``category`` between the two noun phrases."""
    if len(caption.phrases) != 2:
        raise ValueError("swapping needs a two-object caption")
    a, b = (p.attribute_map for p in caption.phrases)
    if category == "object":
        return CaptionSpec((NounPhrase.make(caption.phrases[1].digit, a),
                            NounPhrase.make(caption.phrases[0].digit, b)))
    if category not in a or category not in b:
        raise ValueError(f"{category!r} is not described for both objects")
    a[category], b[category] = b[category], a[category]
    return CaptionSpec((NounPhrase.make(caption.phrases[0].digit, a),
                        NounPhrase.make(caption.phrases[1].digit, b)))


def substitute(caption: CaptionSpec, slot: int, target: str, value: str | int) -> CaptionSpec:
    """Replace the target attribute (or the digit for ``"object"``) in one noun phrase."""
    phrase = caption.phrases[slot]
    if target == "object":
        new = NounPhrase(int(value), phrase.attributes)
    else:
        attrs = phrase.attribute_map
        if target not in attrs:
            raise ValueError(f"{target!r} not described in slot {slot}")
        attrs[target] = str(value)
        new = NounPhrase.make(phrase.digit, attrs)
    return caption.with_phrase(slot, new)
