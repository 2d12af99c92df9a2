"""Image-caption pair sampling, evaluation sets and on-disk shards."""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .attributes import CATEGORIES, CATEGORY_BY_NAME, CATEGORY_NAMES, AttributeAssignment, render_object
from .captions import AttrCountDistribution, CaptionSpec, attr_distribution, parse_caption, render_caption
from .errors import ConfigError, CorruptRecord, ManifestMismatch, RejectionBudgetExceeded
from .mnist import DigitSource, load_digits
from .scene import ObjectSpec, SceneImage, place_objects, to_uint8

GENERATOR_VERSION = "1"
SPLITS = ("train", "test", "ood-test")
EVAL_TARGETS = CATEGORY_NAMES + ("object",)
REJECTION_BUDGET = 1000


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class OodSpec:
    """Attribute-value x digit combinations held out for the OOD test set."""

    pairs: frozenset[tuple[str, int]] = frozenset(
        [(v, d) for v in ("green", "red") for d in (0, 3)]
        + [(v, d) for v in ("blue", "magenta") for d in (4, 5)]
        + [("large", d) for d in (3, 7)]
        + [("small", d) for d in (4, 9)]
    )

    def matches(self, digit: int, attributes: AttributeAssignment) -> bool:
        return any((v, digit) in self.pairs for v in attributes.values())


DEFAULT_OOD = OodSpec()


@dataclass(frozen=True)
class DataConfig:
    p_two_obj_img: float = 1.0
    p_two_obj_cap: float = 1.0
    attr_mean: float = 1.8
    p_saliency: float = 0.0
    n_samples: int = 50_000
    split: str = "train"
    mnist_split: str | None = None
    seed: int = 0
    attr_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("p_two_obj_img", "p_two_obj_cap", "p_saliency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.mnist_split not in (None, "train", "test"):
            raise ConfigError(f"mnist_split must be 'train' or 'test', got {self.mnist_split!r}")
        if self.n_samples < 0:
            raise ConfigError(f"n_samples must be >= 0, got {self.n_samples}")
        if self.attr_probs is not None:
            try:
                AttrCountDistribution(tuple(self.attr_probs))
            except ValueError as e:
                raise ConfigError(f"attr_probs: {e}") from None
        elif not 0.0 <= self.attr_mean <= len(CATEGORIES):
            raise ConfigError(f"attr_mean must lie in [0, 6], got {self.attr_mean}")

    @property
    def attr_dist(self) -> AttrCountDistribution:
        if self.attr_probs is not None:
            return AttrCountDistribution(tuple(self.attr_probs))
        return attr_distribution(self.attr_mean)

    @property
    def source_split(self) -> str:
        if self.mnist_split is not None:
            return self.mnist_split
        return "train" if self.split == "train" else "test"

    def replace(self, **changes) -> "DataConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["attr_probs"] is not None:
            d["attr_probs"] = list(d["attr_probs"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown DataConfig field(s): {sorted(unknown)}")
        d = dict(d)
        if d.get("attr_probs") is not None:
            d["attr_probs"] = tuple(d["attr_probs"])
        return cls(**d)

    def content_hash(self, digits_fingerprint: str = "") -> str:
        blob = json.dumps({"config": self.to_dict(), "version": GENERATOR_VERSION,
                           "digits": digits_fingerprint}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def scene_key(self, digits_fingerprint: str = "") -> str:
        """Hash of the fields that determine images (captions excluded)."""
        d = {k: self.to_dict()[k] for k in ("p_two_obj_img", "p_saliency", "n_samples", "split",
                                            "seed")}
        d["source"] = self.source_split
        blob = json.dumps({"scene": d, "version": GENERATOR_VERSION, "digits": digits_fingerprint},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


REALISTIC = DataConfig(p_two_obj_img=0.95, p_two_obj_cap=0.6, attr_mean=0.57, p_saliency=0.9)
IDEAL = DataConfig(p_two_obj_img=1.0, p_two_obj_cap=1.0, attr_mean=3.5, p_saliency=0.0)
BASE = DataConfig(p_two_obj_img=1.0, p_two_obj_cap=1.0, attr_mean=1.8, p_saliency=0.0)
PRESETS = {"realistic": REALISTIC, "ideal": IDEAL, "base": BASE}


# --------------------------------------------------------------------------
# records

@dataclass
class SampleRecord:
    sample_id: int
    image: np.ndarray                       # (96, 96, 3) uint8
    objects: list[ObjectSpec]               # image order
    caption: CaptionSpec
    caption_objects: list[int]              # indices into ``objects``, caption order
    salient: bool = False
    target: str | None = None               # eval records only

    @property
    def described(self) -> list[tuple[str, ...] | None]:
        """Per image object: described categories, or None if not captioned."""
        out: list[tuple[str, ...] | None] = [None] * len(self.objects)
        for phrase, obj in zip(self.caption.phrases, self.caption_objects):
            out[obj] = tuple(c for c, _ in phrase.attributes)
        return out

    def described_mask(self) -> list[list[bool] | None]:
        return [None if d is None else [c in d for c in CATEGORY_NAMES] for d in self.described]

    @property
    def caption_ids(self) -> np.ndarray:
        return self.caption.ids()

    def metadata(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "objects": [o.to_dict() for o in self.objects],
            "caption": self.caption.text,
            "caption_ids": self.caption_ids.tolist(),
            "caption_objects": list(self.caption_objects),
            "described_mask": self.described_mask(),
            "salient": self.salient,
            "target": self.target,
        }

    @classmethod
    def from_metadata(cls, meta: dict, image: np.ndarray) -> "SampleRecord":
        caption = parse_caption(meta["caption"])
        rec = cls(int(meta["sample_id"]), image, [ObjectSpec.from_dict(o) for o in meta["objects"]],
                  caption, [int(i) for i in meta["caption_objects"]], bool(meta["salient"]),
                  meta.get("target"))
        if rec.caption_ids.tolist() != meta["caption_ids"]:
            raise CorruptRecord(f"record {rec.sample_id}: caption ids disagree with caption text")
        return rec

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (self.metadata() == other.metadata() and self.image.dtype == other.image.dtype
                and np.array_equal(self.image, other.image))


# --------------------------------------------------------------------------
# sampling

def _streams(seed: int, split: str, sample_id: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent image and caption streams for one sample."""
    ss = np.random.SeedSequence([seed, SPLITS.index(split), sample_id])
    img_ss, cap_ss = ss.spawn(2)
    return np.random.default_rng(img_ss), np.random.default_rng(cap_ss)


def _draw_object(rng: np.random.Generator, digits: DigitSource, split: str) -> ObjectSpec:
    digit = int(rng.integers(10))
    k = int(rng.integers(digits.count(split, digit)))
    attrs = AttributeAssignment.sample(rng)
    return ObjectSpec(digit, digits.index_of(split, digit, k), attrs,
                      render_seed=int(rng.integers(2**31)))


def _draw_objects(rng, n, digits, source_split, ood, ood_mode, constrain=None):
    """Rejection-sample ``n`` objects honouring the OOD rule for the split.

    ``ood_mode`` is "exclude" (no object may match a held-out pair) or
    "require" (at least one object must match). ``constrain`` may edit or
    veto the drawn objects (returns None to reject).
    """
    for _ in range(REJECTION_BUDGET):
        objs = [_draw_object(rng, digits, source_split) for _ in range(n)]
        if constrain is not None:
            objs = constrain(objs, rng)
            if objs is None:
                continue
        hits = [ood.matches(o.digit, o.attributes) for o in objs]
        if ood_mode == "exclude" and any(hits):
            continue
        if ood_mode == "require" and not any(hits):
            continue
        return objs
    raise RejectionBudgetExceeded(f"no valid objects after {REJECTION_BUDGET} draws")


def _render(objs: Sequence[ObjectSpec], digits: DigitSource, source_split: str) -> list[np.ndarray]:
    return [render_object(digits.get(source_split, o.source_index), o.attributes,
                          np.random.default_rng(o.render_seed)) for o in objs]


def _sample_scene(cfg: DataConfig, ood: OodSpec, rng: np.random.Generator,
                  digits: DigitSource) -> SceneImage:
    n_obj = 2 if rng.random() < cfg.p_two_obj_img else 1
    salient = bool(rng.random() < cfg.p_saliency)
    mode = "require" if cfg.split == "ood-test" else "exclude"
    objs = _draw_objects(rng, n_obj, digits, cfg.source_split, ood, mode)
    rendered = _render(objs, digits, cfg.source_split)
    return place_objects(list(zip(rendered, objs)), salient_first=salient, rng=rng)


def _sample_caption(cfg: DataConfig, scene: SceneImage, rng: np.random.Generator):
    n_obj = len(scene.objects)
    salient_idx = next((i for i, o in enumerate(scene.objects) if o.salient), None)
    if n_obj == 2 and rng.random() < cfg.p_two_obj_cap:
        order = list(rng.permutation(2))
        if salient_idx is not None:
            order = [salient_idx, 1 - salient_idx]
    elif n_obj == 2:
        order = [salient_idx if salient_idx is not None else int(rng.integers(2))]
    else:
        order = [0]
    dist = cfg.attr_dist
    described = []
    for i in order:
        n_a = dist.sample(rng)
        subset = [CATEGORY_NAMES[j] for j in rng.choice(len(CATEGORY_NAMES), size=n_a, replace=False)]
        described.append((scene.objects[i], subset))
    return render_caption(described), [int(i) for i in order]


def sample_pair(cfg: DataConfig, ood: OodSpec = DEFAULT_OOD, rng=None, *,
                digits: DigitSource | None = None, sample_id: int = 0,
                scene: SceneImage | None = None) -> SampleRecord:
    """Draw one image-caption pair.

    ``rng`` may be a pair of generators (image stream, caption stream); by
    default both derive from ``(cfg.seed, split, sample_id)``. A precomputed
    ``scene`` skips image sampling (used to share renders between configs
    that differ only in caption knobs).
    """
    digits = digits or load_digits()
    if rng is None:
        img_rng, cap_rng = _streams(cfg.seed, cfg.split, sample_id)
    elif isinstance(rng, tuple):
        img_rng, cap_rng = rng
    else:
        img_rng = cap_rng = rng
    if scene is None:
        scene = _sample_scene(cfg, ood, img_rng, digits)
    caption, order = _sample_caption(cfg, scene, cap_rng)
    return SampleRecord(sample_id, to_uint8(scene.pixels), scene.objects, caption, order,
                        salient=scene.salient_object is not None)


def _generate_chunk(args):
    cfg, ood, ids = args
    digits = load_digits()
    return [sample_pair(cfg, ood, digits=digits, sample_id=i) for i in ids]


def generate(cfg: DataConfig, ood: OodSpec = DEFAULT_OOD, *, jobs: int = 1,
             digits: DigitSource | None = None,
             scenes: Sequence[SceneImage] | None = None) -> list[SampleRecord]:
    """All ``cfg.n_samples`` records; output is independent of ``jobs``."""
    ids = list(range(cfg.n_samples))
    if scenes is not None:
        digits = digits or load_digits()
        return [sample_pair(cfg, ood, digits=digits, sample_id=i, scene=s) for i, s in zip(ids, scenes)]
    if jobs <= 1 or len(ids) < 2 * jobs:
        digits = digits or load_digits()
        return [sample_pair(cfg, ood, digits=digits, sample_id=i) for i in ids]
    chunks = [ids[k::jobs] for k in range(jobs)]
    out: list[SampleRecord | None] = [None] * len(ids)
    with ProcessPoolExecutor(jobs) as ex:
        for chunk, recs in zip(chunks, ex.map(_generate_chunk, [(cfg, ood, c) for c in chunks])):
            for i, r in zip(chunk, recs):
                out[i] = r
    return out  # type: ignore[return-value]


def knob_counts(records: Sequence[SampleRecord]) -> dict[str, tuple[int, int]]:
    """(successes, trials) for each generator knob, for frequency checks.

    ``n_a=k`` entries count noun phrases describing exactly k attributes.
    """
    two_img = [r for r in records if len(r.objects) == 2]
    phrases = [p for r in records for p in r.caption.phrases]
    out = {
        "p_two_obj_img": (len(two_img), len(records)),
        "p_two_obj_cap": (sum(len(r.caption.phrases) == 2 for r in two_img), len(two_img)),
        "p_saliency": (sum(r.salient for r in records), len(records)),
    }
    for k in range(len(CATEGORIES) + 1):
        out[f"n_a={k}"] = (sum(len(p.attributes) == k for p in phrases), len(phrases))
    return out


def expected_knobs(cfg: DataConfig) -> dict[str, float]:
    out = {"p_two_obj_img": cfg.p_two_obj_img, "p_two_obj_cap": cfg.p_two_obj_cap,
           "p_saliency": cfg.p_saliency}
    out.update({f"n_a={k}": p for k, p in enumerate(cfg.attr_dist.probs)})
    return out


def scenes_of(records: Sequence[SampleRecord]) -> list[SceneImage]:
    return [SceneImage(r.image.astype(np.float32) / 255.0, list(r.objects)) for r in records]


# --------------------------------------------------------------------------
# evaluation sets

def build_eval_set(target: str, n: int, rng: np.random.Generator | int = 0, *,
                   split: str = "test", ood: OodSpec = DEFAULT_OOD,
                   digits: DigitSource | None = None) -> list[SampleRecord]:
    """Two-object, fully captioned records for recognition/binding of ``target``.

    The first ``n // 2`` records describe 3 attributes per object, the rest 4.
    For an attribute target both objects describe it with differing values;
    for ``"object"`` the two digits differ.
    """
    if target not in EVAL_TARGETS:
        raise ConfigError(f"eval target must be one of {EVAL_TARGETS}, got {target!r}")
    if n <= 0:
        raise ConfigError(f"n must be positive, got {n}")
    if split not in ("test", "ood-test"):
        raise ConfigError(f"eval split must be 'test' or 'ood-test', got {split!r}")
    digits = digits or load_digits()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(np.random.SeedSequence([int(rng), EVAL_TARGETS.index(target),
                                                            SPLITS.index(split)]))
    mode = "require" if split == "ood-test" else "exclude"

    def constrain(objs, r):
        a, b = objs
        if target == "object":
            return objs if a.digit != b.digit else None
        cat = CATEGORY_BY_NAME[target]
        if a.attributes[target] == b.attributes[target]:
            others = [v for v in cat.values if v != a.attributes[target]]
            b = dataclasses.replace(b, attributes=b.attributes.replace(**{target: others[r.integers(len(others))]}))
        return [a, b]

    records = []
    for i in range(n):
        n_a = 3 if i < n // 2 else 4
        objs = _draw_objects(rng, 2, digits, "test", ood, mode, constrain)
        rendered = _render(objs, digits, "test")
        scene = place_objects(list(zip(rendered, objs)), salient_first=False, rng=rng)
        described = []
        for o in scene.objects:
            if target == "object":
                subset = list(rng.choice(CATEGORY_NAMES, size=n_a, replace=False))
            else:
                rest = [c for c in CATEGORY_NAMES if c != target]
                subset = [target] + list(rng.choice(rest, size=n_a - 1, replace=False))
            described.append((o, [str(c) for c in subset]))
        order = [int(j) for j in rng.permutation(2)]
        caption = render_caption([described[j] for j in order])
        records.append(SampleRecord(i, to_uint8(scene.pixels), scene.objects, caption, order,
                                    salient=False, target=target))
    return records


# --------------------------------------------------------------------------
# shards

SHARD_SIZE = 1000
MANIFEST = "manifest.json"
_LEN = struct.Struct(">I")


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def decode_png(blob: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(blob)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def _config_payload(cfg) -> dict:
    if isinstance(cfg, DataConfig):
        return {"kind": "data", **cfg.to_dict()}
    return dict(cfg)


def _payload_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def write_shards(cfg, records: Iterable[SampleRecord], out_dir: str | os.PathLike,
                 shard_size: int = SHARD_SIZE, digits_fingerprint: str = "") -> Path:
    """Write records as length-prefixed (JSON, PNG) pairs plus a manifest.

    ``cfg`` is a DataConfig or a plain dict describing how the records
    were made (used for eval sets).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = _config_payload(cfg)
    shards = []
    buf = bytearray()
    count = total = 0

    def flush():
        nonlocal buf, count
        name = f"shard-{len(shards):05d}.bin"
        (out / name).write_bytes(bytes(buf))
        shards.append({"file": name, "n_records": count,
                       "sha256": hashlib.sha256(buf).hexdigest()})
        buf, count = bytearray(), 0

    for rec in records:
        meta = json.dumps(rec.metadata(), sort_keys=True).encode()
        png = encode_png(rec.image)
        buf += _LEN.pack(len(meta)) + meta + _LEN.pack(len(png)) + png
        count += 1
        total += 1
        if count == shard_size:
            flush()
    if count or not shards:
        flush()
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "config": payload,
        "config_hash": _payload_hash(payload),
        "digits": digits_fingerprint,
        "n_records": total,
        "shards": shards,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out


def read_manifest(path: str | os.PathLike, expected_cfg=None) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestMismatch(f"unreadable manifest in {path}: {e}") from None
    for key in ("config", "config_hash", "shards", "n_records", "generator_version"):
        if key not in manifest:
            raise ManifestMismatch(f"manifest lacks {key!r}")
    if _payload_hash(manifest["config"]) != manifest["config_hash"]:
        raise ManifestMismatch("manifest config does not match its hash")
    if manifest["generator_version"] != GENERATOR_VERSION:
        raise ManifestMismatch(f"generator version {manifest['generator_version']} != {GENERATOR_VERSION}")
    if expected_cfg is not None and _payload_hash(_config_payload(expected_cfg)) != manifest["config_hash"]:
        raise ManifestMismatch("shards were generated from a different config")
    if sum(s["n_records"] for s in manifest["shards"]) != manifest["n_records"]:
        raise ManifestMismatch("record counts disagree")
    return manifest


def read_shards(path: str | os.PathLike, expected_cfg=None) -> Iterator[SampleRecord]:
    path = Path(path)
    manifest = read_manifest(path, expected_cfg)
    for shard in manifest["shards"]:
        data = (path / shard["file"]).read_bytes()
        if hashlib.sha256(data).hexdigest() != shard["sha256"]:
            raise CorruptRecord(f"{shard['file']}: checksum mismatch")
        pos = n = 0
        try:
            while pos < len(data):
                (mlen,) = _LEN.unpack_from(data, pos)
                meta = json.loads(data[pos + 4:pos + 4 + mlen])
                pos += 4 + mlen
                (plen,) = _LEN.unpack_from(data, pos)
                image = decode_png(data[pos + 4:pos + 4 + plen])
                pos += 4 + plen
                yield SampleRecord.from_metadata(meta, image)
                n += 1
        except (struct.error, json.JSONDecodeError, OSError, KeyError, ValueError) as e:
            raise CorruptRecord(f"{shard['file']}: {e}") from None
        if n != shard["n_records"]:
            raise CorruptRecord(f"{shard['file']}: expected {shard['n_records']} records, got {n}")


# --------------------------------------------------------------------------
# dense arrays for training

@dataclass
class ArrayDataset:
    images: np.ndarray                  # (N, 96, 96, 3) uint8
    caption_ids: np.ndarray             # (N, 20) int64
    records: list[SampleRecord] = field(repr=False, default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord]) -> "ArrayDataset":
        if not records:
            return cls(np.zeros((0, 96, 96, 3), np.uint8), np.zeros((0, 20), np.int64), [])
        images = np.stack([r.image for r in records])
        ids = np.stack([r.caption_ids for r in records])
        # keep metadata without duplicating pixel memory
        slim = [dataclasses.replace(r, image=images[i]) for i, r in enumerate(records)]
        return cls(images, ids, slim)
