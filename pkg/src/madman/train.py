"""Training loop and NegCLIP-style hard negatives."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .attributes import render_object
from .captions import VOCAB, CaptionSpec, swap_attribute
from .data import ArrayDataset, SampleRecord
from .errors import ConfigError, Divergence
from .mnist import DigitSource, load_digits
from .model import ModelConfig, ScoringModel, TinyCLIP, contrastive_loss
from .scene import blank_canvas, paste, to_uint8

log = logging.getLogger(__name__)

NEGCLIP_MODES = ("none", "text", "text+image")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.1
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-6
    warmup_steps: int = 500
    epochs: int = 30
    max_steps: int | None = None
    seed: int = 0
    negclip_mode: str = "none"
    log_every: int = 50

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.negclip_mode not in NEGCLIP_MODES:
            raise ConfigError(f"negclip_mode must be one of {NEGCLIP_MODES}, got {self.negclip_mode!r}")
        if self.epochs < 1 and not self.max_steps:
            raise ConfigError("epochs must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig field(s): {sorted(unknown)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def total_steps(self, n_samples: int) -> int:
        per_epoch = n_samples // self.batch_size
        steps = per_epoch * self.epochs
        return min(steps, self.max_steps) if self.max_steps else steps


# --------------------------------------------------------------------------
# hard negatives

def swappable_categories(caption: CaptionSpec) -> list[str]:
    """Categories described for both objects with differing values."""
    if len(caption.phrases) != 2:
        return []
    a, b = (p.attribute_map for p in caption.phrases)
    return [c for c in a if c in b and a[c] != b[c]]


@dataclass
class HardNegatives:
    captions: list[CaptionSpec] = field(default_factory=list)
    sources: list[int] = field(default_factory=list)     # batch index each negative came from
    categories: list[str] = field(default_factory=list)
    images: np.ndarray | None = None                      # (K, 96, 96, 3) uint8 for text+image

    def __len__(self) -> int:
        return len(self.captions)

    @property
    def caption_ids(self) -> np.ndarray:
        if not self.captions:
            return np.zeros((0, 20), np.int64)
        return np.stack([c.ids() for c in self.captions])


def swapped_image(record: SampleRecord, category: str, digits: DigitSource, source_split: str) -> np.ndarray:
    """Re-render a record's image with ``category`` exchanged between its two objects."""
    i, j = record.caption_objects
    oi, oj = record.objects[i], record.objects[j]
    new = {i: oi.attributes.replace(**{category: oj.attributes[category]}),
           j: oj.attributes.replace(**{category: oi.attributes[category]})}
    canvas = blank_canvas()
    for k, obj in enumerate(record.objects):
        attrs = new.get(k, obj.attributes)
        img = render_object(digits.get(source_split, obj.source_index), attrs,
                            np.random.default_rng(obj.render_seed))
        paste(canvas, obj.cell, img)
    return to_uint8(canvas)


def make_hard_negatives(batch: Sequence[SampleRecord], mode: str, rng: np.random.Generator, *,
                        digits: DigitSource | None = None, source_split: str = "train") -> HardNegatives:
    """One attribute-swapped caption per eligible record (and its image for text+image)."""
    if mode not in NEGCLIP_MODES or mode == "none":
        raise ConfigError(f"hard negatives need mode 'text' or 'text+image', got {mode!r}")
    out = HardNegatives()
    for idx, rec in enumerate(batch):
        cats = swappable_categories(rec.caption)
        if not cats:
            continue
        cat = cats[rng.integers(len(cats))]
        out.captions.append(swap_attribute(rec.caption, cat))
        out.sources.append(idx)
        out.categories.append(cat)
    if mode == "text+image" and len(out):
        digits = digits or load_digits()
        out.images = np.stack([swapped_image(batch[s], c, digits, source_split)
                               for s, c in zip(out.sources, out.categories)])
    return out


# --------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    model: TinyCLIP
    log: list[dict]
    model_cfg: ModelConfig
    train_cfg: TrainConfig

    @property
    def scorer(self) -> ScoringModel:
        return ScoringModel(self.model)

    @property
    def final_loss(self) -> float:
        return self.log[-1]["loss"] if self.log else float("nan")


def _param_groups(model: TinyCLIP, weight_decay: float):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        (decay if p.ndim >= 2 and "embedding" not in name else no_decay).append(p)
    return [{"params": decay, "weight_decay": weight_decay},
            {"params": no_decay, "weight_decay": 0.0}]


def _lr_lambda(warmup: int, total: int):
    def f(step):
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))
    return f


def _as_float(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(images).float().div_(255.0)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset: ArrayDataset, *,
          digits: DigitSource | None = None, source_split: str = "train",
          progress: bool = False, on_log: Callable[[dict, TinyCLIP], None] | None = None) -> TrainResult:
    """Train TinyCLIP from scratch on ``dataset``.

    ``on_log`` is called with each log row and the model (in train mode).
    """
    if len(dataset) < train_cfg.batch_size:
        raise ConfigError(f"dataset has {len(dataset)} samples, fewer than one batch")
    torch.manual_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    model = TinyCLIP(model_cfg)
    model.train()
    opt = torch.optim.AdamW(_param_groups(model, train_cfg.weight_decay), lr=train_cfg.lr,
                            betas=train_cfg.betas, eps=train_cfg.eps)
    total = train_cfg.total_steps(len(dataset))
    warmup = min(train_cfg.warmup_steps, max(1, total // 10))
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _lr_lambda(warmup, total))
    bs = train_cfg.batch_size
    per_epoch = len(dataset) // bs
    history: list[dict] = []
    running, n_running = 0.0, 0
    step = 0
    bar = None
    if progress:
        from tqdm import tqdm
        bar = tqdm(total=total, desc="train", mininterval=5.0)
    while step < total:
        order = rng.permutation(len(dataset))
        for b in range(per_epoch):
            if step >= total:
                break
            idx = np.sort(order[b * bs:(b + 1) * bs])
            images = _as_float(dataset.images[idx])
            ids = torch.from_numpy(dataset.caption_ids[idx])
            img_emb, txt_emb, scale = model(images, ids)
            extra_txt = extra_img = None
            if train_cfg.negclip_mode != "none":
                negs = make_hard_negatives([dataset.records[i] for i in idx], train_cfg.negclip_mode,
                                           rng, digits=digits, source_split=source_split)
                if len(negs):
                    extra_txt = model.encode_text(torch.from_numpy(negs.caption_ids))
                    if negs.images is not None:
                        extra_img = model.encode_image(_as_float(negs.images))
            loss = contrastive_loss(img_emb, txt_emb, scale, extra_txt, extra_img)
            if not torch.isfinite(loss):
                raise Divergence(f"loss became {loss.item()} at step {step} "
                                 f"(lr={sched.get_last_lr()[0]:.2e}, temperature={model.temperature:.4f})")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            sched.step()
            model.clamp_logit_scale()
            running += loss.item()
            n_running += 1
            step += 1
            if step % train_cfg.log_every == 0 or step == total:
                history.append({"step": step, "loss": running / n_running,
                                "temperature": model.temperature})
                running, n_running = 0.0, 0
                if on_log is not None:
                    on_log(history[-1], model)
                    model.train()
            if bar is not None:
                bar.update(1)
    if bar is not None:
        bar.close()
    model.eval()
    return TrainResult(model, history, model_cfg, train_cfg)


# --------------------------------------------------------------------------
# persistence

def save_checkpoint(path: str | os.PathLike, result: TrainResult, extra: dict | None = None) -> str:
    """Write parameters + configs; returns the checkpoint's content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu() for k, v in result.model.state_dict().items()}
    payload = {
        "state_dict": state,
        "model_cfg": result.model_cfg.to_dict(),
        "train_cfg": result.train_cfg.to_dict(),
        "vocab_hash": VOCAB.hash,
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return file_hash(path)


def load_checkpoint(path: str | os.PathLike) -> tuple[TinyCLIP, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("vocab_hash") != VOCAB.hash:
        raise ConfigError(f"{path}: checkpoint vocabulary differs from this build's")
    model = TinyCLIP(ModelConfig.from_dict(payload["model_cfg"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def write_log(path: str | os.PathLike, history: Sequence[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["step", "loss", "temperature"])
        w.writeheader()
        for row in history:
            w.writerow({"step": row["step"], "loss": f"{row['loss']:.6f}",
                        "temperature": f"{row['temperature']:.6f}"})


def file_hash(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
