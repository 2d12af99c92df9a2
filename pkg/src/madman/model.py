"""TinyCLIP: a small ViT image encoder and transformer text encoder."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .captions import CONTEXT_LENGTH, VOCAB
from .errors import BatchTooSmall, ConfigError, IdOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    image_resolution: int = 96
    vision_layers: int = 6
    vision_width: int = 48
    vision_heads: int = 4
    vision_patch_size: int = 8
    text_width: int = 32
    text_layers: int = 6
    text_heads: int = 4
    context_length: int = CONTEXT_LENGTH
    vocab_size: int = len(VOCAB)
    temperature_init: float = 0.07
    max_logit_scale: float = 100.0

    def __post_init__(self):
        if not 0 < self.vision_patch_size <= self.image_resolution:
            raise ConfigError(f"vision_patch_size must lie in 1..{self.image_resolution}")
        if self.vision_width % self.vision_heads:
            raise ConfigError("vision_heads must divide vision_width")
        if self.text_width % self.text_heads:
            raise ConfigError("text_heads must divide text_width")
        if self.vocab_size < len(VOCAB):
            raise ConfigError(f"vocab_size must be >= {len(VOCAB)}")

    @property
    def input_resolution(self) -> int:
        """Side of the square fed to the patch embedding (center crop when needed)."""
        if self.image_resolution % self.vision_patch_size == 0:
            return self.image_resolution
        return self.image_resolution - self.image_resolution % self.vision_patch_size

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown ModelConfig field(s): {sorted(unknown)}")
        return cls(**d)

    def scaled(self, embed_dim: int) -> "ModelConfig":
        """Scale encoder widths proportionally with the embedding size."""
        f = embed_dim / self.embed_dim
        return dataclasses.replace(self, embed_dim=embed_dim,
                                   vision_width=int(round(self.vision_width * f)),
                                   text_width=int(round(self.text_width * f)))

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


class ResidualAttentionBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x, attn_mask=None):
        h = self.ln_1(x)
        x = x + self.attn(h, h, h, need_weights=False, attn_mask=attn_mask)[0]
        return x + self.mlp(self.ln_2(x))


class Transformer(nn.Module):
    def __init__(self, width: int, layers: int, heads: int):
        super().__init__()
        self.blocks = nn.ModuleList([ResidualAttentionBlock(width, heads) for _ in range(layers)])

    def forward(self, x, attn_mask=None):
        for block in self.blocks:
            x = block(x, attn_mask)
        return x


class VisionTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        w, p = cfg.vision_width, cfg.vision_patch_size
        self.conv1 = nn.Conv2d(3, w, kernel_size=p, stride=p, bias=False)
        n_patches = (cfg.input_resolution // p) ** 2
        scale = w ** -0.5
        self.class_embedding = nn.Parameter(scale * torch.randn(w))
        self.positional_embedding = nn.Parameter(scale * torch.randn(n_patches + 1, w))
        self.ln_pre = nn.LayerNorm(w)
        self.transformer = Transformer(w, cfg.vision_layers, cfg.vision_heads)
        self.ln_post = nn.LayerNorm(w)
        self.proj = nn.Parameter(scale * torch.randn(w, cfg.embed_dim))

    def forward(self, x):
        r = self.cfg.input_resolution
        if x.shape[-1] != r:
            off = (x.shape[-1] - r) // 2
            x = x[..., off:off + r, off:off + r]
        x = self.conv1(x).flatten(2).transpose(1, 2)
        cls = self.class_embedding.expand(x.shape[0], 1, -1)
        x = torch.cat([cls, x], dim=1) + self.positional_embedding
        x = self.transformer(self.ln_pre(x))
        return self.ln_post(x[:, 0]) @ self.proj


class TextTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.text_width
        self.token_embedding = nn.Embedding(cfg.vocab_size, w)
        self.positional_embedding = nn.Parameter(0.01 * torch.randn(cfg.context_length, w))
        self.transformer = Transformer(w, cfg.text_layers, cfg.text_heads)
        self.ln_final = nn.LayerNorm(w)
        self.text_projection = nn.Parameter(w ** -0.5 * torch.randn(w, cfg.embed_dim))
        causal = torch.full((cfg.context_length, cfg.context_length), float("-inf")).triu(1)
        self.register_buffer("causal_mask", causal, persistent=False)

    def forward(self, ids):
        n = ids.shape[1]
        x = self.token_embedding(ids) + self.positional_embedding[:n]
        # causal attention: nothing after <end> (padding) can reach the pooled token
        x = self.transformer(x, self.causal_mask[:n, :n])
        x = self.ln_final(x)
        end = (ids == VOCAB.end_id).int().argmax(dim=1)
        return x[torch.arange(ids.shape[0]), end] @ self.text_projection


class TinyCLIP(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        self.visual = VisionTransformer(cfg)
        self.text = TextTransformer(cfg)
        self.logit_scale = nn.Parameter(torch.tensor(math.log(1.0 / cfg.temperature_init)))
        self.register_buffer("pixel_mean", torch.tensor(0.5), persistent=False)

    def clamp_logit_scale(self):
        with torch.no_grad():
            self.logit_scale.clamp_(0.0, math.log(self.cfg.max_logit_scale))

    @property
    def temperature(self) -> float:
        return float(1.0 / self.logit_scale.detach().exp())

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """(B, H, W, 3) floats in [0, 1] -> unit vectors (B, embed_dim)."""
        r = self.cfg.image_resolution
        if images.ndim != 4 or tuple(images.shape[1:]) != (r, r, 3):
            raise ShapeMismatch(f"expected (B, {r}, {r}, 3) images, got {tuple(images.shape)}")
        x = (images.permute(0, 3, 1, 2) - self.pixel_mean) / 0.5
        return F.normalize(self.visual(x), dim=-1)

    def encode_text(self, ids: torch.Tensor) -> torch.Tensor:
        """(B, L) token ids, L <= context_length -> unit vectors (B, embed_dim)."""
        if ids.ndim != 2 or ids.shape[1] > self.cfg.context_length:
            raise ShapeMismatch(f"expected (B, <= {self.cfg.context_length}) ids, got {tuple(ids.shape)}")
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise IdOutOfRange(f"token ids must lie in [0, {self.cfg.vocab_size})")
        return F.normalize(self.text(ids), dim=-1)

    def forward(self, images, ids):
        return self.encode_image(images), self.encode_text(ids), self.logit_scale.exp()


def contrastive_loss(image_embeds: torch.Tensor, text_embeds: torch.Tensor,
                     logit_scale: torch.Tensor | float,
                     extra_text_embeds: torch.Tensor | None = None,
                     extra_image_embeds: torch.Tensor | None = None) -> torch.Tensor:
    """Symmetric InfoNCE over the batch.

    The first B rows of each side are matched pairs. Optional extra
    embeddings are negatives only: extra texts join every image's softmax
    over texts, extra images join every text's softmax over images.
    """
    b = image_embeds.shape[0]
    if b < 2 or text_embeds.shape[0] != b:
        raise BatchTooSmall(f"need equal batch sizes >= 2, got {b} images and {text_embeds.shape[0]} texts")
    texts = text_embeds if extra_text_embeds is None else torch.cat([text_embeds, extra_text_embeds])
    images = image_embeds if extra_image_embeds is None else torch.cat([image_embeds, extra_image_embeds])
    logits_per_image = logit_scale * image_embeds @ texts.T
    logits_per_text = logit_scale * text_embeds @ images.T
    labels = torch.arange(b, device=image_embeds.device)
    return 0.5 * (F.cross_entropy(logits_per_image, labels) + F.cross_entropy(logits_per_text, labels))


class ScoringModel:
    """Inference wrapper: numpy in, numpy out, raw cosine scores."""

    def __init__(self, model: TinyCLIP, batch_size: int = 256):
        self.model = model.eval()
        self.cfg = model.cfg
        self.batch_size = batch_size

    @torch.no_grad()
    def embed_image(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images)
        single = images.ndim == 3
        if single:
            images = images[None]
        if images.dtype == np.uint8:
            images = images.astype(np.float32) / 255.0
        out = [self.model.encode_image(torch.as_tensor(images[i:i + self.batch_size], dtype=torch.float32))
               for i in range(0, len(images), self.batch_size)]
        emb = torch.cat(out).numpy() if out else np.zeros((0, self.cfg.embed_dim), np.float32)
        return emb[0] if single else emb

    @torch.no_grad()
    def embed_text(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        single = ids.ndim == 1
        if single:
            ids = ids[None]
        out = [self.model.encode_text(torch.as_tensor(ids[i:i + 4 * self.batch_size], dtype=torch.long))
               for i in range(0, len(ids), 4 * self.batch_size)]
        emb = torch.cat(out).numpy() if out else np.zeros((0, self.cfg.embed_dim), np.float32)
        return emb[0] if single else emb

    def score(self, images: np.ndarray, captions) -> np.ndarray:
        """Cosine similarity of each image with each of its K candidate captions.

        ``captions`` has shape (N, K, L) as token ids, or is a nested list of
        token lists; returns (N, K).
        """
        ids = _as_ids(captions)
        n, k, length = ids.shape
        img = self.embed_image(images)
        txt = self.embed_text(ids.reshape(n * k, length)).reshape(n, k, -1)
        return np.einsum("nd,nkd->nk", img, txt)


def _as_ids(captions) -> np.ndarray:
    if isinstance(captions, np.ndarray):
        return captions
    return np.stack([np.stack([VOCAB.encode(c) for c in row]) for row in captions])


def num_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
