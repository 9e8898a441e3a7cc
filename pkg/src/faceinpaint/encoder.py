"""Dual-branch perceptual encoder: CNN texture priors fused with ViT context.

Both branches consume the 4-channel concatenation of the masked image and
its mask. The CNN branch downsamples through stride-2 residual blocks, the
ViT branch runs patch tokens through transformer layers; branch outputs are
brought to a common grid and fused by a 1x1 convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

ENCODER_MODES = ("cnn_only", "vit_only", "hybrid")

IN_CHANNELS = 4  # RGB + mask


class FeatureMap(NamedTuple):
    """A feature grid plus its downsample factor relative to the input image."""

    data: torch.Tensor
    scale: int


@dataclass
class EncoderConfig:
    """Encoder hyperparameters. Defaults are the small test-scale profile;
    the full-scale profile (6 layers, 8 heads, dim 768) ships in the run
    config defaults."""

    base_channels: int = 64
    num_residual_blocks: int = 3
    vit_layers: int = 2
    vit_heads: int = 4
    vit_dim: int = 128
    patch_size: int = 8
    mode: str = "hybrid"
    fused_channels: int | None = None  # defaults to the CNN output width

    def __post_init__(self) -> None:
        if self.mode not in ENCODER_MODES:
            raise ValueError(f"mode must be one of {ENCODER_MODES}, got {self.mode!r}")
        if self.vit_dim % self.vit_heads != 0:
            raise ValueError(f"vit_dim {self.vit_dim} not divisible by vit_heads {self.vit_heads}")

    @property
    def cnn_out_channels(self) -> int:
        return self.base_channels * 2 ** (self.num_residual_blocks - 1)

    @property
    def out_channels(self) -> int:
        return self.fused_channels if self.fused_channels else self.cnn_out_channels

    @property
    def out_scale(self) -> int:
        return 2**self.num_residual_blocks

    def check_resolution(self, resolution: int) -> None:
        if resolution % self.out_scale != 0:
            raise ValueError(
                f"resolution {resolution} not divisible by downsample factor {self.out_scale}"
            )
        if resolution % self.patch_size != 0:
            raise ValueError(
                f"resolution {resolution} not divisible by patch size {self.patch_size}"
            )


def conv3(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)


class ResidualDown(nn.Module):
    """Stride-2 residual block; 1x1 strided projection on the skip path."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = conv3(in_ch, out_ch, stride=2)
        self.norm1 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.conv2 = conv3(out_ch, out_ch)
        self.norm2 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.skip = nn.Conv2d(in_ch, out_ch, 1, stride=2)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.skip(x))


class CnnBranch(nn.Module):
    """Local texture encoder: stem + stride-2 residual blocks (widths double)."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        widths = [cfg.base_channels * 2**i for i in range(cfg.num_residual_blocks)]
        self.stem = nn.Sequential(conv3(IN_CHANNELS, widths[0]), nn.SiLU())
        blocks = []
        prev = widths[0]
        for width in widths:
            blocks.append(ResidualDown(prev, width))
            prev = width
        self.blocks = nn.Sequential(*blocks)
        self.out_channels = prev

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(self.stem(x))


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim),
        )

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        h = self.norm1(tokens)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        tokens = tokens + attn_out
        return tokens + self.mlp(self.norm2(tokens))


class VitBranch(nn.Module):
    """Long-range context encoder: patch embedding + learned positional
    embeddings + transformer layers, reshaped back to a grid."""

    def __init__(self, cfg: EncoderConfig, resolution: int):
        super().__init__()
        self.patch_size = cfg.patch_size
        self.grid = resolution // cfg.patch_size
        self.patch_embed = nn.Conv2d(IN_CHANNELS, cfg.vit_dim, cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.empty(1, self.grid * self.grid, cfg.vit_dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.layers = nn.ModuleList(
            TransformerBlock(cfg.vit_dim, cfg.vit_heads) for _ in range(cfg.vit_layers)
        )
        self.norm = nn.LayerNorm(cfg.vit_dim)
        self.out_channels = cfg.vit_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, _, h, w = x.shape
        if h % self.patch_size or w % self.patch_size:
            raise ValueError(f"input {h}x{w} not divisible by patch size {self.patch_size}")
        gh, gw = h // self.patch_size, w // self.patch_size
        if gh * gw != self.pos_embed.shape[1]:
            raise ValueError(
                f"patch grid {gh}x{gw} does not match the {int(math.sqrt(self.pos_embed.shape[1]))}^2 "
                "grid this branch was built for"
            )
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)  # N x (gh*gw) x dim
        tokens = tokens + self.pos_embed
        for layer in self.layers:
            tokens = layer(tokens)
        tokens = self.norm(tokens)
        return tokens.transpose(1, 2).reshape(n, self.out_channels, gh, gw)


class HybridEncoder(nn.Module):
    """Fused encoder; ablation modes build (and evaluate) only the branches
    they need, the 1x1 fusion projection is shared in spirit across modes."""

    def __init__(self, cfg: EncoderConfig, resolution: int):
        super().__init__()
        cfg.check_resolution(resolution)
        self.cfg = cfg
        self.resolution = resolution
        self.out_scale = cfg.out_scale
        self.out_channels = cfg.out_channels
        self.cnn = CnnBranch(cfg) if cfg.mode in ("cnn_only", "hybrid") else None
        self.vit = VitBranch(cfg, resolution) if cfg.mode in ("vit_only", "hybrid") else None
        in_ch = 0
        if self.cnn is not None:
            in_ch += self.cnn.out_channels
        if self.vit is not None:
            in_ch += self.vit.out_channels
        self.fuse = nn.Conv2d(in_ch, self.out_channels, 1)

    def forward(self, masked_image: torch.Tensor, mask: torch.Tensor) -> FeatureMap:
        x = torch.cat([masked_image, mask], dim=1)
        h, w = x.shape[2], x.shape[3]
        target = (h // self.out_scale, w // self.out_scale)
        parts = []
        if self.cnn is not None:
            parts.append(self.cnn(x))
        if self.vit is not None:
            grid = self.vit(x)
            if grid.shape[2:] != target:
                grid = F.interpolate(grid, size=target, mode="bilinear", align_corners=False)
            parts.append(grid)
        fused = self.fuse(torch.cat(parts, dim=1) if len(parts) > 1 else parts[0])
        if not torch.isfinite(fused).all():
            raise RuntimeError("encoder produced non-finite features")
        return FeatureMap(data=fused, scale=self.out_scale)
