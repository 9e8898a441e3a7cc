"""Stage 2: texture synthesis guided by the semantic layout.

Multi-resolution contextual attention lets every feature location gather
content from known-region keys only; Gaussian noise injected at each decoder
layer makes the completion stochastic (sigma = 0 recovers a deterministic
path bit for bit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import validate_mask_batch
from .encoder import FeatureMap, conv3

SEM_PROJ_CHANNELS = 32


@dataclass(frozen=True)
class AttentionScales:
    """Downsample factors at which attention runs, plus the query/key width."""

    scales: tuple[int, ...] = (1, 2, 4)
    key_dim: int = 64

    def __post_init__(self) -> None:
        if not self.scales:
            raise ValueError("at least one attention scale is required")
        if list(self.scales) != sorted(set(self.scales)):
            raise ValueError(f"scales must be sorted ascending and unique, got {self.scales}")
        if self.key_dim < 1:
            raise ValueError("key_dim must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    """Decoder noise: ``sigma`` is the draw std-dev, per-layer strengths are
    learned parameters initialized at ``alpha_init``."""

    sigma: float = 0.1
    alpha_init: float = 0.01

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def downsample_mask(mask: torch.Tensor, factor: int) -> torch.Tensor:
    """Nearest/conservative mask downsampling: any missing pixel in a cell
    marks the whole cell missing."""
    validate_mask_batch(mask)
    if factor == 1:
        return mask
    return F.max_pool2d(mask, factor)


def inject_noise(
    feat: torch.Tensor,
    alpha: torch.Tensor,
    sigma: float,
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """``feat + alpha * eps`` with ``eps ~ N(0, sigma^2)``; sigma = 0 returns
    ``feat`` unchanged without consuming the generator."""
    if sigma == 0.0:
        return feat
    eps = torch.empty_like(feat).normal_(0.0, sigma, generator=rng)
    return feat + alpha * eps


class ScaleAttention(nn.Module):
    """Scaled dot-product attention over a feature grid with key-side masking.

    Every query attends over all positions, but logits of missing-region keys
    are removed before the softmax, so rows renormalize over known keys only.
    If a sample has no known key at all, a learned global context vector is
    returned for every query. ``literal_outer_product=True`` switches to the
    raw variant that multiplies the unmasked softmax by
    ``1 - m_q m_k^T`` without renormalizing (kept for comparison).
    """

    def __init__(self, channels: int, key_dim: int):
        super().__init__()
        self.key_dim = key_dim
        self.q_proj = nn.Conv2d(channels, key_dim, 1)
        self.k_proj = nn.Conv2d(channels, key_dim, 1)
        self.v_proj = nn.Conv2d(channels, channels, 1)
        self.global_value = nn.Parameter(torch.zeros(channels))

    def forward(
        self,
        feat: torch.Tensor,
        mask: torch.Tensor,
        kv_feat: torch.Tensor | None = None,
        literal_outer_product: bool = False,
        return_weights: bool = False,
    ):
        """``feat`` provides the queries, ``kv_feat`` (defaulting to ``feat``)
        the keys/values; ``mask`` is at feature resolution, 1 = missing."""
        if kv_feat is None:
            kv_feat = feat
        n, c, h, w = feat.shape
        if mask.shape[2:] != (h, w):
            raise ValueError(f"mask {tuple(mask.shape[2:])} does not match features {(h, w)}")
        q = self.q_proj(feat).flatten(2)          # N x dk x L
        k = self.k_proj(kv_feat).flatten(2)       # N x dk x L
        v = self.v_proj(kv_feat).flatten(2)       # N x C x L
        m = (mask.flatten(2).squeeze(1) > 0.5)    # N x L, True = missing
        logits = torch.einsum("bdi,bdj->bij", q, k) / math.sqrt(self.key_dim)

        if literal_outer_product:
            attn = torch.softmax(logits, dim=-1)
            keep = 1.0 - torch.einsum("bi,bj->bij", m.to(feat.dtype), m.to(feat.dtype))
            attn = attn * keep
        else:
            all_missing = m.all(dim=1)  # per-sample fallback flag
            masked_logits = logits.masked_fill(m[:, None, :], float("-inf"))
            if all_missing.any():
                # keep the softmax finite; these rows are overwritten below
                masked_logits = torch.where(
                    all_missing[:, None, None], torch.zeros_like(logits), masked_logits
                )
            attn = torch.softmax(masked_logits, dim=-1)

        out = torch.einsum("bij,bcj->bci", attn, v)
        if not literal_outer_product and all_missing.any():
            fallback = self.global_value.to(out.dtype)[None, :, None]
            out = torch.where(all_missing[:, None, None], fallback, out)
        out = out.reshape(n, c, h, w)
        if return_weights:
            return out, attn
        return out


def aggregate_scale_outputs(
    outputs: list[torch.Tensor], target_hw: tuple[int, int]
) -> torch.Tensor:
    """Upsample each per-scale attention output to the finest grid and sum."""
    if not outputs:
        raise ValueError("no per-scale outputs to aggregate")
    total = None
    for out in outputs:
        if out.shape[2:] != target_hw:
            out = F.interpolate(out, size=target_hw, mode="bilinear", align_corners=False)
        total = out if total is None else total + out
    return total


class MultiScaleAttention(nn.Module):
    """Runs masked attention at each configured downsample factor and sums the
    outputs after upsampling everything back to the finest grid."""

    def __init__(self, channels: int, scales: AttentionScales):
        super().__init__()
        self.scales = scales.scales
        self.heads = nn.ModuleList(
            ScaleAttention(channels, scales.key_dim) for _ in self.scales
        )

    def forward(
        self, feat: torch.Tensor, mask: torch.Tensor, literal_outer_product: bool = False
    ) -> torch.Tensor:
        h, w = feat.shape[2:]
        outputs = []
        for scale, head in zip(self.scales, self.heads):
            if h % scale or w % scale:
                raise ValueError(f"scale {scale} does not divide feature grid {h}x{w}")
            f_s = F.avg_pool2d(feat, scale) if scale > 1 else feat
            m_s = downsample_mask(mask, scale)
            outputs.append(head(f_s, m_s, literal_outer_product=literal_outer_product))
        return aggregate_scale_outputs(outputs, (h, w))


class NoisyUpBlock(nn.Module):
    """Noise injection, convolution, then x2 upsampling."""

    def __init__(self, in_ch: int, out_ch: int, alpha_init: float, upsample: bool = True):
        super().__init__()
        self.alpha = nn.Parameter(torch.tensor(float(alpha_init)))
        self.upsample = upsample
        self.conv1 = conv3(in_ch, out_ch)
        self.norm1 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.conv2 = conv3(out_ch, out_ch)
        self.norm2 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.act = nn.SiLU()

    def forward(
        self, x: torch.Tensor, sigma: float, rng: torch.Generator | None = None
    ) -> torch.Tensor:
        x = inject_noise(x, self.alpha, sigma, rng)
        x = self.act(self.norm1(self.conv1(x)))
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.act(self.norm2(self.conv2(x)))


class TextureGenerator(nn.Module):
    """G2: consumes the predicted layout, the fused encoder features and the
    mask; produces the inpainted image through tanh."""

    def __init__(
        self,
        num_classes: int,
        enc_channels: int,
        enc_scale: int,
        attention: AttentionScales | None = AttentionScales(),
        noise: NoiseConfig = NoiseConfig(),
        literal_outer_product: bool = False,
    ):
        super().__init__()
        if enc_scale < 1 or enc_scale & (enc_scale - 1):
            raise ValueError(f"encoder scale must be a power of two, got {enc_scale}")
        self.enc_scale = enc_scale
        self.noise = noise
        self.literal_outer_product = literal_outer_product
        self.sem_proj = nn.Conv2d(num_classes, SEM_PROJ_CHANNELS, 1)
        self.in_fuse = conv3(enc_channels + SEM_PROJ_CHANNELS + 1, enc_channels)
        self.attention = (
            MultiScaleAttention(enc_channels, attention) if attention is not None else None
        )
        num_up = int(math.log2(enc_scale))
        widths = [max(enc_channels // 2**i, 16) for i in range(1, num_up + 1)]
        blocks = []
        prev = enc_channels
        for width in widths:
            blocks.append(NoisyUpBlock(prev, width, noise.alpha_init))
            prev = width
        self.blocks = nn.ModuleList(blocks)
        self.head = conv3(prev, 3)

    def forward(
        self,
        semantic: torch.Tensor,
        enc: FeatureMap,
        mask: torch.Tensor,
        sigma: float | None = None,
        rng: torch.Generator | None = None,
    ) -> torch.Tensor:
        if enc.scale != self.enc_scale:
            raise ValueError(f"expected encoder scale {self.enc_scale}, got {enc.scale}")
        if sigma is None:
            sigma = self.noise.sigma
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        feat_hw = enc.data.shape[2:]
        sem_feat = F.interpolate(
            self.sem_proj(semantic), size=feat_hw, mode="bilinear", align_corners=False
        )
        mask_feat = downsample_mask(mask, self.enc_scale)
        x = self.in_fuse(torch.cat([enc.data, sem_feat, mask_feat.to(enc.data.dtype)], dim=1))
        if self.attention is not None:
            x = x + self.attention(x, mask_feat, self.literal_outer_product)
        for block in self.blocks:
            x = block(x, sigma, rng)
        return torch.tanh(self.head(x))
