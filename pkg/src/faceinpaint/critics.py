"""Wasserstein critics: global, patch-level and semantic-conditioned.

All convolutions carry spectral normalization and no critic ends in a
squashing nonlinearity. Smooth activations keep the critics differentiable
everywhere, which the gradient-checking suite relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
from torch.nn.utils import spectral_norm


@dataclass
class CriticScore:
    global_score: torch.Tensor    # (N,)
    patch_scores: torch.Tensor    # (N, 1, h', w')
    semantic_score: torch.Tensor  # (N,)


def sn_conv(in_ch: int, out_ch: int, kernel: int = 4, stride: int = 2, padding: int = 1):
    return spectral_norm(nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=padding))


class GlobalCritic(nn.Module):
    """Whole-image realism score."""

    def __init__(self, base: int = 64):
        super().__init__()
        self.features = nn.Sequential(
            sn_conv(3, base), nn.SiLU(),
            sn_conv(base, base * 2), nn.SiLU(),
            sn_conv(base * 2, base * 4), nn.SiLU(),
            sn_conv(base * 4, base * 8), nn.SiLU(),
        )
        self.head = spectral_norm(nn.Linear(base * 8, 1))

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        h = self.features(image)
        h = torch.nn.functional.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.head(h).squeeze(1)


class PatchCritic(nn.Module):
    """Spatial map of local realism scores (overlapping receptive fields)."""

    def __init__(self, base: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            sn_conv(3, base), nn.SiLU(),
            sn_conv(base, base * 2), nn.SiLU(),
            sn_conv(base * 2, base * 4), nn.SiLU(),
            sn_conv(base * 4, base * 8), nn.SiLU(),
            sn_conv(base * 8, 1, stride=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image)


class SemanticCritic(nn.Module):
    """Realism score conditioned on the class layout (image and layout are
    channel-concatenated at the input)."""

    def __init__(self, num_classes: int, base: int = 64):
        super().__init__()
        self.num_classes = num_classes
        self.features = nn.Sequential(
            sn_conv(3 + num_classes, base), nn.SiLU(),
            sn_conv(base, base * 2), nn.SiLU(),
            sn_conv(base * 2, base * 4), nn.SiLU(),
        )
        self.head = spectral_norm(nn.Linear(base * 4, 1))

    def forward(self, image: torch.Tensor, semantic: torch.Tensor) -> torch.Tensor:
        if semantic.shape[1] != self.num_classes:
            raise ValueError(
                f"semantic map has {semantic.shape[1]} classes, critic expects {self.num_classes}"
            )
        h = self.features(torch.cat([image, semantic], dim=1))
        h = torch.nn.functional.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.head(h).squeeze(1)


class CriticEnsemble(nn.Module):
    """The three critics bundled behind one scoring call."""

    def __init__(self, num_classes: int, base: int = 64):
        super().__init__()
        self.d_global = GlobalCritic(base)
        self.d_local = PatchCritic(base)
        self.d_semantic = SemanticCritic(num_classes, base)

    def forward(self, image: torch.Tensor, semantic: torch.Tensor) -> CriticScore:
        return CriticScore(
            global_score=self.d_global(image),
            patch_scores=self.d_local(image),
            semantic_score=self.d_semantic(image, semantic),
        )

    @torch.no_grad()
    def calibrate_spectral_norms(self, resolution: int, rounds: int = 100) -> None:
        """Run power-iteration updates so each stored singular-vector estimate
        converges before the norms are relied on. One forward pass in train
        mode advances every layer's estimate by one iteration."""
        was_training = self.training
        self.train()
        img = torch.zeros(1, 3, resolution, resolution)
        sem = torch.zeros(1, self.d_semantic.num_classes, resolution, resolution)
        for _ in range(rounds):
            self.forward(img, sem)
        self.train(was_training)


def spectral_norm_estimate(weight: torch.Tensor, iters: int = 200) -> float:
    """Independent power-iteration estimate of the largest singular value,
    using the same (out_channels, rest) matrix view spectral_norm normalizes."""
    mat = weight.detach().reshape(weight.shape[0], -1).double()
    v = torch.randn(mat.shape[1], dtype=torch.float64)
    v /= v.norm()
    for _ in range(iters):
        u = mat @ v
        u /= u.norm().clamp_min(1e-12)
        v = mat.t() @ u
        v /= v.norm().clamp_min(1e-12)
    return float(u @ (mat @ v))
