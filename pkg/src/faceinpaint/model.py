"""The full two-stage generator behind one object, plus builders shared by
the trainer, the CLI and the inference service."""

from __future__ import annotations

import torch
import torch.nn as nn

from .data import MaskedInput, composite, make_masked_input
from .encoder import EncoderConfig, FeatureMap
from .semantic import SemanticGenerator
from .texture import AttentionScales, NoiseConfig, TextureGenerator


class InpaintModel(nn.Module):
    def __init__(
        self,
        enc_cfg: EncoderConfig,
        num_classes: int,
        resolution: int,
        attention: AttentionScales | None = AttentionScales(),
        noise: NoiseConfig = NoiseConfig(),
        literal_outer_product: bool = False,
    ):
        super().__init__()
        self.resolution = resolution
        self.num_classes = num_classes
        self.stage1 = SemanticGenerator(enc_cfg, num_classes, resolution)
        self.stage2 = TextureGenerator(
            num_classes=num_classes,
            enc_channels=self.stage1.encoder.out_channels,
            enc_scale=self.stage1.encoder.out_scale,
            attention=attention,
            noise=noise,
            literal_outer_product=literal_outer_product,
        )

    def forward(
        self,
        masked: MaskedInput,
        sigma: float | None = None,
        rng: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, FeatureMap]:
        """Returns ``(semantic_map, predicted_image, encoder_features)``."""
        sem, enc = self.stage1(masked.image, masked.mask)
        pred = self.stage2(sem, enc, masked.mask, sigma=sigma, rng=rng)
        return sem, pred, enc

    @torch.no_grad()
    def inpaint(
        self,
        image: torch.Tensor,
        mask: torch.Tensor,
        sigma: float = 0.0,
        rng: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Composite completion of ``image`` under ``mask``: known pixels are
        passed through untouched."""
        was_training = self.training
        self.eval()
        try:
            masked = make_masked_input(image, mask)
            _, pred, _ = self.forward(masked, sigma=sigma, rng=rng)
            return composite(image, pred, mask)
        finally:
            self.train(was_training)
