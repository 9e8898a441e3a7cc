"""Semantic-guided two-stage GAN for face image inpainting.

Layout prediction from a hybrid CNN/ViT encoder feeds a texture generator
with multi-resolution masked contextual attention. Ships with the full
adversarial training loop, metrics harness, CLI and an HTTP inference
service.
"""

__version__ = "0.1.0"

from .data import MaskedInput, composite, make_masked_input
from .masks import MaskSpec, boundary_mask, generate_mask

__all__ = [
    "MaskedInput",
    "MaskSpec",
    "boundary_mask",
    "composite",
    "generate_mask",
    "make_masked_input",
]
