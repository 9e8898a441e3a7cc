"""Validation-set evaluation and the encoder/attention ablation harness.

FID features and perceptual pair distances come from pluggable extractors so
the harness runs offline with deterministic stubs; plugging real networks in
is a construction-time choice, absent extractors simply leave their column
out of the report.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Protocol

import numpy as np
import torch
import torch.nn.functional as F

from .data import FolderDataset
from .masks import MaskSpec, generate_mask
from .metrics import MetricReport, fid, l1_metric, psnr, ssim

ABLATION_CONFIGS: dict[str, dict] = {
    "hybrid+attn": {"mode": "hybrid", "attention": True},
    "hybrid only": {"mode": "hybrid", "attention": False},
    "CNN only": {"mode": "cnn_only", "attention": True},
    "ViT only": {"mode": "vit_only", "attention": True},
}


class FidFeatureExtractor(Protocol):
    def features(self, images: torch.Tensor) -> np.ndarray: ...


class PairedDistance(Protocol):
    def distance(self, a: torch.Tensor, b: torch.Tensor) -> np.ndarray: ...


def _projection(seed: int, in_dim: int, out_dim: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(in_dim, out_dim, generator=gen) / in_dim**0.5


class StubFidExtractor:
    """Deterministic offline stand-in: images pooled to an 8x8 grid and pushed
    through a fixed random projection with a tanh nonlinearity."""

    def __init__(self, dim: int = 16, seed: int = 1234):
        self.dim = dim
        self.proj = _projection(seed, 3 * 8 * 8, dim)

    def features(self, images: torch.Tensor) -> np.ndarray:
        pooled = F.adaptive_avg_pool2d(images, 8).flatten(1)
        return torch.tanh(pooled @ self.proj.to(images.dtype)).cpu().numpy()


class StubLpipsDistance:
    """Deterministic offline stand-in for a learned patch-similarity metric."""

    def __init__(self, dim: int = 32, seed: int = 4321):
        self.proj = _projection(seed, 3 * 16 * 16, dim)

    def distance(self, a: torch.Tensor, b: torch.Tensor) -> np.ndarray:
        pa = F.adaptive_avg_pool2d(a, 16).flatten(1) @ self.proj.to(a.dtype)
        pb = F.adaptive_avg_pool2d(b, 16).flatten(1) @ self.proj.to(b.dtype)
        return ((pa - pb) ** 2).mean(dim=1).cpu().numpy()


def evaluate(
    model,
    dataset: FolderDataset,
    mask_spec: MaskSpec = MaskSpec(),
    seed: int = 0,
    batch_size: int = 8,
    sigma: float = 0.0,
    fid_extractor: FidFeatureExtractor | None = None,
    lpips_distance: PairedDistance | None = None,
    max_samples: int | None = None,
) -> MetricReport:
    """Metrics of composites against ground truth over a whole split.

    Masks are drawn from ``seed`` per sample index, so repeated calls with
    the same checkpoint and seed reproduce the report exactly. ``model`` only
    needs an ``inpaint(image, mask, sigma, rng)`` method.
    """
    psnrs: list[float] = []
    ssims: list[float] = []
    l1s: list[float] = []
    lpips_vals: list[np.ndarray] = []
    real_feats: list[np.ndarray] = []
    fake_feats: list[np.ndarray] = []
    index = 0
    for images, _ in dataset.iter_batches(batch_size):
        if max_samples is not None and index >= max_samples:
            break
        if max_samples is not None and index + images.shape[0] > max_samples:
            images = images[: max_samples - index]
        h, w = images.shape[2:]
        masks = torch.cat(
            [
                generate_mask(replace(mask_spec, rng_seed=seed + index + i), h, w)
                for i in range(images.shape[0])
            ],
            dim=0,
        )
        rng = torch.Generator().manual_seed(seed + index)
        comp = model.inpaint(images, masks, sigma=sigma, rng=rng)
        for i in range(images.shape[0]):
            a, b = comp[i : i + 1], images[i : i + 1]
            psnrs.append(psnr(a, b))
            ssims.append(ssim(a, b))
            l1s.append(l1_metric(a, b))
        if lpips_distance is not None:
            lpips_vals.append(lpips_distance.distance(comp, images))
        if fid_extractor is not None:
            real_feats.append(fid_extractor.features(images))
            fake_feats.append(fid_extractor.features(comp))
        index += images.shape[0]
    if not psnrs:
        raise ValueError("no samples evaluated; dataset empty or max_samples = 0")
    return MetricReport(
        psnr=float(np.mean(psnrs)),
        ssim=float(np.mean(ssims)),
        l1=float(np.mean(l1s)),
        lpips=float(np.mean(np.concatenate(lpips_vals))) if lpips_vals else None,
        fid=float(fid(np.concatenate(real_feats), np.concatenate(fake_feats)))
        if real_feats
        else None,
        n_samples=len(psnrs),
    )


def run_ablation(
    build_model_fn,
    dataset: FolderDataset,
    seed: int = 0,
    mask_spec: MaskSpec = MaskSpec(),
    batch_size: int = 8,
    fid_extractor: FidFeatureExtractor | None = None,
    lpips_distance: PairedDistance | None = None,
    max_samples: int | None = None,
) -> dict[str, MetricReport]:
    """Evaluate the four encoder/attention variants end to end.

    ``build_model_fn(mode, attention)`` must return a ready model for one
    variant (fresh or checkpoint-loaded); rows come back in table order.
    """
    rows: dict[str, MetricReport] = {}
    for name, variant in ABLATION_CONFIGS.items():
        model = build_model_fn(variant["mode"], variant["attention"])
        rows[name] = evaluate(
            model,
            dataset,
            mask_spec=mask_spec,
            seed=seed,
            batch_size=batch_size,
            fid_extractor=fid_extractor,
            lpips_distance=lpips_distance,
            max_samples=max_samples,
        )
    return rows
