"""Stage 1: decode encoder features into a per-pixel class layout, plus the
pseudo ground-truth label providers used by the semantic consistency loss."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

from .encoder import EncoderConfig, FeatureMap, HybridEncoder, conv3

LABEL_PROVIDERS = ("none", "external_parser", "color_cluster_fallback")


def validate_semantic_map(sem: torch.Tensor, num_classes: int | None = None) -> None:
    if sem.ndim != 4:
        raise ValueError(f"semantic map must be N x K x H x W, got {tuple(sem.shape)}")
    if num_classes is not None and sem.shape[1] != num_classes:
        raise ValueError(f"expected {num_classes} classes, got {sem.shape[1]}")
    sums = sem.sum(dim=1)
    if (sem < -1e-6).any() or (sums - 1.0).abs().max() > 1e-5:
        raise ValueError("semantic map must be nonnegative and sum to 1 over classes")


def is_one_hot(sem: torch.Tensor) -> bool:
    binary = torch.logical_or(sem == 0, sem == 1).all()
    return bool(binary and (sem.sum(dim=1) == 1).all())


class SkipPyramid(nn.Module):
    """Shallow full/half/quarter-resolution features from the raw 4-channel
    input. Kept separate from the encoder branches so single-branch ablation
    modes stay independent of the removed branch's parameters."""

    CHANNELS = (32, 48, 64)

    def __init__(self):
        super().__init__()
        c0, c1, c2 = self.CHANNELS
        self.s0 = nn.Sequential(conv3(4, c0), nn.SiLU())
        self.s1 = nn.Sequential(conv3(c0, c1, stride=2), nn.SiLU())
        self.s2 = nn.Sequential(conv3(c1, c2, stride=2), nn.SiLU())

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        f0 = self.s0(x)
        f1 = self.s1(f0)
        f2 = self.s2(f1)
        return f0, f1, f2


class UpBlock(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int, upsample: bool = True):
        super().__init__()
        self.upsample = upsample
        self.conv1 = conv3(in_ch + skip_ch, out_ch)
        self.norm1 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.conv2 = conv3(out_ch, out_ch)
        self.norm2 = nn.InstanceNorm2d(out_ch, affine=True, track_running_stats=False)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, skip: torch.Tensor | None = None) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        x = self.act(self.norm1(self.conv1(x)))
        return self.act(self.norm2(self.conv2(x)))


class SemanticGenerator(nn.Module):
    """G1: hybrid encoder + four decoder blocks with skip connections,
    ending in a softmax over the class axis at full input resolution."""

    def __init__(self, enc_cfg: EncoderConfig, num_classes: int, resolution: int):
        super().__init__()
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        self.num_classes = num_classes
        self.encoder = HybridEncoder(enc_cfg, resolution)
        self.skips = SkipPyramid()
        c = self.encoder.out_channels
        s0, s1, s2 = SkipPyramid.CHANNELS
        widths = [max(c // 2, 16), max(c // 4, 16), max(c // 8, 16)]
        self.up1 = UpBlock(c, s2, widths[0])
        self.up2 = UpBlock(widths[0], s1, widths[1])
        self.up3 = UpBlock(widths[1], s0, widths[2])
        self.refine = UpBlock(widths[2], 0, widths[2], upsample=False)
        self.head = nn.Conv2d(widths[2], num_classes, 1)

    def forward(
        self, masked_image: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, FeatureMap]:
        enc = self.encoder(masked_image, mask)
        f0, f1, f2 = self.skips(torch.cat([masked_image, mask], dim=1))
        x = enc.data
        x = self.up1(x, f2)
        x = self.up2(x, f1)
        x = self.up3(x, f0)
        x = self.refine(x)
        sem = torch.softmax(self.head(x), dim=1)
        return sem, enc


# ---------------------------------------------------------------------------
# pseudo ground-truth label providers
# ---------------------------------------------------------------------------

class LabelProvider(Protocol):
    num_classes: int

    def labels(
        self, images: torch.Tensor, paths: Sequence[Path] | None = None
    ) -> torch.Tensor: ...


def _one_hot_from_indices(idx: np.ndarray, num_classes: int) -> torch.Tensor:
    if idx.min() < 0 or idx.max() >= num_classes:
        raise ValueError(
            f"label indices must lie in [0, {num_classes}), got [{idx.min()}, {idx.max()}]"
        )
    t = torch.from_numpy(idx.astype(np.int64))
    return F.one_hot(t, num_classes).permute(0, 3, 1, 2).float()


class ColorClusterProvider:
    """Pixel k-means over each image's colors; a stand-in parser for synthetic
    fixtures, not a face parser. Clusters are ordered by centroid so the class
    assignment is stable, and results are cached per image content."""

    def __init__(self, num_classes: int, seed: int = 0):
        self.num_classes = num_classes
        self.seed = seed
        self._cache: dict[bytes, np.ndarray] = {}

    def _labels_one(self, image: torch.Tensor) -> np.ndarray:
        from sklearn.cluster import KMeans

        key = hashlib.sha1(image.numpy().tobytes()).digest()
        if key not in self._cache:
            _, h, w = image.shape
            pixels = image.permute(1, 2, 0).reshape(-1, 3).numpy().astype(np.float64)
            km = KMeans(n_clusters=self.num_classes, n_init=4, random_state=self.seed)
            raw = km.fit_predict(pixels)
            order = np.lexsort(km.cluster_centers_.T[::-1])  # sort centroids lexicographically
            remap = np.empty(self.num_classes, dtype=np.int64)
            remap[order] = np.arange(self.num_classes)
            self._cache[key] = remap[raw].reshape(h, w)
        return self._cache[key]

    def labels(
        self, images: torch.Tensor, paths: Sequence[Path] | None = None
    ) -> torch.Tensor:
        idx = np.stack([self._labels_one(images[i].detach().cpu()) for i in range(images.shape[0])])
        return _one_hot_from_indices(idx, self.num_classes)


class ExternalParserProvider:
    """Precomputed label PNGs: single channel, pixel value = class index, one
    file per image (same stem, ``.png``) under ``labels_dir``."""

    def __init__(self, labels_dir: str | Path, num_classes: int):
        self.labels_dir = Path(labels_dir)
        self.num_classes = num_classes
        if not self.labels_dir.is_dir():
            raise FileNotFoundError(f"labels directory {self.labels_dir} does not exist")

    def labels(
        self, images: torch.Tensor, paths: Sequence[Path] | None = None
    ) -> torch.Tensor:
        if paths is None:
            raise ValueError("external parser labels require the source image paths")
        h, w = images.shape[2], images.shape[3]
        maps = []
        for p in paths:
            label_path = self.labels_dir / (Path(p).stem + ".png")
            if not label_path.is_file():
                raise FileNotFoundError(f"no label map for {p} at {label_path}")
            with Image.open(label_path) as im:
                arr = np.asarray(im.convert("L"), dtype=np.int64)
            if arr.shape != (h, w):
                raise ValueError(f"label map {label_path} is {arr.shape}, images are {(h, w)}")
            maps.append(arr)
        return _one_hot_from_indices(np.stack(maps), self.num_classes)


def make_label_provider(
    name: str, num_classes: int, labels_dir: str | Path | None = None, seed: int = 0
) -> LabelProvider | None:
    """Build a provider by name; ``none`` returns None (the semantic loss is
    then disabled by forcing its weight to zero)."""
    if name not in LABEL_PROVIDERS:
        raise ValueError(f"label provider must be one of {LABEL_PROVIDERS}, got {name!r}")
    if name == "none":
        return None
    if name == "color_cluster_fallback":
        return ColorClusterProvider(num_classes, seed)
    if not labels_dir:
        raise ValueError("external_parser provider requires labels_dir")
    return ExternalParserProvider(labels_dir, num_classes)


def pseudo_semantic_labels(
    images: torch.Tensor,
    provider: LabelProvider,
    paths: Sequence[Path] | None = None,
) -> torch.Tensor:
    """One-hot S_gt for a batch of ground-truth images."""
    sem = provider.labels(images, paths)
    if not is_one_hot(sem):
        raise RuntimeError("label provider returned a non one-hot map")
    return sem
