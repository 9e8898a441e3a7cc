"""Image/mask value conventions, masking arithmetic and dataset access.

Conventions used across the whole package:

* images are float tensors of shape ``N x 3 x H x W`` with values in
  ``[-1, 1]`` (the generator ends in tanh);
* masks are tensors of shape ``N x 1 x H x W`` with values in ``{0, 1}``
  where **1 marks a missing pixel**;
* mask PNGs on disk are single channel, 0 = known, 255 = missing.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import torch
from PIL import Image

log = logging.getLogger(__name__)

BUNDLED_PREFIX = "bundled:"

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class MaskedInput(NamedTuple):
    """An image with its occlusion applied: ``image`` is zero wherever ``mask`` is 1."""

    image: torch.Tensor
    mask: torch.Tensor


def validate_image_batch(images: torch.Tensor, name: str = "images") -> None:
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"{name}: expected shape N x 3 x H x W, got {tuple(images.shape)}")
    if not torch.isfinite(images).all():
        raise ValueError(f"{name}: contains non-finite values")
    if images.min() < -1.0 - 1e-6 or images.max() > 1.0 + 1e-6:
        raise ValueError(f"{name}: values must lie in [-1, 1]")


def validate_mask_batch(mask: torch.Tensor, name: str = "mask") -> None:
    if mask.ndim != 4 or mask.shape[1] != 1:
        raise ValueError(f"{name}: expected shape N x 1 x H x W, got {tuple(mask.shape)}")
    if not torch.logical_or(mask == 0, mask == 1).all():
        raise ValueError(f"{name}: values must be exactly 0 or 1")


def _check_spatial(images: torch.Tensor, mask: torch.Tensor) -> None:
    if images.shape[0] != mask.shape[0] or images.shape[2:] != mask.shape[2:]:
        raise ValueError(
            "image/mask shape mismatch: "
            f"{tuple(images.shape)} vs {tuple(mask.shape)} (N, H, W must agree)"
        )


def make_masked_input(image: torch.Tensor, mask: torch.Tensor) -> MaskedInput:
    """Zero out the missing pixels: returns ``image * (1 - mask)`` paired with the mask."""
    validate_mask_batch(mask)
    _check_spatial(image, mask)
    known = torch.where(mask.bool(), torch.zeros_like(image), image)
    return MaskedInput(image=known, mask=mask)


def composite(image: torch.Tensor, prediction: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Keep known pixels from ``image``, take hole pixels from ``prediction``.

    Known-region pixels are bit-identical to ``image`` (selection, not
    arithmetic blending).
    """
    validate_mask_batch(mask)
    _check_spatial(image, mask)
    if image.shape != prediction.shape:
        raise ValueError(
            f"image/prediction shape mismatch: {tuple(image.shape)} vs {tuple(prediction.shape)}"
        )
    return torch.where(mask.bool(), prediction, image)


def occlusion_ratio(mask: torch.Tensor) -> torch.Tensor:
    """Fraction of missing pixels per sample, shape ``(N,)``."""
    validate_mask_batch(mask)
    return mask.mean(dim=(1, 2, 3))


def composite_uint8(image_arr: np.ndarray, prediction: torch.Tensor, mask: torch.Tensor) -> np.ndarray:
    """Composite at the byte level: known pixels come verbatim from the uint8
    source array so encode/decode round-trips cannot perturb them.

    ``image_arr`` is ``H x W x 3`` uint8, ``prediction`` ``1 x 3 x H x W`` in
    [-1, 1], ``mask`` ``1 x 1 x H x W``.
    """
    if image_arr.dtype != np.uint8 or image_arr.ndim != 3:
        raise ValueError("image_arr must be H x W x 3 uint8")
    pred_arr = to_uint8(prediction)[0]
    hole = mask[0, 0].cpu().numpy() > 0.5
    out = image_arr.copy()
    out[hole] = pred_arr[hole]
    return out


# ---------------------------------------------------------------------------
# value range conversions
# ---------------------------------------------------------------------------

def normalize_uint8(arr: np.ndarray) -> torch.Tensor:
    """uint8 ``H x W x 3`` -> float32 ``3 x H x W`` in [-1, 1] (affine 2x/255 - 1)."""
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 input, got {arr.dtype}")
    t = torch.from_numpy(arr.astype(np.float32)).permute(2, 0, 1)
    return t * (2.0 / 255.0) - 1.0


def denormalize(images: torch.Tensor) -> torch.Tensor:
    """[-1, 1] -> [0, 1], clamped."""
    return ((images + 1.0) * 0.5).clamp(0.0, 1.0)


def to_uint8(images: torch.Tensor) -> np.ndarray:
    """[-1, 1] ``N x 3 x H x W`` -> uint8 ``N x H x W x 3`` with round-to-nearest."""
    x = denormalize(images) * 255.0
    return x.round().clamp(0, 255).to(torch.uint8).permute(0, 2, 3, 1).cpu().numpy()


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def load_image(path: str | Path, resolution: int | None = None) -> torch.Tensor:
    """Load one RGB image as a ``1 x 3 x H x W`` tensor in [-1, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        if resolution is not None and im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.uint8)
    return normalize_uint8(arr).unsqueeze(0)


def save_image_png(image: torch.Tensor, path: str | Path) -> None:
    """Save a single ``1 x 3 x H x W`` (or ``3 x H x W``) image in [-1, 1] as PNG."""
    if image.ndim == 3:
        image = image.unsqueeze(0)
    arr = to_uint8(image)[0]
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_mask_png(mask: torch.Tensor, path: str | Path) -> None:
    """Save a ``1 x 1 x H x W`` (or ``1 x H x W`` / ``H x W``) binary mask as a
    single-channel PNG where 255 = missing."""
    m = mask
    while m.ndim > 2:
        m = m.squeeze(0)
    arr = (m.cpu().numpy() > 0.5).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_mask_png(path: str | Path, resolution: int | None = None) -> torch.Tensor:
    """Load a mask PNG (any value > 127 counts as missing) as ``1 x 1 x H x W``."""
    with Image.open(path) as im:
        im = im.convert("L")
        if resolution is not None and im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.NEAREST)
        arr = np.asarray(im, dtype=np.uint8)
    m = torch.from_numpy((arr > 127).astype(np.float32))
    return m.unsqueeze(0).unsqueeze(0)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

def _bundled_dir(name: str) -> Path:
    base = Path(__file__).parent / "assets" / name
    if not base.is_dir():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return base


def resolve_dataset_root(root: str | Path) -> Path:
    """Resolve a dataset root, supporting the ``bundled:<name>`` scheme for
    datasets shipped inside the package (e.g. ``bundled:smoke``)."""
    if isinstance(root, str) and root.startswith(BUNDLED_PREFIX):
        return _bundled_dir(root[len(BUNDLED_PREFIX):])
    return Path(root)


class FolderDataset:
    """Images from a directory tree, yielded as normalized batches.

    Layout resolution order for a given ``split``:

    1. ``root/<split>/`` directory of image files,
    2. ``root/<split>.txt`` manifest of newline-delimited relative paths,
    3. ``root`` itself as a flat directory (small fixture sets).

    Files are kept in sorted order; validation iteration is deterministic,
    training order is shuffled per epoch by the caller via ``shuffle_seed``.
    """

    def __init__(self, root: str | Path, split: str = "train", resolution: int = 128):
        if split not in ("train", "val"):
            raise ValueError(f"split must be 'train' or 'val', got {split!r}")
        self.root = resolve_dataset_root(root)
        self.split = split
        self.resolution = int(resolution)
        self.paths = self._discover()
        if not self.paths:
            raise FileNotFoundError(f"no images found for split {split!r} under {self.root}")

    def _discover(self) -> list[Path]:
        split_dir = self.root / self.split
        manifest = self.root / f"{self.split}.txt"
        if split_dir.is_dir():
            files = [p for p in split_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS]
        elif manifest.is_file():
            rels = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
            files = [self.root / rel for rel in rels]
        elif self.root.is_dir():
            files = [p for p in self.root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS]
        else:
            raise FileNotFoundError(f"dataset root {self.root} does not exist")
        return sorted(files)

    def __len__(self) -> int:
        return len(self.paths)

    def image(self, index: int) -> torch.Tensor:
        return load_image(self.paths[index], self.resolution)

    def load_all(self) -> torch.Tensor:
        """Whole split as one batch; meant for small fixture sets."""
        return torch.cat([self.image(i) for i in range(len(self))], dim=0)

    def iter_batches(
        self,
        batch_size: int,
        shuffle_seed: int | None = None,
    ) -> Iterator[tuple[torch.Tensor, list[Path]]]:
        """Yield ``(images, paths)`` batches. Unreadable files are skipped with
        a warning; the final batch may be smaller."""
        order: Sequence[int] = range(len(self.paths))
        if shuffle_seed is not None:
            order = np.random.default_rng(shuffle_seed).permutation(len(self.paths)).tolist()
        chunk_imgs: list[torch.Tensor] = []
        chunk_paths: list[Path] = []
        for i in order:
            path = self.paths[i]
            try:
                img = load_image(path, self.resolution)
            except (OSError, ValueError) as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            chunk_imgs.append(img)
            chunk_paths.append(path)
            if len(chunk_imgs) == batch_size:
                yield torch.cat(chunk_imgs, dim=0), chunk_paths
                chunk_imgs, chunk_paths = [], []
        if chunk_imgs:
            yield torch.cat(chunk_imgs, dim=0), chunk_paths
