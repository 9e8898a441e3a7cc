"""Image quality metrics: PSNR, SSIM, L1 and Frechet feature distance.

PSNR and SSIM are computed on the [0, 1] representation; the L1 metric stays
on the generator's native [-1, 1] scale so it agrees exactly with the
reconstruction loss evaluated over a full mask.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import denormalize

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    l1: float
    lpips: float | None
    fid: float | None
    n_samples: int

    COLUMNS = ("psnr", "ssim", "l1", "lpips", "fid")

    def row(self) -> list[str]:
        out = []
        for col in self.COLUMNS:
            value = getattr(self, col)
            out.append("-" if value is None else f"{value:.4f}")
        return out


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB over [0, 1] values, capped at 100 dB
    for (near-)identical inputs."""
    _check_same_shape(a, b)
    mse = float(((denormalize(a) - denormalize(b)) ** 2).double().mean())
    if mse <= 10 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    radius = window // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    # valid-window weighted moments; equals the standard implementation away
    # from image borders, which is exactly the region that one averages over
    kernel = torch.from_numpy(_gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA))[None, None]

    def filt(x: np.ndarray) -> torch.Tensor:
        return F.conv2d(torch.from_numpy(x)[None, None], kernel)

    ta, tb = a.astype(np.float64), b.astype(np.float64)
    mu_a = filt(ta)
    mu_b = filt(tb)
    var_a = filt(ta * ta) - mu_a * mu_a
    var_b = filt(tb * tb) - mu_b * mu_b
    cov = filt(ta * tb) - mu_a * mu_b
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5) on [0, 1] values,
    computed per channel and averaged."""
    _check_same_shape(a, b)
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise ValueError(
            f"image {tuple(a.shape[2:])} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    xa = denormalize(a).cpu().numpy()
    xb = denormalize(b).cpu().numpy()
    values = [
        _ssim_single(xa[n, c], xb[n, c])
        for n in range(a.shape[0])
        for c in range(a.shape[1])
    ]
    return float(np.mean(values))


def l1_metric(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean absolute difference on the [-1, 1] scale (matches the
    reconstruction loss under an all-ones mask)."""
    _check_same_shape(a, b)
    return float((a - b).abs().double().mean())


# ---------------------------------------------------------------------------
# Frechet distance between Gaussian feature fits
# ---------------------------------------------------------------------------

def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; tiny negative
    eigenvalues from roundoff are clipped."""
    sym = (mat + mat.T) * 0.5
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return (root + root.T) * 0.5


def _moments(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    cov = np.atleast_2d(cov)
    if not np.isfinite(cov).all():
        raise ValueError("non-finite covariance; check the feature extractor output")
    return mu, cov


def fid(real_features: np.ndarray | torch.Tensor, fake_features: np.ndarray | torch.Tensor) -> float:
    """||mu_r - mu_f||^2 + tr(S_r + S_f - 2 (S_r S_f)^(1/2)), with the product
    square root evaluated in its symmetric PSD form."""
    r = np.asarray(real_features, dtype=np.float64)
    f = np.asarray(fake_features, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    if f.ndim == 1:
        f = f[:, None]
    if r.shape[1] != f.shape[1]:
        raise ValueError(f"feature dims differ: {r.shape[1]} vs {f.shape[1]}")
    if min(r.shape[0], f.shape[0]) < r.shape[1]:
        warnings.warn(
            f"fewer samples ({min(r.shape[0], f.shape[0])}) than feature dims ({r.shape[1]}); "
            "covariance estimate will be rank-deficient",
            stacklevel=2,
        )
    mu_r, cov_r = _moments(r)
    mu_f, cov_f = _moments(f)
    root_f = _sqrtm_psd(cov_f)
    cross = _sqrtm_psd(root_f @ cov_r @ root_f)
    value = float(np.sum((mu_r - mu_f) ** 2) + np.trace(cov_r) + np.trace(cov_f) - 2.0 * np.trace(cross))
    return max(value, 0.0)
