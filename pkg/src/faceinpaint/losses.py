"""Generator loss suite and the adversarial gradient penalty.

All masked losses are means over their active pixel set so the loss scale is
independent of mask size and resolution; each one is exactly zero for an
empty active set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import torch
import torch.nn.functional as F

from .critics import CriticScore
from .data import validate_mask_batch
from .semantic import is_one_hot

LOG_EPS = 1e-12


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN/Inf; carries the offending term's name."""

    def __init__(self, term: str, value: float):
        super().__init__(f"loss term {term!r} is non-finite ({value})")
        self.term = term


@dataclass(frozen=True)
class LossWeights:
    """Weights of the non-reconstruction terms (the reconstruction term always
    enters with weight 1). Defaults are the final stabilization-phase values."""

    w_sem: float = 0.01
    w_perc: float = 0.5
    w_ctx: float = 0.08
    w_adv: float = 0.5
    w_gp: float = 5.0
    perc_layer_weights: tuple[float, ...] = (1 / 32, 1 / 16, 1 / 8, 1 / 4)

    def __post_init__(self) -> None:
        for name in ("w_sem", "w_perc", "w_ctx", "w_adv", "w_gp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class LossReport:
    """Unweighted term values plus the weighted total."""

    rec: float
    sem: float
    perc: float
    ctx: float
    adv: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("rec", "sem", "perc", "ctx", "adv", "total")}


class FeatureExtractor(Protocol):
    """Multi-level feature pyramid used by the perceptual loss. Implementations
    own their input preprocessing; they receive images in [-1, 1]."""

    def features(self, images: torch.Tensor) -> Sequence[torch.Tensor]: ...


class IdentityExtractor:
    """Deterministic stand-in: every level is the image itself, so the
    perceptual loss degenerates to a weighted plain L1."""

    levels = 4

    def features(self, images: torch.Tensor) -> list[torch.Tensor]:
        return [images] * self.levels


class Vgg19Extractor:
    """relu1_2 / relu2_2 / relu3_4 / relu4_4 activations of a fixed VGG-19.

    Weights are loaded from a local file (no downloads); inputs in [-1, 1]
    are mapped to the network's native normalization internally.
    """

    SLICES = (4, 9, 18, 27)  # ends of relu1_2, relu2_2, relu3_4, relu4_4

    def __init__(self, weights_path: str):
        import torchvision

        vgg = torchvision.models.vgg19(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        vgg.load_state_dict(state)
        self.net = vgg.features.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        self.std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

    def features(self, images: torch.Tensor) -> list[torch.Tensor]:
        x = ((images + 1.0) * 0.5 - self.mean.to(images)) / self.std.to(images)
        out = []
        start = 0
        for end in self.SLICES:
            for layer in self.net[start:end]:
                x = layer(x)
            out.append(x)
            start = end
        return out


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------

def rec_loss(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over hole pixels only; 0 for an empty hole."""
    validate_mask_batch(mask)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    hole = mask.sum() * pred.shape[1]
    if hole == 0:
        return pred.sum() * 0.0
    return (mask * (pred - target)).abs().sum() / hole


def sem_loss(pred_sem: torch.Tensor, gt_sem: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over known pixels; 0 when everything is missing."""
    validate_mask_batch(mask)
    if pred_sem.shape != gt_sem.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_sem.shape)} vs {tuple(gt_sem.shape)}")
    if not is_one_hot(gt_sem):
        raise ValueError("gt_sem must be one-hot")
    known = (1.0 - mask)
    n_known = known.sum()
    if n_known == 0:
        return pred_sem.sum() * 0.0
    ce = -(gt_sem * pred_sem.clamp_min(LOG_EPS).log()).sum(dim=1, keepdim=True)
    return (ce * known).sum() / n_known


def perc_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    extractor: FeatureExtractor,
    layer_weights: Sequence[float] = LossWeights().perc_layer_weights,
) -> torch.Tensor:
    """Weighted L1 between feature pyramids, mean-reduced per level."""
    feats_p = extractor.features(pred)
    feats_t = extractor.features(target)
    if len(feats_p) != len(layer_weights):
        raise ValueError(f"extractor yields {len(feats_p)} levels, {len(layer_weights)} weights given")
    total = pred.sum() * 0.0
    for w, fp, ft in zip(layer_weights, feats_p, feats_t):
        total = total + w * (fp - ft).abs().mean()
    return total


def _forward_diff(img: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    # replicate padding makes the last row/column differences exactly zero
    padded_x = F.pad(img, (0, 1, 0, 0), mode="replicate")
    padded_y = F.pad(img, (0, 0, 0, 1), mode="replicate")
    dx = padded_x[..., :, 1:] - padded_x[..., :, :-1]
    dy = padded_y[..., 1:, :] - padded_y[..., :-1, :]
    return dx, dy


def ctx_loss(pred: torch.Tensor, target: torch.Tensor, bmask: torch.Tensor) -> torch.Tensor:
    """Mean L1 of forward-difference gradient mismatch inside the boundary
    band; 0 for an empty band."""
    validate_mask_batch(bmask)
    band = bmask.sum() * pred.shape[1] * 2
    if band == 0:
        return pred.sum() * 0.0
    dxp, dyp = _forward_diff(pred)
    dxt, dyt = _forward_diff(target)
    diff = (bmask * (dxp - dxt)).abs().sum() + (bmask * (dyp - dyt)).abs().sum()
    return diff / band


def gradient_penalty(
    critic: Callable[[torch.Tensor], torch.Tensor],
    real: torch.Tensor,
    fake: torch.Tensor,
    lambda_gp: float = 5.0,
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """``lambda_gp * E[(||grad_x D(x~)||_2 - 1)^2]`` on per-sample random
    interpolates ``x~ = eps*real + (1-eps)*fake`` with ``eps ~ U[0, 1]``."""
    if real.shape != fake.shape:
        raise ValueError(f"shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}")
    n = real.shape[0]
    eps = torch.rand((n, 1, 1, 1), generator=rng, dtype=real.dtype, device=real.device)
    interp = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic(interp)
    grads = torch.autograd.grad(
        outputs=scores.sum(), inputs=interp, create_graph=True
    )[0]
    norms = grads.reshape(n, -1).norm(2, dim=1)
    return lambda_gp * ((norms - 1.0) ** 2).mean()


def adv_g_loss(scores: CriticScore) -> torch.Tensor:
    """Negative mean of the three critic outputs (patch map averaged per
    sample first)."""
    patch = scores.patch_scores.mean(dim=(1, 2, 3))
    return -(scores.global_score + patch + scores.semantic_score).mean()


def total_g_loss(
    rec: torch.Tensor,
    sem: torch.Tensor,
    perc: torch.Tensor,
    ctx: torch.Tensor,
    adv: torch.Tensor,
    weights: LossWeights,
) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum; fails fast with the offending term named on any
    non-finite value."""
    terms = {"rec": rec, "sem": sem, "perc": perc, "ctx": ctx, "adv": adv}
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(name, float(value.detach()))
    total = (
        rec
        + weights.w_sem * sem
        + weights.w_perc * perc
        + weights.w_ctx * ctx
        + weights.w_adv * adv
    )
    if not torch.isfinite(total).all():
        raise NonFiniteLossError("total", float(total))
    report = LossReport(
        rec=float(rec.detach()), sem=float(sem.detach()), perc=float(perc.detach()),
        ctx=float(ctx.detach()), adv=float(adv.detach()), total=float(total.detach()),
    )
    return total, report
