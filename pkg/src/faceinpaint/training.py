"""Adversarial training loop: alternating generator/critic updates with
gradient clipping, deterministic data/mask streams, CSV metric logging and
checkpointing through the versioned container."""

from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import torch
from torch.nn.utils import clip_grad_norm_

from . import metrics as metrics_mod
from .checkpoint import load_container, save_container
from .critics import CriticEnsemble
from .data import FolderDataset, composite, make_masked_input
from .losses import (
    FeatureExtractor,
    IdentityExtractor,
    LossReport,
    adv_g_loss,
    ctx_loss,
    gradient_penalty,
    perc_loss,
    rec_loss,
    sem_loss,
    total_g_loss,
)
from .masks import MaskSpec, boundary_mask, default_boundary_radius, generate_mask
from .model import InpaintModel
from .schedule import PhaseSchedule
from .semantic import LabelProvider, pseudo_semantic_labels

log = logging.getLogger(__name__)

MASK_MODES = ("random", "fixed_per_image")

STEP_CSV_FIELDS = (
    "step", "epoch", "batch", "rec", "sem", "perc", "ctx", "adv", "total",
    "g_grad_norm", "d_loss", "gp",
)
VAL_CSV_FIELDS = ("epoch", "psnr", "ssim", "l1")


@dataclass
class TrainConfig:
    batch_size: int = 16
    g_lr: float = 1e-5
    d_lr: float = 5e-6
    betas: tuple[float, float] = (0.5, 0.999)
    clip_norm: float = 0.5
    epochs: int = 250
    resolution: int = 128
    seed: int = 0
    mixed_precision: bool = False
    sigma_train: float = 0.1
    val_every: int = 1
    checkpoint_every: int = 5
    mask_mode: str = "random"
    mask_spec: MaskSpec = MaskSpec()

    def __post_init__(self) -> None:
        if self.g_lr <= 0 or self.d_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")


@dataclass
class TrainStepLog:
    report: LossReport
    g_grad_norm: float
    d_loss: float | None
    gp: float | None


@dataclass
class TrainState:
    """Lightweight progress summary; the tensors live in the trainer's modules."""

    epoch: int
    global_step: int
    best_val_psnr: float | None


def _grad_global_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().double().pow(2).sum())
    return total**0.5


def _stable_name_seed(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Trainer:
    """Owns the generator stages, the critics and their optimizers.

    One optimizer drives both generator stages jointly; each critic has its
    own. The critics step only on due batches, the generator on every batch.
    """

    def __init__(
        self,
        model: InpaintModel,
        critics: CriticEnsemble,
        cfg: TrainConfig,
        schedule: PhaseSchedule,
        label_provider: LabelProvider | None = None,
        extractor: FeatureExtractor | None = None,
        boundary_radius: int | None = None,
        run_config: dict | None = None,
    ):
        self.model = model
        self.critics = critics
        self.cfg = cfg
        self.schedule = schedule
        self.run_config = run_config
        self.label_provider = label_provider
        self.extractor = extractor if extractor is not None else IdentityExtractor()
        self.boundary_radius = (
            boundary_radius if boundary_radius is not None
            else default_boundary_radius(cfg.resolution)
        )
        self.opt_g = torch.optim.Adam(model.parameters(), lr=cfg.g_lr, betas=cfg.betas)
        self.opt_d = {
            name: torch.optim.Adam(module.parameters(), lr=cfg.d_lr, betas=cfg.betas)
            for name, module in (
                ("global", critics.d_global),
                ("local", critics.d_local),
                ("semantic", critics.d_semantic),
            )
        }
        self.rng = torch.Generator().manual_seed(cfg.seed)
        self.epoch = 0
        self.global_step = 0
        self.best_val_psnr: float | None = None
        self._val_masks: torch.Tensor | None = None

    # ------------------------------------------------------------------
    # single step
    # ------------------------------------------------------------------

    def train_step(
        self,
        images: torch.Tensor,
        masks: torch.Tensor,
        epoch: int,
        batch_idx: int,
        paths: Sequence[Path] | None = None,
    ) -> TrainStepLog:
        self.model.train()
        self.critics.train()
        weights = self.schedule.weights_at(epoch)

        sem_gt = None
        if self.label_provider is not None:
            sem_gt = pseudo_semantic_labels(images, self.label_provider, paths)
        else:
            weights = replace(weights, w_sem=0.0)

        with torch.autocast("cpu", enabled=self.cfg.mixed_precision):
            masked = make_masked_input(images, masks)
            sem_pred, enc = self.model.stage1(masked.image, masked.mask)
            pred = self.model.stage2(
                sem_pred, enc, masks, sigma=self.cfg.sigma_train, rng=self.rng
            )
            comp = composite(images, pred, masks)

            scores = self.critics(comp, sem_pred)
            l_rec = rec_loss(pred, images, masks)
            l_sem = (
                sem_loss(sem_pred, sem_gt, masks) if sem_gt is not None
                else pred.sum() * 0.0
            )
            l_perc = perc_loss(pred, images, self.extractor, weights.perc_layer_weights)
            l_ctx = ctx_loss(pred, images, boundary_mask(masks, self.boundary_radius))
            l_adv = adv_g_loss(scores)
            total, report = total_g_loss(l_rec, l_sem, l_perc, l_ctx, l_adv, weights)

        self.opt_g.zero_grad(set_to_none=True)
        self.critics.requires_grad_(False)
        total.backward()
        self.critics.requires_grad_(True)
        clip_grad_norm_(self.model.parameters(), self.cfg.clip_norm)
        g_grad_norm = _grad_global_norm(self.model.parameters())
        self.opt_g.step()

        d_loss = gp_total = None
        if self.schedule.critic_update_due(epoch, batch_idx):
            sem_cond = sem_gt if sem_gt is not None else sem_pred.detach()
            d_loss, gp_total = self._critic_step(
                images, comp.detach(), sem_cond, sem_pred.detach(), weights.w_gp
            )
        return TrainStepLog(report=report, g_grad_norm=g_grad_norm, d_loss=d_loss, gp=gp_total)

    def _critic_step(
        self,
        real: torch.Tensor,
        fake: torch.Tensor,
        sem_real: torch.Tensor,
        sem_fake: torch.Tensor,
        w_gp: float,
    ) -> tuple[float, float]:
        for opt in self.opt_d.values():
            opt.zero_grad(set_to_none=True)

        d_g = self.critics.d_global
        d_l = self.critics.d_local
        d_s = self.critics.d_semantic
        wass = (
            d_g(fake).mean() - d_g(real).mean()
            + d_l(fake).mean() - d_l(real).mean()
            + d_s(fake, sem_fake).mean() - d_s(real, sem_real).mean()
        )
        gp = (
            gradient_penalty(d_g, real, fake, w_gp, self.rng)
            + gradient_penalty(d_l, real, fake, w_gp, self.rng)
            + gradient_penalty(lambda x: d_s(x, sem_fake), real, fake, w_gp, self.rng)
        )
        loss = wass + gp
        loss.backward()
        for opt in self.opt_d.values():
            opt.step()
        return float(loss.detach()), float(gp.detach())

    # ------------------------------------------------------------------
    # epoch loop
    # ------------------------------------------------------------------

    def _mask_for_image(self, path: Path | None, epoch: int, batch_idx: int, i: int,
                        height: int, width: int) -> torch.Tensor:
        base = self.cfg.mask_spec
        if self.cfg.mask_mode == "fixed_per_image" and path is not None:
            seed = (base.rng_seed + _stable_name_seed(Path(path).name)) & 0x7FFFFFFF
        else:
            seed = (base.rng_seed + 1_000_003 * epoch + 1009 * batch_idx + i) & 0x7FFFFFFF
        return generate_mask(replace(base, rng_seed=seed), height, width)

    def masks_for_batch(
        self, images: torch.Tensor, epoch: int, batch_idx: int,
        paths: Sequence[Path] | None = None,
    ) -> torch.Tensor:
        n, _, h, w = images.shape
        return torch.cat(
            [
                self._mask_for_image(
                    paths[i] if paths is not None else None, epoch, batch_idx, i, h, w
                )
                for i in range(n)
            ],
            dim=0,
        )

    def fit(
        self,
        train_ds: FolderDataset,
        val_ds: FolderDataset | None = None,
        out_dir: str | Path | None = None,
    ) -> TrainState:
        out = Path(out_dir) if out_dir is not None else None
        step_writer = val_writer = None
        step_fh = val_fh = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

            def _csv_writer(path, fields):
                append = self.global_step > 0 and path.exists() and path.stat().st_size > 0
                fh = open(path, "a" if append else "w", newline="")
                writer = csv.DictWriter(fh, fieldnames=fields)
                if not append:
                    writer.writeheader()
                return fh, writer

            step_fh, step_writer = _csv_writer(out / "metrics.csv", STEP_CSV_FIELDS)
            val_fh, val_writer = _csv_writer(out / "val_metrics.csv", VAL_CSV_FIELDS)
        try:
            for epoch in range(self.epoch + 1, self.cfg.epochs + 1):
                shuffle_seed = (self.cfg.seed * 1_000_003 + epoch) & 0xFFFFFFFF
                for batch_idx, (images, paths) in enumerate(
                    train_ds.iter_batches(self.cfg.batch_size, shuffle_seed=shuffle_seed)
                ):
                    masks = self.masks_for_batch(images, epoch, batch_idx, paths)
                    step_log = self.train_step(images, masks, epoch, batch_idx, paths)
                    self.global_step += 1
                    if step_writer is not None:
                        row = {"step": self.global_step, "epoch": epoch, "batch": batch_idx,
                               "g_grad_norm": step_log.g_grad_norm,
                               "d_loss": step_log.d_loss, "gp": step_log.gp}
                        row.update(step_log.report.as_dict())
                        step_writer.writerow(row)
                self.epoch = epoch
                if step_fh is not None:
                    step_fh.flush()
                if val_ds is not None and epoch % self.cfg.val_every == 0:
                    val = self.validate(val_ds)
                    if val_writer is not None:
                        val_writer.writerow({"epoch": epoch, **val})
                        val_fh.flush()
                    if self.best_val_psnr is None or val["psnr"] > self.best_val_psnr:
                        self.best_val_psnr = val["psnr"]
                        if out is not None:
                            self.save(out / "best.ckpt")
                if out is not None and epoch % self.cfg.checkpoint_every == 0:
                    self.save(out / "latest.ckpt")
            if out is not None:
                self.save(out / "latest.ckpt")
                from .report import render_loss_curves

                if (out / "metrics.csv").stat().st_size > 0:
                    render_loss_curves(out / "metrics.csv", out / "loss_curves.png")
        finally:
            for fh in (step_fh, val_fh):
                if fh is not None:
                    fh.close()
        return TrainState(self.epoch, self.global_step, self.best_val_psnr)

    @torch.no_grad()
    def validate(self, val_ds: FolderDataset) -> dict[str, float]:
        """PSNR/SSIM/L1 of composites on the validation split, against masks
        frozen once per run so epochs stay comparable."""
        if self._val_masks is None:
            sample = val_ds.image(0)
            h, w = sample.shape[2:]
            spec = self.cfg.mask_spec
            self._val_masks = torch.cat(
                [
                    generate_mask(replace(spec, rng_seed=(self.cfg.seed * 7919 + i)), h, w)
                    for i in range(len(val_ds))
                ],
                dim=0,
            )
        psnrs, ssims, l1s = [], [], []
        idx = 0
        for images, _ in val_ds.iter_batches(self.cfg.batch_size):
            masks = self._val_masks[idx : idx + images.shape[0]]
            idx += images.shape[0]
            comp = self.model.inpaint(images, masks, sigma=0.0)
            for i in range(images.shape[0]):
                a, b = comp[i : i + 1], images[i : i + 1]
                psnrs.append(metrics_mod.psnr(a, b))
                ssims.append(metrics_mod.ssim(a, b))
                l1s.append(metrics_mod.l1_metric(a, b))
        return {
            "psnr": sum(psnrs) / len(psnrs),
            "ssim": sum(ssims) / len(ssims),
            "l1": sum(l1s) / len(l1s),
        }

    # ------------------------------------------------------------------
    # checkpointing
    # ------------------------------------------------------------------

    def state_tree(self) -> dict:
        cfg = asdict(self.cfg)
        cfg["betas"] = list(self.cfg.betas)
        cfg["mask_spec"] = asdict(self.cfg.mask_spec)
        return {
            "kind": "train",
            "config": cfg,
            "run_config": self.run_config,
            "epoch": self.epoch,
            "global_step": self.global_step,
            "best_val_psnr": self.best_val_psnr,
            "model": dict(self.model.state_dict()),
            "critics": dict(self.critics.state_dict()),
            "opt_g": _optimizer_tree(self.opt_g),
            "opt_d": {k: _optimizer_tree(v) for k, v in self.opt_d.items()},
            "rng": self.rng.get_state(),
            "torch_rng": torch.get_rng_state(),
        }

    def save(self, path: str | Path) -> None:
        save_container(path, self.state_tree())

    def restore(self, path: str | Path) -> None:
        tree = load_container(path)
        if tree.get("kind") != "train":
            raise ValueError(f"{path} is not a training checkpoint")
        self.model.load_state_dict(tree["model"])
        self.critics.load_state_dict(tree["critics"])
        _load_optimizer_tree(self.opt_g, tree["opt_g"])
        for name, opt in self.opt_d.items():
            _load_optimizer_tree(opt, tree["opt_d"][name])
        self.rng.set_state(tree["rng"].to(torch.uint8))
        torch.set_rng_state(tree["torch_rng"].to(torch.uint8))
        self.epoch = int(tree["epoch"])
        self.global_step = int(tree["global_step"])
        self.best_val_psnr = tree.get("best_val_psnr")


def _optimizer_tree(opt: torch.optim.Optimizer) -> dict:
    sd = opt.state_dict()
    return {
        "state": {str(k): v for k, v in sd["state"].items()},
        "param_groups": sd["param_groups"],
    }


def _load_optimizer_tree(opt: torch.optim.Optimizer, tree: dict) -> None:
    opt.load_state_dict(
        {
            "state": {int(k): v for k, v in tree["state"].items()},
            "param_groups": tree["param_groups"],
        }
    )
