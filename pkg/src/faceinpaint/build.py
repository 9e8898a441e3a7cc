"""Factories from :class:`RunConfig` to ready-to-use components. Seeding
happens here so that a config plus a seed reproduces a run exactly."""

from __future__ import annotations

import torch

from .config import ConfigError, RunConfig
from .critics import CriticEnsemble
from .encoder import EncoderConfig
from .evaluate import StubFidExtractor, StubLpipsDistance
from .losses import FeatureExtractor, IdentityExtractor, Vgg19Extractor
from .masks import MaskSpec, default_boundary_radius
from .model import InpaintModel
from .schedule import PhaseSchedule
from .semantic import LabelProvider, make_label_provider
from .texture import AttentionScales, NoiseConfig
from .training import TrainConfig, Trainer


def encoder_config(cfg: RunConfig, mode: str | None = None) -> EncoderConfig:
    e = cfg.encoder
    return EncoderConfig(
        base_channels=e.base_channels,
        num_residual_blocks=e.num_residual_blocks,
        vit_layers=e.vit_layers,
        vit_heads=e.vit_heads,
        vit_dim=e.vit_dim,
        patch_size=e.patch_size,
        mode=mode if mode is not None else e.mode,
        fused_channels=e.fused_channels or None,
    )


def mask_spec(cfg: RunConfig, seed: int | None = None) -> MaskSpec:
    d = cfg.data
    return MaskSpec(
        ratio_min=d.ratio_min,
        ratio_max=d.ratio_max,
        num_strokes=d.num_strokes,
        brush_width=d.brush_width,
        rng_seed=cfg.train.seed if seed is None else seed,
    )


def build_model(
    cfg: RunConfig, mode: str | None = None, attention: bool | None = None
) -> InpaintModel:
    use_attention = cfg.stage2.attention if attention is None else attention
    scales = AttentionScales(scales=cfg.stage2.scales, key_dim=cfg.stage2.key_dim)
    return InpaintModel(
        enc_cfg=encoder_config(cfg, mode),
        num_classes=cfg.stage1.num_classes,
        resolution=cfg.data.resolution,
        attention=scales if use_attention else None,
        noise=NoiseConfig(sigma=cfg.stage2.sigma_train, alpha_init=cfg.stage2.alpha_init),
        literal_outer_product=cfg.stage2.literal_attention_mask,
    )


def build_critics(cfg: RunConfig, calibrate: bool = True) -> CriticEnsemble:
    critics = CriticEnsemble(
        num_classes=cfg.stage1.num_classes, base=cfg.critics.base_channels
    )
    if calibrate:
        critics.calibrate_spectral_norms(cfg.data.resolution)
    return critics


def build_schedule(cfg: RunConfig) -> PhaseSchedule:
    s = cfg.schedule
    return PhaseSchedule(
        phase1_end=s.phase1_end,
        phase2_end=s.phase2_end,
        critic_freqs=s.critic_freqs,
        adv_start=s.adv_start,
        final=s.final,
        w_gp=cfg.losses.w_gp,
    )


def build_extractor(cfg: RunConfig) -> FeatureExtractor:
    name = cfg.losses.perc_extractor
    if name == "identity":
        return IdentityExtractor()
    if name == "vgg19":
        if not cfg.losses.vgg_weights:
            raise ConfigError("losses.perc_extractor = 'vgg19' requires losses.vgg_weights")
        try:
            return Vgg19Extractor(cfg.losses.vgg_weights)
        except (OSError, RuntimeError) as exc:
            raise ConfigError(f"cannot load VGG weights from {cfg.losses.vgg_weights}: {exc}")
    raise ConfigError(f"unknown perceptual extractor {name!r}")


def build_label_provider(cfg: RunConfig) -> LabelProvider | None:
    return make_label_provider(
        cfg.stage1.label_provider,
        cfg.stage1.num_classes,
        labels_dir=cfg.stage1.labels_dir or None,
        seed=cfg.train.seed,
    )


def build_eval_extractors(cfg: RunConfig):
    fid = StubFidExtractor() if cfg.eval.fid == "stub" else None
    if cfg.eval.fid not in ("none", "stub"):
        raise ConfigError(f"eval.fid must be 'none' or 'stub', got {cfg.eval.fid!r}")
    lpips = StubLpipsDistance() if cfg.eval.lpips == "stub" else None
    if cfg.eval.lpips not in ("none", "stub"):
        raise ConfigError(f"eval.lpips must be 'none' or 'stub', got {cfg.eval.lpips!r}")
    return fid, lpips


def train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        batch_size=t.batch_size,
        g_lr=t.g_lr,
        d_lr=t.d_lr,
        betas=(t.beta1, t.beta2),
        clip_norm=t.clip_norm,
        epochs=t.epochs,
        resolution=cfg.data.resolution,
        seed=t.seed,
        mixed_precision=t.mixed_precision,
        sigma_train=cfg.stage2.sigma_train,
        val_every=t.val_every,
        checkpoint_every=t.checkpoint_every,
        mask_mode=t.mask_mode,
        mask_spec=mask_spec(cfg),
    )


def build_trainer(cfg: RunConfig) -> Trainer:
    """Model, critics and trainer from one config; `torch.manual_seed` is set
    first so two builds from the same config are parameter-identical."""
    torch.manual_seed(cfg.train.seed)
    model = build_model(cfg)
    critics = build_critics(cfg)
    boundary = cfg.losses.boundary_radius or default_boundary_radius(cfg.data.resolution)
    return Trainer(
        model=model,
        critics=critics,
        cfg=train_config(cfg),
        schedule=build_schedule(cfg),
        label_provider=build_label_provider(cfg),
        extractor=build_extractor(cfg),
        boundary_radius=boundary,
        run_config=cfg.to_dict(),
    )


def load_model_checkpoint(path) -> tuple[InpaintModel, RunConfig]:
    """Rebuild the generator from a training checkpoint or an inference
    bundle; critics and optimizer state are ignored if present."""
    from .checkpoint import CheckpointError, load_container
    from .config import config_from_dict

    tree = load_container(path)
    kind = tree.get("kind")
    if kind not in ("train", "inference"):
        raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
    if not tree.get("run_config"):
        raise CheckpointError(f"{path}: checkpoint carries no run configuration")
    cfg = config_from_dict(tree["run_config"])
    model = build_model(cfg)
    model.load_state_dict(tree["model"])
    model.eval()
    return model, cfg


def export_inference_bundle(checkpoint_path, out_path) -> None:
    """Strip a training checkpoint down to the inference-only weights bundle
    (no critics, no optimizer moments, no rng state)."""
    from .checkpoint import CheckpointError, load_container, save_container

    tree = load_container(checkpoint_path)
    if tree.get("kind") != "train":
        raise CheckpointError(f"{checkpoint_path} is not a training checkpoint")
    if not tree.get("run_config"):
        raise CheckpointError(f"{checkpoint_path}: checkpoint carries no run configuration")
    save_container(
        out_path,
        {"kind": "inference", "run_config": tree["run_config"], "model": tree["model"]},
    )
