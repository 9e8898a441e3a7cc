"""Command-line entry point: train, eval, infer, mask-gen, export, serve.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
Every command is reproducible from its config file plus seed; run directories
receive a resolved config snapshot next to their outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DATA_ROOT_ENV = "FACEINPAINT_DATA_ROOT"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_config(args) -> "RunConfig":
    from .config import RunConfig, apply_overrides, load_run_config

    cfg = load_run_config(args.config) if args.config else RunConfig()
    if os.environ.get(DATA_ROOT_ENV):
        cfg = apply_overrides(cfg, [f"data.root={os.environ[DATA_ROOT_ENV]}"])
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _write_run_snapshot(out_dir: Path, cfg, argv: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "config": cfg.to_dict(),
        "argv": argv,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out_dir / "run_meta.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args, argv) -> int:
    from .build import build_trainer
    from .data import FolderDataset

    cfg = _load_config(args)
    if not cfg.data.root:
        raise_config("data.root is not set (config key data.root or $" + DATA_ROOT_ENV + ")")
    trainer = build_trainer(cfg)
    out_dir = Path(cfg.train.out_dir)
    _write_run_snapshot(out_dir, cfg, argv)
    if args.resume:
        trainer.restore(args.resume)
        print(f"resumed from {args.resume} at epoch {trainer.epoch}, step {trainer.global_step}")
    train_ds = FolderDataset(cfg.data.root, "train", cfg.data.resolution)
    try:
        val_ds = FolderDataset(cfg.data.root, "val", cfg.data.resolution)
    except FileNotFoundError:
        val_ds = None
    state = trainer.fit(train_ds, val_ds, out_dir)
    print(f"done: epoch {state.epoch}, step {state.global_step}, "
          f"best val PSNR {state.best_val_psnr}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    from .build import (
        build_eval_extractors,
        build_model,
        load_model_checkpoint,
        mask_spec,
    )
    from .config import ConfigError
    from .data import FolderDataset
    from .evaluate import evaluate, run_ablation
    from .report import (
        format_table,
        render_metric_figures,
        write_report_csv,
        write_report_json,
    )

    cfg = _load_config(args)
    if args.checkpoint and args.ablation:
        raise_config("--ablation evaluates fresh variant models; drop --checkpoint")
    dataset = FolderDataset(
        args.data or cfg.data.root, args.split, cfg.data.resolution
    )
    fid_x, lpips_x = build_eval_extractors(cfg)
    spec = mask_spec(cfg, seed=args.seed)
    common = dict(
        mask_spec=spec,
        seed=args.seed,
        batch_size=cfg.eval.batch_size,
        fid_extractor=fid_x,
        lpips_distance=lpips_x,
        max_samples=cfg.eval.max_samples or None,
    )
    if args.ablation:
        import torch

        def build_variant(mode: str, attention: bool):
            torch.manual_seed(cfg.train.seed)
            model = build_model(cfg, mode=mode, attention=attention)
            model.eval()
            return model

        rows = run_ablation(build_variant, dataset, **common)
    else:
        if not args.checkpoint:
            raise_config("--checkpoint is required unless --ablation is given")
        model, ckpt_cfg = load_model_checkpoint(args.checkpoint)
        if ckpt_cfg.data.resolution != cfg.data.resolution and args.config:
            raise ConfigError(
                f"checkpoint was trained at {ckpt_cfg.data.resolution}px, "
                f"config says {cfg.data.resolution}px"
            )
        if ckpt_cfg.stage1.num_classes != cfg.stage1.num_classes and args.config:
            raise ConfigError(
                f"checkpoint has {ckpt_cfg.stage1.num_classes} classes, "
                f"config says {cfg.stage1.num_classes}"
            )
        name = ckpt_cfg.encoder.mode + ("+attn" if ckpt_cfg.stage2.attention else "")
        rows = {name: evaluate(model, dataset, **common)}

    table = format_table(rows)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table + "\n")
        write_report_csv(out / "report.csv", rows)
        write_report_json(out / "report.json", rows)
        figures = render_metric_figures(rows, out)
        print(f"wrote report.csv/report.json/report.txt and {len(figures)} figure(s) to {out}")
    return EXIT_OK


def cmd_infer(args, argv) -> int:
    import torch
    from PIL import Image

    from .build import load_model_checkpoint
    from .data import composite_uint8, load_image, load_mask_png, make_masked_input

    model, cfg = load_model_checkpoint(args.checkpoint)
    res = cfg.data.resolution
    with Image.open(args.image) as im:
        src = im.convert("RGB")
        in_size = src.size
        if src.size != (res, res):
            print(f"resizing input {src.size} -> {(res, res)} to match the model")
            src = src.resize((res, res), Image.BILINEAR)
        import numpy as np

        src_arr = np.asarray(src, dtype=np.uint8)
    mask = load_mask_png(args.mask)
    if (mask.shape[3], mask.shape[2]) != in_size:
        raise ValueError(
            f"mask size {(mask.shape[3], mask.shape[2])} does not match image size {in_size}"
        )
    mask = load_mask_png(args.mask, resolution=res)

    from .data import normalize_uint8

    image = normalize_uint8(src_arr).unsqueeze(0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        rng = torch.Generator().manual_seed(args.seed + i)
        masked = make_masked_input(image, mask)
        _, pred, _ = model(masked, sigma=args.sigma, rng=rng)
        arr = composite_uint8(src_arr, pred, mask)
        path = out_dir / f"inpaint_{i:02d}_seed{args.seed + i}.png"
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
        print(path)
    if args.sigma == 0 and args.n > 1:
        print("note: sigma = 0 is deterministic, the samples above are identical")
    return EXIT_OK


def cmd_mask_gen(args, argv) -> int:
    from .data import save_mask_png
    from .masks import MaskSpec, generate_mask

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        spec = MaskSpec(
            ratio_min=args.ratio_min,
            ratio_max=args.ratio_max,
            rng_seed=args.seed + i,
        )
        mask = generate_mask(spec, args.height, args.width)
        path = out_dir / f"mask_{i:03d}.png"
        save_mask_png(mask, path)
        print(f"{path}  ratio={float(mask.mean()):.3f}")
    return EXIT_OK


def cmd_export(args, argv) -> int:
    from .build import export_inference_bundle

    export_inference_bundle(args.checkpoint, args.out)
    print(f"wrote inference bundle {args.out}")
    return EXIT_OK


def cmd_serve(args, argv) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_config(args)
    service = cfg.service
    if args.port:
        service = replace(service, port=args.port)
    if args.host:
        service = replace(service, host=args.host)
    app = create_app(bundle_path=args.bundle, service_cfg=service)
    uvicorn.run(app, host=service.host, port=service.port, log_level="info")
    return EXIT_OK


def cmd_config(args, argv) -> int:
    from .config import describe_defaults

    print(describe_defaults())
    return EXIT_OK


def cmd_demo_data(args, argv) -> int:
    from .demo import write_face_set

    paths = write_face_set(args.out, n=args.n, size=args.size, seed=args.seed)
    print(f"wrote {len(paths)} synthetic faces to {args.out}")
    return EXIT_OK


def raise_config(message: str):
    from .config import ConfigError

    raise ConfigError(message)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="faceinpaint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_opts(p):
        p.add_argument("--config", help="TOML run config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. --set train.epochs=3")

    p = sub.add_parser("train", help="run the training loop")
    add_config_opts(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="metrics over a validation split")
    add_config_opts(p)
    p.add_argument("--checkpoint", help="model checkpoint or bundle")
    p.add_argument("--data", help="dataset root (overrides config)")
    p.add_argument("--split", default="val")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablation", action="store_true",
                   help="evaluate the four encoder/attention variants")
    p.add_argument("--out", help="directory for report files and figures")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="inpaint one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="single-channel PNG, 255 = missing")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--n", type=int, default=1, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("mask-gen", help="write random occlusion masks as PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio-min", type=float, default=0.20)
    p.add_argument("--ratio-max", type=float, default=0.40)
    p.set_defaults(fn=cmd_mask_gen)

    p = sub.add_parser("export", help="strip a checkpoint to inference weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("serve", help="HTTP inference service")
    add_config_opts(p)
    p.add_argument("--bundle", required=True, help="inference bundle from `export`")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("config", help="print the config reference with defaults")
    p.set_defaults(fn=cmd_config)

    p = sub.add_parser("demo-data", help="write the synthetic face fixture set")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_demo_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    from .checkpoint import CheckpointError
    from .config import ConfigError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
