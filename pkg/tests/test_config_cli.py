import json
import os

import numpy as np
import pytest
import torch
from PIL import Image

from faceinpaint.cli import main
from faceinpaint.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    config_from_dict,
    describe_defaults,
    load_run_config,
)


TINY_TOML = """
[data]
root = "bundled:smoke"
resolution = 32

[encoder]
base_channels = 8
vit_layers = 1
vit_heads = 2
vit_dim = 16

[stage1]
num_classes = 4

[stage2]
scales = [1, 2]
key_dim = 8

[critics]
base_channels = 8

[train]
epochs = 2
batch_size = 4
g_lr = 1e-3
d_lr = 5e-4
seed = 3
val_every = 1
checkpoint_every = 1
out_dir = "{out_dir}"
"""


@pytest.fixture()
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML.format(out_dir=tmp_path / "run"))
    return path


class TestRunConfig:
    def test_defaults_are_full_scale(self):
        cfg = RunConfig()
        assert cfg.train.batch_size == 16
        assert cfg.train.g_lr == 1e-5
        assert cfg.train.d_lr == 5e-6
        assert (cfg.train.beta1, cfg.train.beta2) == (0.5, 0.999)
        assert cfg.losses.w_gp == 5.0
        assert cfg.train.clip_norm == 0.5
        assert cfg.stage2.sigma_train == 0.1
        assert cfg.train.epochs == 250
        assert cfg.stage2.scales == (1, 2, 4)
        assert cfg.stage1.num_classes == 20
        assert cfg.encoder.vit_layers == 6
        assert cfg.encoder.vit_heads == 8
        assert cfg.encoder.vit_dim == 768

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError, match="train"):
            config_from_dict({"train": {"lr": 1e-4}})
        with pytest.raises(ConfigError, match="typo_block"):
            config_from_dict({"typo_block": {}})

    def test_type_errors_name_the_key(self):
        with pytest.raises(ConfigError, match="train.epochs"):
            config_from_dict({"train": {"epochs": "many"}})
        with pytest.raises(ConfigError, match="stage2.scales"):
            config_from_dict({"stage2": {"scales": "1,2"}})

    def test_load_and_overrides(self, tiny_toml):
        cfg = load_run_config(tiny_toml)
        assert cfg.data.resolution == 32
        over = apply_overrides(cfg, ["train.epochs=9", "stage2.attention=false",
                                     "stage2.scales=[1]"])
        assert over.train.epochs == 9
        assert over.stage2.attention is False
        assert over.stage2.scales == (1,)

    def test_bad_override_rejected(self, tiny_toml):
        cfg = load_run_config(tiny_toml)
        with pytest.raises(ConfigError, match="unknown key"):
            apply_overrides(cfg, ["train.velocity=1"])
        with pytest.raises(ConfigError, match="block.key"):
            apply_overrides(cfg, ["trainepochs5"])

    def test_invalid_toml_reports_position(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[train\nepochs = 2\n")
        with pytest.raises(ConfigError, match="line"):
            load_run_config(bad)

    def test_defaults_reference_lists_blocks(self):
        text = describe_defaults()
        for block in ("[data]", "[encoder]", "[schedule]", "[service]"):
            assert block in text
        assert "g_lr = 1e-05" in text


class TestCliBasics:
    def test_usage_error_exit_code(self, capsys):
        assert main([]) == 1
        assert main(["no-such-command"]) == 1

    def test_config_error_exit_code(self, tmp_path, capsys):
        missing = tmp_path / "nope.toml"
        assert main(["train", "--config", str(missing)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        assert main(["export", "--checkpoint", str(tmp_path / "missing.ckpt"),
                     "--out", str(tmp_path / "o.ckpt")]) == 3

    def test_config_command_prints_reference(self, capsys):
        assert main(["config"]) == 0
        out = capsys.readouterr().out
        assert "[train]" in out and "epochs" in out

    def test_demo_data(self, tmp_path):
        assert main(["demo-data", "--out", str(tmp_path / "faces"), "--n", "3"]) == 0
        assert len(list((tmp_path / "faces").glob("*.png"))) == 3

    def test_env_var_overrides_data_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FACEINPAINT_DATA_ROOT", str(tmp_path / "missing_root"))
        cfg_path = tmp_path / "c.toml"
        cfg_path.write_text('[data]\nroot = "bundled:smoke"\n[train]\nepochs = 0\n')
        code = main(["train", "--config", str(cfg_path), "--set",
                     f"train.out_dir={tmp_path / 'r'}"])
        assert code == 3  # the overridden root does not exist


class TestMaskGenCli:
    def test_writes_masks_in_band(self, tmp_path, capsys):
        out = tmp_path / "masks"
        assert main(["mask-gen", "--out", str(out), "--n", "5",
                     "--height", "64", "--width", "64", "--seed", "11"]) == 0
        pngs = sorted(out.glob("*.png"))
        assert len(pngs) == 5
        for p in pngs:
            arr = np.asarray(Image.open(p))
            ratio = (arr > 127).mean()
            assert 0.20 <= ratio <= 0.40


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """One tiny CLI training run shared by the dependent CLI tests."""
    root = tmp_path_factory.mktemp("clirun")
    cfg_path = root / "tiny.toml"
    cfg_path.write_text(TINY_TOML.format(out_dir=root / "run"))
    code = main(["train", "--config", str(cfg_path)])
    assert code == 0
    return root, cfg_path


class TestTrainCli:
    def test_outputs_present(self, trained_run):
        root, _ = trained_run
        run = root / "run"
        assert (run / "latest.ckpt").exists()
        assert (run / "metrics.csv").exists()
        assert (run / "run_meta.json").exists()
        meta = json.loads((run / "run_meta.json").read_text())
        assert meta["config"]["encoder"]["mode"] == "hybrid"

    def test_resume_continues_epochs(self, trained_run, capsys, tmp_path):
        root, cfg_path = trained_run
        code = main([
            "train", "--config", str(cfg_path),
            "--resume", str(root / "run" / "latest.ckpt"),
            "--set", "train.epochs=3", "--set", f"train.out_dir={tmp_path / 'resumed'}",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "resumed from" in out
        assert "epoch 3" in out

    def test_ablation_mode_recorded_in_metadata(self, tmp_path):
        cfg_path = tmp_path / "cnn.toml"
        cfg_path.write_text(TINY_TOML.format(out_dir=tmp_path / "run"))
        code = main(["train", "--config", str(cfg_path),
                     "--set", "encoder.mode=cnn_only", "--set", "train.epochs=0"])
        assert code == 0
        meta = json.loads((tmp_path / "run" / "run_meta.json").read_text())
        assert meta["config"]["encoder"]["mode"] == "cnn_only"


class TestExportAndInferCli:
    def test_export_deterministic_and_critic_free(self, trained_run, tmp_path):
        root, _ = trained_run
        ckpt = root / "run" / "latest.ckpt"
        out_a = tmp_path / "a.bundle"
        out_b = tmp_path / "b.bundle"
        assert main(["export", "--checkpoint", str(ckpt), "--out", str(out_a)]) == 0
        assert main(["export", "--checkpoint", str(ckpt), "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

        from faceinpaint.checkpoint import load_container

        tree = load_container(out_a)
        assert tree["kind"] == "inference"
        assert "critics" not in tree

        from faceinpaint.build import load_model_checkpoint

        model, cfg = load_model_checkpoint(out_a)
        assert cfg.data.resolution == 32

    def test_infer_sigma_zero_identical_and_known_pixels_kept(self, trained_run, tmp_path):
        root, _ = trained_run
        ckpt = root / "run" / "latest.ckpt"
        from faceinpaint.data import save_mask_png
        from faceinpaint.demo import synthetic_face
        from faceinpaint.masks import MaskSpec, generate_mask

        img_arr = synthetic_face(99, 32)
        img_path = tmp_path / "face.png"
        Image.fromarray(img_arr, "RGB").save(img_path)
        mask = generate_mask(MaskSpec(rng_seed=5), 32, 32)
        mask_path = tmp_path / "mask.png"
        save_mask_png(mask, mask_path)

        out = tmp_path / "inferred"
        code = main(["infer", "--checkpoint", str(ckpt), "--image", str(img_path),
                     "--mask", str(mask_path), "--sigma", "0", "--n", "3",
                     "--seed", "4", "--out", str(out)])
        assert code == 0
        files = sorted(out.glob("*.png"))
        assert len(files) == 3
        blobs = [p.read_bytes() for p in files]
        assert blobs[0] == blobs[1] == blobs[2]

        result = np.asarray(Image.open(files[0]).convert("RGB"))
        known = mask[0, 0].numpy() == 0
        assert np.array_equal(result[known], img_arr[known])

    def test_infer_seeded_diversity_reproducible(self, trained_run, tmp_path):
        root, _ = trained_run
        ckpt = root / "run" / "latest.ckpt"
        from faceinpaint.data import save_mask_png
        from faceinpaint.demo import synthetic_face
        from faceinpaint.masks import MaskSpec, generate_mask

        img_path = tmp_path / "face.png"
        Image.fromarray(synthetic_face(98, 32), "RGB").save(img_path)
        mask_path = tmp_path / "mask.png"
        save_mask_png(generate_mask(MaskSpec(rng_seed=6), 32, 32), mask_path)

        outs = []
        for name in ("x", "y"):
            out = tmp_path / name
            assert main(["infer", "--checkpoint", str(ckpt), "--image", str(img_path),
                         "--mask", str(mask_path), "--sigma", "0.5", "--n", "2",
                         "--seed", "9", "--out", str(out)]) == 0
            outs.append([p.read_bytes() for p in sorted(out.glob("*.png"))])
        assert outs[0] == outs[1]
        assert outs[0][0] != outs[0][1]  # different per-sample seeds diversify


class TestEvalCli:
    def test_eval_single_checkpoint(self, trained_run, tmp_path, capsys):
        root, cfg_path = trained_run
        out = tmp_path / "evalout"
        code = main(["eval", "--config", str(cfg_path),
                     "--checkpoint", str(root / "run" / "latest.ckpt"),
                     "--seed", "2", "--out", str(out),
                     "--set", "eval.fid=stub", "--set", "eval.lpips=stub"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "PSNR" in stdout and "FID" in stdout
        assert (out / "report.csv").exists()
        assert (out / "report.json").exists()
        assert (out / "psnr.png").exists()

    def test_eval_ablation_table(self, trained_run, tmp_path, capsys):
        _, cfg_path = trained_run
        out = tmp_path / "ablation"
        code = main(["eval", "--config", str(cfg_path), "--ablation",
                     "--seed", "1", "--out", str(out),
                     "--set", "eval.max_samples=4"])
        assert code == 0
        stdout = capsys.readouterr().out
        header, _, *rows = stdout.strip().splitlines()
        assert header.split() == ["Config", "PSNR", "SSIM", "L1", "LPIPS", "FID"]
        labels = [r.split("  ")[0].strip() for r in rows if r.strip()]
        assert labels[:4] == ["hybrid+attn", "hybrid only", "CNN only", "ViT only"]

    def test_checkpoint_config_mismatch_rejected(self, trained_run, tmp_path):
        root, cfg_path = trained_run
        code = main(["eval", "--config", str(cfg_path),
                     "--checkpoint", str(root / "run" / "latest.ckpt"),
                     "--set", "data.resolution=64", "--set", "encoder.patch_size=8"])
        assert code == 2
