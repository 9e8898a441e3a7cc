import csv
import json

import pytest
import torch

from conftest import tiny_run_config
from faceinpaint.build import build_model
from faceinpaint.data import FolderDataset, composite
from faceinpaint.evaluate import (
    ABLATION_CONFIGS,
    StubFidExtractor,
    StubLpipsDistance,
    evaluate,
    run_ablation,
)
from faceinpaint.masks import MaskSpec
from faceinpaint.metrics import MetricReport
from faceinpaint.report import (
    format_table,
    render_loss_curves,
    render_metric_figures,
    write_report_csv,
    write_report_json,
)


class PerfectModel:
    """Returns the ground truth: the metrics' fixed point."""

    def inpaint(self, image, mask, sigma=0.0, rng=None):
        return image.clone()


class DimModel:
    """Predicts a dimmed image; everything known stays exact via compositing."""

    def inpaint(self, image, mask, sigma=0.0, rng=None):
        return composite(image, image * 0.5, mask)


@pytest.fixture(scope="module")
def smoke_ds():
    return FolderDataset("bundled:smoke", "val", 32)


class TestEvaluate:
    def test_perfect_model_saturates_metrics(self, smoke_ds):
        report = evaluate(PerfectModel(), smoke_ds, MaskSpec(), seed=0)
        assert report.psnr == 100.0
        assert report.ssim == pytest.approx(1.0, abs=1e-9)
        assert report.l1 == 0.0
        assert report.lpips is None and report.fid is None
        assert report.n_samples == 8

    def test_deterministic_given_seed(self, smoke_ds):
        kwargs = dict(
            mask_spec=MaskSpec(), seed=3,
            fid_extractor=StubFidExtractor(), lpips_distance=StubLpipsDistance(),
        )
        a = evaluate(DimModel(), smoke_ds, **kwargs)
        b = evaluate(DimModel(), smoke_ds, **kwargs)
        assert a == b
        assert a.fid is not None and a.lpips is not None and a.fid > 0

    def test_max_samples_limits(self, smoke_ds):
        report = evaluate(PerfectModel(), smoke_ds, seed=0, max_samples=3)
        assert report.n_samples == 3

    def test_real_model_runs_end_to_end(self, smoke_ds):
        torch.manual_seed(0)
        model = build_model(tiny_run_config()).eval()
        report = evaluate(model, smoke_ds, seed=1, fid_extractor=StubFidExtractor())
        assert 0 < report.psnr < 100
        assert report.fid is not None


class TestAblation:
    def test_four_variants_in_table_order(self, smoke_ds):
        cfg = tiny_run_config()

        def build_variant(mode, attention):
            torch.manual_seed(cfg.train.seed)
            return build_model(cfg, mode=mode, attention=attention).eval()

        rows = run_ablation(build_variant, smoke_ds, seed=0, max_samples=4)
        assert list(rows) == list(ABLATION_CONFIGS) == [
            "hybrid+attn", "hybrid only", "CNN only", "ViT only",
        ]
        for report in rows.values():
            assert report.n_samples == 4
            assert 0 < report.psnr <= 100


class TestReportRendering:
    ROWS = {
        "hybrid+attn": MetricReport(24.82, 0.87, 0.04, 0.08, 11.56, 2000),
        "CNN only": MetricReport(23.67, 0.86, 0.05, None, None, 2000),
    }

    def test_table_layout(self):
        table = format_table(self.ROWS)
        lines = table.splitlines()
        assert lines[0].split() == ["Config", "PSNR", "SSIM", "L1", "LPIPS", "FID"]
        assert "hybrid+attn" in lines[2]
        assert "-" in lines[3]  # absent columns render as dashes, not zeros

    def test_csv_and_json(self, tmp_path):
        write_report_csv(tmp_path / "r.csv", self.ROWS)
        with open(tmp_path / "r.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["config"] == "hybrid+attn"
        assert rows[1]["lpips"] == ""

        write_report_json(tmp_path / "r.json", self.ROWS)
        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload["CNN only"]["fid"] is None
        assert payload["hybrid+attn"]["psnr"] == 24.82

    def test_figures_rendered_for_complete_columns(self, tmp_path):
        written = render_metric_figures(self.ROWS, tmp_path)
        names = {p.name for p in written}
        # lpips/fid are missing in one row, so only the full columns render
        assert names == {"psnr.png", "ssim.png", "l1.png"}
        for p in written:
            assert p.stat().st_size > 0

    def test_loss_curves_figure(self, tmp_path):
        csv_path = tmp_path / "metrics.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "epoch", "batch", "rec", "sem", "perc", "ctx", "adv",
                             "total", "g_grad_norm", "d_loss", "gp"])
            for step in range(1, 6):
                writer.writerow([step, 1, step - 1, 0.5 / step, 0.1, 0.2, 0.05, -0.1,
                                 0.6 / step, 0.4, "", ""])
        out = render_loss_curves(csv_path, tmp_path / "curves.png")
        assert out.stat().st_size > 0
