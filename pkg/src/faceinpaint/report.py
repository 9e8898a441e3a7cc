"""Report rendering: text table, CSV/JSON, and matplotlib figures written
next to the delimited output."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import MetricReport  # noqa: E402

COLUMN_TITLES = {"psnr": "PSNR", "ssim": "SSIM", "l1": "L1", "lpips": "LPIPS", "fid": "FID"}
HIGHER_BETTER = {"psnr": True, "ssim": True, "l1": False, "lpips": False, "fid": False}


def format_table(rows: dict[str, MetricReport]) -> str:
    headers = ["Config"] + [COLUMN_TITLES[c] for c in MetricReport.COLUMNS]
    body = [[name] + report.row() for name, report in rows.items()]
    widths = [max(len(str(r[i])) for r in [headers] + body) for i in range(len(headers))]
    sep = "  "

    def fmt(cells: list[str]) -> str:
        return sep.join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    rule = sep.join("-" * w for w in widths)
    return "\n".join([fmt(headers), rule] + [fmt(r) for r in body])


def write_report_csv(path: str | Path, rows: dict[str, MetricReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", *MetricReport.COLUMNS, "n_samples"])
        for name, report in rows.items():
            writer.writerow(
                [name]
                + [getattr(report, c) if getattr(report, c) is not None else ""
                   for c in MetricReport.COLUMNS]
                + [report.n_samples]
            )


def write_report_json(path: str | Path, rows: dict[str, MetricReport]) -> None:
    payload = {
        name: {**{c: getattr(r, c) for c in MetricReport.COLUMNS}, "n_samples": r.n_samples}
        for name, r in rows.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def render_metric_figures(rows: dict[str, MetricReport], out_dir: str | Path) -> list[Path]:
    """One bar chart per metric column that is present in every row."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    names = list(rows)
    for col in MetricReport.COLUMNS:
        values = [getattr(rows[n], col) for n in names]
        if any(v is None for v in values):
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.bar(range(len(names)), values, color="#4878a8")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
        direction = "higher is better" if HIGHER_BETTER[col] else "lower is better"
        ax.set_ylabel(COLUMN_TITLES[col])
        ax.set_title(f"{COLUMN_TITLES[col]} by config ({direction})", fontsize=10)
        fig.tight_layout()
        path = out / f"{col}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_loss_curves(metrics_csv: str | Path, out_png: str | Path) -> Path:
    """Loss-term trajectories from a training metrics CSV."""
    steps: list[int] = []
    series: dict[str, list[float]] = {k: [] for k in ("rec", "sem", "perc", "ctx", "adv", "total")}
    with open(metrics_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            for key in series:
                series[key].append(float(row[key]))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for key, values in series.items():
        if steps:
            ax.plot(steps, values, label=key, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training losses")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)
