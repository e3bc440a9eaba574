"""Delimited reports and companion figures.

Every evaluation run emits a CSV; alongside it the same numbers are rendered
as PNG figures (metric-vs-quality curves when several quality factors are
present, per-image bars otherwise). Training runs get a loss/lr trace CSV
and curve the same way.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import MetricsReport, MetricsRow

_COLUMNS = ["image", "qf", "method", "psnr", "ssim", "psnr_b", "js", "bha"]


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf"
        return f"{v:.6f}"
    return str(v)


def write_metrics_csv(path: str, report: MetricsReport) -> None:
    methods = sorted({r.method for r in report.rows})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in report.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in _COLUMNS])
        for m in methods:
            agg = report.mean_over(m)
            writer.writerow(
                ["MEAN", "", m] + [_fmt(agg[k]) for k in ("psnr", "ssim", "psnr_b", "js", "bha")]
            )


def _finite(values):
    return [v for v in values if not (math.isnan(v) or math.isinf(v))]


def render_metrics_figures(stem: str, report: MetricsReport) -> list[str]:
    """PNG figures next to the CSV; returns the paths written."""
    rows = report.rows
    if not rows:
        return []
    qfs = {r.qf for r in rows if str(r.qf).strip()}
    paths = []
    pixel_keys = [("psnr", "PSNR [dB]"), ("ssim", "SSIM"), ("psnr_b", "PSNR-B [dB]")]
    dct_keys = [("js", "JS divergence"), ("bha", "Bhattacharyya distance")]
    has_dct = any(not math.isnan(r.js) for r in rows)

    def by_method_qf(key):
        acc = defaultdict(lambda: defaultdict(list))
        for r in rows:
            v = getattr(r, key)
            if not (math.isnan(v) or math.isinf(v)) and str(r.qf).strip():
                acc[r.method][int(r.qf)].append(v)
        return acc

    groups = [("pixel", pixel_keys)] + ([("dct", dct_keys)] if has_dct else [])
    for tag, keys in groups:
        fig, axes = plt.subplots(1, len(keys), figsize=(4.2 * len(keys), 3.4))
        if len(keys) == 1:
            axes = [axes]
        for ax, (key, label) in zip(axes, keys):
            if len(qfs) > 1:
                acc = by_method_qf(key)
                for method, per_qf in sorted(acc.items()):
                    xs = sorted(per_qf)
                    ys = [float(sum(per_qf[q]) / len(per_qf[q])) for q in xs]
                    ax.plot(xs, ys, marker="o", label=method)
                ax.set_xlabel("quality factor")
            else:
                methods = sorted({r.method for r in rows})
                for i, method in enumerate(methods):
                    vals = _finite([getattr(r, key) for r in rows if r.method == method])
                    if vals:
                        ax.bar(i, sum(vals) / len(vals), width=0.6, label=method)
                ax.set_xticks(range(len(methods)))
                ax.set_xticklabels(methods, rotation=20)
            ax.set_ylabel(label)
            ax.grid(True, alpha=0.3)
        handles, labels = axes[0].get_legend_handles_labels()
        if labels:
            axes[0].legend(fontsize=8)
        fig.tight_layout()
        out = f"{stem}_{tag}.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        paths.append(out)
    return paths


def write_loss_trace_csv(path: str, trace: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "freq", "pixel", "lr", "grad_norm"])
        for row in trace:
            writer.writerow(
                [row["step"]]
                + [_fmt(float(row[k])) for k in ("loss", "freq", "pixel", "lr", "grad_norm")]
            )


def render_loss_figure(path: str, trace: list[dict]) -> None:
    steps = [r["step"] for r in trace]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(steps, [r["loss"] for r in trace], lw=0.8, label="loss")
    ax.set_xlabel("step")
    ax.set_ylabel("dual-domain loss")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(steps, [r["lr"] for r in trace], color="tab:orange", lw=0.8, label="lr")
    ax2.set_ylabel("learning rate")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def rows_from_pairs(results: list[dict]) -> MetricsReport:
    """Convenience: list of dicts -> MetricsReport."""
    rows = [
        MetricsRow(
            image=r["image"],
            qf=str(r.get("qf", "")),
            method=r["method"],
            psnr=r["psnr"],
            ssim=r["ssim"],
            psnr_b=r["psnr_b"],
            js=r.get("js", math.nan),
            bha=r.get("bha", math.nan),
        )
        for r in results
    ]
    return MetricsReport(rows)
