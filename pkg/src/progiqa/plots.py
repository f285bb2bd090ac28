"""Plot and text rendering for training logs and evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .protocols import EvalReport
from .training import EpochLog


def plot_training_log(log: list[EpochLog], out_path: str | Path) -> Path:
    """Loss curves and the task-weight ramp, side by side (.png or .svg)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [e.epoch for e in log]
    fig, (ax_loss, ax_w) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [e.loss_r for e in log], label="regression")
    ax_loss.plot(epochs, [e.loss_c for e in log], label="classification")
    ax_loss.plot(epochs, [e.loss_total for e in log], label="total", linestyle="--")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_w.plot(epochs, [e.lambda1 for e in log], label="lambda1 (regression)")
    ax_w.plot(epochs, [e.lambda2 for e in log], label="lambda2 (classification)")
    ax_w.set_xlabel("epoch")
    ax_w.set_ylabel("task weight")
    ax_w.set_ylim(-0.05, 1.05)
    ax_w.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_validation_curve(
    val_history: list[tuple[int, float, float]], out_path: str | Path
) -> Path:
    """SRCC/PLCC against epoch for a run that tracked a validation split."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [e for e, _, _ in val_history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [s for _, s, _ in val_history], label="SRCC")
    ax.plot(epochs, [p for _, _, p in val_history], label="PLCC")
    ax.set_xlabel("epoch")
    ax.set_ylabel("correlation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_ablation(report: EvalReport, out_path: str | Path) -> Path:
    """Grouped SRCC/PLCC bars for the ablation variants."""
    if not report.variants:
        raise ValueError("report has no variant rows")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    names = [v["name"] for v in report.variants]
    xs = range(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([x - width / 2 for x in xs], [v["srcc"] for v in report.variants],
           width, label="SRCC")
    ax.bar([x + width / 2 for x in xs], [v["plcc"] for v in report.variants],
           width, label="PLCC")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=15)
    ax.set_ylabel("correlation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def render_report(report: EvalReport) -> str:
    """Aligned text table of a report's runs, medians, and variants."""
    lines = [
        f"protocol : {report.protocol}",
        f"datasets : {', '.join(report.datasets)}",
        f"config   : {report.fingerprint}",
        "",
    ]
    if report.runs and "variant" not in report.runs[0]:
        lines.append(f"{'seed':>6}  {'srcc':>8}  {'plcc':>8}")
        for row in report.runs:
            lines.append(
                f"{row['seed']:>6}  {row['srcc']:>8.4f}  {row['plcc']:>8.4f}"
            )
        lines.append(
            f"{'median':>6}  {report.median['srcc']:>8.4f}  "
            f"{report.median['plcc']:>8.4f}"
        )
    if report.variants:
        lines.append("")
        lines.append(f"{'variant':>16}  {'srcc':>8}  {'plcc':>8}  {'params':>10}")
        for v in report.variants:
            lines.append(
                f"{v['name']:>16}  {v['srcc']:>8.4f}  {v['plcc']:>8.4f}  "
                f"{v['params']:>10d}"
            )
    if report.reference:
        ref = ", ".join(
            f"{k}={v}" for k, v in report.reference.items() if k != "scale"
        )
        lines.append("")
        lines.append(f"full-scale reference: {ref}")
    return "\n".join(lines) + "\n"
