"""Figure rendering for the report path (headless, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from baroleak.evaluate import EvalReport
from baroleak.trace import PressureTrace


def save_trace_figure(trace: PressureTrace, path: str, title: str = "Pressure trace") -> None:
    """Line plot of a pressure trace against time in seconds."""
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(trace.times_s(), trace.samples, lw=0.9, color="tab:blue")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("pressure [hPa]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_confusion_figure(report: EvalReport, path: str) -> None:
    """Heatmap of P(predicted | true); rows are predicted, columns true."""
    names = [label.wire for label in report.confusion.classes]
    prob = np.asarray(report.confusion_prob)
    k = len(names)
    fig, ax = plt.subplots(figsize=(1.0 + 0.75 * k, 0.8 + 0.75 * k))
    im = ax.imshow(prob, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(k), names, rotation=45, ha="right")
    ax.set_yticks(range(k), names)
    ax.set_xlabel("true class")
    ax.set_ylabel("predicted class")
    for i in range(k):
        for j in range(k):
            shade = "white" if prob[i, j] > 0.5 else "black"
            ax.text(j, i, f"{prob[i, j]:.2f}", ha="center", va="center",
                    color=shade, fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_accuracy_figure(report: EvalReport, path: str) -> None:
    """Per-run accuracy bars with the mean marked."""
    accs = list(report.per_run_accuracy)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(range(len(accs)), accs, color="tab:blue", alpha=0.8)
    ax.axhline(report.mean_accuracy, color="tab:red", ls="--", lw=1,
               label=f"mean {report.mean_accuracy:.3f}")
    ax.set_xlabel("cross-validation run")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
