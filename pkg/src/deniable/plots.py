"""Figures written next to CLI reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GROUP_COLORS = {"high": "#b2182b", "medium": "#ef8a62", "low": "#67a9cf"}


def invocation_chart(report: dict, path: str | Path) -> Path:
    """Cuesets found and cells handed to detection, per detection invocation."""
    cues = report.get("cuesets_per_invocation", [])
    hidden = report.get("hidden_per_invocation", [])
    xs = list(range(1, len(cues) + 1))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], cues, width, label="cuesets", color="#4d4d4d")
    ax2 = ax.twinx()
    ax2.bar([x + width / 2 for x in xs], hidden, width, label="cells detected", color="#ef8a62")
    ax.set_xlabel("detection invocation")
    ax.set_ylabel("cuesets")
    ax2.set_ylabel("cells")
    ax.set_xticks(xs)
    ax.set_title(f"{report.get('total_hidden', 0)} cells hidden in {report.get('iterations', 0)} invocations")
    handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
    ax.legend(handles, ["cuesets", "cells detected"], loc="upper right", frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def connectivity_chart(scores: dict[str, int], groups: dict[str, str], path: str | Path) -> Path:
    names = sorted(scores, key=lambda a: -scores[a])
    fig, ax = plt.subplots(figsize=(max(4, 0.55 * len(names) + 1), 3.5))
    ax.bar(names, [scores[a] for a in names], color=[GROUP_COLORS[groups[a]] for a in names])
    ax.set_ylabel("connectivity")
    ax.tick_params(axis="x", rotation=45)
    for g, color in GROUP_COLORS.items():
        ax.bar([], [], color=color, label=g)
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
