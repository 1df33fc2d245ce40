"""Figure rendering for the report path of the CLI.

Every figure is drawn from the same in-memory series that back the CSV
exports, so the plots and the delimited output always agree.  Rendering is
file-only (Agg backend); nothing here opens a window.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .corpus import BinSeries, CompilerTimeline
from .overlap import BreakdownRow, OverlapMatrix, OverlapTimelineRow

_RC = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}

_BUCKET_LABELS = ("1 tool", "2 tools", "3 tools", ">=4 tools")
_BUCKET_COLORS = ("#4472c4", "#c0504d", "#9bbb59", "#8064a2")


def _bin_axis(series: BinSeries) -> list[float]:
    return [row.bin_index * series.bin_width / 1e6 for row in series.bins]


def save_series_lines(
    series_by_key: Mapping[str, BinSeries], path: str, *, title: str, ylabel: str = "% of codes in bin"
) -> None:
    """Line plot of percentage series over the block timeline."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for key in sorted(series_by_key, key=str.casefold):
            series = series_by_key[key]
            xs, ys = [], []
            for row in series.bins:
                if row.percentage is not None:
                    xs.append(row.bin_index * series.bin_width / 1e6)
                    ys.append(row.percentage)
            ax.plot(xs, ys, marker=".", markersize=3, linewidth=1, label=key)
        ax.set_xlabel("block (millions)")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.set_ylim(0, 100)
        if series_by_key:
            ax.legend(ncol=2)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_compiler_stack(timeline: CompilerTimeline, path: str) -> None:
    """Stacked shares of compiler-version ranges per bin."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        xs = [row.bin_index * timeline.bin_width / 1e6 for row in timeline.rows if row.shares]
        layers = []
        for i in range(len(timeline.labels)):
            layers.append([row.shares[i] for row in timeline.rows if row.shares])
        if xs:
            ax.stackplot(xs, layers, labels=timeline.labels, alpha=0.85)
            ax.legend(ncol=2, loc="upper left")
        ax.set_xlabel("block (millions)")
        ax.set_ylabel("% of known versions")
        ax.set_title("compiler version ranges per bin")
        ax.set_ylim(0, 100)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_overlap_heatmap(matrix: OverlapMatrix, path: str) -> None:
    """Matrix of pairwise overlaps, first tool on rows."""
    n = len(matrix.tools)
    grid = [[float("nan")] * n for _ in range(n)]
    for i, t1 in enumerate(matrix.tools):
        for j, t2 in enumerate(matrix.tools):
            value = matrix.get(t1, t2)
            if value is not None:
                grid[i][j] = value
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.5, 5.5))
        image = ax.imshow(grid, vmin=0, vmax=100, cmap="Greens")
        ax.set_xticks(range(n), matrix.tools, rotation=90)
        ax.set_yticks(range(n), matrix.tools)
        for i in range(n):
            for j in range(n):
                if grid[i][j] == grid[i][j]:  # skip NaN cells
                    ax.text(j, i, f"{grid[i][j]:.0f}", ha="center", va="center", fontsize=7)
        fig.colorbar(image, label="overlap [%]")
        ax.set_title("overlap of tool findings")
        ax.grid(False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_agreement_bars(rows: Sequence[BreakdownRow], path: str) -> None:
    """Stacked agreement shares, one subplot per tool, classes on the x-axis."""
    tools = sorted({row.tool for row in rows}, key=str.casefold)
    classes = sorted({row.swc_class for row in rows})
    by_tool: dict[str, dict[int, BreakdownRow]] = {t: {} for t in tools}
    for row in rows:
        by_tool[row.tool][row.swc_class] = row
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            len(tools), 1, figsize=(7.0, 1.1 * len(tools) + 1.2), sharex=True, squeeze=False
        )
        positions = range(len(classes))
        for ax, tool in zip((a for row_axes in axes for a in row_axes), tools):
            bottom = [0.0] * len(classes)
            for bucket, (label, color) in enumerate(zip(_BUCKET_LABELS, _BUCKET_COLORS)):
                heights = []
                for cls in classes:
                    row = by_tool[tool].get(cls)
                    shares = row.shares() if row else (None,) * 4
                    heights.append(shares[bucket] or 0.0)
                ax.bar(positions, heights, bottom=bottom, color=color, label=label, width=0.7)
                bottom = [b + h for b, h in zip(bottom, heights)]
            ax.set_ylabel(tool, rotation=0, ha="right", va="center")
            ax.set_ylim(0, 100)
            ax.set_yticks((0, 50, 100))
        axes[-1][0].set_xticks(list(positions), [str(c) for c in classes])
        axes[-1][0].set_xlabel("SWC class")
        axes[0][0].legend(ncol=4, loc="lower right", bbox_to_anchor=(1.0, 1.05))
        fig.suptitle("agreement on flagged codes", y=0.995)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_overlap_timeline(
    rows: Sequence[OverlapTimelineRow], bin_width: int, swc_class: int, path: str
) -> None:
    """Stacked agreement shares per bin plus the flagged-percentage line."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        xs = [row.bin_index * bin_width / 1e6 for row in rows]
        bottom = [0.0] * len(rows)
        for bucket, (label, color) in enumerate(zip(_BUCKET_LABELS, _BUCKET_COLORS)):
            heights = [(row.shares()[bucket] or 0.0) for row in rows]
            ax.bar(xs, heights, bottom=bottom, width=bin_width / 1e6, color=color, label=label, alpha=0.7)
            bottom = [b + h for b, h in zip(bottom, heights)]
        line_xs = [x for x, row in zip(xs, rows) if row.percentage is not None]
        line_ys = [row.percentage for row in rows if row.percentage is not None]
        ax.plot(line_xs, line_ys, color="black", linewidth=1.2, label="% of bin flagged")
        twin = ax.twinx()
        twin.plot(xs, [row.numerator for row in rows], color="black", linewidth=0.8, linestyle="--")
        twin.set_ylabel("flagged codes (absolute, dashed)")
        twin.grid(False)
        ax.set_xlabel("block (millions)")
        ax.set_ylabel("% (shares of flagged; line: % of bin)")
        ax.set_ylim(0, 100)
        ax.set_title(f"SWC-{swc_class}: flagged codes and tool agreement per bin")
        ax.legend(ncol=3, loc="upper right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
