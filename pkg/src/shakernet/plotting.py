"""Report figures rendered to PNG with the non-interactive Agg backend.

Figures are built on bare ``Figure`` objects (no pyplot global state) and
saved without the software-version metadata chunk so reruns are byte-stable.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(width=6.0, height=3.5, ncols=1):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, height), dpi=100)
        FigureCanvasAgg(fig)
        axes = fig.subplots(1, ncols)
    return fig, axes


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
    return path


def convergence_plot(phase1_histories: dict, phase2_history: list, path) -> Path:
    """Objective and primal residual per outer iteration for both phases."""
    fig, (ax1, ax2) = _figure(9.0, 3.5, ncols=2)
    for view, hist in phase1_histories.items():
        if not hist:
            continue
        it = [h["iteration"] for h in hist]
        ax1.semilogy(it, [max(h["primal_residual"], 1e-300) for h in hist], label=f"phase 1 {view}")
    if phase2_history:
        it = [h["iteration"] for h in phase2_history]
        ax1.semilogy(it, [max(h["primal_residual"], 1e-300) for h in phase2_history], "k--", label="phase 2")
        ax2.plot(it, [h["objective"] for h in phase2_history], "k-", label="phase 2 objective")
        ax2.plot(it, [h["alignment"] for h in phase2_history], "k:", label="alignment")
    for view, hist in phase1_histories.items():
        if hist:
            ax2.plot([h["iteration"] for h in hist], [h["objective"] for h in hist], label=f"phase 1 {view}")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("primal residual")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("objective")
    ax1.legend(fontsize=7)
    ax2.legend(fontsize=7)
    return _save(fig, path)


def shaker_bar(report, path, n: int | None = None) -> Path:
    n = min(n or max(report.top, 10), len(report.ranking))
    pos = {e: i for i, e in enumerate(report.entities)}
    names = list(report.ranking[:n])
    vals = [report.f[pos[e]] for e in names]
    fig, ax = _figure(6.0, max(2.5, 0.25 * n + 1.0))
    colors = ["tab:red" if i < report.top else "tab:gray" for i in range(n)]
    ax.barh(range(n)[::-1], vals, color=colors)
    ax.set_yticks(range(n)[::-1])
    ax.set_yticklabels(names)
    ax.set_xlabel(f"influence strength (r={report.r})")
    return _save(fig, path)


def trend_plot(predicted, truth, path) -> Path:
    fig, ax = _figure()
    x = np.arange(len(truth))
    ax.plot(x, truth.values, "k-", label="truth")
    ax.plot(x, predicted.values, "tab:red", label="predicted")
    if truth.dates:
        step = max(1, len(x) // 6)
        ax.set_xticks(x[::step])
        ax.set_xticklabels([str(d) for d in truth.dates[::step]], rotation=30, ha="right")
    ax.set_ylabel("index (start = 100)")
    ax.legend()
    return _save(fig, path)


def equity_plot(result, path) -> Path:
    fig, ax = _figure()
    vals = [row["total_value"] for row in result.log]
    cash = [row["cash"] for row in result.log]
    x = np.arange(len(vals))
    ax.plot(x, vals, "tab:blue", label="total value")
    ax.plot(x, cash, "tab:gray", lw=0.8, label="cash")
    step = max(1, len(x) // 6)
    ax.set_xticks(x[::step])
    ax.set_xticklabels([str(row["date"]) for row in result.log[::step]], rotation=30, ha="right")
    ax.set_ylabel("portfolio value")
    ax.legend()
    return _save(fig, path)


def panel_preview(panel, path, max_entities: int = 8) -> Path:
    """First few entity series of every view."""
    V = len(panel.views)
    fig, axes = _figure(4.0 * V, 3.0, ncols=V)
    axes = np.atleast_1d(axes)
    for ax, view in zip(axes, panel.views):
        M = panel.view_matrix(view)
        for j in range(min(max_entities, M.shape[1])):
            ax.plot(M[:, j], lw=0.8)
        ax.set_title(view)
        ax.set_xlabel("t")
    return _save(fig, path)
