"""Static figures of inflow, demand and supply curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "invdemand",
}


def plot_curves(cols: dict, title: str = "", path: str | Path | None = None):
    """One panel for the inflow and one per demand arc, benchmark dashed.

    ``cols`` is a curves table as produced by ``run_experiment``. Returns the
    figure; saves it when ``path`` is given.
    """
    arcs = sorted(int(k.split("_")[1]) for k in cols if k.startswith("demand_"))
    t = cols["t"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 1 + len(arcs), figsize=(3.2 * (1 + len(arcs)), 2.8), sharex=True)
        ax = axes[0]
        ax.plot(t, cols["benchmark_inflow"], "k--", label="benchmark inflow")
        ax.plot(t, cols["optimal_inflow"], "C0", label="optimal inflow")
        ax.set_title("inflow")
        ax.set_xlabel("t")
        ax.legend(loc="best")
        for ax, a in zip(axes[1:], arcs):
            ax.step(t, cols[f"benchmark_demand_{a}"], "k--", where="post", label="benchmark demand")
            ax.plot(t, cols[f"benchmark_supply_{a}"], "C7:", label="benchmark supply")
            ax.step(t, cols[f"demand_{a}"], "C1", where="post", label="demand")
            ax.plot(t, cols[f"supply_{a}"], "C2", label="supply")
            ax.set_title(f"demand arc ({a})")
            ax.set_xlabel("t")
            ax.legend(loc="best")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        if path is not None:
            fig.savefig(path, dpi=150)
    return fig


def render_report(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, cols in report.curves.items():
        path = out / f"figure_{name}.png"
        fig = plot_curves(cols, title=name, path=path)
        plt.close(fig)
        written.append(path)
    return written
