"""Figures for report tables, rendered off-screen next to the CSV files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "contmeas",
}
MAX_TRACES = 20


def _col(table, name):
    idx = table.columns.index(name)
    return np.array([np.nan if r[idx] is None else r[idx] for r in table.rows], dtype=float)


def _moments(ax, table):
    t = _col(table, "t")
    for name in ("var_q", "var_p", "cov_qp"):
        if name in table.columns:
            (line,) = ax.plot(t, _col(table, name), label=name)
            if f"{name}_target" in table.columns:
                ax.plot(t, _col(table, f"{name}_target"), "--", color=line.get_color(), lw=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel("second moments")
    ax.legend()


def _comparison(ax, table):
    quantity = [r[table.columns.index("quantity")] for r in table.rows]
    t, val, se, tgt = (_col(table, c) for c in ("t", "ensemble", "stderr", "target"))
    for name in dict.fromkeys(quantity):
        sel = np.array([q == name for q in quantity])
        bar = ax.errorbar(t[sel], val[sel], yerr=3 * se[sel], fmt="o", ms=3, capsize=2, label=name)
        ax.plot(t[sel], tgt[sel], "-", color=bar[0].get_color(), lw=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel("ensemble moment (bars: 3 stderr)")
    ax.legend()


def _scaling(ax, table):
    dt, est, se, tgt = (_col(table, c) for c in ("delta_t", "estimate", "stderr", "target"))
    ax.errorbar(dt, est, yerr=se, fmt="o-", capsize=3, label="estimate")
    ax.plot(dt, tgt, "k--", lw=1.0, label="Ito target")
    ax.set_xscale("log")
    ax.set_xlabel("cycle period")
    ax.set_ylabel("per-cycle moment")
    ax.legend()


def _record(ax, table):
    tau, var, tgt = (_col(table, c) for c in ("tau", "variance", "target"))
    ax.loglog(tau, var, "o-", label="compensated record variance")
    ax.loglog(tau, tgt, "k--", lw=1.0, label="white-noise law")
    ax.set_xlabel("window")
    ax.set_ylabel("variance")
    ax.legend()


def _traces(ax, table):
    traj = _col(table, "trajectory")
    t = _col(table, "t")
    y = _col(table, "mean_q")
    for i in np.unique(traj)[:MAX_TRACES]:
        sel = traj == i
        ax.plot(t[sel], y[sel], lw=0.8, alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("<q>")


PLOTS = {
    "series": _moments,
    "master_comparison": _comparison,
    "scaling": _scaling,
    "record_scaling": _record,
    "trajectories": _traces,
}


def render_figures(report, out_dir) -> list[Path]:
    """One PNG per table that has a plot recipe and at least one row."""
    out_dir = Path(out_dir)
    written = []
    with plt.rc_context(STYLE):
        for name, table in report.tables.items():
            recipe = PLOTS.get(name)
            if recipe is None or not table.rows:
                continue
            out_dir.mkdir(parents=True, exist_ok=True)
            fig, ax = plt.subplots()
            recipe(ax, table)
            ax.set_title(f"{report.experiment}: {name}", fontsize=10)
            fig.tight_layout()
            path = out_dir / f"{name}.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            written.append(path)
    return written
