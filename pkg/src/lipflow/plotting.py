"""Figures written next to the CSV/JSON outputs. Headless (Agg) only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the PNG bytes independent of the matplotlib version date
_META = {"Software": None}


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_entries(point, path, max_curves: int = 21) -> Path:
    """All entries of a universal point on one axis, coloured by j."""
    fig, ax = plt.subplots(figsize=(7, 4))
    cmap = plt.get_cmap("viridis")
    jmax = max(p.j for p, _ in point.meta)
    for e, (p, r) in list(zip(point.entries, point.meta))[:max_curves]:
        ax.plot(e.times, e.values, lw=0.8, color=cmap((p.j - 1) / max(1, jmax - 1)),
                label=f"j={p.j}" if p.i == 1 else None)
    ax.set_xlabel("t")
    ax.set_ylabel("F_i^j(t)")
    ax.set_ylim(bottom=0.0)
    ax.legend(title="colour: j (all i)", fontsize=7, ncol=2, loc="upper right")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return _finish(fig, path)


def plot_report(report, path) -> Path:
    """Defect against budget per property, both on a log axis."""
    props = report.properties
    names = [p.name for p in props]
    floor = 1e-18
    defect = np.array([max(p.max_defect, floor) for p in props])
    budget = np.array([max(p.budget, floor) for p in props])
    y = np.arange(len(props))
    fig, ax = plt.subplots(figsize=(7, 0.28 * len(props) + 1.2))
    colors = ["tab:green" if p.passed else "tab:red" for p in props]
    ax.barh(y, defect, color=colors, height=0.6, label="max defect (clamped)")
    ax.scatter(budget, y, marker="|", s=120, color="k", label="budget")
    ax.set_xscale("log")
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel(f"defect (values below {floor:g} drawn at {floor:g})")
    ax.legend(fontsize=7, loc="lower right")
    return _finish(fig, path)


def plot_series(series, path) -> Path:
    """``series`` is a list of (label, t, values)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, t, v in series:
        ax.plot(t, v, lw=0.9, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    if len(series) <= 12:
        ax.legend(fontsize=7)
    return _finish(fig, path)
