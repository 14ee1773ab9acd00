"""Matplotlib renderers for simulation reports.

Figures are written without timestamps and with a fixed SVG hash salt so the
same data always produces the same bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "assigncore",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.labelsize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.25,
    "lines.markersize": 4,
}


@dataclass
class Series:
    """One chart: ``y`` against ``x``; ``kind`` is ``line``, ``scatter`` or ``bar``."""

    x: np.ndarray
    y: np.ndarray
    x_label: str
    y_label: str
    title: str = ""
    yerr: np.ndarray | None = None
    kind: str = "line"
    fit: tuple[float, float] | None = None   # (slope, intercept) overlay for scatter plots


def _figure(series: list[Series]):
    fig, axes = plt.subplots(len(series), 1, figsize=(4.5, 3.0 * len(series)), squeeze=False)
    for ax, s in zip(axes[:, 0], series):
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if s.kind == "bar":
            # x holds bin edges (len(y) + 1) for histograms, else bar centres.
            if x.size == y.size + 1:
                ax.bar(x[:-1], y, width=np.diff(x), align="edge", color="0.55", edgecolor="0.2")
            else:
                ax.bar(x, y, color="0.55", edgecolor="0.2")
        elif s.kind == "scatter":
            ax.plot(x, y, "o", color="k", markersize=3)
            if s.fit is not None and x.size:
                xx = np.array([x.min(), x.max()])
                ax.plot(xx, s.fit[0] * xx + s.fit[1], "-", color="tab:red")
        else:
            if s.yerr is not None:
                ax.errorbar(x, y, yerr=np.asarray(s.yerr, dtype=float), fmt="o-", color="k", capsize=2)
            else:
                ax.plot(x, y, "o-", color="k")
        ax.set_xlabel(s.x_label)
        ax.set_ylabel(s.y_label)
        if s.title:
            ax.set_title(s.title)
    fig.tight_layout()
    return fig


def render(series, fmt: str = "svg") -> bytes:
    """Render one chart per series, stacked vertically, to ``fmt`` bytes."""
    if isinstance(series, Series):
        series = [series]
    series = list(series)
    if not series or any(np.asarray(s.y).size == 0 for s in series):
        raise ValueError("nothing to plot")
    with matplotlib.rc_context(_RC):
        fig = _figure(series)
        buf = io.BytesIO()
        meta = {"Date": None} if fmt == "svg" else ({"Software": None} if fmt == "png" else None)
        fig.savefig(buf, format=fmt, metadata=meta)
        plt.close(fig)
    return buf.getvalue()


def emit_svg(series) -> bytes:
    return render(series, "svg")


def save_figure(series, path: str | Path) -> Path:
    """Write the chart(s) to ``path``; the format follows the file extension."""
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    path.write_bytes(render(series, fmt))
    return path
