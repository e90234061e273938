"""Figure rendering for the report path.

All figures go through matplotlib's Agg backend with a pinned hash salt
and no date metadata, so identical inputs produce byte-identical SVG
files (the reproducibility contract covers reports too).
"""

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import Curve  # noqa: E402
from .ioutil import atomic_write_bytes  # noqa: E402

_RC = {
    "svg.hashsalt": "uapolicy",
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def emit_svg_lineplot(curves, path, xlabel: str = "", ylabel: str = "", title: str = "") -> None:
    """Line plot with shaded bands; gaps where points are undefined.

    Accepts one Curve or a list. An empty curve still renders axes.
    """
    if isinstance(curves, Curve):
        curves = [curves]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for curve in curves:
            xs, ys, los, his = [], [], [], []
            segments = []
            for i, x in enumerate(curve.x):
                if curve.defined[i] and not math.isnan(curve.values[i]):
                    xs.append(x)
                    ys.append(curve.values[i])
                    los.append(curve.lo[i])
                    his.append(curve.hi[i])
                elif xs:
                    segments.append((xs, ys, los, his))
                    xs, ys, los, his = [], [], [], []
            if xs:
                segments.append((xs, ys, los, his))
            color = None
            for seg_i, (xs, ys, los, his) in enumerate(segments):
                (line,) = ax.plot(
                    xs, ys, marker="o", markersize=3, color=color,
                    label=curve.label if seg_i == 0 and curve.label else None,
                )
                color = line.get_color()
                ax.fill_between(xs, los, his, alpha=0.2, color=color)
        if xlabel:
            ax.set_xlabel(xlabel)
        if ylabel:
            ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if any(c.label for c in curves):
            ax.legend()
        _save(fig, path)


def emit_svg_barplot(rows, value_keys, path, ylabel: str = "", title: str = "") -> None:
    """Grouped bars, one group per row["method"], one bar per value key."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        methods = [r["method"] for r in rows]
        n_keys = len(value_keys)
        width = 0.8 / max(n_keys, 1)
        for k, key in enumerate(value_keys):
            xs = [i + (k - (n_keys - 1) / 2) * width for i in range(len(rows))]
            ax.bar(xs, [r[key] for r in rows], width=width, label=key.removeprefix("mean_"))
        ax.set_xticks(range(len(methods)))
        ax.set_xticklabels(methods, rotation=20, ha="right")
        if ylabel:
            ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if rows:
            ax.legend()
        _save(fig, path)
