"""SVG rendering of a_eff curves with matplotlib (Agg/SVG backends, no pyplot state)."""

from __future__ import annotations

import numpy as np
from matplotlib import rcParams
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

STYLE = {
    "axes.labelsize": 14,
    "axes.linewidth": 1.0,
    "xtick.labelsize": 11,
    "ytick.labelsize": 11,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "legend.fontsize": 11,
    "lines.linewidth": 1.6,
    # fixed ids so repeated renders are byte-identical
    "svg.hashsalt": "feshscan",
    "svg.fonttype": "path",
}

DPI = 100


def _clip_range(y):
    """y-limits that keep the smooth part readable when the curve has poles."""
    good = y[np.isfinite(y)]
    if good.size == 0:
        return -1.0, 1.0
    q_lo, q_hi = np.percentile(good, [5, 95])
    span = (q_hi - q_lo) or 1.0
    lo = max(good.min(), q_lo - span)
    hi = min(good.max(), q_hi + span)
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_curve_svg(x, y, path, poles=(), xlabel=r"$\lambda$", ylabel=r"$a_{\rm eff}$",
                     width=1200, height=800, title=None):
    """Write a line plot of y(x) to ``path`` as SVG.

    The curve is broken at every pole so no segment is drawn across a
    divergence.  Each pole gets a dashed vertical marker with id ``pole-<j>``.
    The data line has id ``curve-a_eff``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    poles = [float(p) for p in poles]
    if poles:
        # NaN separators at the poles split the line into one path
        xs = np.concatenate([x, poles])
        ys = np.concatenate([y, np.full(len(poles), np.nan)])
        order = np.argsort(xs, kind="stable")
        x, y = xs[order], ys[order]

    with rcParams_context(STYLE):
        fig = Figure(figsize=(width / DPI, height / DPI), dpi=DPI)
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(111)
        (line,) = ax.plot(x, y, color="C0", label=ylabel)
        line.set_gid("curve-a_eff")
        for j, p in enumerate(poles):
            marker = ax.axvline(p, color="0.4", linestyle="--", linewidth=0.8)
            marker.set_gid(f"pole-{j}")
        ax.axhline(0.0, color="0.75", linewidth=0.6)
        ax.set_ylim(*_clip_range(y))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


class rcParams_context:
    """Temporarily apply a dict of rc settings."""

    def __init__(self, params):
        self.params = params

    def __enter__(self):
        self.saved = {k: rcParams[k] for k in self.params}
        rcParams.update(self.params)

    def __exit__(self, *exc):
        rcParams.update(self.saved)
