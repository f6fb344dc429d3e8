"""Bar charts of coverage and interval length from report rows.

Bars are grouped by variant (full, split) and shaded by whether the cell
is adaptive.  Error bars are one standard error.  Figures are written to
files with the non-interactive Agg backend.
"""

from __future__ import annotations

import math
import os

import numpy as np

_COLORS = {False: "0.6", True: "tab:blue"}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _layout(rows):
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    groups = list(dict.fromkeys(r.variant for r in rows))
    flags = sorted(set(r.adaptive for r in rows))
    return schemes, groups, flags


def _bars(ax, rows, value, err):
    schemes, groups, flags = _layout(rows)
    table = {(r.scheme, r.variant, r.adaptive): r for r in rows}
    width = 0.8 / max(len(flags), 1)
    ticks, labels = [], []
    x0 = 0.0
    for g in groups:
        xs = x0 + np.arange(len(schemes))
        for k, a in enumerate(flags):
            vals = [value(table[(s, g, a)]) if (s, g, a) in table else math.nan for s in schemes]
            errs = [err(table[(s, g, a)]) if (s, g, a) in table else 0.0 for s in schemes]
            ax.bar(xs + (k - (len(flags) - 1) / 2) * width, vals, width, yerr=errs,
                   color=_COLORS[a], capsize=2,
                   label=("adaptive" if a else "non-adaptive") if g == groups[0] else None)
        ticks.extend(xs)
        labels.extend(f"{s}\n({g})" for s in schemes)
        x0 += len(schemes) + 1
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, fontsize=7)
    if len(flags) > 1:
        ax.legend(fontsize=8)


def coverage_figure(rows, alpha: float, path, n: int | None = None, title: str | None = None):
    """Coverage bars with the nominal level and, given ``n``, the finite-sample upper bound."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4))
    _bars(ax, rows, lambda r: r.coverage, lambda r: r.se_coverage)
    ax.axhline(1.0 - alpha, color="red", ls="--", lw=1)
    if n is not None:
        ax.axhline(1.0 - alpha + 1.0 / (n + 1), color="tab:blue", ls="--", lw=1)
    lo = min([r.coverage for r in rows if np.isfinite(r.coverage)] + [1.0 - alpha])
    ax.set_ylim(max(0.0, lo - 0.1), 1.0)
    ax.set_ylabel("coverage")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def length_figure(rows, path, title: str | None = None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4))
    _bars(ax, rows, lambda r: r.avg_length, lambda r: r.se_length)
    ax.set_ylabel("average interval length")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def report_figures(rows, alpha: float, out_dir, stem: str = "report", n: int | None = None):
    """Write ``<stem>_coverage.png`` and ``<stem>_length.png``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [r for r in rows if r.n_evals > 0]
    if not rows:
        return []
    return [coverage_figure(rows, alpha, os.path.join(out_dir, f"{stem}_coverage.png"), n=n),
            length_figure(rows, os.path.join(out_dir, f"{stem}_length.png"))]
