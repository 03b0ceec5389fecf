"""Figure rendering for the report-producing commands.

Each function writes one PNG next to the delimited data file it illustrates.
Rendering is headless (Agg) and optional everywhere: the data files remain the
primary output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import PointResult
from .theory import RegimeCell, RegimeKind

_REGIME_COLOR = {
    RegimeKind.PERFECT: "#4477aa",
    RegimeKind.GROUPING_LIMITED: "#ccbb44",
    RegimeKind.CLUSTERING_LIMITED: "#ee6677",
}


def plot_sweep(points: list[PointResult], path: str, title: str | None = None) -> None:
    x = [pt.multiplier for pt in points]
    y = [pt.success_rate for pt in points]
    lo = [pt.success_rate - pt.ci_low for pt in points]
    hi = [pt.ci_high - pt.success_rate for pt in points]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(x, y, yerr=[lo, hi], fmt="o-", capsize=3)
    ax.axvline(1.0, color="grey", ls="--", lw=1, label="p = p*")
    ax.set_xlabel("p / p*")
    ax.set_ylabel("empirical success rate")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_flag_comparison(by_flag: dict[int, list[PointResult]], path: str,
                         title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for flag, marker in ((0, "s"), (1, "o")):
        pts = by_flag[flag]
        x = [pt.multiplier for pt in pts]
        y = [pt.success_rate for pt in pts]
        lo = [pt.success_rate - pt.ci_low for pt in pts]
        hi = [pt.ci_high - pt.success_rate for pt in pts]
        ax.errorbar(x, y, yerr=[lo, hi], fmt=marker + "-", capsize=3,
                    label=f"refine groups{' + vectors' if flag else ' only'}")
    ax.axvline(1.0, color="grey", ls="--", lw=1)
    ax.set_xlabel("p / p*")
    ax.set_ylabel("empirical success rate")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_regime_map(cells: list[RegimeCell], path: str, title: str | None = None) -> None:
    i_g_values = sorted({c.i_g for c in cells})
    i_c2_values = sorted({c.i_c2 for c in cells})
    gi = {v: k for k, v in enumerate(i_g_values)}
    ci = {v: k for k, v in enumerate(i_c2_values)}
    order = [RegimeKind.PERFECT, RegimeKind.GROUPING_LIMITED, RegimeKind.CLUSTERING_LIMITED]
    code = {kind: k for k, kind in enumerate(order)}
    img = np.zeros((len(i_c2_values), len(i_g_values)))
    for cell in cells:
        img[ci[cell.i_c2], gi[cell.i_g]] = code[cell.regime.kind]
    fig, ax = plt.subplots(figsize=(5, 4))
    cmap = matplotlib.colors.ListedColormap([_REGIME_COLOR[k] for k in order])
    ax.imshow(img, origin="lower", aspect="auto", cmap=cmap, vmin=-0.5, vmax=2.5,
              extent=(min(i_g_values), max(i_g_values),
                      min(i_c2_values), max(i_c2_values)))
    handles = [plt.Rectangle((0, 0), 1, 1, color=_REGIME_COLOR[k]) for k in order]
    ax.legend(handles, [k.value for k in order], loc="upper right", fontsize=7)
    ax.set_xlabel("I_g")
    ax.set_ylabel("I_c2")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rmse(rows: list[dict], path: str, title: str | None = None) -> None:
    methods = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, method in enumerate(methods):
        vals = [r["rmse"] for r in rows if r["method"] == method]
        ax.scatter([k] * len(vals), vals, s=12, alpha=0.6)
        ax.hlines(float(np.mean(vals)), k - 0.3, k + 0.3, color="black", lw=2)
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=15, fontsize=8)
    ax.set_ylabel("RMSE on unobserved entries")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
