"""
Wing Twin - Chart Theme
Unified matplotlib styling for the static result plots
"""

from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# =============================================
# Chart Theme Configuration
# =============================================

CHART_THEME = {
    "colors": {
        "gold": "#C9A962",
        "purple": "#7C5CBF",
        "success": "#4ADE80",
        "info": "#60A5FA",
        "warning": "#FBBF24",
        "danger": "#F87171",
        "pink": "#F472B6",
        "cyan": "#22D3EE",
    },
    "backgrounds": {
        "paper": "#FFFFFF",
        "grid": "#E4E4E7",
    },
    "text": {
        "primary": "#18181B",
        "secondary": "#52525B",
    },
    "fonts": {
        "family": "DejaVu Sans",
        "title": 12,
        "axis": 10,
        "tick": 9,
    },
    "figure": {
        "width_in": 7.0,
        "dpi": 150,
    },
}

# Chart color palette (ordered for consistency)
CHART_COLORS = [
    CHART_THEME["colors"]["gold"],
    CHART_THEME["colors"]["purple"],
    CHART_THEME["colors"]["success"],
    CHART_THEME["colors"]["info"],
    CHART_THEME["colors"]["pink"],
    CHART_THEME["colors"]["warning"],
    CHART_THEME["colors"]["cyan"],
    CHART_THEME["colors"]["danger"],
]

CHART_RC = {
    "axes.prop_cycle": matplotlib.cycler(color=CHART_COLORS),
    "axes.labelsize": CHART_THEME["fonts"]["axis"],
    "axes.labelcolor": CHART_THEME["text"]["secondary"],
    "axes.edgecolor": CHART_THEME["backgrounds"]["grid"],
    "axes.grid": True,
    "grid.color": CHART_THEME["backgrounds"]["grid"],
    "font.family": CHART_THEME["fonts"]["family"],
    "legend.fontsize": CHART_THEME["fonts"]["tick"],
    "legend.frameon": False,
    "xtick.labelsize": CHART_THEME["fonts"]["tick"],
    "ytick.labelsize": CHART_THEME["fonts"]["tick"],
    "lines.linewidth": 1.5,
    "savefig.dpi": CHART_THEME["figure"]["dpi"],
    "figure.facecolor": CHART_THEME["backgrounds"]["paper"],
}


def style_axes(ax, title: str = None, xlabel: str = None, ylabel: str = None):
    """Apply theme title/labels to one axes"""
    if title:
        ax.set_title(title, fontsize=CHART_THEME["fonts"]["title"], color=CHART_THEME["text"]["primary"])
    if xlabel:
        ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return ax


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_likelihood_curves(curves: Dict[str, np.ndarray], posterior_mean: float, path: Union[str, Path]) -> Path:
    """One KDE likelihood per load/displacement pair, posterior mean marked"""
    with plt.rc_context(CHART_RC):
        fig, ax = plt.subplots(figsize=(CHART_THEME["figure"]["width_in"], 3.5))
        e_grid = curves["e"]
        for name, values in curves.items():
            if name == "e":
                continue
            ax.plot(e_grid, values, label=name.replace("_", " "))
        ax.axvline(posterior_mean, color=CHART_THEME["text"]["primary"], linestyle="--", linewidth=1.0,
                   label=f"posterior mean {posterior_mean:.4f}")
        style_axes(ax, "Stiffness likelihoods", "Young's modulus scale e", "density")
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_mission(rows: Sequence[dict], truth: Sequence[dict], path: Union[str, Path]) -> Path:
    """
    Three stacked panels: health mean ± 2σ with ground truth, issued control,
    reward means.
    """
    t = np.array([r["t"] for r in rows])
    with plt.rc_context(CHART_RC):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(CHART_THEME["figure"]["width_in"], 7.5))

        ax = axes[0]
        for k, color in ((0, CHART_THEME["colors"]["gold"]), (1, CHART_THEME["colors"]["purple"])):
            mean = np.array([r["mean_z"][k] for r in rows])
            std = np.array([r["std_z"][k] for r in rows])
            ax.plot(t, mean, color=color, label=f"z{k + 1} mean")
            ax.fill_between(t, mean - 2 * std, mean + 2 * std, color=color, alpha=0.2)
            ax.step(t, [z[f"z{k + 1}"] for z in truth], where="post", color=color, linestyle=":",
                    label=f"z{k + 1} truth")
        style_axes(ax, "Health state", ylabel="stiffness reduction (%)")
        ax.legend(ncol=4)

        ax = axes[1]
        ax.step(t, [3 if r["control"] == "3g" else 2 for r in rows], where="post",
                color=CHART_THEME["colors"]["info"])
        ax.set_yticks([2, 3])
        ax.set_yticklabels(["2g", "3g"])
        style_axes(ax, "Issued control")

        ax = axes[2]
        for key, color in (("r_health", CHART_THEME["colors"]["success"]),
                           ("r_control", CHART_THEME["colors"]["warning"]),
                           ("r_error", CHART_THEME["colors"]["danger"])):
            mean = np.array([r["rewards"][key]["mean"] for r in rows])
            std = np.array([r["rewards"][key]["std"] for r in rows])
            ax.plot(t, mean, color=color, label=key)
            ax.fill_between(t, mean - 2 * std, mean + 2 * std, color=color, alpha=0.2)
        style_axes(ax, "Rewards", xlabel="timestep")
        ax.legend(ncol=3)

        fig.tight_layout()
        return _save(fig, path)
