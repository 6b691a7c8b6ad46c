"""Matplotlib rendering of the sweep, noise-limit and trace reports.

Every report the CLI writes as CSV is also rendered to a PNG next to it.
All plotting goes through the Agg backend so the toolchain stays headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_visibility_sweep", "plot_skr_sweep", "plot_max_xi",
           "plot_trace_report", "plot_characterization"]

_AO_STYLE = dict(marker="o", color="tab:blue", label="AO on")
_NOAO_STYLE = dict(marker="s", color="tab:red", label="AO off")


def _mean_by_setting(rows, ao):
    by = {}
    for r in rows:
        if r.ao == ao:
            by.setdefault(r.setting, []).append((r.slope_variance, r.visibility))
    labels = sorted(by, key=lambda s: np.mean([p[0] for p in by[s]]))
    sv = [float(np.mean([p[0] for p in by[s]])) for s in labels]
    vis = [float(np.mean([p[1] for p in by[s]])) for s in labels]
    return sv, vis


def plot_visibility_sweep(rows, path, title="Visibility vs slope variance"):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for ao, style in ((True, _AO_STYLE), (False, _NOAO_STYLE)):
        sv, vis = _mean_by_setting(rows, ao)
        ax.plot(sv, vis, linestyle="--", **style)
    ax.set_xscale("log")
    ax.set_xlabel("slope variance")
    ax.set_ylabel(r"visibility $\sqrt{\eta_{vis}}$")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_skr_sweep(rows, path, detection="homodyne",
                   title="Secret key rate vs slope variance"):
    attr = "skr_hom" if detection == "homodyne" else "skr_het"
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for ao, style in ((True, _AO_STYLE), (False, _NOAO_STYLE)):
        pts = [(r.slope_variance, getattr(r, attr))
               for r in rows if r.ao == ao and getattr(r, attr) > 0.0]
        if pts:
            sv, skr = zip(*sorted(pts))
            ax.plot(sv, skr, linestyle="none", **style)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("slope variance")
    ax.set_ylabel("SKR (bits/use)")
    ax.set_title(f"{title} ({detection}); negatives omitted")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_max_xi(curves: dict[str, list[tuple[float, float]]], path,
                markers=(0.4433, 0.0644)):
    """Tolerable excess noise vs transmittance, one line per detection."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for name, curve in curves.items():
        t, xi = zip(*curve)
        ax.plot(t, xi, label=name)
    for m in markers:
        ax.axvline(m, color="gray", linestyle=":", linewidth=1.0)
    ax.set_xlabel("transmittance T")
    ax.set_ylabel(r"maximum tolerable $\xi$ (SNU)")
    ax.set_yscale("log")
    ax.set_title("Maximum excess noise for a positive key")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_trace_report(v_b_per_window, v_el, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    idx = np.arange(len(v_b_per_window))
    ax.plot(idx, v_b_per_window, marker="o", color="tab:blue",
            label=r"$V_B$ per window")
    ax.axhline(1.0 + v_el, color="tab:red", linestyle="--",
               label=r"$1 + v_{el}$")
    ax.axhline(1.0, color="gray", linestyle=":", label="shot noise")
    ax.set_xlabel("window index")
    ax.set_ylabel("variance (SNU)")
    ax.set_title("Windowed coherent-state variance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_characterization(records, path):
    """Bar chart of open/closed slope variances per setting.

    ``records`` holds (setting_label, loop_mode_value, slope_variance).
    """
    labels = []
    opens, closeds = [], []
    for label, mode, sv in records:
        if mode == "open":
            labels.append(label)
            opens.append(sv)
        else:
            closeds.append(sv)
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    width = 0.38
    ax.bar(x - width / 2, opens, width, label="open loop", color="tab:red")
    if closeds:
        ax.bar(x + width / 2, closeds, width, label="closed loop",
               color="tab:blue")
    ax.set_xticks(x, labels)
    ax.set_yscale("log")
    ax.set_ylabel("slope variance")
    ax.set_title("Turbulence characterisation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
