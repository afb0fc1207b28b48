"""Figures from sweep summaries.  The CSV stays the primary output; these are renderings of it."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# (x column, y column, file stem, axis labels, log-y)
FIGURES = [
    ("snr_db", "success_rate", "success_vs_snr", ("SNR (dB)", "success rate"), False),
    ("snr_db", "mean_nmse", "nmse_vs_snr", ("SNR (dB)", "mean NMSE"), True),
    ("n", "mean_wall_time", "runtime_vs_n", ("n", "mean wall time (s)"), True),
    ("n", "mean_samples_unique", "samples_vs_n", ("n", "mean unique samples"), True),
    ("mean_samples_unique", "mean_nmse", "nmse_vs_samples", ("mean unique samples", "mean NMSE"), True),
]
SERIES_KEYS = ("q", "n", "S", "b", "C", "regime", "p1", "t", "snr_db")


def _float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _series(rows, x):
    """Group rows by every parameter column that varies, except the x axis."""
    varying = [k for k in SERIES_KEYS if k != x and len({r.get(k) for r in rows}) > 1]
    groups = {}
    for r in rows:
        label = ", ".join(f"{k}={r[k]}" for k in varying)
        groups.setdefault(label, []).append(r)
    return groups


def plot_summary(rows, outdir, fmt="png") -> list:
    """Write every figure whose x column takes at least two values; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for x, y, stem, (xlabel, ylabel), logy in FIGURES:
        usable = [r for r in rows if _float(r.get(x)) is not None and _float(r.get(y)) is not None]
        if len({_float(r[x]) for r in usable}) < 2:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, rs in sorted(_series(usable, x).items()):
            pts = sorted((_float(r[x]), _float(r[y])) for r in rs)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label or None)
        if logy and all(_float(r[y]) > 0 for r in usable):
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if ax.get_legend_handles_labels()[1]:
            ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(outdir, f"{stem}.{fmt}")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths
