"""PNG figures for the run report. Rendering uses the Agg backend only."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path, provenance):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # no Software/date stamps so identical inputs give identical bytes
    fig.savefig(path, dpi=100, metadata={"Software": None, "Description": provenance.header()})
    plt.close(fig)
    return path


def sd_density_figure(density_frame, reference_c, path, provenance):
    """Density and cumulative curves of pooled per-second SDs, full range and tail."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, view, title in zip(axes, ("full", "tail"), ("All seconds", f"SD > {reference_c:g}")):
        part = density_frame[density_frame["view"] == view]
        ax.plot(part["sd_value"], part["density"], color="tab:blue", label="density")
        ax.set_xlabel("per-second SD (g)")
        ax.set_ylabel("density")
        ax.set_title(title)
        twin = ax.twinx()
        twin.plot(part["sd_value"], part["cumulative"], color="tab:orange", label="cumulative")
        twin.set_ylim(0, 1.05)
        twin.set_ylabel("cumulative")
        if view == "full":
            ax.axvline(reference_c, color="grey", linestyle="--")
    return _save(fig, path, provenance)


def ps_curve_figure(curve_frame, threshold, chosen_k, path, provenance, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve_frame["k"], curve_frame["ps_mean"], marker="o")
    ax.fill_between(curve_frame["k"], curve_frame["ps_min"], curve_frame["ps_max"], alpha=0.2)
    ax.axhline(threshold, color="grey", linestyle="--")
    ax.axvline(chosen_k, color="tab:red", linestyle=":")
    ax.set_xlabel("k")
    ax.set_ylabel("prediction strength")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    return _save(fig, path, provenance)


def centroid_figure(centroids, start_minute, bin_minutes, path, provenance, title=""):
    centroids = np.asarray(centroids)
    hours = (start_minute + bin_minutes * np.arange(centroids.shape[1])) / 60.0
    fig, ax = plt.subplots(figsize=(8, 4))
    for j, c in enumerate(centroids):
        ax.plot(hours, c, label=f"C{j + 1}")
    ax.set_xlabel("hour of day")
    ax.set_ylabel("mean CPM")
    ax.set_title(title)
    ax.legend(fontsize="small", ncol=2)
    return _save(fig, path, provenance)


def correlation_figure(matrix, path, provenance):
    fig, ax = plt.subplots(figsize=(7, 6))
    values = matrix.to_numpy(dtype=float)
    image = ax.imshow(np.ma.masked_invalid(values), cmap="RdBu_r", vmin=-1, vmax=1)
    ax.set_xticks(range(len(matrix.columns)), matrix.columns, rotation=90, fontsize="small")
    ax.set_yticks(range(len(matrix.index)), matrix.index, fontsize="small")
    fig.colorbar(image, ax=ax, label="Pearson r")
    fig.tight_layout()
    return _save(fig, path, provenance)
