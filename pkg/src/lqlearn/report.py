"""Static figures summarizing a training run, rendered next to its CSV."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def load_run_csv(path):
    """Columns of a run CSV as a dict of float arrays (empty cells -> nan)."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.ndim == 0:
        data = data.reshape(1)
    return {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}


def _running_mean(values, window):
    if values.size < 2 * window:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def render_run_report(csv_path, out_dir=None):
    """Render the standard four-panel run figure; returns the PNG path."""
    csv_path = Path(csv_path)
    cols = load_run_csv(csv_path)
    t = cols["t"]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))

    ax = axes[0, 0]
    err = cols.get("pi_error")
    if err is not None and np.any(np.isfinite(err)) and np.nanmax(err) > 0:
        ax.semilogy(t, err, lw=0.8)
        ax.set_ylabel("parameter error (Frobenius)")
    else:
        ax.text(0.5, 0.5, "no oracle comparison", ha="center", va="center")
    ax.set_xlabel("step")
    ax.set_title("distance to the exact value matrix")

    ax = axes[0, 1]
    window = max(1, t.size // 200)
    smoothed = _running_mean(np.abs(cols["delta"]), window)
    ax.semilogy(t[: smoothed.size], np.maximum(smoothed, 1e-300), lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("|TD residual| (running mean)")
    ax.set_title("temporal-difference residual")

    ax = axes[1, 0]
    ax.plot(t, cols["state_norm"], lw=0.5)
    if "est_error_norm" in cols:
        ax.plot(t, cols["est_error_norm"], lw=0.5, label="estimation error")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("state norm")
    ax.set_title("trajectory magnitude")

    ax = axes[1, 1]
    ax.semilogy(t, cols["alpha"], lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("learning rate")
    ax.set_title("capped learning rate")

    for ax in axes.flat:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / (csv_path.stem + ".png")
    fig.savefig(png, dpi=150)
    plt.close(fig)
    return png
