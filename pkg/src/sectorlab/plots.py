"""SVG scatter plots of pairing values against the sector boundary."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["sector_plot", "emit_plots"]


def sector_plot(values, theta: float, path, title: str = "") -> Path:
    """Scatter of complex ``values`` with the rays ``arg = +-theta`` overlaid."""
    values = np.asarray(values, dtype=complex).ravel()
    plt.rcParams["svg.hashsalt"] = "sectorlab"
    fig, ax = plt.subplots(figsize=(5, 4))
    if len(values):
        ax.scatter(values.real, values.imag, s=4, alpha=0.5, color="tab:blue", label="pairings")
        r = float(np.max(np.abs(values))) * 1.1 or 1.0
    else:
        r = 1.0
    for sign in (1, -1):
        ax.plot([0, r * math.cos(theta)], [0, sign * r * math.sin(theta)], color="tab:red", lw=1)
    ax.axhline(0, color="0.7", lw=0.5)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title or f"sector half-angle {math.degrees(theta):.2f} deg")
    ax.set_aspect("equal", adjustable="datalim")
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def emit_plots(samples: dict, thetas: dict, out_dir, prefix: str = "numrange") -> list:
    """One SVG per exponent; ``samples`` and ``thetas`` are keyed by ``p``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for p in sorted(thetas):
        name = f"{prefix}_p{p:g}.svg"
        paths.append(sector_plot(samples.get(p, []), thetas[p], out_dir / name, f"p = {p:g}"))
    return paths
