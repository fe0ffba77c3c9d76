"""Young/old comparison report: one CSV of summary metrics plus a couple
of matplotlib figures rendered to files."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from nrv.vesselness import connected_components  # noqa: E402
from nrv.views import fiber_density, percentage_difference  # noqa: E402
from nrv.volume import Volume3D, foreground_mask, histogram  # noqa: E402

__all__ = ["write_report"]


def _cell(value) -> str:
    return str(value) if isinstance(value, int) else f"{value:.6f}"


def _metrics(v: Volume3D, threshold: float) -> dict:
    mask = foreground_mask(v, threshold)
    comps = connected_components(mask, provenance=v.provenance)
    summary = histogram(v)
    return {
        "density_percent": fiber_density(mask),
        "component_count": len(comps),
        "intensity_mean": float(v.data.mean()),
        "intensity_p95": float(summary.percentiles[95]),
        "intensity_max": float(v.data.max()),
    }


def _slice_figure(young: Volume3D, old: Volume3D, path: Path) -> None:
    z = young.dims[2] // 2
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5))
    for ax, v, label in ((axes[0], young, "young"), (axes[1], old, "old")):
        plane = v.data[:, :, min(z, v.dims[2] - 1)]
        vmax = float(plane.max()) or 1.0
        ax.imshow(plane.T, cmap="gray", origin="lower", vmin=0.0, vmax=vmax)
        ax.set_title(f"{label} (z={min(z, v.dims[2] - 1)})")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def _density_figure(young_pct: float, old_pct: float, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    bars = ax.bar(["young", "old"], [young_pct, old_pct],
                  color=["#3a9d5d", "#b03a3a"])
    for bar, value in zip(bars, (young_pct, old_pct)):
        ax.annotate(f"{value:.1f}%", (bar.get_x() + bar.get_width() / 2,
                                      bar.get_height()),
                    ha="center", va="bottom")
    ax.set_ylabel("fiber density (% of voxels)")
    ax.set_ylim(0, max(young_pct, old_pct, 1.0) * 1.2)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def write_report(young: Volume3D, old: Volume3D, out_dir: str | Path,
                 threshold: float = 0.1) -> dict[str, Path]:
    """Write metrics.csv, slices.png and densities.png under out_dir and
    return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    young_m = _metrics(young, threshold)
    old_m = _metrics(old, threshold)

    csv_path = out_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "young", "old"])
        for key in young_m:
            writer.writerow([key, _cell(young_m[key]), _cell(old_m[key])])
        drop = percentage_difference(young_m["density_percent"],
                                     old_m["density_percent"])
        writer.writerow(["density_percentage_difference", f"{drop:.6f}", ""])

    slices_path = out_dir / "slices.png"
    _slice_figure(young, old, slices_path)
    densities_path = out_dir / "densities.png"
    _density_figure(young_m["density_percent"], old_m["density_percent"],
                    densities_path)
    return {"csv": csv_path, "slices": slices_path,
            "densities": densities_path}
