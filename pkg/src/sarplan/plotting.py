"""Mission figures: hillshaded terrain with visibility overlays, segments and connectors."""

from __future__ import annotations

import io
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LightSource, ListedColormap  # noqa: E402

from .dubins import sample_path  # noqa: E402
from .terrain import TerrainGrid  # noqa: E402
from .visibility import VisibilityMap  # noqa: E402

_OVERLAY_COLORS = plt.get_cmap("tab10").colors


def _setup_rc():
    matplotlib.rcParams["svg.hashsalt"] = "sarplan"
    matplotlib.rcParams["svg.fonttype"] = "none"
    matplotlib.rcParams["image.composite_image"] = False


def plot_mission(ax, plan, terrain: TerrainGrid, overlays: Sequence[VisibilityMap] = (), depot=None):
    """Draw terrain, overlays and plan legs onto ``ax``; artists carry stable gids."""
    elev = np.where(terrain.nodata, np.nan, terrain.elevations)
    shade = LightSource(azdeg=315, altdeg=45).hillshade(
        np.nan_to_num(elev, nan=float(np.nanmin(elev)) if np.isfinite(elev).any() else 0.0),
        vert_exag=1.0, dx=terrain.cell_size, dy=terrain.cell_size,
    )
    extent = (terrain.origin_x, terrain.origin_x + terrain.width, terrain.origin_y, terrain.origin_y + terrain.height)
    ax.imshow(shade, cmap="gray", origin="lower", extent=extent, gid="terrain", interpolation="nearest")

    for i, vis in enumerate(overlays):
        color = _OVERLAY_COLORS[i % len(_OVERLAY_COLORS)]
        cmap = ListedColormap([(0, 0, 0, 0), (*color, 0.35)])
        ax.imshow(
            vis.values, cmap=cmap, vmin=0, vmax=1, origin="lower", interpolation="nearest",
            extent=(vis.x0, vis.x0 + 2 * vis.extent_half, vis.y0, vis.y0 + 2 * vis.extent_half),
            gid=f"visibility-{vis.target_id}",
        )

    if plan is not None:
        ci = 0
        for leg in plan.legs:
            if leg.kind == "segment":
                ax.plot([leg.start.x, leg.end.x], [leg.start.y, leg.end.y], color="gold", lw=2.5,
                        gid=f"segment-{leg.target_id}", solid_capstyle="butt")
            else:
                pts = sample_path(leg.connector.path, leg.start, 100.0)
                ax.plot([p.x for p in pts], [p.y for p in pts], color="limegreen", lw=1.2, gid=f"connector-{ci}")
                ci += 1
    if depot is not None:
        ax.plot([depot[0]], [depot[1]], marker="*", color="cyan", markersize=14, ls="none", gid="depot")
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_aspect("equal")
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")


def export_svg(plan, terrain: TerrainGrid, overlays: Sequence[VisibilityMap] = (),
               depot: Optional[tuple[float, float]] = None, targets=None) -> str:
    """Render a mission figure to an SVG string; byte-identical for identical inputs."""
    _setup_rc()
    fig, ax = plt.subplots(figsize=(8, 8))
    try:
        plot_mission(ax, plan, terrain, overlays, depot)
        if targets is not None:
            ax.plot([t.x for t in targets], [t.y for t in targets], "o", color="red", markersize=4,
                    ls="none", gid="targets")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)
    return buf.getvalue()


def plot_bench(records, metric: str = "length", path=None):
    """Bar chart of benchmark means with one-stdev error bars, grouped by n."""
    _setup_rc()
    names = sorted({r.name for r in records})
    sizes = sorted({r.n for r in records})
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(1, len(names))
    for i, name in enumerate(names):
        rows = {r.n: r for r in records if r.name == name}
        xs = [j + i * width for j, n in enumerate(sizes) if n in rows]
        if metric == "length":
            ys = [rows[n].length_mean_km for n in sizes if n in rows]
            es = [rows[n].length_std_km for n in sizes if n in rows]
        else:
            ys = [rows[n].time_mean_s for n in sizes if n in rows]
            es = [rows[n].time_std_s for n in sizes if n in rows]
        ax.bar(xs, ys, width, yerr=es, label=name, capsize=2)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(sizes))])
    ax.set_xticklabels([f"n={n}" for n in sizes])
    ax.set_ylabel("length (km)" if metric == "length" else "time (s)")
    ax.legend(fontsize=7, ncol=2)
    if path is not None:
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return fig
