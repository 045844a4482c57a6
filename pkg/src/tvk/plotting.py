"""SVG figures for fields, certificates and solver runs.

Figures are rendered with matplotlib's SVG backend.  A fixed hash salt
keeps element ids stable; with ``reproducible=True`` the date metadata is
dropped so reruns give identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402

from .fields import GridField, PolygonalField  # noqa: E402

STYLE = {"figure.figsize": (5.0, 4.0), "font.size": 9, "axes.spines.top": False,
         "axes.spines.right": False, "svg.hashsalt": "tvk", "svg.fonttype": "path"}


class PlotError(ValueError):
    pass


def _save(fig, path, reproducible):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if reproducible else {}
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    return path


def _region_polygons(u: PolygonalField):
    polys = [np.asarray(r) for r in u.regions]
    if u.has_background:
        lo, hi = u.domain.box
        polys.append(np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]))
    return polys


def plot_field(u, path, reproducible: bool = True, title: str = ""):
    """Step plot (1D), coloured polygons with value arrows (2D) or a grid image / quiver."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if isinstance(u, PolygonalField) and u.d == 1:
            _step_1d(ax, u)
        elif isinstance(u, PolygonalField):
            _polygons_2d(ax, u)
        elif isinstance(u, GridField):
            _grid(ax, u)
        else:
            raise PlotError(f"cannot plot {type(u).__name__}")
        if title:
            ax.set_title(title)
        return _save(fig, path, reproducible)


def _step_1d(ax, u):
    edges = [r[0] for r in u.regions] + [u.regions[-1][1]]
    vals = u.constant_values
    for k in range(u.n):
        ax.stairs(vals[:, k], edges, baseline=None, label=f"u{k + 1}", linewidth=1.5)
    ax.set_xlabel("x")
    if u.n > 1:
        ax.legend(frameon=False)


def _polygons_2d(ax, u):
    polys = _region_polygons(u)
    # draw the background first so regions sit on top
    order = ([len(polys) - 1] if u.has_background else []) + list(range(len(u.regions)))
    vals = u.constant_values if u.is_constant else u.affine[:, :, u.d]
    color = vals[:, 0] if u.n == 1 else np.linalg.norm(vals, axis=1)
    coll = PolyCollection([polys[k] for k in order], array=color[order], cmap="viridis",
                          edgecolors="k", linewidths=0.6)
    ax.add_collection(coll)
    plt.colorbar(coll, ax=ax, shrink=0.8, label="u" if u.n == 1 else "|u|")
    if u.n >= 2:
        for k in range(len(u.regions)):
            c = np.asarray(polys[k]).mean(axis=0)
            v = u.evaluate(c[None])[0][:2]
            ax.quiver(c[0], c[1], v[0], v[1], angles="xy", color="w", width=0.008)
    lo, hi = u.domain.box
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")


def _grid(ax, u):
    if u.d == 1:
        x = u.centers()[:, 0]
        for k in range(u.n):
            ax.plot(x, u.values[:, k], label=f"u{k + 1}")
        return
    lo = u.lower
    hi = [a + m * h for a, m, h in zip(lo, u.grid_shape, u.h)]
    if u.n == 1:
        img = np.where(u.mask, u.values[..., 0], np.nan).T
        im = ax.imshow(img, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap="viridis")
        plt.colorbar(im, ax=ax, shrink=0.8)
    else:
        step = max(1, max(u.grid_shape) // 24)
        c = u.centers()[::step, ::step]
        v = u.values[::step, ::step]
        m = u.mask[::step, ::step]
        ax.quiver(c[..., 0][m], c[..., 1][m], v[..., 0][m], v[..., 1][m], angles="xy", width=0.004)
        if u.domain.shape == "disc":
            cx, cy, r = u.domain.bounds
            ax.add_patch(plt.Circle((cx, cy), r, fill=False, lw=0.8))
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")


def plot_certificate(cert: dict, path, reproducible: bool = True):
    """Energy of u0 +- t z against t (decomposable) or the largest step per direction class."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if cert.get("status") == "decomposable" and "profile" in cert:
            prof = cert["profile"]
            ax.plot(prof["t"], prof["plus"], label="E(u0 + t z)")
            ax.plot(prof["t"], prof["minus"], "--", label="E(u0 - t z)")
            ax.axhline(1.0, color="0.5", lw=0.8)
            ax.axvline(cert["step"], color="C3", lw=0.8, label=f"t* = {cert['step']:.4g}")
            ax.set_xlabel("t")
            ax.set_ylabel("energy")
            ax.legend(frameon=False)
        else:
            classes = sorted(cert.get("per_class", {}))
            steps = [max(cert["per_class"][c]["max_step"], 1e-300) for c in classes]
            ax.bar(classes, steps, color="C0")
            ax.axhline(cert.get("threshold", 1e-4), color="C3", lw=0.8, label="threshold")
            ax.set_yscale("log")
            ax.set_ylabel("largest feasible step")
            ax.legend(frameon=False)
        ax.set_title(f"{cert['atom']['family']}: {cert['status']}")
        return _save(fig, path, reproducible)


def plot_gcg(state: dict, path, reproducible: bool = True):
    """Recovered step signal with atom markers over the data."""
    obs = state.get("observation")
    T = obs["T"] if obs else 1.0
    atoms_ = sorted(state["atoms"], key=lambda a: a["t"])
    const = np.asarray(state["constant"], dtype=float)
    n = len(const)
    knots = [0.0] + [a["t"] for a in atoms_] + [T]
    levels = [const.copy()]
    for a in atoms_:
        levels.append(levels[-1] + a["c"] * np.asarray(a["b"], dtype=float))
    levels = np.array(levels)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k in range(n):
            ax.stairs(levels[:, k], knots, baseline=None, color=f"C{k}", lw=1.5, label=f"u{k + 1}")
            if obs:
                f = np.asarray(obs["f"], dtype=float)
                ax.plot(obs["locations"], f[:, k], ".", color=f"C{k}", ms=3, alpha=0.6)
        for a in atoms_:
            ax.axvline(a["t"], color="0.6", lw=0.6, ls=":")
        ax.set_xlabel("t")
        ax.set_title(f"{len(atoms_)} atoms, objective {state['objective'][-1]:.6g}")
        ax.legend(frameon=False)
        return _save(fig, path, reproducible)


def plot_gap(state: dict, path, reproducible: bool = True):
    """Gap history on log axes with the 1/k reference."""
    gap = np.maximum(np.asarray(state["gap"], dtype=float), 1e-300)
    k = np.arange(1, len(gap) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(k, gap, label="gap")
        ax.loglog(k, np.minimum.accumulate(gap), label="running min")
        ax.loglog(k, gap[0] / k, "--", color="0.5", label="gap_1 / k")
        ax.set_xlabel("iteration")
        ax.legend(frameon=False)
        return _save(fig, path, reproducible)


def plot_artifact(data: dict, path, reproducible: bool = True):
    """Dispatch on the artifact schema."""
    from .io import load_field

    tag = data.get("schema", "")
    if tag == "tvk.certificate/1":
        return plot_certificate(data, path, reproducible)
    if tag == "tvk.gcg-state/1":
        return plot_gcg(data, path, reproducible)
    if data.get("type") in ("polygonal", "grid", "builtin") or "regions" in data:
        return plot_field(load_field(data), path, reproducible)
    raise PlotError(f"unknown artifact schema {tag or '(none)'}")
