"""Static SVG figures rendered next to the CSV outputs.

Figures are deliberately plain: log-log curves for rate tables, a heatmap
for 2-d fields.  Timestamps are stripped and the hash salt pinned so plot
files stay stable across reruns of the same run.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "pinftylab"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}, "bbox_inches": "tight"}


def save_rate_plot(rows, fit, path) -> None:
    """Error and available bounds against p on log-log axes."""
    ps = [r.p for r in rows if math.isfinite(r.p)]
    errs = [r.sup_error for r in rows if math.isfinite(r.p)]
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(ps, errs, "ko-", label="sup error")
    gen = [(r.p, r.bound_general) for r in rows if r.bound_general is not None and math.isfinite(r.p)]
    pos = [(r.p, r.bound_posgrad) for r in rows if r.bound_posgrad is not None and math.isfinite(r.p)]
    if gen:
        ax.loglog([q[0] for q in gen], [q[1] for q in gen], "b--", label="general bound")
    if pos:
        ax.loglog([q[0] for q in pos], [q[1] for q in pos], "r:", label="positive-gradient bound")
    if fit is not None:
        lbl = f"fit slope {fit.exponent:.3f}"
        fitted = [math.exp(fit.intercept + fit.exponent * math.log(p)) for p in ps]
        ax.loglog(ps, fitted, "k--", alpha=0.5, label=lbl)
    ax.set_xlabel("p")
    ax.set_ylabel("sup error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_field_heatmap(grid, fld, path, title: str = "") -> None:
    """2-d field heat map; NaN (undefined) nodes render blank."""
    if grid.dim != 2:
        raise ValueError("heatmap plots need a 2-d grid")
    dense = grid.to_dense(fld.values)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(
        dense.T,
        origin="lower",
        extent=(grid.box[0, 0], grid.box[0, 1], grid.box[1, 0], grid.box[1, 1]),
        aspect="equal",
    )
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_radial_example_plot(ps, errors, lower_bounds, bounds, path) -> None:
    """Closed-form radial example: exact error, half-point bound, rate bound."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(ps, errors, "ko-", label="exact sup error")
    ax.loglog(ps, lower_bounds, "g^-", label="half-point lower value")
    if any(b is not None for b in bounds):
        kept = [(p, b) for p, b in zip(ps, bounds) if b is not None]
        ax.loglog([q[0] for q in kept], [q[1] for q in kept], "r:", label="rate bound")
    ax.set_xlabel("p")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
