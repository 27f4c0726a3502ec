"""Matplotlib rendering of sweep results to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .comms import SE_PERCENTILES  # noqa: E402

_PNG_META = {"Software": "ristbd"}


def _grid(result, attr):
    out = {}
    for pt in result.points:
        out.setdefault(pt.n_scan, []).append((pt.gamma, getattr(pt, attr)))
    return {n: sorted(v) for n, v in out.items()}


def render_sweep_figures(result, out_dir) -> list[Path]:
    """Three-panel tradeoff figure: detection, localization, and user rate
    versus the sensing power fraction."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, (ax_pd, ax_rmse, ax_se) = plt.subplots(3, 1, figsize=(6.5, 10), sharex=True)

    for n_scan, pairs in _grid(result, "p_d").items():
        xs, ys = zip(*pairs)
        ax_pd.plot(xs, ys, "o-", label=f"{n_scan} scans")
    ax_pd.set_ylabel("detection probability")
    ax_pd.set_ylim(0.0, 1.0)
    ax_pd.grid(True, alpha=0.3)
    ax_pd.legend(fontsize=8)

    for n_scan, pairs in _grid(result, "rmse_m").items():
        xs, ys = zip(*pairs)
        ax_rmse.plot(xs, ys, "s-", label=f"{n_scan} scans")
    ax_rmse.set_ylabel("position RMSE (m)")
    ax_rmse.grid(True, alpha=0.3)
    ax_rmse.legend(fontsize=8)

    for pct in SE_PERCENTILES:
        xs = result.gammas
        ys = [result.se_by_gamma[g][pct] for g in xs]
        ax_se.plot(xs, ys, "^-", label=f"{pct}th pct")
    ax_se.set_ylabel("user SE (bit/s/Hz)")
    ax_se.set_xlabel("sensing power fraction")
    ax_se.grid(True, alpha=0.3)
    ax_se.legend(fontsize=8)

    fig.tight_layout()
    path = out / "tradeoffs.png"
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    return [path]
