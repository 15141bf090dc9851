"""Static figures for experiment results.

Each figure is written as ``<name>.png`` next to ``<name>.csv`` holding the
plotted numbers. Plotting is best effort: any failure is logged and the
CSV is still written.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

log = logging.getLogger(__name__)


def _write_source(path: Path, columns, rows) -> None:
    from .harness import to_csv_text

    path.write_text(to_csv_text(columns, rows))


def _figure(draw, png: Path) -> bool:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        draw(ax)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(png, dpi=150, metadata={"Software": None})
        plt.close(fig)
        return True
    except Exception as exc:  # images are a convenience, never fatal
        log.warning("could not render %s: %s", png.name, exc)
        return False


def plot_risk(result, out: Path) -> list[Path]:
    cols = result.columns
    i_model, i_n, i_rate, i_se = (cols.index(c) for c in ("model", "n", "rejection_rate", "se"))
    src_rows = [[r[i_model], r[i_n], r[i_rate], r[i_se]] for r in result.rows]
    csv_path, png = out / "rejection_rate.csv", out / "rejection_rate.png"
    _write_source(csv_path, ["model", "n", "rejection_rate", "se"], src_rows)

    def draw(ax):
        for model in dict.fromkeys(r[0] for r in src_rows):
            pts = [r for r in src_rows if r[0] == model]
            ax.errorbar([p[1] for p in pts], [p[2] for p in pts], yerr=[2 * p[3] for p in pts],
                        marker="o", capsize=3, label=model)
        ax.axhline(0.1, color="grey", ls="--", lw=0.8)
        ax.set_xscale("log")
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("n")
        ax.set_ylabel("rejection rate")
        ax.legend(fontsize=6, frameon=False)

    return [csv_path] + ([png] if _figure(draw, png) else [])


def plot_rate(result, out: Path) -> list[Path]:
    cols = result.columns
    rows = [r for r in result.rows if r[cols.index("bracketed")]]
    src_rows = [[r[cols.index("n")], r[cols.index("psi_star")]] for r in rows]
    csv_path, png = out / "rate.csv", out / "rate.png"
    _write_source(csv_path, ["n", "psi_star"], src_rows)

    def draw(ax):
        ns = [r[0] for r in src_rows]
        ax.loglog(ns, [r[1] for r in src_rows], "o-", label=f"detectable psi~ (slope {result.extra['slope']:.3f})")
        if ns:
            ref = src_rows[0][1]
            ax.loglog(ns, [ref * (n / ns[0]) ** -0.2 for n in ns], "--", color="grey", label="n^(-1/5)")
        ax.set_xlabel("n")
        ax.set_ylabel("psi~ at power 1/2")
        ax.legend(fontsize=7, frameon=False)

    return [csv_path] + ([png] if _figure(draw, png) else [])


def plot_calibration(draws, zeta: float, out: Path) -> list[Path]:
    csv_path, png = out / "calibration.csv", out / "calibration.png"
    _write_source(csv_path, ["rep", "normalized_T"], [[i, float(v)] for i, v in enumerate(draws)])

    def draw(ax):
        ax.hist(draws, bins=max(10, int(math.sqrt(len(draws)))), color="tab:blue", alpha=0.7)
        ax.axvline(zeta, color="tab:red", label=f"zeta = {zeta:.4g}")
        ax.set_xlabel("T / (sqrt(d) log2(d)^2)")
        ax.set_ylabel("count")
        ax.legend(frameon=False)

    return [csv_path] + ([png] if _figure(draw, png) else [])


def plot_result(result, out: Path) -> list[Path]:
    try:
        if result.command == "risk":
            return plot_risk(result, out)
        if result.command == "rate":
            return plot_rate(result, out)
    except Exception as exc:
        log.warning("plotting failed: %s", exc)
    return []
