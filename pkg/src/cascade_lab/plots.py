"""Figure output for sweep results: matplotlib PNGs and matching gnuplot scripts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (4.5, 3.2),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

MARKERS = {"ours": "o", "influlearner": "s", "logistic": "^", "linear": "v"}

# (x label, y label, relative reference or None)
AXES = {
    "retention": ("retention rate", "MAE of total influence", None),
    "misspecification": ("assumed retention rate", "relative MAE difference", "true"),
    "nonuniform": ("sigma of retention rates", "relative MAE difference", 0.0),
}


def _series(rows):
    out = {}
    for method, param, mean, std in rows:
        out.setdefault(method, []).append((param, mean, std))
    return out


def plot_rows(rows, path, xlabel, ylabel, title=None):
    """Error-bar plot of ``(method, param, mean, std)`` rows, one line per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for method, pts in _series(rows).items():
            pts.sort()
            x, y, e = zip(*pts)
            ax.errorbar(x, y, yerr=e, marker=MARKERS.get(method, "o"), ms=4,
                        capsize=2, lw=1, label=method)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def gnuplot_script(csv_name, png_name, xlabel, ylabel, methods):
    """Script plotting an aggregated CSV (method,param,mean,std) with error bars."""
    plots = ", \\\n     ".join(
        f"'{csv_name}' using 2:(strcol(1) eq '{m}' ? $3 : 1/0):4 with yerrorlines title '{m}'"
        for m in methods
    )
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        f"set terminal pngcairo size 640,460\n"
        f"set output '{png_name}'\n"
        f"set xlabel '{xlabel}'\n"
        f"set ylabel '{ylabel}'\n"
        "set key top left\n"
        f"plot {plots}\n"
    )


def render_sweep(kind, table, outdir, truth=None):
    """Write aggregated CSV, PNG figure and gnuplot script for one sweep; returns written paths."""
    outdir = Path(outdir)
    xlabel, ylabel, ref = AXES[kind]
    if ref == "true":
        ref = truth
    rows = table.aggregate() if ref is None else table.relative(ref)
    stem = f"{kind}"
    png = plot_rows(rows, outdir / f"{stem}.png", xlabel, ylabel)
    written = [png]
    if ref is not None:
        rel = outdir / "relative.csv"
        table.write_aggregate(rel, reference=ref)
        written.append(rel)
        csv_name = rel.name
    else:
        csv_name = "aggregated.csv"
    gp = outdir / f"{stem}.gp"
    gp.write_text(gnuplot_script(csv_name, f"{stem}_gnuplot.png", xlabel, ylabel,
                                 table.methods()), encoding="utf-8")
    written.append(gp)
    return written
