"""Figures for CLI reports. matplotlib is imported lazily and optional."""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("plotting needs matplotlib (pip install 'pclaser[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({
        "figure.figsize": (4.5, 3.4),
        "font.size": 9,
        "axes.linewidth": 0.8,
        "xtick.direction": "in",
        "ytick.direction": "in",
        "legend.frameon": False,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    })
    return plt


def plot_lasing_curve(path, l_in_uW, l_out_uW, threshold_uW=None, label=None):
    plt = _pyplot()
    fig, (ax_lin, ax_log) = plt.subplots(1, 2, figsize=(7.5, 3.2))
    ax_lin.plot(l_in_uW, l_out_uW, "-", lw=1.2, label=label)
    if threshold_uW:
        for ax in (ax_lin, ax_log):
            ax.axvline(threshold_uW, color="0.5", ls=":", lw=0.8)
    ax_lin.set_xlabel(r"$L_{in}$ ($\mu$W)")
    ax_lin.set_ylabel(r"$L_{out}$ ($\mu$W)")
    pos = (l_in_uW > 0) & (l_out_uW > 0)
    ax_log.loglog(l_in_uW[pos], l_out_uW[pos], "-", lw=1.2)
    ax_log.set_xlabel(r"$L_{in}$ ($\mu$W)")
    if label:
        ax_lin.legend()
    fig.savefig(Path(path))
    plt.close(fig)


def plot_trace(path, t_ps, series: dict, ylabel="intensity (arb. u.)", logy=True):
    """One or more named series against time; log scale by default."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    for name, y in series.items():
        style = "." if name in ("data", "measured") else "-"
        ax.plot(t_ps, y, style, ms=2, lw=1.2, label=name)
    if logy:
        ax.set_yscale("log")
        top = max(max(y) for y in series.values())
        ax.set_ylim(top * 1e-3, top * 2)
    ax.set_xlabel("time (ps)")
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    fig.savefig(Path(path))
    plt.close(fig)
