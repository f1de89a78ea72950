"""Figure rendering for plecho result tables.

Five figure kinds: sweep (infidelity vs sweep time), pulse (control traces),
populations (Fock-state weights over the pulse), echo (amplitude and phase
panels) and ldos (filtered spectral density with optional one-sigma band and
exact-overlap bars). The renderer never recomputes physics: values are
plotted exactly as read.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .tables import ParseError, read_table

FIGURE_KINDS = ("sweep", "pulse", "populations", "echo", "ldos")
_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "plecho",
}


def render(kind: str, inputs: list, out_path: str, band: bool = True,
           bars: bool = True, dpi: int = 110) -> None:
    if kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}")
    tables = [read_table(p) for p in inputs]
    if not tables:
        raise ValueError("need at least one input table")
    with plt.rc_context(_STYLE):
        fig = _RENDERERS[kind](tables, band=band, bars=bars)
        fig.savefig(out_path, dpi=dpi, metadata={"Software": "plecho-viz"})
        plt.close(fig)


def _fig_sweep(tables, **_):
    fig, ax = plt.subplots()
    for t in tables:
        t.require("tau_total", "infidelity")
        label = t.meta.get("label", t.path)
        ax.plot(t.column("tau_total"), t.column("infidelity"), marker="o", label=label)
    ax.set_xlabel(r"sweep time $\tau_\mathrm{total}$ [$1/t$]")
    ax.set_ylabel("ground-state infidelity")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    return fig


def _fig_pulse(tables, **_):
    fig, ax = plt.subplots()
    names = [("t_x", r"$t_x$"), ("t_x_prime", r"$t_x'$"), ("t_y", r"$t_y$")]
    for t in tables:
        t.require("step", *[n for n, _ in names])
        dt = float(t.meta.get("dt", 1.0))
        time = t.column("step") * dt
        for name, pretty in names:
            ax.step(time, t.column(name), where="post", label=pretty)
    ax.set_xlabel(r"pulse time [$1/t$]")
    ax.set_ylabel(r"hopping amplitude [$t$]")
    title = tables[0].meta.get("pair_kind", "")
    if title:
        fid = tables[0].meta.get("fidelity")
        ax.set_title(f"pair {title}" + (f", fidelity {float(fid):.4f}" if fid else ""))
    ax.legend(ncol=3)
    fig.tight_layout()
    return fig


def _fig_populations(tables, **_):
    fig, ax = plt.subplots()
    t = tables[0]
    t.require("step")
    states = [c for c in t.columns if c != "step"]
    if not states:
        raise ParseError(f"{t.path}: population table without state columns")
    for name in states[:12]:
        ax.plot(t.column("step"), 100 * t.column(name), label=name)
    ax.set_xlabel("pulse step")
    ax.set_ylabel("population [%]")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    return fig


def _fig_echo(tables, **_):
    fig, (ax_r, ax_phi) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
    for t in tables:
        t.require("tau", "r")
        label = t.meta.get("provenance", t.path)
        tau = t.column("tau")
        ax_r.plot(tau, t.column("r"), label=label)
        phi_col = "phi_display" if t.has_column("phi_display") else "phi"
        if t.has_column(phi_col):
            ax_phi.plot(tau, t.column(phi_col), label=label)
    ax_r.set_ylabel(r"amplitude $r(\tau)$")
    ax_phi.set_ylabel(r"phase $\phi(\tau)$ [rad]")
    ax_phi.set_xlabel(r"time $\tau$ [$1/t$]")
    ax_r.legend()
    fig.tight_layout()
    return fig


def _fig_ldos(tables, band=True, bars=True, **_):
    fig, ax = plt.subplots()
    overlap_tables = [t for t in tables if t.has_column("weight")]
    curve_tables = [t for t in tables if not t.has_column("weight")]
    for t in curve_tables:
        t.require("energy")
        e = t.column("energy")
        label = f"$\\delta = {float(t.meta.get('delta', 0)):g}t$"
        main = t.column("density") if t.has_column("density") else t.column("exact")
        line, = ax.plot(e, main, label=label)
        if band and t.has_column("sigma"):
            sigma = t.column("sigma")
            ax.fill_between(e, main - sigma, main + sigma,
                            color=line.get_color(), alpha=0.25, linewidth=0)
        if t.has_column("density") and t.has_column("exact"):
            ax.plot(e, t.column("exact"), linestyle="--", color="goldenrod",
                    label="exact")
    if bars:
        for t in overlap_tables:
            t.require("energy", "weight")
            ax.bar(t.column("energy"), t.column("weight"), width=0.08,
                   color="0.5", alpha=0.8, label="eigenstate overlaps")
    ax.set_xlabel(r"energy $E$ [$t$]")
    ax.set_ylabel(r"filtered density $D_\delta(E)$")
    handles, labels = ax.get_legend_handles_labels()
    seen = {}
    for h, l in zip(handles, labels):
        seen.setdefault(l, h)
    ax.legend(seen.values(), seen.keys())
    fig.tight_layout()
    return fig


_RENDERERS = {
    "sweep": _fig_sweep,
    "pulse": _fig_pulse,
    "populations": _fig_populations,
    "echo": _fig_echo,
    "ldos": _fig_ldos,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plecho-viz", description="Render plecho result tables to images",
    )
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input table file(s)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--no-band", action="store_true", help="suppress sigma bands")
    parser.add_argument("--no-bars", action="store_true", help="suppress overlap bars")
    parser.add_argument("--dpi", type=int, default=110)
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.inputs, args.out,
               band=not args.no_band, bars=not args.no_bars, dpi=args.dpi)
    except (ParseError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
