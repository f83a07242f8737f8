"""Plot the CSV timelines written by `mfcca run`.

usage: python plot_timelines.py OUT_DIR [--save FIG.png]
"""

import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def load(path):
    df = pd.read_csv(path)
    df["window_end"] = pd.to_datetime(df["window_end"], unit="ms", utc=True)
    return df


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--save", type=Path)
    args = ap.parse_args()

    fig, axes = plt.subplots(4, 1, figsize=(10, 12), sharex=True)
    ax_spec, ax_tail, ax_rho, ax_mst = axes

    for f in sorted(args.out_dir.glob("spectrum_*.csv")):
        df = load(f)
        ax_spec.plot(df["window_end"], df["delta_alpha"], label=f.stem[9:])
    ax_spec.set_ylabel("Δα")

    for f in sorted(args.out_dir.glob("tails_*.csv")):
        df = load(f)
        ax_tail.plot(df["window_end"], df["gamma"], label=f.stem[6:])
    ax_tail.axhline(2.0, color="k", lw=0.8, ls="--")
    ax_tail.set_ylabel("γ")

    for f in sorted(args.out_dir.glob("rho_*.csv")):
        df = load(f)
        for (q, s), g in df.groupby(["q", "s"]):
            ax_rho.plot(g["window_end"], g["rho"], label=f"{f.stem[4:]} q={q} s={s}")
    ax_rho.set_ylabel("ρ(q,s)")

    mst = args.out_dir / "mst_metrics.csv"
    if mst.exists():
        df = load(mst)
        for (q, s), g in df.groupby(["q", "s"]):
            ax_mst.plot(g["window_end"], g["mean_L"], label=f"q={q} s={s}")
    ax_mst.set_ylabel("⟨L⟩")

    for ax in axes:
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize="small")
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
