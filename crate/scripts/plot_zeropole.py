"""Scatter plot of a `helm-pf zeropole` CSV.

    helm-pf zeropole networks/7bus.json --bus 1 --degree 100 > zp.csv
    python3 scripts/plot_zeropole.py zp.csv zp.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main(src, dst):
    df = pd.read_csv(src)
    fig, ax = plt.subplots(figsize=(6, 6))
    styles = {"zero": dict(marker="o", facecolors="none", edgecolors="tab:blue"),
              "pole": dict(marker="x", color="tab:red")}
    for kind, style in styles.items():
        part = df[(df.kind == kind) & (df.froissart_flag == 0)]
        ax.scatter(part.re, part.im, s=14, label=f"{kind}s", **style)
    flagged = df[df.froissart_flag == 1]
    if len(flagged):
        ax.scatter(flagged.re, flagged.im, s=10, color="0.6", label="Froissart pairs")
    ax.axvline(1.0, color="k", lw=0.5, ls=":")
    ax.set_xlabel("Re s")
    ax.set_ylabel("Im s")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    fig.savefig(dst, dpi=150, bbox_inches="tight")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
