"""Log-log error charts written as standalone SVG files."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import read_table  # noqa: E402

plt.rcParams["svg.hashsalt"] = "subhomog"


def slope_guide(x, order: float, anchor_x: float, anchor_y: float) -> np.ndarray:
    """Reference line through (anchor_x, anchor_y) with log-log slope `order`."""
    return anchor_y * (np.asarray(x, float) / anchor_x) ** order


def _median_curves(rows, xkey, ykey, group):
    acc = defaultdict(lambda: defaultdict(list))
    for row in rows:
        acc[group(row)][row[xkey]].append(row[ykey])
    return {g: (np.array(sorted(c)), np.array([np.median(c[x]) for x in sorted(c)])) for g, c in acc.items()}


def _chart(path, curves, xlabel, ylabel, guides=(), title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    ys = []
    for label, (x, y) in curves.items():
        ax.loglog(x, y, "o-", label=label)
        ys.append(y)
    if guides:
        x = np.unique(np.concatenate([c[0] for c in curves.values()]))
        anchor = float(np.min(np.concatenate(ys)))
        for order in guides:
            ax.loglog(x, slope_guide(x, order, x.min(), anchor), "k--" if order == 1 else "k:",
                      lw=0.8, label=f"O(H^{order})" if order != 1 else "O(H)")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def emit_plots(csv_paths, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for csv_path in map(Path, csv_paths):
        kind, rows = read_table(csv_path)
        stem = out_dir / csv_path.stem
        by_ratio = lambda r: f"h/H={r['ratio']}"
        if kind == "ideal-sweep":
            written.append(_chart(f"{stem}_energy.svg", _median_curves(rows, "H", "e1", by_ratio),
                                  "H", "energy error", guides=(1,)))
            written.append(_chart(f"{stem}_l2.svg", _median_curves(rows, "H", "e0", by_ratio),
                                  "H", "L2 error", guides=(2,)))
        elif kind == "localized-sweep":
            for l in sorted({r["l"] for r in rows}):
                sub = [r for r in rows if r["l"] == l]
                for key, name, order in (("e1_galerkin", "galerkin_energy", 1), ("e0_galerkin", "galerkin_l2", 2),
                                         ("e1", "recovery_energy", 1), ("e0", "recovery_l2", 2)):
                    written.append(_chart(f"{stem}_l{l}_{name}.svg", _median_curves(sub, "H", key, by_ratio),
                                          "H", name.replace("_", " ") + " error", guides=(order,),
                                          title=f"l = {l}"))
        elif kind == "weighted-sweep":
            by_variant = lambda r: f"a = {'1' if r['variant'] == 'unit' else 'W'}"
            written.append(_chart(f"{stem}_h1.svg", _median_curves(rows, "h", "e1", by_variant),
                                  "h", "H1_0 error"))
            written.append(_chart(f"{stem}_l2.svg", _median_curves(rows, "h", "e0", by_variant),
                                  "h", "L2 error"))
        else:
            fig, ax = plt.subplots(figsize=(5, 4))
            for key, curve in _median_curves(rows, "k", "tail", lambda r: (r["H"], r["ratio"], r["cell"])).items():
                k, tail = curve
                keep = tail > 0
                ax.semilogy(k[keep], tail[keep], "o-", label=f"H={key[0]:g}, h/H={key[1]}, cell {key[2]}")
            ax.set_xlabel("layer k")
            ax.set_ylabel("tail energy")
            ax.legend(fontsize=7)
            fig.tight_layout()
            path = Path(f"{stem}_tails.svg")
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
