"""SVG rendering of a segmented sequence: data coloured by MAP kernel over split marginals."""

from __future__ import annotations

import os

import numpy as np

from .features import timestep_labels


def svg_paths(path: str, seq_ids) -> list[str]:
    """One output file per sequence; a single sequence writes ``path`` itself."""
    if len(seq_ids) == 1:
        return [path]
    stem, ext = os.path.splitext(path)
    return [f"{stem}-{sid}{ext or '.svg'}" for sid in seq_ids]


def plot_sequence(path: str, seq, marginals, samples, labels, M: int, truth=None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "segseq"
    colors = plt.get_cmap("tab10")
    per_t = timestep_labels(samples, labels, M)

    fig, (ax_y, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(9, 4.5), height_ratios=(2, 1))
    x, y = seq.x, seq.y
    ax_y.plot(x, y, color="0.75", lw=0.8, zorder=1)
    change = np.flatnonzero(np.diff(per_t)) + 1
    for s, e in zip(np.r_[0, change], np.r_[change, len(x)]):
        hi = min(e + 1, len(x))
        ax_y.plot(x[s:hi], y[s:hi], color=colors(int(per_t[s]) % 10), lw=1.4, zorder=2)
    if truth is not None:
        for b in truth.boundaries[1:]:
            for ax in (ax_y, ax_p):
                ax.axvline(x[b], color="k", ls=":", lw=0.7)
    ax_y.set_ylabel("y")
    ax_y.set_title(f"{seq.id}: colours = MAP kernel")
    ax_p.plot(x[1:], marginals, color="C3", lw=1.0)
    ax_p.set_ylim(0, 1.02)
    ax_p.set_ylabel("P(split)")
    ax_p.set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_report(path: str, data, result, M: int, truths=None) -> list[str]:
    paths = svg_paths(path, result.seq_ids)
    truth_by_id = {t.seq_id: t for t in truths} if truths else {}
    for p, seq, m, samples, labels in zip(paths, data, result.marginals, result.samples, result.labels):
        plot_sequence(p, seq, m, samples, labels, M, truth_by_id.get(seq.id))
    return paths
