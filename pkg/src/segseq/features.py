"""Sequence representations built from segmentation output: cluster strings and frequencies."""

from __future__ import annotations

import csv
import math

import numpy as np

from .model import InvalidArgument

ALPHABET = "0123456789abcdefghijklmnopqrstuvwxyz"


def _symbol(m: int) -> str:
    if not 0 <= m < len(ALPHABET):
        raise InvalidArgument(f"kernel index {m} has no symbol (at most {len(ALPHABET)} kernels)")
    return ALPHABET[m]


def timestep_labels(samples, labels, M: int) -> np.ndarray:
    """Per-timestep majority over samples of the MAP kernel of the covering segment.

    Ties go to the lowest kernel index.
    """
    if not samples:
        raise InvalidArgument("no segmentation samples")
    n = samples[0].n
    votes = np.zeros((n, M), dtype=np.int64)
    rows = np.arange(n)
    for seg, lab in zip(samples, labels):
        if len(lab) != seg.num_segments:
            raise InvalidArgument("one label per segment required")
        per_t = np.repeat(np.asarray(lab, dtype=np.intp), [e - s for s, e in seg.segments])
        np.add.at(votes, (rows, per_t), 1)
    return np.argmax(votes, axis=1)


def window_labels(per_timestep, window: int, M: int) -> list[int]:
    """Majority label of each non-overlapping window (the last one may be short)."""
    if window < 1:
        raise InvalidArgument(f"window must be >= 1, got {window}")
    per_timestep = np.asarray(per_timestep, dtype=np.intp)
    if len(per_timestep) == 0:
        raise InvalidArgument("empty label sequence")
    out = []
    for k in range(math.ceil(len(per_timestep) / window)):
        counts = np.bincount(per_timestep[k * window : (k + 1) * window], minlength=M)
        out.append(int(np.argmax(counts)))
    return out


def cluster_string(samples, labels, window: int, M: int) -> str:
    """One symbol per window of ``window`` timesteps: the most frequent kernel there."""
    if window < 1:
        raise InvalidArgument(f"window must be >= 1, got {window}")
    return "".join(_symbol(m) for m in window_labels(timestep_labels(samples, labels, M), window, M))


def frequency_vector(symbols, M: int) -> np.ndarray:
    """Normalized histogram of a cluster string (or a list of integer labels) over M kernels."""
    if len(symbols) == 0:
        raise InvalidArgument("empty cluster string")
    if isinstance(symbols, str):
        idx = [ALPHABET.index(ch) for ch in symbols]
    else:
        idx = [int(z) for z in symbols]
    if any(not 0 <= z < M for z in idx):
        raise InvalidArgument(f"symbol outside 0..{M - 1}")
    counts = np.bincount(idx, minlength=M).astype(float)
    return counts / counts.sum()


def feature_rows(report: dict, window: int) -> list[dict]:
    """Features for every sequence of a loaded segmentation report."""
    M = report["M"]
    rows = []
    for s in report["sequences"]:
        string = cluster_string(s["samples"], s["labels"], window, M)
        rows.append({"seq_id": s["seq_id"], "string": string, "freq": frequency_vector(string, M)})
    return rows


def save_features_csv(path, rows, M: int) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seq_id", "string"] + [f"f_{m}" for m in range(M)])
        for r in rows:
            w.writerow([r["seq_id"], r["string"]] + [repr(float(v)) for v in r["freq"]])
