"""File formats: datasets, hyperparameter configs, checkpoints, ground truth and reports.

Every file this package writes carries ``"version": 1``; readers reject other versions.
"""

from __future__ import annotations

import csv
import json
import os
from collections import OrderedDict

import numpy as np

from .model import Hyperparams, InvalidArgument, KernelParams, ModelState, Segmentation, Sequence

VERSION = 1


class SchemaError(InvalidArgument):
    """A file does not match its expected schema or version."""


def _check_version(d, what: str, required: bool = True):
    if not isinstance(d, dict):
        raise SchemaError(f"{what}: expected a JSON object")
    if "version" not in d:
        if required:
            raise SchemaError(f"{what}: missing 'version' field")
        return
    if d["version"] != VERSION:
        raise SchemaError(f"{what}: unsupported version {d['version']!r} (expected {VERSION})")


def _write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")
    os.replace(tmp, path)


def _read_json(path):
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: not valid JSON ({err})") from None


def dataset_to_dict(data) -> dict:
    return {
        "version": VERSION,
        "sequences": [{"id": s.id, "x": s.x.tolist(), "y": s.y.tolist()} for s in data],
    }


def dataset_from_dict(d) -> list:
    # user-supplied datasets may omit the version
    _check_version(d, "dataset", required=False)
    if "sequences" not in d or not isinstance(d["sequences"], list):
        raise SchemaError("dataset: missing 'sequences' list")
    out = []
    for k, s in enumerate(d["sequences"]):
        try:
            out.append(Sequence(str(s["id"]), s["x"], s["y"]))
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"dataset: sequence #{k} malformed ({err})") from None
    return out


def save_dataset(path, data) -> None:
    _write_json(path, dataset_to_dict(data))


def load_dataset(path) -> list:
    """Dataset from JSON or from CSV with columns ``seq_id, x, y``."""
    if str(path).lower().endswith(".csv"):
        return _load_csv(path)
    return dataset_from_dict(_read_json(path))


def _load_csv(path) -> list:
    cols: OrderedDict = OrderedDict()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"seq_id", "x", "y"} - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"{path}: missing column(s) {sorted(missing)}")
        for row in reader:
            try:
                xs, ys = cols.setdefault(row["seq_id"], ([], []))
                xs.append(float(row["x"]))
                ys.append(float(row["y"]))
            except ValueError as err:
                raise SchemaError(f"{path}: line {reader.line_num}: {err}") from None
    return [Sequence(sid, xs, ys) for sid, (xs, ys) in cols.items()]


def save_dataset_csv(path, data) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seq_id", "x", "y"])
        for s in data:
            for x, y in zip(s.x, s.y):
                w.writerow([s.id, repr(float(x)), repr(float(y))])


def load_hyperparams(path) -> Hyperparams:
    d = _read_json(path)
    _check_version(d, "config", required=False)
    d = {k: v for k, v in d.items() if k != "version"}
    return Hyperparams.from_dict(d)


def save_hyperparams(path, hp: Hyperparams) -> None:
    _write_json(path, {"version": VERSION, **hp.to_dict()})


def checkpoint_dict(state: ModelState, hp: Hyperparams, scaling=None) -> dict:
    d = {
        "version": VERSION,
        "kernels": [{"amp2": k.amp2, "ls2": k.ls2} for k in state.kernels],
        "beta": state.beta,
        "alpha": [float(a) for a in state.alpha],
        "hyperparams": hp.to_dict(),
    }
    if scaling is not None:
        d["standardize"] = {"mean": scaling[0], "std": scaling[1]}
    return d


def save_checkpoint(path, state: ModelState, hp: Hyperparams, scaling=None) -> None:
    _write_json(path, checkpoint_dict(state, hp, scaling))


def load_checkpoint(path):
    """Returns ``(state, hp, scaling)``."""
    d = _read_json(path)
    _check_version(d, "checkpoint")
    try:
        kernels = [KernelParams(float(k["amp2"]), float(k["ls2"])) for k in d["kernels"]]
        hp = Hyperparams.from_dict(d["hyperparams"])
        state = ModelState(kernels, float(d["beta"]), np.array(d["alpha"], dtype=float))
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"checkpoint: malformed ({err})") from None
    if state.M != hp.M:
        raise SchemaError(f"checkpoint: {state.M} kernels but hyperparams M={hp.M}")
    scaling = None
    if "standardize" in d:
        scaling = (float(d["standardize"]["mean"]), float(d["standardize"]["std"]))
    return state, hp, scaling


def save_truth(path, truths) -> None:
    _write_json(path, {"version": VERSION, "truth": [t.to_dict() for t in truths]})


def load_truth(path) -> list:
    from .generator import Truth

    d = _read_json(path)
    _check_version(d, "truth")
    return [Truth.from_dict(t) for t in d["truth"]]


def marginals_records(result) -> list[dict]:
    """Split-marginal export, one ``{"seq_id", "marginal_split_prob"}`` per sequence."""
    return [
        {"seq_id": sid, "marginal_split_prob": [float(p) for p in m]}
        for sid, m in zip(result.seq_ids, result.marginals)
    ]


def report_dict(result, M: int) -> dict:
    seqs = []
    for sid, m, samples, labels in zip(result.seq_ids, result.marginals, result.samples, result.labels):
        seqs.append(
            {
                "seq_id": sid,
                "n": samples[0].n,
                "marginal_split_prob": [float(p) for p in m],
                "samples": [s.starts for s in samples],
                "labels": [list(map(int, lab)) for lab in labels],
            }
        )
    return {"version": VERSION, "M": int(M), "sequences": seqs}


def save_report(path, result, M: int) -> None:
    _write_json(path, report_dict(result, M))


def load_report(path) -> dict:
    """Segmentation report; samples are returned as :class:`Segmentation` objects."""
    d = _read_json(path)
    _check_version(d, "report")
    try:
        M = int(d["M"])
        seqs = []
        for s in d["sequences"]:
            n = int(s["n"])
            samples = [Segmentation.from_starts(s["seq_id"], st, n) for st in s["samples"]]
            labels = [list(map(int, lab)) for lab in s["labels"]]
            if len(labels) != len(samples) or any(
                len(lab) != smp.num_segments for lab, smp in zip(labels, samples)
            ):
                raise SchemaError("report: labels do not match samples")
            if any(not 0 <= z < M for lab in labels for z in lab):
                raise SchemaError("report: label outside 0..M-1")
            seqs.append({"seq_id": s["seq_id"], "n": n, "samples": samples, "labels": labels})
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"report: malformed ({err})") from None
    return {"M": M, "sequences": seqs}
