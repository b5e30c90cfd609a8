"""Synthetic datasets drawn from the segmentation model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import _cholesky, KERNEL
from .model import InvalidArgument, KernelParams, Sequence


@dataclass(frozen=True)
class Truth:
    seq_id: str
    boundaries: list  # segment start indices, first is 0
    labels: list  # generating kernel per segment
    kernels: list
    beta: float

    def to_dict(self) -> dict:
        return {
            "seq_id": self.seq_id,
            "boundaries": [int(b) for b in self.boundaries],
            "labels": [int(z) for z in self.labels],
            "kernels": [{"amp2": k.amp2, "ls2": k.ls2} for k in self.kernels],
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Truth":
        return cls(
            str(d["seq_id"]),
            [int(b) for b in d["boundaries"]],
            [int(z) for z in d["labels"]],
            [KernelParams(float(k["amp2"]), float(k["ls2"])) for k in d["kernels"]],
            float(d["beta"]),
        )

    def segments(self, n: int) -> list[tuple[int, int]]:
        ends = list(self.boundaries[1:]) + [n]
        return list(zip(self.boundaries, ends))

    def timestep_labels(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=int)
        for (s, e), z in zip(self.segments(n), self.labels):
            out[s:e] = z
        return out


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic draw.  ``horizons`` are sequence lengths in x-units."""

    horizons: list
    kernels: list
    beta: float
    lam: float = 0.25
    dt: float = 0.1
    pi: list | None = None
    alpha0: float | None = None
    ids: list | None = None
    seed: int = 0
    # optional fixed segmentations: one dict per sequence with "boundaries" and "labels"
    segments: list | None = field(default=None)

    def __post_init__(self):
        bad = []
        if not self.lam > 0:
            bad.append("lambda")
        if not self.beta > 0:
            bad.append("beta")
        if not self.dt > 0:
            bad.append("dt")
        if not self.horizons or any(not h > 0 for h in self.horizons):
            bad.append("horizons")
        if not self.kernels:
            bad.append("kernels")
        if self.pi is not None:
            p = np.asarray(self.pi, dtype=float)
            if len(p) != len(self.kernels) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
                bad.append("pi")
        if self.alpha0 is not None and not self.alpha0 > 0:
            bad.append("alpha0")
        if self.ids is not None and len(self.ids) != len(self.horizons):
            bad.append("ids")
        if self.segments is not None and len(self.segments) != len(self.horizons):
            bad.append("segments")
        if bad:
            raise InvalidArgument("invalid generator field(s): " + ", ".join(bad))

    @property
    def seq_ids(self) -> list[str]:
        return list(self.ids) if self.ids is not None else [f"seq{d}" for d in range(len(self.horizons))]


def grid(horizon: float, dt: float) -> np.ndarray:
    n = max(1, int(round(horizon / dt)))
    return np.arange(n) * dt


def sample_boundaries(n: int, dt: float, lam: float, rng: np.random.Generator) -> list[int]:
    """Segment starts from i.i.d. Exp(lam) lengths laid along a uniform grid; last one truncated."""
    starts = [0]
    t = 0.0
    horizon = n * dt
    while True:
        t += rng.exponential(1.0 / lam)
        if t >= horizon:
            break
        idx = int(round(t / dt))
        if starts[-1] < idx < n:
            starts.append(idx)
    return starts


def draw_segment(xs: np.ndarray, params: KernelParams, beta: float, rng: np.random.Generator) -> np.ndarray:
    K = KERNEL.gram(xs - xs[0], params)
    K[np.diag_indices(len(xs))] += beta
    L, _ = _cholesky(K, params.amp2)
    return L @ rng.standard_normal(len(xs))


def _fill(x, boundaries, labels, kernels, beta, rng):
    n = len(x)
    y = np.empty(n)
    ends = list(boundaries[1:]) + [n]
    for s, e, z in zip(boundaries, ends, labels):
        y[s:e] = draw_segment(x[s:e], kernels[z], beta, rng)
    return y


def check_boundaries(boundaries, labels, n: int, M: int) -> None:
    b = list(boundaries)
    if not b or b[0] != 0:
        raise InvalidArgument("boundaries must start at index 0")
    if any(e <= s for s, e in zip(b, b[1:] + [n])):
        raise InvalidArgument("zero-length or unordered segment in boundaries")
    if b[-1] >= n:
        raise InvalidArgument("boundary beyond sequence end")
    if len(labels) != len(b):
        raise InvalidArgument("one label per segment required")
    if any(not 0 <= z < M for z in labels):
        raise InvalidArgument("label outside kernel range")


def sample_dataset(spec: GeneratorSpec, rng: np.random.Generator | None = None):
    """Draw a dataset from the generative model; returns ``(data, truths)``."""
    rng = rng or np.random.default_rng(spec.seed)
    M = len(spec.kernels)
    if spec.pi is not None:
        pi = np.asarray(spec.pi, dtype=float)
    elif spec.alpha0 is not None:
        pi = rng.dirichlet(np.full(M, spec.alpha0))
    else:
        pi = np.full(M, 1.0 / M)
    data, truths = [], []
    for d, (sid, horizon) in enumerate(zip(spec.seq_ids, spec.horizons)):
        x = grid(horizon, spec.dt)
        if spec.segments is not None:
            bnd = [int(b) for b in spec.segments[d]["boundaries"]]
            labels = [int(z) for z in spec.segments[d]["labels"]]
        else:
            bnd = sample_boundaries(len(x), spec.dt, spec.lam, rng)
            labels = rng.choice(M, size=len(bnd), p=pi).tolist()
        check_boundaries(bnd, labels, len(x), M)
        y = _fill(x, bnd, labels, spec.kernels, spec.beta, rng)
        data.append(Sequence(sid, x, y))
        truths.append(Truth(sid, bnd, labels, list(spec.kernels), spec.beta))
    return data, truths


def equal_boundaries(n: int, count: int) -> list[int]:
    if not 1 <= count <= n:
        raise InvalidArgument(f"cannot split {n} points into {count} segments")
    return [int(round(k * n / count)) for k in range(count)]


def _resolve_segments(segments, dt: float):
    resolved, horizons = [], []
    for seg in segments:
        h = float(seg["horizon"])
        n = len(grid(h, dt))
        if "num_equal_segments" in seg:
            bnd = equal_boundaries(n, int(seg["num_equal_segments"]))
        else:
            bnd = [int(b) for b in seg["boundaries"]]
        labels = [int(z) for z in seg.get("labels", [0])]
        if len(labels) == 1 and len(bnd) > 1:
            labels = labels * len(bnd)
        resolved.append({"boundaries": bnd, "labels": labels})
        horizons.append(h)
    return resolved, horizons


def fixed_segmentation_dataset(segments, kernels, beta: float, rng: np.random.Generator, dt: float = 0.1, ids=None):
    """Dataset with prescribed segmentations.

    ``segments`` holds one dict per sequence with ``horizon`` and either ``boundaries``
    (start indices) or ``num_equal_segments``, plus ``labels`` (defaults to kernel 0).
    """
    resolved, horizons = _resolve_segments(segments, dt)
    spec = GeneratorSpec(horizons, list(kernels), beta, dt=dt, ids=ids, segments=resolved)
    return sample_dataset(spec, rng)


def spec_from_dict(d: dict) -> GeneratorSpec:
    """Parse a generator config; raises InvalidArgument naming the offending field."""
    d = dict(d)
    d.pop("version", None)
    try:
        kernels = [KernelParams(float(k["amp2"]), float(k["ls2"])) for k in d.pop("kernels")]
    except (KeyError, TypeError, ValueError) as err:
        raise InvalidArgument(f"invalid generator field(s): kernels ({err})") from None
    if "segments" in d and d["segments"] is not None:
        segs = d.pop("segments")
        resolved, horizons = _resolve_segments(segs, float(d.get("dt", 0.1)))
        d["segments"] = resolved
        d.setdefault("horizons", horizons)
    known = {"horizons", "beta", "lambda", "dt", "pi", "alpha0", "ids", "seed", "segments"}
    unknown = set(d) - known
    if unknown:
        raise InvalidArgument("unknown generator field(s): " + ", ".join(sorted(unknown)))
    missing = {"horizons", "beta"} - set(d)
    if missing:
        raise InvalidArgument("missing generator field(s): " + ", ".join(sorted(missing)))
    kw = {k: v for k, v in d.items() if k != "lambda"}
    if "lambda" in d:
        kw["lam"] = float(d["lambda"])
    try:
        return GeneratorSpec(kernels=kernels, **kw)
    except TypeError as err:
        raise InvalidArgument(f"invalid generator config: {err}") from None
