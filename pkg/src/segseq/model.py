"""Core data types, segment-length prior and dataset validation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence as Seq

import numpy as np


class InvalidArgument(ValueError):
    """Raised on a violated precondition (non-positive rate, bad shape, ...)."""


@dataclass(frozen=True)
class Sequence:
    """One observed time series: strictly increasing stamps ``x`` and values ``y``."""

    id: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def median_dx(self) -> float:
        # N=1 has no spacing; fall back to one x-unit
        if len(self.x) < 2:
            return 1.0
        return float(np.median(np.diff(self.x)))

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if len(self.x) < 3:
            return True
        dx = np.diff(self.x)
        return bool(np.allclose(dx, dx[0], rtol=rtol, atol=0.0))


Dataset = list  # list[Sequence]


def segment_length(x: np.ndarray, start: int, end: int, median_dx: float) -> float:
    """Length in x-units of the segment covering indices ``[start, end)``.

    The final segment is extended by the median spacing so it never has zero length.
    """
    n = len(x)
    if end < n:
        return float(x[end] - x[start])
    return float(x[n - 1] - x[start]) + median_dx


@dataclass(frozen=True)
class Segmentation:
    """Binary split-indicator vector for one sequence; ``c[0]`` is always 1."""

    seq_id: str
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.int8)
        if c.ndim != 1 or len(c) == 0:
            raise InvalidArgument("split vector must be a nonempty 1-D array")
        if c[0] != 1:
            raise InvalidArgument("c[0] must be 1")
        if not np.all((c == 0) | (c == 1)):
            raise InvalidArgument("split vector must be binary")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def from_starts(cls, seq_id: str, starts: Seq[int], n: int) -> "Segmentation":
        c = np.zeros(n, dtype=np.int8)
        c[list(starts)] = 1
        return cls(seq_id, c)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def starts(self) -> list[int]:
        return np.flatnonzero(self.c).tolist()

    @property
    def num_segments(self) -> int:
        return int(self.c.sum())

    @property
    def segments(self) -> list[tuple[int, int]]:
        starts = self.starts
        ends = starts[1:] + [self.n]
        return list(zip(starts, ends))

    def lengths(self, seq: Sequence) -> list[float]:
        mdx = seq.median_dx
        return [segment_length(seq.x, s, e, mdx) for s, e in self.segments]

    def __eq__(self, other):
        if not isinstance(other, Segmentation):
            return NotImplemented
        return self.seq_id == other.seq_id and np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash((self.seq_id, self.c.tobytes()))


@dataclass(frozen=True)
class KernelParams:
    amp2: float
    ls2: float

    def __post_init__(self):
        if not (self.amp2 > 0 and self.ls2 > 0) or not (
            math.isfinite(self.amp2) and math.isfinite(self.ls2)
        ):
            raise InvalidArgument(f"kernel params must be positive and finite, got {self}")


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"lognormal sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class GibbsConfig:
    num_samples: int = 100
    burn_in: int = 50
    thinning: int = 2
    # re-burn sweeps at the start of every round after the first (chains are warm-started)
    sweeps_per_round: int = 10


@dataclass(frozen=True)
class MStepConfig:
    max_iters: int = 200
    step_size: float = 1e-3
    grad_tol: float = 1e-5
    # "gradient" for plain steepest ascent, "lbfgs" for a quasi-Newton direction
    direction: str = "lbfgs"


@dataclass(frozen=True)
class OuterConfig:
    max_rounds: int = 30
    elbo_rel_tol: float = 1e-4
    inner_repeats: int = 3
    # q(Z) <-> q(pi) coordinate-ascent passes per E step (likelihoods are reused)
    estep_iters: int = 5
    # also require max |change in E[pi]| below this before stopping
    pi_tol: float = 1e-3


@dataclass(frozen=True)
class Hyperparams:
    """Every knob of a fit.  Serialized with explicit fields; ``lam`` is ``"lambda"`` on disk."""

    lam: float = 0.25
    alpha0: float = 0.1
    M: int = 5
    lognormal_amp: LogNormal = LogNormal(math.log(0.05), 1.0)
    lognormal_ls: LogNormal = LogNormal(math.log(0.05), 1.0)
    lognormal_noise: LogNormal = LogNormal(math.log(0.01), 1.0)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    mstep: MStepConfig = field(default_factory=MStepConfig)
    outer: OuterConfig = field(default_factory=OuterConfig)
    active_threshold: float = 0.05
    standardize: bool = False
    seed: int = 0

    def __post_init__(self):
        bad = []
        if not self.lam > 0:
            bad.append("lambda")
        if not self.alpha0 > 0:
            bad.append("alpha0")
        if not (isinstance(self.M, int) and self.M >= 1):
            bad.append("M")
        g = self.gibbs
        if g.num_samples < 1:
            bad.append("gibbs.num_samples")
        if g.burn_in < 0:
            bad.append("gibbs.burn_in")
        if g.thinning < 1:
            bad.append("gibbs.thinning")
        if g.sweeps_per_round < 0:
            bad.append("gibbs.sweeps_per_round")
        if self.mstep.max_iters < 0:
            bad.append("mstep.max_iters")
        if not self.mstep.step_size > 0:
            bad.append("mstep.step_size")
        if self.mstep.grad_tol < 0:
            bad.append("mstep.grad_tol")
        if self.mstep.direction not in ("gradient", "lbfgs"):
            bad.append("mstep.direction")
        if self.outer.max_rounds < 1:
            bad.append("outer.max_rounds")
        if self.outer.inner_repeats < 1:
            bad.append("outer.inner_repeats")
        if not self.outer.pi_tol > 0:
            bad.append("outer.pi_tol")
        if self.outer.estep_iters < 1:
            bad.append("outer.estep_iters")
        if not 0 <= self.active_threshold < 1:
            bad.append("active_threshold")
        if bad:
            raise InvalidArgument("invalid hyperparameter field(s): " + ", ".join(bad))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for key in ("lognormal_amp", "lognormal_ls", "lognormal_noise"):
            d[key] = [d[key]["mu"], d[key]["sigma"]]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Hyperparams":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"lambda"}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument("unknown hyperparameter field(s): " + ", ".join(sorted(unknown)))
        kw: dict[str, Any] = {}
        if "lambda" in d:
            kw["lam"] = float(d.pop("lambda"))
        for key in ("lognormal_amp", "lognormal_ls", "lognormal_noise"):
            if key in d:
                v = d.pop(key)
                mu, sigma = (v["mu"], v["sigma"]) if isinstance(v, dict) else v
                kw[key] = LogNormal(float(mu), float(sigma))
        for key, sub in (("gibbs", GibbsConfig), ("mstep", MStepConfig), ("outer", OuterConfig)):
            if key in d:
                v = d.pop(key)
                names = {f.name for f in fields(sub)}
                extra = set(v) - names
                if extra:
                    raise InvalidArgument(f"unknown field(s) in {key}: " + ", ".join(sorted(extra)))
                kw[key] = sub(**v)
        if "M" in d:
            m = d.pop("M")
            if isinstance(m, float) and m.is_integer():
                m = int(m)
            kw["M"] = m
        kw.update(d)
        return cls(**kw)


@dataclass
class ModelState:
    """Current point estimates and variational posterior of a fit."""

    kernels: list[KernelParams]
    beta: float
    alpha: np.ndarray
    responsibilities: Any = None
    samples: list[list[Segmentation]] = field(default_factory=list)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if not self.beta > 0:
            raise InvalidArgument("beta must be positive")
        if len(self.alpha) != len(self.kernels):
            raise InvalidArgument("alpha and kernels must have the same length")
        if np.any(self.alpha <= 0):
            raise InvalidArgument("alpha entries must be positive")

    @property
    def M(self) -> int:
        return len(self.kernels)

    @property
    def expected_pi(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def active_kernels(self, threshold: float = 0.05) -> list[int]:
        return np.flatnonzero(self.expected_pi > threshold).tolist()


def length_log_prior(l: float, lam: float) -> float:
    """Log density of Exp(lam) at segment length ``l``."""
    if not l > 0:
        raise InvalidArgument(f"segment length must be positive, got {l}")
    if not lam > 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    return math.log(lam) - lam * l


def segmentation_log_prior(seg: Segmentation, seq: Sequence, lam: float) -> float:
    return sum(length_log_prior(l, lam) for l in seg.lengths(seq))


@dataclass(frozen=True)
class Violation:
    seq_id: str
    index: int | None
    kind: str
    message: str


def validate_dataset(data: Seq[Sequence]) -> list[Violation]:
    """Check every sequence; returns all violations found (empty list means valid)."""
    report: list[Violation] = []
    seen: set[str] = set()
    for k, seq in enumerate(data):
        sid = str(getattr(seq, "id", f"#{k}"))
        if sid in seen:
            report.append(Violation(sid, None, "duplicate-id", f"sequence id {sid!r} repeated"))
        seen.add(sid)
        x = np.asarray(seq.x, dtype=float)
        y = np.asarray(seq.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            report.append(Violation(sid, None, "shape", "x and y must be 1-D"))
            continue
        if len(x) != len(y):
            report.append(Violation(sid, None, "length-mismatch", f"len(x)={len(x)} != len(y)={len(y)}"))
        if len(x) == 0:
            report.append(Violation(sid, None, "empty", "sequence has no points"))
            continue
        for name, arr in (("x", x), ("y", y)):
            for i in np.flatnonzero(~np.isfinite(arr)):
                report.append(Violation(sid, int(i), "non-finite-value", f"{name}[{i}] is {arr[i]}"))
        dx = np.diff(x)
        for i in np.flatnonzero(dx == 0):
            report.append(Violation(sid, int(i) + 1, "duplicate-timestamp", f"x[{i + 1}] == x[{i}]"))
        for i in np.flatnonzero(dx < 0):
            report.append(Violation(sid, int(i) + 1, "non-increasing", f"x[{i + 1}] < x[{i}]"))
    return report


def standardize(data: Seq[Sequence], mean: float | None = None, std: float | None = None):
    """Z-score ``y`` with dataset-wide statistics; returns ``(data, mean, std)``."""
    if mean is None or std is None:
        ys = np.concatenate([s.y for s in data])
        mean = float(ys.mean())
        std = float(ys.std()) or 1.0
    return [Sequence(s.id, s.x, (s.y - mean) / std) for s in data], mean, std
