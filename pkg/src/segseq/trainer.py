"""Outer training loop: alternate Gibbs over splits with variational EM."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import io
from .gibbs import sample_segmentations, split_marginals
from .model import Hyperparams, InvalidArgument, KernelParams, ModelState, standardize, validate_dataset
from .vem import SegmentPool, expected_log_pi, run_vem

log = logging.getLogger(__name__)

# E[pi_m] below this for COLLAPSE_ROUNDS consecutive rounds freezes kernel m
COLLAPSE_PI = 1e-6
COLLAPSE_ROUNDS = 3


@dataclass
class FitResult:
    state: ModelState
    diagnostics: list = field(default_factory=list)
    hp: Hyperparams | None = None
    scaling: tuple | None = None


def initial_state(hp: Hyperparams) -> ModelState:
    """Kernels drawn from their log-normal priors, beta at its prior median, q(pi) = p(pi)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(hp.seed), 0xC0FFEE]))
    kernels = []
    for _ in range(hp.M):
        amp2 = math.exp(hp.lognormal_amp.mu + hp.lognormal_amp.sigma * rng.standard_normal())
        ls2 = math.exp(hp.lognormal_ls.mu + hp.lognormal_ls.sigma * rng.standard_normal())
        kernels.append(KernelParams(amp2, ls2))
    return ModelState(kernels, math.exp(hp.lognormal_noise.mu), np.full(hp.M, hp.alpha0))


def _check(data):
    if not data:
        raise InvalidArgument("dataset is empty")
    report = validate_dataset(data)
    if report:
        raise InvalidArgument("invalid dataset: " + "; ".join(f"{v.seq_id}[{v.index}]: {v.kind}" for v in report[:10]))


def fit(data, hp: Hyperparams, threads: int = 1, checkpoint_path=None, diagnostics_path=None, state: ModelState | None = None) -> FitResult:
    """Run Gibbs -> vEM rounds until the M-step objective settles or ``max_rounds`` is hit.

    With ``checkpoint_path`` the model is written after every completed round, so a failing
    or interrupted round leaves the last good checkpoint on disk.
    """
    _check(data)
    scaling = None
    if hp.standardize:
        data, mean, std = standardize(data)
        scaling = (mean, std)
    state = state or initial_state(hp)
    diagnostics = []
    last = None
    prev_obj = None
    prev_pi = None
    low_rounds = np.zeros(hp.M, dtype=int)
    frozen: set = set()
    diag_file = open(diagnostics_path, "w") if diagnostics_path else None
    try:
        for rnd in range(hp.outer.max_rounds):
            t0 = time.perf_counter()
            samples, last = sample_segmentations(data, state, hp, round_index=rnd, init=last, threads=threads)
            pool = SegmentPool(data, samples)
            res = run_vem(data, samples, state, hp, frozen=tuple(sorted(frozen)), pool=pool)
            state = ModelState(res.kernels, res.beta, res.alpha, res.resp, samples)

            epi = state.expected_pi
            low_rounds = np.where(epi < COLLAPSE_PI, low_rounds + 1, 0)
            newly = {int(m) for m in np.flatnonzero(low_rounds >= COLLAPSE_ROUNDS)} - frozen
            if newly:
                log.info("freezing collapsed kernel(s) %s", sorted(newly))
                frozen |= newly

            rec = {
                "round": rnd,
                "objective": res.objective,
                "alpha": state.alpha.tolist(),
                "active_kernels": len(state.active_kernels(hp.active_threshold)),
                "mean_segments": pool.num_segments_per_sample,
                "wallclock_ms": round(1000.0 * (time.perf_counter() - t0), 3),
            }
            diagnostics.append(rec)
            log.info("round %d objective %.6f active %d", rnd, res.objective, rec["active_kernels"])
            if diag_file:
                diag_file.write(json.dumps(rec) + "\n")
                diag_file.flush()
            if checkpoint_path:
                io.save_checkpoint(checkpoint_path, state, hp, scaling=scaling)
            settled = prev_pi is not None and float(np.max(np.abs(epi - prev_pi))) < hp.outer.pi_tol
            if settled and abs(res.objective - prev_obj) < hp.outer.elbo_rel_tol * abs(prev_obj):
                break
            prev_obj, prev_pi = res.objective, epi
    finally:
        if diag_file:
            diag_file.close()
    return FitResult(state, diagnostics, hp, scaling)


@dataclass
class SegmentResult:
    seq_ids: list
    marginals: list  # per sequence, P(c_i = 1) for i = 1..N-1
    samples: list  # per sequence, list of Segmentation
    labels: list  # per sequence, per sample, MAP kernel per segment


def segment(data, state: ModelState, hp: Hyperparams, num_samples: int | None = None, threads: int = 1, scaling=None) -> SegmentResult:
    """Gibbs with frozen (theta, beta, q(pi)); split marginals, samples and MAP kernel labels."""
    _check(data)
    if scaling is not None:
        data, _, _ = standardize(data, *scaling)
    samples, _ = sample_segmentations(data, state, hp, round_index=0, threads=threads, num_samples=num_samples)
    pool = SegmentPool(data, samples)
    ll = pool.logliks(state.kernels, state.beta)
    best = np.argmax(ll + expected_log_pi(state.alpha), axis=1)
    per_seq = [[samples[i][d] for i in range(len(samples))] for d in range(len(data))]
    labels = [[best[pool.index[i][d]].tolist() for i in range(len(samples))] for d in range(len(data))]
    return SegmentResult(
        [s.id for s in data],
        [split_marginals(p) for p in per_seq],
        per_seq,
        labels,
    )


def relative_distance(a: KernelParams, b: KernelParams) -> float:
    """Symmetric relative distance summed over amplitude and length-scale."""
    return sum(abs(p - q) / (0.5 * (p + q)) for p, q in ((a.amp2, b.amp2), (a.ls2, b.ls2)))


def match_kernels(learned, truth, candidates=None) -> list[tuple[int, int]]:
    """Greedy ground-truth -> learned matching by smallest relative distance first.

    Returns ``(truth index, learned index)`` pairs; only ``candidates`` learned kernels are used.
    """
    cand = list(range(len(learned))) if candidates is None else list(candidates)
    pairs = sorted(
        (relative_distance(truth[t], learned[m]), t, m) for t in range(len(truth)) for m in cand
    )
    used_t, used_m, out = set(), set(), []
    for _, t, m in pairs:
        if t in used_t or m in used_m:
            continue
        used_t.add(t)
        used_m.add(m)
        out.append((t, m))
    return sorted(out)
