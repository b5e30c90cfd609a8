"""Gibbs sampling of split indicators and an exact enumeration oracle for short sequences."""

from __future__ import annotations

import itertools
import math
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import logsumexp

from .kernels import _factor, prefix_log_marginals, segment_log_marginal
from .model import Hyperparams, InvalidArgument, ModelState, Segmentation, Sequence

MAX_ENUMERATION_N = 12


def log_expected_pi(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return np.log(alpha) - math.log(alpha.sum())


def approx_segment_marginal(xs, ys, state: ModelState) -> float:
    """ln sum_m p(ys | theta_m, beta) E_q[pi_m]."""
    ll = np.array([segment_log_marginal(xs, ys, k, state.beta) for k in state.kernels])
    return float(logsumexp(ll + log_expected_pi(state.alpha)))


class SegmentScorer:
    """Per-sequence table of segment scores under frozen kernels, beta and q(pi).

    Rows are keyed by segment start and filled lazily; a row for start ``s`` holds values
    for every end up to its current width and is widened by doubling on demand.  On a
    uniform grid one factorization per kernel serves every start.
    """

    INITIAL_WIDTH = 32

    def __init__(self, seq: Sequence, kernels, beta: float, log_weights, lam: float):
        if not lam > 0:
            raise InvalidArgument(f"lambda must be positive, got {lam}")
        self.seq = seq
        self.kernels = list(kernels)
        self.beta = float(beta)
        self.log_weights = np.asarray(log_weights, dtype=float)
        self.lam = float(lam)
        self.n = len(seq)
        self._x = seq.x
        self._y = seq.y
        self._mdx = seq.median_dx
        self._uniform = seq.is_uniform()
        self._shared: list = [None] * len(self.kernels)
        self._ll: list = [None] * self.n
        self.rows: list = [None] * self.n

    @classmethod
    def from_state(cls, seq: Sequence, state: ModelState, lam: float) -> "SegmentScorer":
        return cls(seq, state.kernels, state.beta, log_expected_pi(state.alpha), lam)

    def _shared_factor(self, m: int, width: int):
        L = self._shared[m]
        if L is None or L.shape[0] < width:
            size = min(self.n, max(width, 2 * (0 if L is None else L.shape[0]), self.INITIAL_WIDTH))
            xs = self._x[:size] - self._x[0]
            _, L, _ = _factor(xs, self.kernels[m], self.beta, segment=(self.seq.id, 0, size))
            self._shared[m] = L
        return L

    def _fill(self, s: int, need: int) -> list:
        cur = self._ll[s]
        width = self.INITIAL_WIDTH if cur is None else 2 * cur.shape[1]
        width = min(self.n - s, max(width, need))
        xs = self._x[s : s + width]
        ys = self._y[s : s + width]
        ll = np.empty((len(self.kernels), width))
        for m, k in enumerate(self.kernels):
            if self._uniform:
                L = self._shared_factor(m, width)
            else:
                _, L, _ = _factor(xs - xs[0], k, self.beta, segment=(self.seq.id, s, s + width))
            ll[m] = prefix_log_marginals(xs, ys, k, self.beta, L=L)
        self._ll[s] = ll
        mix = logsumexp(ll + self.log_weights[:, None], axis=0)
        ends = np.arange(s + 1, s + width + 1)
        lengths = np.where(
            ends < self.n,
            self._x[np.minimum(ends, self.n - 1)] - self._x[s],
            self._x[self.n - 1] - self._x[s] + self._mdx,
        )
        row = (mix + math.log(self.lam) - self.lam * lengths).tolist()
        self.rows[s] = row
        return row

    def score(self, s: int, e: int) -> float:
        """Approximate segment marginal plus length log prior for ``[s, e)``."""
        row = self.rows[s]
        k = e - s - 1
        if row is None or k >= len(row):
            row = self._fill(s, e - s)
        return row[k]

    def kernel_logliks(self, s: int, e: int) -> np.ndarray:
        """Per-kernel log marginal likelihoods of ``[s, e)``."""
        ll = self._ll[s]
        if ll is None or e - s > ll.shape[1]:
            self._fill(s, e - s)
            ll = self._ll[s]
        return ll[:, e - s - 1]

    def mixture(self, s: int, e: int) -> float:
        return float(logsumexp(self.kernel_logliks(s, e) + self.log_weights))


def _neighbours(splits: list, i: int, n: int):
    pos = bisect_left(splits, i)
    present = pos < len(splits) and splits[pos] == i
    prev = splits[pos - 1]
    nxt_pos = pos + 1 if present else pos
    nxt = splits[nxt_pos] if nxt_pos < len(splits) else n
    return pos, present, prev, nxt


def _split_prob(scorer: SegmentScorer, p: int, i: int, q: int) -> float:
    merged = scorer.score(p, q)
    split = scorer.score(p, i) + scorer.score(i, q)
    d = merged - split
    if d > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(d))


def split_conditional(seq: Sequence, c, i: int, state: ModelState, lam: float, scorer=None) -> float:
    """P(c_i = 1 | c_{-i}, data) under the approximate segment marginal."""
    n = len(seq)
    if not 1 <= i <= n - 1:
        raise IndexError(f"split index {i} outside 1..{n - 1}")
    if scorer is None:
        scorer = SegmentScorer.from_state(seq, state, lam)
    splits = np.flatnonzero(np.asarray(c)).tolist()
    _, _, p, q = _neighbours(splits, i, n)
    return _split_prob(scorer, p, i, q)


def gibbs_sweep(seq: Sequence, c, state: ModelState, rng: np.random.Generator, lam: float, scorer=None) -> np.ndarray:
    """Resample every c_i, i = 1..N-1, once in a fresh random order."""
    n = len(seq)
    c = np.asarray(c, dtype=np.int8)
    if n == 1:
        return c.copy()
    if scorer is None:
        scorer = SegmentScorer.from_state(seq, state, lam)
    splits = np.flatnonzero(c).tolist()
    _sweep(scorer, splits, n, rng)
    out = np.zeros(n, dtype=np.int8)
    out[splits] = 1
    return out


def _sweep(scorer: SegmentScorer, splits: list, n: int, rng: np.random.Generator) -> None:
    """In-place sweep over the sorted split list (hot loop)."""
    order = rng.permutation(np.arange(1, n)).tolist()
    us = rng.random(n - 1).tolist()
    rows = scorer.rows
    fill = scorer._fill
    exp = math.exp
    nsplit = len(splits)
    for i, u in zip(order, us):
        pos = bisect_left(splits, i)
        present = pos < nsplit and splits[pos] == i
        p = splits[pos - 1]
        j = pos + 1 if present else pos
        q = splits[j] if j < nsplit else n

        row = rows[p]
        if row is None or q - p > len(row):
            row = fill(p, q - p)
        merged = row[q - p - 1]
        left = row[i - p - 1]
        row = rows[i]
        if row is None or q - i > len(row):
            row = fill(i, q - i)
        d = merged - left - row[q - i - 1]

        on = d <= 700.0 and u * (1.0 + exp(d)) < 1.0
        if on and not present:
            splits.insert(pos, i)
            nsplit += 1
        elif present and not on:
            del splits[pos]
            nsplit -= 1


def init_segmentation(seq: Sequence, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Split vector drawn by laying Exp(lam) lengths along the stamps, snapped to the grid."""
    n = len(seq)
    c = np.zeros(n, dtype=np.int8)
    c[0] = 1
    x = seq.x
    t = x[0]
    while True:
        t += rng.exponential(1.0 / lam)
        if t > x[-1]:
            break
        idx = int(np.argmin(np.abs(x - t)))
        if idx > 0:
            c[idx] = 1
    return c


def chain_rng(seed: int, round_index: int, ordinal: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round_index), int(ordinal)]))


def run_chain(seq: Sequence, state: ModelState, hp: Hyperparams, rng, init=None, num_samples=None, burn_in=None, scorer=None):
    """Burn in, then collect thinned samples for one sequence; returns ``(samples, last c)``."""
    g = hp.gibbs
    L = g.num_samples if num_samples is None else num_samples
    n = len(seq)
    if scorer is None:
        scorer = SegmentScorer.from_state(seq, state, hp.lam)
    if init is None:
        c = init_segmentation(seq, hp.lam, rng)
        nburn = g.burn_in if burn_in is None else burn_in
    else:
        c = np.asarray(init, dtype=np.int8)
        nburn = g.sweeps_per_round if burn_in is None else burn_in
    splits = np.flatnonzero(c).tolist()
    out = []
    if n > 1:
        for _ in range(nburn):
            _sweep(scorer, splits, n, rng)
    for _ in range(L):
        if n > 1:
            for _ in range(g.thinning):
                _sweep(scorer, splits, n, rng)
        out.append(Segmentation.from_starts(seq.id, splits, n))
    return out, out[-1].c


def sample_segmentations(data, state: ModelState, hp: Hyperparams, seed=None, round_index=0, init=None, threads=1, num_samples=None):
    """L segmentation samples per sequence, with q(pi) frozen at ``state.alpha``.

    Returns ``(samples, last)`` where ``samples[i][d]`` is sample i of sequence d and
    ``last[d]`` is the final split vector of chain d (used to warm-start the next round).
    Each chain draws from its own stream keyed by (seed, round, ordinal), so the result
    does not depend on ``threads``.
    """
    seed = hp.seed if seed is None else seed
    init = init if init is not None else [None] * len(data)

    def job(d):
        rng = chain_rng(seed, round_index, d)
        return run_chain(data[d], state, hp, rng, init=init[d], num_samples=num_samples)

    if threads > 1 and len(data) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(job, range(len(data))))
    else:
        results = [job(d) for d in range(len(data))]
    L = len(results[0][0]) if results else 0
    samples = [[results[d][0][i] for d in range(len(data))] for i in range(L)]
    return samples, [r[1] for r in results]


def split_marginals(samples_for_seq) -> np.ndarray:
    """Empirical P(c_i = 1) for i = 1..N-1 from a list of Segmentations of one sequence."""
    cs = np.array([s.c for s in samples_for_seq], dtype=float)
    return cs[:, 1:].mean(axis=0)


def enumerate_exact_posterior(seq: Sequence, state: ModelState, lam: float):
    """Exact split marginals (i = 1..N-1) and log partition function by brute force."""
    n = len(seq)
    if n > MAX_ENUMERATION_N:
        raise InvalidArgument(f"enumeration limited to N <= {MAX_ENUMERATION_N}, got {n}")
    scorer = SegmentScorer.from_state(seq, state, lam)
    if n == 1:
        return np.zeros(0), scorer.score(0, 1)
    configs = np.array(list(itertools.product((0, 1), repeat=n - 1)), dtype=np.int8)
    logp = np.empty(len(configs))
    for k, bits in enumerate(configs):
        starts = [0] + (np.flatnonzero(bits) + 1).tolist()
        ends = starts[1:] + [n]
        logp[k] = sum(scorer.score(s, e) for s, e in zip(starts, ends))
    logz = float(logsumexp(logp))
    w = np.exp(logp - logz)
    return w @ configs, logz
