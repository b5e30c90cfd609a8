"""Variational E step for q(Z), q(pi), the sampled bound, and the MAP M step for (theta, beta)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from .kernels import KERNEL, NumericalError, grouped_log_marginal, lognormal_log_prior
from .model import Hyperparams, InvalidArgument, KernelParams, ModelState

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
SHRINK = 0.5
MIN_STEP = 1e-14
LBFGS_MEMORY = 10
ESTEP_TOL = 1e-8
# a (kernel, stamp-group) pair whose total weight is below this is left out of the M-step objective
WEIGHT_FLOOR = 1e-10


def expected_log_pi(alpha) -> np.ndarray:
    """E_{Dir(alpha)}[ln pi_m] = psi(alpha_m) - psi(sum alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise InvalidArgument("Dirichlet parameters must be positive")
    return digamma(alpha) - digamma(alpha.sum())


class SegmentPool:
    """Distinct segments appearing across a set of segmentation samples.

    ``index[i][d]`` maps the segments of sample i, sequence d to rows of the pool, and
    ``counts[u]`` is how many times segment u occurs over all samples.  Segments with the
    same relative stamps share one covariance and are grouped for the likelihood passes.
    """

    def __init__(self, data, samples):
        self.data = data
        self.L = len(samples)
        keys: dict = {}
        counts: list = []
        self.index = []
        for sample in samples:
            per_seq = []
            for d, seg in enumerate(sample):
                rows = []
                for s, e in seg.segments:
                    u = keys.get((d, s, e))
                    if u is None:
                        u = keys[(d, s, e)] = len(counts)
                        counts.append(0)
                    counts[u] += 1
                    rows.append(u)
                per_seq.append(np.array(rows, dtype=np.intp))
            self.index.append(per_seq)
        self.segments = list(keys)
        self.counts = np.array(counts, dtype=float)
        self.size = len(self.segments)

        groups: dict = {}
        for u, (d, s, e) in enumerate(self.segments):
            xs = data[d].x[s:e] - data[d].x[s]
            key = (e - s, np.round(xs, 10).tobytes())
            groups.setdefault(key, []).append(u)
        self.groups = []
        for members in groups.values():
            d, s, e = self.segments[members[0]]
            xs = data[d].x[s:e] - data[d].x[s]
            Y = np.column_stack([data[dd].y[ss:ee] for dd, ss, ee in (self.segments[u] for u in members)])
            self.groups.append((xs, Y, np.array(members, dtype=np.intp), KERNEL.sqdist(xs)))

    @property
    def num_segments_per_sample(self) -> float:
        return float(self.counts.sum()) / self.L

    def logliks(self, kernels, beta: float) -> np.ndarray:
        """(U, M) matrix of ln p(Y_u | theta_m, beta)."""
        out = np.empty((self.size, len(kernels)))
        for xs, Y, members, d2 in self.groups:
            for m, k in enumerate(kernels):
                out[members, m] = grouped_log_marginal(xs, Y, None, k, beta, grad=False, d2=d2)[0]
        return out

    def weighted_objective(self, weights: np.ndarray, kernels, beta: float, grad: bool = True):
        """sum_{u,m} weights[u,m] ln p(Y_u | theta_m, beta) and its gradient.

        Gradient layout: ``[ln a2_0, ln l2_0, ..., ln a2_{M-1}, ln l2_{M-1}, ln beta]``.
        """
        M = len(kernels)
        total = 0.0
        g = np.zeros(2 * M + 1)
        for xs, Y, members, d2 in self.groups:
            W = weights[members]
            for m, k in enumerate(kernels):
                w = W[:, m]
                if w.sum() < WEIGHT_FLOOR:
                    continue
                ll, gm = grouped_log_marginal(xs, Y, w, k, beta, grad=grad, d2=d2)
                total += float(w @ ll)
                if grad:
                    g[2 * m] += gm[0]
                    g[2 * m + 1] += gm[1]
                    g[-1] += gm[2]
        return total, g


@dataclass
class Responsibilities:
    """``r[i][d]`` is an (S_id, M) array; row s is q(z) for segment s of sequence d in sample i."""

    r: list

    @property
    def L(self) -> int:
        return len(self.r)

    def max_normalization_error(self) -> float:
        err = 0.0
        for per_seq in self.r:
            for a in per_seq:
                if len(a):
                    err = max(err, float(np.max(np.abs(a.sum(axis=1) - 1.0))))
        return err


def _unique_responsibilities(ll: np.ndarray, alpha) -> np.ndarray:
    logits = ll + expected_log_pi(alpha)
    r = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    # renormalize so rows sum to one to the last ulp
    return r / r.sum(axis=1, keepdims=True)


def _expand(pool: SegmentPool, r_unique: np.ndarray) -> Responsibilities:
    return Responsibilities([[r_unique[idx] for idx in per_seq] for per_seq in pool.index])


def update_responsibilities(data, samples, state: ModelState, pool: SegmentPool | None = None, ll=None) -> Responsibilities:
    """q*(Z): softmax over m of E[ln pi_m] + ln p(Y_s | theta_m, beta), per sample and segment."""
    pool = pool or SegmentPool(data, samples)
    if ll is None:
        ll = pool.logliks(state.kernels, state.beta)
    return _expand(pool, _unique_responsibilities(ll, state.alpha))


def update_pi(resp: Responsibilities, alpha0: float, L: int | None = None, M: int | None = None) -> np.ndarray:
    """Dirichlet parameters of q*(pi): alpha0 + (1/L) sum_i sum_d sum_s r."""
    L = resp.L if L is None else L
    if M is None:
        M = next((a.shape[1] for per_seq in resp.r for a in per_seq if a.ndim == 2), None)
        if M is None:
            raise InvalidArgument("cannot infer M from empty responsibilities; pass M")
    acc = np.zeros(M)
    for per_seq in resp.r:
        for a in per_seq:
            if len(a):
                acc += a.sum(axis=0)
    return alpha0 + acc / L


def _pack(kernels, beta) -> np.ndarray:
    v = []
    for k in kernels:
        v += [math.log(k.amp2), math.log(k.ls2)]
    v.append(math.log(beta))
    return np.array(v)


def _unpack(v):
    M = (len(v) - 1) // 2
    kernels = [KernelParams(math.exp(v[2 * m]), math.exp(v[2 * m + 1])) for m in range(M)]
    return kernels, math.exp(v[-1])


def log_param_prior(kernels, beta: float, hp: Hyperparams):
    """Prior on the log-parameters (Gaussian in log space) and its gradient."""
    total = 0.0
    g = np.zeros(2 * len(kernels) + 1)
    for m, k in enumerate(kernels):
        for j, (val, prior) in enumerate(((k.amp2, hp.lognormal_amp), (k.ls2, hp.lognormal_ls))):
            lp, dg = lognormal_log_prior(val, prior.mu, prior.sigma)
            total += lp + math.log(val)
            g[2 * m + j] = dg
    lp, dg = lognormal_log_prior(beta, hp.lognormal_noise.mu, hp.lognormal_noise.sigma)
    total += lp + math.log(beta)
    g[-1] = dg
    return total, g


def mstep_objective(pool: SegmentPool, weights: np.ndarray, kernels, beta: float, hp: Hyperparams, grad: bool = True):
    """(1/L) sum_i sum_{d,s,m} r ln p(Y_s | theta_m, beta) + ln p(theta) + ln p(beta).

    ``weights[u, m]`` must already hold ``counts[u] / L * r[u, m]``.
    """
    data_term, g = pool.weighted_objective(weights, kernels, beta, grad=grad)
    prior, gp = log_param_prior(kernels, beta, hp)
    return data_term + prior, g + gp


@dataclass
class MStepResult:
    kernels: list
    beta: float
    objective: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    line_search_failed: bool = False
    converged: bool = False


def _lbfgs_direction(g, memory):
    """Two-loop recursion: approximate inverse-Hessian times ``g`` for ascent."""
    q = g.copy()
    coeffs = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        coeffs.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(memory, reversed(coeffs)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def mstep(pool: SegmentPool, weights: np.ndarray, state: ModelState, hp: Hyperparams, frozen=()) -> MStepResult:
    """Backtracking (Armijo) ascent in (ln a^2, ln l^2, ln beta) space.

    The search direction is the gradient, or an L-BFGS direction built from the accepted
    iterates when ``hp.mstep.direction == "lbfgs"``.  Only steps satisfying the Armijo
    condition are taken, so the returned objective is never below the start.  Parameters
    of kernels listed in ``frozen`` are held fixed.
    """
    cfg = hp.mstep
    mask = np.ones(2 * state.M + 1)
    for m in frozen:
        mask[2 * m : 2 * m + 2] = 0.0

    def evaluate(v):
        kernels, beta = _unpack(v)
        f, g = mstep_objective(pool, weights, kernels, beta, hp)
        return f, g * mask

    v = _pack(state.kernels, state.beta)
    f, g = evaluate(v)
    trace = [f]
    step = cfg.step_size
    memory: list = []
    failed = converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if math.sqrt(float(g @ g)) < cfg.grad_tol:
            converged = True
            it -= 1
            break
        quasi = cfg.direction == "lbfgs" and bool(memory)
        p = _lbfgs_direction(g, memory) if quasi else g
        slope = float(g @ p)
        if slope <= 0.0:
            memory.clear()
            quasi, p, slope = False, g, float(g @ g)
        t = 1.0 if quasi else step
        while True:
            cand = v + t * p
            try:
                fc, gc = evaluate(cand)
            except (NumericalError, InvalidArgument, FloatingPointError):
                fc = -math.inf
            if math.isfinite(fc) and fc >= f + ARMIJO_C * t * slope:
                break
            t *= SHRINK
            if t * math.sqrt(float(p @ p)) < MIN_STEP:
                failed = True
                break
        if failed:
            log.info("M-step line search failed after %d iterations; keeping best iterate", it)
            break
        sv, yv = cand - v, g - gc  # y is the change in the negated gradient
        if sv @ yv > 1e-12 * math.sqrt(float(sv @ sv) * float(yv @ yv)):
            memory.append((sv, yv, 1.0 / float(sv @ yv)))
            if len(memory) > LBFGS_MEMORY:
                memory.pop(0)
        if not quasi:
            step = 2.0 * t
        v, f, g = cand, fc, gc
        trace.append(f)
    kernels, beta = _unpack(v)
    for m in frozen:
        kernels[m] = state.kernels[m]  # exact, not round-tripped through exp(log(.))
    return MStepResult(kernels, beta, f, trace, it, failed, converged)


def responsibility_weights(pool: SegmentPool, r_unique: np.ndarray) -> np.ndarray:
    return r_unique * (pool.counts / pool.L)[:, None]


def _dirichlet_terms(alpha, alpha0: float) -> float:
    """E_q[ln p(pi)] - E_q[ln q(pi)] for q = Dir(alpha), p = Dir(alpha0)."""
    alpha = np.asarray(alpha, dtype=float)
    M = len(alpha)
    elog = expected_log_pi(alpha)
    e_log_p = gammaln(M * alpha0) - M * gammaln(alpha0) + (alpha0 - 1.0) * elog.sum()
    e_log_q = gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * elog).sum()
    return float(e_log_p - e_log_q)


def elbo(data, samples, resp: Responsibilities, alpha, state: ModelState, hp: Hyperparams, pool=None, ll=None) -> float:
    """Monte-Carlo bound over sampled splits, up to terms constant in (theta, beta).

    (1/L) sum_i sum_{d,s,m} r [ln p(Y_s|theta_m, beta) + E ln pi_m - ln r]
    + E_q ln p(pi) - E_q ln q(pi) + ln p(theta) + ln p(beta).
    """
    pool = pool or SegmentPool(data, samples)
    if len(resp.r) != pool.L:
        raise InvalidArgument("responsibilities and samples disagree on L")
    if ll is None:
        ll = pool.logliks(state.kernels, state.beta)
    elog = expected_log_pi(alpha)
    total = 0.0
    for per_r, per_idx in zip(resp.r, pool.index):
        if len(per_r) != len(per_idx):
            raise InvalidArgument("responsibilities and samples disagree on sequence count")
        for r, idx in zip(per_r, per_idx):
            if r.shape != (len(idx), state.M):
                raise InvalidArgument("responsibility shape does not match segments")
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = np.where(r > 0, r * np.log(r), 0.0)
            total += float(np.sum(r * (ll[idx] + elog)) - ent.sum())
    total /= pool.L
    prior, _ = log_param_prior(state.kernels, state.beta, hp)
    return total + _dirichlet_terms(alpha, hp.alpha0) + prior


@dataclass
class VEMResult:
    resp: Responsibilities
    alpha: np.ndarray
    kernels: list
    beta: float
    objective: float
    objective_trace: list
    cycles: int
    line_search_failed: bool = False


def run_vem(data, samples, state: ModelState, hp: Hyperparams, frozen=(), pool=None) -> VEMResult:
    """Alternate q(Z) -> q(pi) -> M step until the M-step objective settles."""
    pool = pool or SegmentPool(data, samples)
    kernels, beta, alpha = list(state.kernels), state.beta, np.array(state.alpha, dtype=float)
    trace: list = []
    prev = None
    failed = False
    cycles = 0
    r_unique = None
    for cycles in range(1, hp.outer.inner_repeats + 1):
        ll = pool.logliks(kernels, beta)
        for _ in range(hp.outer.estep_iters):
            r_unique = _unique_responsibilities(ll, alpha)
            new_alpha = hp.alpha0 + (r_unique * pool.counts[:, None]).sum(axis=0) / pool.L
            shift = float(np.max(np.abs(new_alpha - alpha)))
            alpha = new_alpha
            if shift < ESTEP_TOL:
                break
        cur = ModelState(kernels, beta, alpha)
        res = mstep(pool, responsibility_weights(pool, r_unique), cur, hp, frozen=frozen)
        failed = failed or res.line_search_failed
        trace.extend(res.trace)
        kernels, beta = res.kernels, res.beta
        if prev is not None and abs(res.objective - prev) <= hp.outer.elbo_rel_tol * abs(prev):
            prev = res.objective
            break
        prev = res.objective
    return VEMResult(_expand(pool, r_unique), alpha, kernels, beta, prev, trace, cycles, failed)
