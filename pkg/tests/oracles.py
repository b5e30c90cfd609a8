"""Reference computations that share no code with the package.

Everything here is written from the model definition with dense linear algebra and
explicit loops, so agreement with the package is evidence rather than tautology.
"""

import itertools
import math

import numpy as np
from scipy.stats import multivariate_normal


def se_gram(xs, amp2, ls2):
    xs = np.asarray(xs, dtype=float)
    K = np.empty((len(xs), len(xs)))
    for i in range(len(xs)):
        for j in range(len(xs)):
            K[i, j] = amp2 * math.exp(-((xs[i] - xs[j]) ** 2) / (2.0 * ls2))
    return K


def gp_loglik(xs, ys, amp2, ls2, beta, jitter=0.0):
    K = se_gram(xs, amp2, ls2) + (beta + jitter) * np.eye(len(xs))
    return float(multivariate_normal(mean=np.zeros(len(xs)), cov=K, allow_singular=False).logpdf(ys))


def gp_loglik_inverse(xs, ys, amp2, ls2, beta, jitter=0.0):
    """Same quantity through an explicit inverse and slogdet."""
    K = se_gram(xs, amp2, ls2) + (beta + jitter) * np.eye(len(xs))
    ys = np.asarray(ys, dtype=float)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * ys @ np.linalg.inv(K) @ ys - 0.5 * logdet - 0.5 * len(xs) * math.log(2 * math.pi))


def mixture_marginal(xs, ys, kernels, beta, alpha, jitter_rel=1e-9):
    """ln sum_m E[pi_m] p(ys | theta_m) by direct exponentiated summation (no log-sum-exp)."""
    alpha = np.asarray(alpha, dtype=float)
    w = alpha / alpha.sum()
    total = 0.0
    for (amp2, ls2), wm in zip(kernels, w):
        total += wm * math.exp(gp_loglik(xs, ys, amp2, ls2, beta, jitter=jitter_rel * amp2))
    return math.log(total)


def seg_length(x, s, e):
    n = len(x)
    mdx = float(np.median(np.diff(x))) if n > 1 else 1.0
    return float(x[e] - x[s]) if e < n else float(x[n - 1] - x[s]) + mdx


def exact_split_marginals(x, y, kernels, beta, alpha, lam):
    """Brute-force split marginals P(c_i = 1), i = 1..N-1, with dense likelihoods."""
    n = len(x)
    configs = list(itertools.product((0, 1), repeat=n - 1))
    logp = []
    for bits in configs:
        starts = [0] + [i + 1 for i, b in enumerate(bits) if b]
        ends = starts[1:] + [n]
        tot = 0.0
        for s, e in zip(starts, ends):
            l = seg_length(x, s, e)
            tot += mixture_marginal(x[s:e], y[s:e], kernels, beta, alpha) + math.log(lam) - lam * l
        logp.append(tot)
    logp = np.array(logp)
    w = np.exp(logp - logp.max())
    w /= w.sum()
    return w @ np.array(configs, dtype=float)


def digamma_series(a, terms=200000):
    """psi(a) = -gamma + sum_k [1/(k+1) - 1/(k+a)], truncated with a tail correction."""
    k = np.arange(terms, dtype=float)
    s = np.sum(1.0 / (k + 1.0) - 1.0 / (k + a))
    # tail of the series is ~ (a - 1) / terms
    return -0.5772156649015329 + s + (a - 1.0) / terms
