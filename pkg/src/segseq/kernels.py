"""Squared-exponential GP covariance, segment marginal likelihoods and their gradients.

All gradients are taken with respect to ``(ln a^2, ln l^2, ln beta)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf, dpotri, dpotrs

from .model import InvalidArgument, KernelParams

LOG_2PI = math.log(2.0 * math.pi)

JITTER_START = 1e-9
JITTER_MAX = 1e-3


class NumericalError(ArithmeticError):
    """Cholesky factorization failed even at the largest jitter."""

    def __init__(self, message, params=None, segment=None):
        super().__init__(message)
        self.params = params
        self.segment = segment


class SquaredExponential:
    """k(x, x') = a^2 exp(-(x - x')^2 / (2 l^2))."""

    name = "se"

    @staticmethod
    def sqdist(xs: np.ndarray) -> np.ndarray:
        d = xs[:, None] - xs[None, :]
        return d * d

    @staticmethod
    def gram(xs: np.ndarray, params: KernelParams, d2: np.ndarray | None = None) -> np.ndarray:
        if d2 is None:
            d2 = SquaredExponential.sqdist(xs)
        return params.amp2 * np.exp(d2 * (-0.5 / params.ls2))

    @staticmethod
    def gram_grads(d2: np.ndarray, params: KernelParams, gram: np.ndarray):
        """Derivatives of the noise-free gram matrix w.r.t. ln a^2 and ln l^2."""
        return gram, gram * d2 * (0.5 / params.ls2)


KERNEL = SquaredExponential


def _cholesky(K: np.ndarray, amp2: float, segment=None, params=None):
    """Cholesky of ``K + jitter I`` under the escalation policy; returns ``(L, jitter)``."""
    jitter = JITTER_START * amp2
    n = K.shape[0]
    while True:
        Kj = K.copy()
        Kj.flat[:: n + 1] += jitter
        L, info = dpotrf(Kj, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return L, jitter
        jitter *= 10.0
        if jitter > JITTER_MAX * amp2 * (1 + 1e-9):
            raise NumericalError(
                f"Cholesky failed for segment {segment} with params {params}",
                params=params,
                segment=segment,
            )


def se_covariance(xs, params: KernelParams, beta: float, jitter: float | None = None) -> np.ndarray:
    """Noisy SE covariance ``K + (beta + jitter) I``; jitter defaults to the starting policy value."""
    if not beta > 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) == 0:
        raise InvalidArgument("xs must be a nonempty 1-D array")
    if jitter is None:
        jitter = JITTER_START * params.amp2
    K = KERNEL.gram(xs, params)
    K.flat[:: len(xs) + 1] += beta + jitter
    return K


def _factor(xs, params, beta, segment=None, d2=None):
    """Returns ``(noise-free gram, Cholesky factor of gram + (beta + jitter) I, jitter)``."""
    G = KERNEL.gram(xs, params, d2)
    K = G.copy()
    K.flat[:: len(xs) + 1] += beta
    L, jitter = _cholesky(K, params.amp2, segment=segment, params=params)
    return G, L, jitter


def _check_segment(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) == 0:
        raise InvalidArgument("segment must have matching nonempty xs and ys")
    return xs, ys


def segment_log_marginal(xs, ys, params: KernelParams, beta: float, segment=None) -> float:
    """ln N(ys | 0, K_theta(xs, xs) + beta I) via Cholesky."""
    xs, ys = _check_segment(xs, ys)
    _, L, _ = _factor(xs, params, beta, segment)
    z = solve_triangular(L, ys, lower=True, check_finite=False)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return float(-0.5 * z @ z - 0.5 * logdet - 0.5 * len(xs) * LOG_2PI)


def segment_log_marginal_grad(xs, ys, params: KernelParams, beta: float, segment=None) -> np.ndarray:
    """Gradient of :func:`segment_log_marginal` w.r.t. ``(ln a^2, ln l^2, ln beta)``."""
    xs, ys = _check_segment(xs, ys)
    return grouped_log_marginal(xs, ys[:, None], np.ones(1), params, beta, segment=segment)[1]


def grouped_log_marginal(xs, Y, weights, params: KernelParams, beta: float, grad=True, segment=None, d2=None):
    """Weighted sum of log marginals for several segments sharing the same relative stamps.

    ``Y`` has one column per segment.  Returns ``(per-column log-liks, weighted gradient)``;
    the gradient is ``None`` when ``grad`` is false.  ``d2`` optionally caches the
    squared-distance matrix of ``xs``.
    """
    n = len(xs)
    if d2 is None:
        d2 = KERNEL.sqdist(xs)
    G, L, jitter = _factor(xs, params, beta, segment, d2)
    alpha, _ = dpotrs(L, Y, lower=1)
    quad = np.einsum("ij,ij->j", Y, alpha)
    logdet = 2.0 * np.log(L.diagonal()).sum()
    ll = -0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI
    if not grad:
        return ll, None
    wsum = float(np.sum(weights))
    Kinv, _ = dpotri(L, lower=1)
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    A = (alpha * weights) @ alpha.T - wsum * Kinv
    d_amp, d_ls = KERNEL.gram_grads(d2, params, G)
    trA = np.trace(A)
    g = np.empty(3)
    # jitter scales with a^2, so it belongs to the amplitude derivative
    g[0] = 0.5 * (np.sum(A * d_amp) + jitter * trA)
    g[1] = 0.5 * np.sum(A * d_ls)
    g[2] = 0.5 * beta * trA
    return ll, g


def prefix_log_marginals(xs, ys, params: KernelParams, beta: float, L=None) -> np.ndarray:
    """Log marginals of every prefix ``ys[:k]``, k = 1..n, from one factorization.

    The Cholesky factor of a leading block is the leading block of the full factor, so a
    precomputed ``L`` for a longer grid with the same relative stamps may be passed.
    """
    n = len(ys)
    if L is None:
        _, L, _ = _factor(np.asarray(xs, dtype=float), params, beta)
    L = L[:n, :n]
    z = solve_triangular(L, ys, lower=True, check_finite=False)
    quad = np.cumsum(z * z)
    logdet = np.cumsum(2.0 * np.log(np.diag(L)))
    return -0.5 * quad - 0.5 * logdet - 0.5 * np.arange(1, n + 1) * LOG_2PI


def lognormal_log_prior(value: float, mu: float, sigma: float) -> tuple[float, float]:
    """LogNormal(mu, sigma) log-density at ``value`` and the Gaussian-term gradient w.r.t. ln value.

    The returned gradient is that of ``ln N(ln value | mu, sigma)``, i.e. the density of the
    log-parameter; it omits the ``-1`` contributed by the ``-ln value`` Jacobian term.
    """
    if not value > 0:
        raise InvalidArgument(f"value must be positive, got {value}")
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    u = math.log(value)
    z = (u - mu) / sigma
    logpdf = -u - math.log(sigma) - 0.5 * LOG_2PI - 0.5 * z * z
    return logpdf, -(u - mu) / (sigma * sigma)
