import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from segseq.kernels import (
    JITTER_START,
    NumericalError,
    _cholesky,
    grouped_log_marginal,
    lognormal_log_prior,
    prefix_log_marginals,
    se_covariance,
    segment_log_marginal,
    segment_log_marginal_grad,
)
from segseq.model import InvalidArgument, KernelParams

from oracles import gp_loglik, gp_loglik_inverse, se_gram


def random_instance(rng, n=None):
    n = n or int(rng.integers(1, 25))
    xs = np.cumsum(rng.uniform(0.05, 0.3, n))
    params = KernelParams(math.exp(rng.uniform(-5, 0)), math.exp(rng.uniform(-5, 0)))
    beta = math.exp(rng.uniform(-7, -2))
    ys = rng.normal(0, 0.3, n)
    return xs, ys, params, beta


def fd_grad(xs, ys, params, beta, h=1e-5):
    v = np.log([params.amp2, params.ls2, beta])
    out = np.empty(3)
    for j in range(3):
        vp, vm = v.copy(), v.copy()
        vp[j] += h
        vm[j] -= h
        fp = segment_log_marginal(xs, ys, KernelParams(math.exp(vp[0]), math.exp(vp[1])), math.exp(vp[2]))
        fm = segment_log_marginal(xs, ys, KernelParams(math.exp(vm[0]), math.exp(vm[1])), math.exp(vm[2]))
        out[j] = (fp - fm) / (2 * h)
    return out


class TestCovariance:
    def test_matches_dense_definition(self):
        xs = np.array([0.0, 0.1, 0.35, 1.0])
        p = KernelParams(0.3, 0.05)
        K = se_covariance(xs, p, 0.01, jitter=0.0)
        np.testing.assert_allclose(K, se_gram(xs, 0.3, 0.05) + 0.01 * np.eye(4), rtol=1e-14)

    def test_default_jitter_scales_with_amplitude(self):
        K = se_covariance([0.0], KernelParams(2.0, 1.0), 0.5)
        assert K[0, 0] == pytest.approx(2.0 + 0.5 + JITTER_START * 2.0, rel=1e-15)

    def test_rejects_bad_beta(self):
        with pytest.raises(InvalidArgument):
            se_covariance([0.0, 1.0], KernelParams(1, 1), 0.0)


class TestLogMarginal:
    def test_against_dense_oracles(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            xs, ys, p, beta = random_instance(rng)
            jit = JITTER_START * p.amp2
            ref = gp_loglik(xs, ys, p.amp2, p.ls2, beta, jitter=jit)
            assert segment_log_marginal(xs, ys, p, beta) == pytest.approx(ref, abs=1e-7, rel=1e-9)
            assert gp_loglik_inverse(xs, ys, p.amp2, p.ls2, beta, jitter=jit) == pytest.approx(ref, abs=1e-6, rel=1e-8)

    def test_single_point(self):
        p = KernelParams(0.5, 1.0)
        beta = 0.1
        var = 0.5 + 0.1 + JITTER_START * 0.5
        ref = -0.5 * math.log(2 * math.pi * var) - 0.5 * 0.7**2 / var
        assert segment_log_marginal([3.0], [0.7], p, beta) == pytest.approx(ref, abs=1e-13)

    def test_scaling_identity(self):
        # scaling y by s and (a^2, beta) by s^2 shifts the log-lik by -n ln s
        rng = np.random.default_rng(2)
        xs, ys, p, beta = random_instance(rng, n=12)
        s = 3.0
        a = segment_log_marginal(xs, ys, p, beta)
        b = segment_log_marginal(xs, s * ys, KernelParams(p.amp2 * s * s, p.ls2), beta * s * s)
        assert b == pytest.approx(a - 12 * math.log(s), abs=1e-9)

    def test_translation_invariant(self):
        rng = np.random.default_rng(3)
        xs, ys, p, beta = random_instance(rng, n=10)
        assert segment_log_marginal(xs + 17.0, ys, p, beta) == pytest.approx(segment_log_marginal(xs, ys, p, beta), abs=1e-9)

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgument):
            segment_log_marginal([], [], KernelParams(1, 1), 0.1)


class TestJitter:
    def test_escalates_on_indefinite_input(self):
        # rank-one plus a tiny negative eigenvalue: needs jitter above the starting level
        v = np.ones(4) / 2.0
        K = np.outer(v, v) - 1e-8 * np.eye(4)
        L, jitter = _cholesky(K, amp2=1.0)
        assert jitter > JITTER_START
        np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(4), atol=1e-12)

    def test_raises_past_maximum(self):
        K = -np.eye(3)
        with pytest.raises(NumericalError) as err:
            _cholesky(K, amp2=1.0, segment=(0, 3), params="p")
        assert err.value.segment == (0, 3)


class TestGradients:
    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            xs, ys, p, beta = random_instance(rng)
            g = segment_log_marginal_grad(xs, ys, p, beta)
            ref = fd_grad(xs, ys, p, beta)
            np.testing.assert_allclose(g, ref, rtol=1e-4, atol=1e-6)

    def test_grouped_equals_weighted_sum(self):
        rng = np.random.default_rng(5)
        xs, _, p, beta = random_instance(rng, n=9)
        Y = rng.normal(0, 0.3, (9, 4))
        w = rng.uniform(0, 2, 4)
        ll, g = grouped_log_marginal(xs, Y, w, p, beta)
        for j in range(4):
            assert ll[j] == pytest.approx(segment_log_marginal(xs, Y[:, j], p, beta), abs=1e-10)
        ref = sum(w[j] * segment_log_marginal_grad(xs, Y[:, j], p, beta) for j in range(4))
        np.testing.assert_allclose(g, ref, rtol=1e-9, atol=1e-10)


def test_prefix_log_marginals():
    rng = np.random.default_rng(6)
    xs, ys, p, beta = random_instance(rng, n=15)
    pre = prefix_log_marginals(xs, ys, p, beta)
    for k in range(1, 16):
        assert pre[k - 1] == pytest.approx(segment_log_marginal(xs[:k], ys[:k], p, beta), abs=1e-9)


class TestLogNormalPrior:
    @pytest.mark.parametrize("mu,sigma", [(math.log(0.05), 1.0), (0.3, 0.4)])
    def test_density_integrates_to_one(self, mu, sigma):
        f = lambda v: math.exp(lognormal_log_prior(v, mu, sigma)[0])
        mode = math.exp(mu)
        total = integrate.quad(f, 0, mode, limit=200)[0] + integrate.quad(f, mode, math.inf, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-7)

    def test_gradient_of_log_space_density(self):
        mu, sigma = -1.0, 0.7
        for v in (0.05, 0.4, 3.0):
            h = 1e-6
            f = lambda u: lognormal_log_prior(math.exp(u), mu, sigma)[0] + u
            fd = (f(math.log(v) + h) - f(math.log(v) - h)) / (2 * h)
            assert lognormal_log_prior(v, mu, sigma)[1] == pytest.approx(fd, rel=1e-6)

    def test_rejects_non_positive(self):
        with pytest.raises(InvalidArgument):
            lognormal_log_prior(0.0, 0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 12),
    log_amp=st.floats(-6, 1),
    log_ls=st.floats(-6, 1),
    log_beta=st.floats(-8, -1),
    seed=st.integers(0, 2**16),
)
def test_log_marginal_finite_and_matches_oracle(n, log_amp, log_ls, log_beta, seed):
    rng = np.random.default_rng(seed)
    xs = np.arange(n) * 0.1
    ys = rng.normal(0, 0.2, n)
    p = KernelParams(math.exp(log_amp), math.exp(log_ls))
    beta = math.exp(log_beta)
    val = segment_log_marginal(xs, ys, p, beta)
    assert math.isfinite(val)
    ref = gp_loglik_inverse(xs, ys, p.amp2, p.ls2, beta, jitter=JITTER_START * p.amp2)
    assert val == pytest.approx(ref, rel=1e-6, abs=1e-6)
