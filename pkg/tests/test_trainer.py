import json
import math

import numpy as np
import pytest

from segseq import io
from segseq.generator import GeneratorSpec, sample_dataset
from segseq.model import (
    GibbsConfig,
    Hyperparams,
    InvalidArgument,
    KernelParams,
    MStepConfig,
    ModelState,
    OuterConfig,
    Sequence,
)
from segseq.trainer import fit, initial_state, match_kernels, segment
from segseq.vem import expected_log_pi

from oracles import gp_loglik

SMALL = Hyperparams(
    M=3,
    gibbs=GibbsConfig(num_samples=10, burn_in=10, thinning=1, sweeps_per_round=2),
    mstep=MStepConfig(max_iters=15),
    outer=OuterConfig(max_rounds=3, inner_repeats=1),
)


@pytest.fixture(scope="module")
def small_data():
    K = [KernelParams(0.01, 0.1), KernelParams(0.05, 0.005)]
    data, truths = sample_dataset(GeneratorSpec([8, 5], K, 0.001, seed=1))
    return data, truths


def test_initial_state_follows_priors():
    st_ = initial_state(Hyperparams(M=4, seed=3))
    assert st_.M == 4
    assert st_.beta == pytest.approx(0.01)
    np.testing.assert_array_equal(st_.alpha, 0.1)
    assert initial_state(Hyperparams(M=4, seed=3)).kernels == st_.kernels


def test_fit_diagnostics_and_checkpoint(small_data, tmp_path):
    data, _ = small_data
    ck, diag = tmp_path / "m.json", tmp_path / "d.jsonl"
    res = fit(data, SMALL, checkpoint_path=ck, diagnostics_path=diag)
    lines = [json.loads(l) for l in diag.read_text().splitlines()]
    assert len(lines) == len(res.diagnostics) >= 1
    assert set(lines[0]) == {"round", "objective", "alpha", "active_kernels", "mean_segments", "wallclock_ms"}
    state, hp, _ = io.load_checkpoint(ck)
    assert state.kernels == res.state.kernels
    assert hp == SMALL
    assert np.all(res.state.alpha >= SMALL.alpha0)


def test_fit_rejects_invalid(small_data):
    with pytest.raises(InvalidArgument):
        fit([], SMALL)
    with pytest.raises(InvalidArgument, match="non-increasing"):
        fit([Sequence("s", [0.0, 2.0, 1.0], [0.0, 0.0, 0.0])], SMALL)


def test_segment_outputs(small_data):
    data, _ = small_data
    res = fit(data, SMALL)
    out = segment(data, res.state, SMALL, num_samples=5)
    assert out.seq_ids == [s.id for s in data]
    for seq, m, samples, labels in zip(data, out.marginals, out.samples, out.labels):
        assert m.shape == (len(seq) - 1,)
        assert len(samples) == 5
        assert all(len(l) == s.num_segments for l, s in zip(labels, samples))


def test_single_point_label():
    state = ModelState([KernelParams(0.01, 1.0), KernelParams(4.0, 1.0)], 0.001, [3.0, 0.5])
    seq = Sequence("p", [0.0], [1.5])
    out = segment([seq], state, SMALL, num_samples=3)
    scores = [
        gp_loglik([0.0], [1.5], k.amp2, k.ls2, 0.001, 1e-9 * k.amp2) + e
        for k, e in zip(state.kernels, expected_log_pi(state.alpha))
    ]
    assert out.samples[0][0].starts == [0]
    assert out.labels[0][0] == [int(np.argmax(scores))]


def test_match_kernels_handles_permutation():
    truth = [KernelParams(0.01, 0.1), KernelParams(0.05, 0.005)]
    learned = [KernelParams(0.3, 3.0), KernelParams(0.049, 0.0051), KernelParams(0.011, 0.09)]
    assert match_kernels(learned, truth) == [(0, 2), (1, 1)]
    assert match_kernels(learned, truth, candidates=[0, 1]) == [(0, 0), (1, 1)]
