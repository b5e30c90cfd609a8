import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from segseq.model import (
    Hyperparams,
    InvalidArgument,
    KernelParams,
    ModelState,
    Segmentation,
    Sequence,
    length_log_prior,
    segment_length,
    segmentation_log_prior,
    standardize,
    validate_dataset,
)


def grid_seq(n, dt=0.1, sid="s"):
    x = np.arange(n) * dt
    return Sequence(sid, x, np.zeros(n))


class TestLengthPrior:
    def test_reference_values(self):
        assert length_log_prior(4.0, 0.25) == pytest.approx(math.log(0.25) - 1.0, abs=1e-12)
        assert length_log_prior(4.0, 0.25) == pytest.approx(-2.3862944, abs=1e-7)
        assert length_log_prior(1.0, 1.0) == pytest.approx(-1.0, abs=1e-15)

    @pytest.mark.parametrize("l,lam", [(0.0, 0.25), (-1.0, 0.25), (1.0, 0.0), (1.0, -2.0)])
    def test_rejects_non_positive(self, l, lam):
        with pytest.raises(InvalidArgument):
            length_log_prior(l, lam)

    @pytest.mark.parametrize("lam", [0.1, 0.25, 2.0])
    def test_density_integrates_to_one(self, lam):
        total, _ = integrate.quad(lambda l: math.exp(length_log_prior(l, lam)), 1e-300, math.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("lam", [0.25, 1.5])
    def test_mean_is_inverse_rate(self, lam):
        mean, _ = integrate.quad(lambda l: l * math.exp(length_log_prior(l, lam)), 1e-300, math.inf)
        assert mean == pytest.approx(1.0 / lam, rel=1e-8)


class TestSegmentationPrior:
    def test_single_full_segment(self):
        # 300 points at spacing 0.1: the last segment gets one extra spacing, length 30
        seq = grid_seq(300)
        seg = Segmentation.from_starts("s", [0], 300)
        assert seg.lengths(seq) == [pytest.approx(30.0)]
        assert segmentation_log_prior(seg, seq, 0.25) == pytest.approx(math.log(0.25) - 7.5, abs=1e-9)

    def test_fifteen_equal_segments(self):
        seq = grid_seq(300)
        seg = Segmentation.from_starts("s", range(0, 300, 20), 300)
        assert seg.num_segments == 15
        np.testing.assert_allclose(seg.lengths(seq), 2.0, atol=1e-9)
        assert segmentation_log_prior(seg, seq, 0.25) == pytest.approx(15 * (math.log(0.25) - 0.5), abs=1e-9)

    def test_two_segments_unit_rate(self):
        seq = Sequence("s", [0.0, 1.0, 2.0, 3.0, 4.0], np.zeros(5))
        seg = Segmentation.from_starts("s", [0, 2], 5)
        assert seg.lengths(seq) == [2.0, 3.0]
        assert segmentation_log_prior(seg, seq, 1.0) == pytest.approx(-5.0, abs=1e-12)

    def test_single_point_uses_unit_spacing(self):
        seq = Sequence("p", [3.0], [1.0])
        assert Segmentation("p", [1]).lengths(seq) == [1.0]

    def test_irregular_final_segment_uses_median_spacing(self):
        x = np.array([0.0, 0.1, 0.3, 0.4, 1.0])
        # spacings 0.1, 0.2, 0.1, 0.6 have median 0.15
        assert segment_length(x, 2, 5, float(np.median(np.diff(x)))) == pytest.approx(0.7 + 0.15)


class TestSegmentation:
    def test_requires_leading_one(self):
        with pytest.raises(InvalidArgument):
            Segmentation("s", [0, 1, 0])

    def test_requires_binary(self):
        with pytest.raises(InvalidArgument):
            Segmentation("s", [1, 2, 0])

    @given(st.lists(st.booleans(), min_size=0, max_size=40))
    def test_segments_tile_the_sequence(self, bits):
        c = [1] + [int(b) for b in bits]
        seg = Segmentation("s", c)
        covered = [i for s, e in seg.segments for i in range(s, e)]
        assert covered == list(range(len(c)))
        assert seg.num_segments == sum(c)
        assert all(e > s for s, e in seg.segments)

    @given(st.lists(st.booleans(), min_size=0, max_size=30), st.floats(0.01, 5.0))
    def test_lengths_positive_and_sum_to_span(self, bits, dt):
        c = [1] + [int(b) for b in bits]
        seq = grid_seq(len(c), dt=dt)
        lengths = Segmentation("s", c).lengths(seq)
        assert all(l > 0 for l in lengths)
        span = (len(c) - 1) * dt + (dt if len(c) > 1 else 1.0)
        assert sum(lengths) == pytest.approx(span, rel=1e-9)


class TestHyperparams:
    def test_round_trip(self):
        hp = Hyperparams(lam=0.5, M=3, seed=7)
        assert Hyperparams.from_dict(hp.to_dict()) == hp
        assert "lambda" in hp.to_dict() and "lam" not in hp.to_dict()

    def test_names_bad_fields(self):
        with pytest.raises(InvalidArgument, match="lambda"):
            Hyperparams(lam=0.0)
        with pytest.raises(InvalidArgument, match="alpha0"):
            Hyperparams(alpha0=-1.0)
        with pytest.raises(InvalidArgument, match="M"):
            Hyperparams(M=0)

    def test_rejects_unknown_fields(self):
        with pytest.raises(InvalidArgument, match="bogus"):
            Hyperparams.from_dict({"bogus": 1})
        with pytest.raises(InvalidArgument, match="speed"):
            Hyperparams.from_dict({"gibbs": {"speed": 3}})


class TestModelState:
    def test_expected_pi_and_active(self):
        st_ = ModelState([KernelParams(1, 1)] * 3, 0.1, [0.1, 5.0, 4.9])
        np.testing.assert_allclose(st_.expected_pi.sum(), 1.0)
        assert st_.active_kernels(0.05) == [1, 2]

    def test_rejects_mismatched_alpha(self):
        with pytest.raises(InvalidArgument):
            ModelState([KernelParams(1, 1)], 0.1, [1.0, 1.0])

    def test_kernel_params_positive(self):
        with pytest.raises(InvalidArgument):
            KernelParams(0.0, 1.0)
        with pytest.raises(InvalidArgument):
            KernelParams(1.0, math.inf)


class TestValidateDataset:
    def test_valid(self):
        assert validate_dataset([grid_seq(5, sid="a"), grid_seq(1, sid="b")]) == []

    def test_reports_every_violation(self):
        bad = Sequence("b", [0.0, 1.0, 1.0, 0.5], [0.0, np.nan, 1.0, np.inf])
        report = validate_dataset([grid_seq(3, sid="a"), bad, Sequence("a", [0.0], [0.0])])
        kinds = {(v.seq_id, v.kind, v.index) for v in report}
        assert ("b", "non-finite-value", 1) in kinds
        assert ("b", "non-finite-value", 3) in kinds
        assert ("b", "duplicate-timestamp", 2) in kinds
        assert ("b", "non-increasing", 3) in kinds
        assert ("a", "duplicate-id", None) in kinds

    def test_length_mismatch_and_empty(self):
        report = validate_dataset([Sequence("m", [0.0, 1.0], [0.0]), Sequence("e", [], [])])
        assert {v.kind for v in report} == {"length-mismatch", "empty"}


def test_standardize_round_trip():
    data = [Sequence("a", [0, 1, 2], [1.0, 2.0, 3.0]), Sequence("b", [0, 1], [5.0, 7.0])]
    z, mean, std = standardize(data)
    ys = np.concatenate([s.y for s in z])
    assert ys.mean() == pytest.approx(0.0, abs=1e-12)
    assert ys.std() == pytest.approx(1.0, abs=1e-12)
    again, _, _ = standardize(data, mean, std)
    np.testing.assert_array_equal(again[1].y, z[1].y)
