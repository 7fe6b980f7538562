import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvscal import NumericalError, ScoreReport, UQDataset, ence, equal_count_partition, nll, s_binned, s_cal, score_report, zms
from bvscal.metrics import LN_2PI
from conftest import make_calibrated


def two_bin(e, u):
    """Partition that puts the first half and the second half in separate bins."""
    return equal_count_partition(np.arange(len(e), dtype=float), 2)


class TestGlobal:
    def test_zms_examples(self):
        u = np.array([0.1, 0.5, 2.0])
        assert zms(u, u) == 1.0
        assert zms([1, 2], [1, 1]) == 2.5

    def test_s_cal_scale_symmetry(self):
        # ZMS = e and ZMS = 1/e both give 1
        assert s_cal([math.sqrt(math.e)], [1.0]) == pytest.approx(1.0, abs=1e-15)
        assert s_cal([1.0], [math.sqrt(math.e)]) == pytest.approx(1.0, abs=1e-15)
        assert s_cal([1.0, -1.0], [1.0, 1.0]) == 0.0

    def test_s_cal_zero_errors(self):
        with pytest.raises(NumericalError):
            s_cal([0.0, 0.0], [1.0, 1.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            zms([], [])
        with pytest.raises(ValueError):
            nll([], [])

    def test_nll_unit(self):
        assert nll(np.ones(4), np.ones(4)) == pytest.approx(0.5 * (1 + LN_2PI), abs=1e-15)
        assert nll(np.ones(4), np.ones(4)) == pytest.approx(1.4189385, abs=1e-7)

    @given(st.floats(0.05, 20.0))
    def test_nll_under_uniform_scaling(self, s):
        # oracle: expand NLL(E, s u) - NLL(E, u) by hand
        ds = make_calibrated(200, seed=5, features=False)
        e, u = ds.errors, ds.uncertainties
        expected = 0.5 * (zms(e, u) * (s**-2 - 1.0) + 2.0 * math.log(s))
        assert nll(e, s * u) - nll(e, u) == pytest.approx(expected, abs=1e-10)

    @given(st.floats(1e-3, 1e3))
    def test_log_zms_identity(self, c):
        ds = make_calibrated(50, seed=1, features=False)
        e, u = ds.errors, ds.uncertainties
        assert math.log(zms(e, c * u)) == pytest.approx(math.log(zms(e, u)) - 2 * math.log(c), abs=1e-11)


class TestBinned:
    def test_all_bins_calibrated(self):
        u = np.array([1.0, 2.0, 3.0, 4.0])
        assert s_binned(u, u, two_bin(u, u)) == 0.0
        assert ence(u, u, two_bin(u, u)) == 0.0

    def test_inverse_bins(self):
        e = np.array([math.sqrt(math.e), math.sqrt(math.e), 1.0, 1.0])
        u = np.array([1.0, 1.0, math.sqrt(math.e), math.sqrt(math.e)])
        assert s_binned(e, u, two_bin(e, u)) == pytest.approx(1.0, abs=1e-15)

    def test_ence_one_bin(self):
        e, u = np.array([2.0, 2.0]), np.array([1.0, 1.0])
        assert ence(e, u, equal_count_partition(u, 1)) == 1.0

    def test_single_score_bin_equals_s_cal(self):
        ds = make_calibrated(300, seed=9, features=False)
        p = equal_count_partition(ds.uncertainties, 1)
        assert s_binned(ds.errors, ds.uncertainties, p) == pytest.approx(s_cal(ds.errors, ds.uncertainties), abs=1e-15)

    def test_zero_bin(self):
        e = np.array([0.0, 0.0, 1.0, 1.0])
        with pytest.raises(NumericalError):
            s_binned(e, np.ones(4), two_bin(e, e))

    def test_partition_must_cover_points(self):
        p = equal_count_partition(np.arange(5.0), 2)
        with pytest.raises(ValueError):
            s_binned(np.ones(4), np.ones(4), p)


class TestReport:
    def test_composition(self):
        ds = make_calibrated(2000, seed=4)
        r = score_report(ds, n_score_bins=20)
        assert r.s_con == pytest.approx(r.s_cal + r.s_u, abs=1e-14)
        assert r.s_ada == pytest.approx(r.s_cal + r.s_per_variable["X1"] + r.s_per_variable["X2"], abs=1e-14)
        assert r.s_tot == pytest.approx(r.s_con + r.s_ada - r.s_cal, abs=1e-14)
        assert r.s_tot >= max(r.s_con, r.s_ada)
        p = equal_count_partition(ds.features["X2"], 20, "X2")
        assert r.s_per_variable["X2"] == pytest.approx(s_binned(ds.errors, ds.uncertainties, p), abs=1e-14)
        assert r.ence_per_variable["u"] == pytest.approx(
            ence(ds.errors, ds.uncertainties, equal_count_partition(ds.uncertainties, 20)), abs=1e-14)

    def test_feature_subset(self):
        ds = make_calibrated(500, seed=4)
        r = score_report(ds, ["X2"], 10)
        assert set(r.s_per_variable) == {"u", "X2"}

    def test_dict_round_trip(self):
        r = score_report(make_calibrated(500, seed=8), n_score_bins=10)
        back = ScoreReport.from_dict(r.to_dict())
        assert back.to_dict() == r.to_dict()

    def test_scale_miscalibration_detected(self):
        ds = make_calibrated(5000, seed=2)
        bad = ds.with_uncertainties(ds.uncertainties * 0.5)
        assert score_report(bad, n_score_bins=50).s_cal == pytest.approx(
            abs(math.log(zms(ds.errors, ds.uncertainties)) + 2 * math.log(2)), abs=1e-12)

    def test_too_many_score_bins(self):
        with pytest.raises(ValueError):
            score_report(UQDataset([1.0, 2.0], [1.0, 1.0]), n_score_bins=3)
