import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bvscal import IsotonicMap, NumericalError, UQDataset, apply_isotonic, fit_isotonic, zms
from bvscal.isotonic import pava
from oracles import isotonic_minmax


class TestPava:
    def test_hand_example(self):
        np.testing.assert_array_equal(pava([4.0, 1.0]), [2.5, 2.5])

    def test_already_monotone(self):
        y = [0.1, 0.5, 0.5, 3.0]
        np.testing.assert_array_equal(pava(y), y)

    def test_weighted(self):
        # weight 3 on the first point pulls the pooled level toward it
        np.testing.assert_allclose(pava([4.0, 0.0], [3.0, 1.0]), [3.0, 3.0])

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-100, 100)))
    def test_matches_minmax_oracle(self, y):
        np.testing.assert_allclose(pava(y), isotonic_minmax(y), atol=1e-10)

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-100, 100)))
    def test_monotone_and_mean_preserving(self, y):
        fit = pava(y)
        assert np.all(np.diff(fit) >= -1e-12)
        assert fit.sum() == pytest.approx(y.sum(), abs=1e-8)


class TestMap:
    def test_pooled_example(self):
        mapping = fit_isotonic(UQDataset([2.0, 1.0], [1.0, 2.0]))
        np.testing.assert_allclose(mapping([1.0, 2.0]), np.sqrt([2.5, 2.5]))

    def test_interpolates_monotone_data(self):
        u = np.array([1.0, 2.0, 3.0])
        e = np.array([0.5, 1.0, 2.0])
        mapping = fit_isotonic(UQDataset(e, u))
        np.testing.assert_allclose(mapping(u), np.abs(e))

    def test_flat_extrapolation(self):
        mapping = IsotonicMap([1.0, 2.0], [4.0, 9.0])
        np.testing.assert_array_equal(mapping([0.1, 1.5, 50.0]), [2.0, 2.0, 3.0])

    def test_constant_level(self):
        ds = UQDataset([1.0, 1.0, 1.0], [0.2, 0.3, 0.4])
        mapping = IsotonicMap([0.1], [0.25])
        np.testing.assert_array_equal(apply_isotonic(mapping, ds).uncertainties, 0.5)

    def test_ties_are_averaged(self):
        mapping = fit_isotonic(UQDataset([1.0, 3.0, 4.0], [1.0, 1.0, 2.0]))
        np.testing.assert_allclose(mapping([1.0, 2.0]), np.sqrt([5.0, 16.0]))

    def test_all_zero_errors(self):
        with pytest.raises(NumericalError):
            fit_isotonic(UQDataset([0.0, 0.0], [1.0, 2.0]))

    def test_leading_zero_level_floored(self):
        mapping = fit_isotonic(UQDataset([0.0, 2.0], [1.0, 2.0]))
        assert np.all(mapping([1.0, 2.0]) > 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            IsotonicMap([2.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            IsotonicMap([1.0, 2.0], [2.0, 1.0])

    def test_round_trip(self):
        m = IsotonicMap([1.0, 2.0], [4.0, 9.0])
        back = IsotonicMap.from_dict(m.to_dict())
        np.testing.assert_array_equal(back.levels, m.levels)

    def test_training_zms_near_one(self, miscalibrated):
        scaled = apply_isotonic(fit_isotonic(miscalibrated), miscalibrated)
        assert 0.9 <= zms(scaled.errors, scaled.uncertainties) <= 1.1
