import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klsaliency import (
    FeatureStack,
    ShapeMismatch,
    Tensor,
    ValueOutOfRange,
    combine_literal,
    combine_matched,
    finalize_map,
    overlay,
    render,
    salient_area_fraction,
    standardize,
)

M1 = np.array([[1.0, 0.0], [0.0, 0.0]])
M2 = np.array([[0.0, 0.0], [0.0, 1.0]])


class TestCombineLiteral:
    def test_single_map_two_weights(self):
        out = combine_literal(FeatureStack([[[1.0, 2.0], [3.0, 4.0]]]), [1.0, -1.0])
        np.testing.assert_allclose(out.raw, [[2.0, 4.0], [6.0, 8.0]], atol=1e-12)

    def test_two_maps_single_weight(self):
        out = combine_literal(FeatureStack([M1, M2]), [0.5])
        np.testing.assert_allclose(out.raw, [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)

    def test_zero_weights_degenerate(self):
        out = combine_literal(FeatureStack([M1, M2]), [0.0, 0.0])
        np.testing.assert_array_equal(out.raw, np.zeros((2, 2)))
        np.testing.assert_array_equal(out.normalized, np.zeros((2, 2)))

    def test_loop_equals_closed_form(self):
        rng = np.random.default_rng(71)
        for _ in range(10):
            m = int(rng.integers(1, 6))
            k = int(rng.integers(1, 8))
            maps = rng.normal(size=(m, 4, 3))
            weights = rng.normal(size=k)
            out = combine_literal(FeatureStack(maps), weights)
            closed = np.abs(weights).sum() * maps.sum(axis=0)
            np.testing.assert_allclose(out.raw, closed, atol=1e-9)

    def test_label_invariance_of_finalized_map(self):
        # Any two weight vectors with positive |alpha| mass produce the same
        # normalized map: the double sum factorizes and min-max cancels it.
        rng = np.random.default_rng(73)
        maps = FeatureStack(rng.uniform(0.0, 2.0, size=(5, 6, 6)))
        a1 = standardize(rng.normal(size=10))
        a2 = standardize(rng.normal(size=10))
        h1 = finalize_map(combine_literal(maps, a1), 12, 12).array
        h2 = finalize_map(combine_literal(maps, a2), 12, 12).array
        assert np.abs(h1 - h2).max() <= 1e-6

    def test_nonnegative_maps_give_nonnegative_raw(self):
        rng = np.random.default_rng(79)
        maps = rng.uniform(0.0, 1.0, size=(4, 3, 3))
        out = combine_literal(FeatureStack(maps), rng.normal(size=6))
        assert out.raw.min() >= 0.0


class TestCombineMatched:
    def test_selector_picks_one_map(self):
        out = combine_matched(FeatureStack([M1, M2]), [1.0, 0.0])
        np.testing.assert_array_equal(out.raw, M1)

    def test_uniform_weights_sum_maps(self):
        out = combine_matched(FeatureStack([M1, M2]), [1.0, 1.0])
        np.testing.assert_array_equal(out.raw, [[1.0, 0.0], [0.0, 1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            combine_matched(FeatureStack([M1, M2]), [1.0, 0.0, 0.0])

    def test_discriminates_on_disjoint_supports(self):
        h1 = finalize_map(combine_matched(FeatureStack([M1, M2]), [1.0, 0.0]), 2, 2).array
        h2 = finalize_map(combine_matched(FeatureStack([M1, M2]), [0.0, 1.0]), 2, 2).array
        assert np.abs(h1 - h2).max() >= 0.5

    def test_nonnegative_maps_give_nonnegative_raw(self):
        rng = np.random.default_rng(83)
        maps = rng.uniform(0.0, 1.0, size=(5, 3, 3))
        out = combine_matched(FeatureStack(maps), rng.normal(size=5))
        assert out.raw.min() >= 0.0


class TestFinalizeMap:
    def test_constant_map_zeros(self):
        out = finalize_map(combine_literal(FeatureStack([np.full((2, 2), 3.0)]), [1.0]), 4, 4)
        np.testing.assert_array_equal(out.array, np.zeros((4, 4)))

    def test_normalize_then_resize_composition(self):
        sal = combine_matched(FeatureStack([[[0.0, 1.0], [1.0, 2.0]]]), [1.0])
        out = finalize_map(sal, 3, 3)
        expected = [[0.0, 0.25, 0.5], [0.25, 0.5, 0.75], [0.5, 0.75, 1.0]]
        np.testing.assert_allclose(out.array, expected, atol=1e-12)

    def test_same_size_is_normalization_only(self):
        sal = combine_matched(FeatureStack([[[0.0, 2.0], [4.0, 8.0]]]), [1.0])
        out = finalize_map(sal, 2, 2)
        np.testing.assert_allclose(out.array, [[0.0, 0.25], [0.5, 1.0]], atol=1e-12)


class TestRender:
    def test_jet_endpoints(self):
        low = render(Tensor([[0.0]]), "jet").pixels[0, 0]
        high = render(Tensor([[1.0]]), "jet").pixels[0, 0]
        assert tuple(low) == (0, 0, 128)
        assert tuple(high) == (128, 0, 0)

    def test_jet_midpoint(self):
        mid = render(Tensor([[0.5]]), "jet").pixels[0, 0]
        assert tuple(mid) == (128, 255, 128)

    def test_gray_rounds_half_up(self):
        px = render(Tensor([[0.5]]), "gray").pixels[0, 0]
        assert tuple(px) == (128, 128, 128)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueOutOfRange):
            render(Tensor([[1.5]]), "jet")
        with pytest.raises(ValueOutOfRange):
            render(Tensor([[-0.1]]), "gray")

    def test_unknown_colormap(self):
        with pytest.raises(ValueError):
            render(Tensor([[0.5]]), "viridis")


class TestOverlay:
    def _heat(self, value=200):
        return render(Tensor(np.full((2, 2), value / 255.0)), "gray")

    def test_blend_zero_keeps_image(self):
        img = np.full((2, 2, 3), 100, dtype=np.uint8)
        out = overlay(img, self._heat(), 0.0)
        np.testing.assert_array_equal(out.pixels, img)

    def test_blend_one_keeps_heat(self):
        img = np.full((2, 2, 3), 100, dtype=np.uint8)
        heat = self._heat()
        out = overlay(img, heat, 1.0)
        np.testing.assert_array_equal(out.pixels, heat.pixels)

    def test_midpoint(self):
        img = np.full((2, 2, 3), 100, dtype=np.uint8)
        out = overlay(img, self._heat(200), 0.5)
        assert out.pixels[0, 0, 0] == 150

    def test_shape_mismatch(self):
        img = np.full((3, 2, 3), 100, dtype=np.uint8)
        with pytest.raises(ShapeMismatch):
            overlay(img, self._heat(), 0.5)

    def test_blend_out_of_range(self):
        img = np.full((2, 2, 3), 100, dtype=np.uint8)
        with pytest.raises(ValueOutOfRange):
            overlay(img, self._heat(), 1.5)


class TestSalientAreaFraction:
    def test_all_ones(self):
        assert salient_area_fraction(Tensor(np.ones((4, 4))), 0.5) == 1.0

    def test_quarter_mass(self):
        heat = np.zeros((4, 4))
        heat[:2, :2] = 1.0
        assert salient_area_fraction(Tensor(heat), 0.5) == 0.25

    def test_all_zeros(self):
        assert salient_area_fraction(Tensor(np.zeros((3, 3))), 0.5) == 0.0

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=12, max_size=12))
    @settings(max_examples=40)
    def test_monotone_in_tau(self, values):
        heat = Tensor(np.array(values).reshape(3, 4))
        fractions = [salient_area_fraction(heat, tau) for tau in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))
