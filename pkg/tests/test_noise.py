"""Unit tests for simulator.noise module."""
import numpy as np
import pytest

from simulator.noise import DEFAULT_WIDTH, GUMBEL_START, NoiseSource, derive_noise, stream_key


class TestNoiseSource:
    """Test counter-based noise blocks."""

    def test_block_shape_and_range(self):
        draw = NoiseSource(1).block("income", 3, 0, 100)
        assert draw.uniforms.shape == (100, DEFAULT_WIDTH)
        assert draw.n == 100
        assert ((draw.uniforms > 0) & (draw.uniforms < 1)).all()

    def test_row_independent_of_block_split(self):
        """Test that a subject's noise does not depend on the block it falls in."""
        source = NoiseSource(7)
        whole = source.block("studies", 2, 0, 300).uniforms
        parts = np.vstack([source.block("studies", 2, lo, lo + 100).uniforms for lo in (0, 100, 200)])
        np.testing.assert_array_equal(whole, parts)

    def test_derive_noise_matches_block_row(self):
        block = NoiseSource(5).block("age", 1, 0, 50).uniforms
        single = derive_noise(5, 17, "age", 1).uniforms
        np.testing.assert_array_equal(single[0], block[17])

    @pytest.mark.parametrize("other", [(2, "age", 1), (1, "sex", 1), (1, "age", 2)])
    def test_keys_give_distinct_streams(self, other):
        first = NoiseSource(1).block("age", 1, 0, 10).uniforms
        seed, variable, t = other
        second = NoiseSource(seed).block(variable, t, 0, 10).uniforms
        assert not np.array_equal(first, second)

    def test_same_key_is_reproducible(self):
        first = NoiseSource(3).block("workclass", 4, 10, 20).uniforms
        second = NoiseSource(3).block("workclass", 4, 10, 20).uniforms
        np.testing.assert_array_equal(first, second)

    def test_uniforms_are_roughly_uniform(self):
        u = NoiseSource(0).block("x", 1, 0, 20000).stay
        assert abs(u.mean() - 0.5) < 0.01
        assert abs(np.mean(u < 0.1) - 0.1) < 0.01

    def test_normal_slot(self):
        z = NoiseSource(0).block("x", 1, 0, 20000).normal
        assert abs(z.mean()) < 0.03
        assert abs(z.std() - 1.0) < 0.03

    def test_narrow_width_rejected(self):
        with pytest.raises(ValueError):
            NoiseSource(0, width=GUMBEL_START)

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            stream_key(-1, "age", 1)


class TestNoiseDraw:
    """Test views over a block of uniforms."""

    def test_gumbel_slots(self):
        draw = NoiseSource(2).block("occupation", 1, 0, 5)
        g = draw.gumbel(14)
        assert g.shape == (5, 14)
        np.testing.assert_allclose(np.exp(-np.exp(-g)), draw.uniforms[:, GUMBEL_START:GUMBEL_START + 14])

    def test_gumbel_wider_than_block(self):
        draw = NoiseSource(2, width=8).block("occupation", 1, 0, 5)
        with pytest.raises(ValueError):
            draw.gumbel(4)

    def test_subset_keeps_rows(self):
        draw = NoiseSource(2).block("age", 1, 0, 6)
        mask = np.array([True, False, True, False, False, True])
        np.testing.assert_array_equal(draw.subset(mask).uniforms, draw.uniforms[mask])
        assert draw.subset(mask).n == 3
