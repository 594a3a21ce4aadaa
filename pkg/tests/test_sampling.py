"""Depth sampling strategies: stratified, inverse-CDF, and the learned map."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neusample import autodiff as ad
from neusample.sampling import (Rays, inverse_cdf_resample, stratified_sample,
                                to_world_samples)

from conftest import random_rays


class TestRays:
    def test_bounds_validated(self):
        with pytest.raises(ValueError, match="near bound"):
            Rays(np.zeros((1, 3)), np.array([[1.0, 0, 0]]), [5.0], [2.0])

    def test_indexing_preserves_fields(self):
        rays = random_rays(10)
        sub = rays[2:5]
        assert len(sub) == 3
        np.testing.assert_array_equal(sub.origins, rays.origins[2:5])


class TestStratified:
    def test_single_bin_midpoint(self):
        rays = Rays.single([0, 0, 0], [1, 0, 0], 2.0, 6.0)
        ss = stratified_sample(rays, 1, rng=None)
        assert ss.depths[0, 0] == pytest.approx(4.0, abs=0)

    def test_every_sample_inside_its_bin(self, rng):
        rays = random_rays(50, seed=1)
        n = 64
        ss = stratified_sample(rays, n, rng)
        width = (rays.far - rays.near)[:, None] / n
        lo = rays.near[:, None] + np.arange(n) * width
        assert np.all(ss.depths >= lo) and np.all(ss.depths <= lo + width)
        assert np.all(np.diff(ss.depths, axis=1) > 0)

    def test_per_bin_mean_matches_bin_center(self):
        # 1e5 draws over 4 bins; the empirical per-bin mean must sit within
        # 3 standard errors of the bin center.
        rng = np.random.default_rng(2024)
        rays = Rays(np.zeros((100_000 // 4, 3)),
                    np.tile([[0.0, 0.0, 1.0]], (100_000 // 4, 1)),
                    np.full(100_000 // 4, 2.0), np.full(100_000 // 4, 6.0))
        ss = stratified_sample(rays, 4, rng)
        width = 1.0
        for b in range(4):
            centers = 2.0 + width * (b + 0.5)
            mean = ss.depths[:, b].mean()
            sigma = width / np.sqrt(12) / np.sqrt(len(rays))
            assert abs(mean - centers) < 3 * sigma

    def test_requires_positive_count(self):
        with pytest.raises(ValueError):
            stratified_sample(random_rays(1), 0)


class TestInverseCdf:
    def test_point_mass_with_zero_floor(self, rng):
        edges = np.array([[0.0, 1.0, 2.0, 3.0, 4.0]])
        w = np.array([[1.0, 0.0, 0.0, 0.0]])
        out = inverse_cdf_resample(edges, w, 1000, rng, floor=0.0)
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_uniform_weights_match_uniform_cdf(self):
        rng = np.random.default_rng(7)
        edges = np.linspace(0.0, 1.0, 9)[None, :].repeat(100, axis=0)
        w = np.ones((100, 8))
        out = inverse_cdf_resample(edges, w, 1000, rng).reshape(-1)
        # Kolmogorov-Smirnov statistic against the uniform CDF on [0, 1].
        xs = np.sort(out)
        ks = np.abs(xs - (np.arange(len(xs)) + 1) / len(xs)).max()
        assert ks < 0.01

    def test_two_bin_mass_split(self):
        rng = np.random.default_rng(11)
        edges = np.array([[0.0, 1.0, 2.0]]).repeat(100, axis=0)
        w = np.array([[1.0, 3.0]]).repeat(100, axis=0)
        out = inverse_cdf_resample(edges, w, 1000, rng)
        frac = (out > 1.0).mean()
        assert abs(frac - 0.75) < 0.01

    def test_degenerate_weights_fall_back_to_uniform(self):
        rng = np.random.default_rng(3)
        edges = np.array([[2.0, 3.0, 4.0, 5.0, 6.0]])
        w = np.zeros((1, 4))
        out = inverse_cdf_resample(edges, w, 4000, rng)
        assert np.all((out >= 2.0) & (out <= 6.0))
        assert abs((out < 4.0).mean() - 0.5) < 0.05

    def test_total_variation_against_target_pdf(self):
        # Acceptance-grade check: TV distance of the empirical bin
        # frequencies vs the floored/normalized PDF over 1e5 draws.
        rng = np.random.default_rng(99)
        w8 = np.array([0.05, 0.3, 0.0, 0.15, 0.25, 0.0, 0.2, 0.05])
        edges = np.linspace(2.0, 6.0, 9)
        out = inverse_cdf_resample(edges[None, :].repeat(100, axis=0),
                                   w8[None, :].repeat(100, axis=0),
                                   1000, rng).reshape(-1)
        target = (w8 + 1e-5) / (w8 + 1e-5).sum()
        hist = np.histogram(out, bins=edges)[0] / out.size
        assert 0.5 * np.abs(hist - target).sum() < 0.02

    def test_edge_count_mismatch_rejected(self):
        with pytest.raises(ValueError, match="one more edge"):
            inverse_cdf_resample(np.zeros((1, 4)), np.ones((1, 4)), 8)


class TestToWorldSamples:
    def test_endpoint_limits(self):
        rays = Rays.single([0, 0, 0], [0, 0, 1], 2.0, 6.0)
        ss = to_world_samples(rays, np.array([[0.0, 1.0]]))
        np.testing.assert_array_equal(ss.depths, [[2.0, 6.0]])

    def test_affine_map_then_sort(self):
        rays = Rays.single([0, 0, 0], [0, 0, 1], 2.0, 6.0)
        ss = to_world_samples(rays, np.array([[0.9, 0.1]]))
        np.testing.assert_allclose(ss.depths, [[2.4, 5.6]], rtol=1e-15)

    def test_depths_are_permutation_of_affine_inputs(self, rng):
        rays = random_rays(6, seed=4)
        t_hat = rng.uniform(0.01, 0.99, (6, 16))
        ss = to_world_samples(rays, t_hat)
        raw = rays.near[:, None] + t_hat * (rays.far - rays.near)[:, None]
        np.testing.assert_array_equal(np.sort(raw, axis=1), ss.depths)

    def test_positions_match_ray_equation(self, rng):
        rays = random_rays(5, seed=6)
        ss = to_world_samples(rays, rng.uniform(0.01, 0.99, (5, 8)))
        expected = (rays.origins[:, None, :]
                    + ss.depths[:, :, None] * rays.dirs[:, None, :])
        assert np.abs(ss.positions - expected).max() < 1e-12

    def test_gradients_flow_through_sort(self, rng):
        t_hat = ad.Value(rng.uniform(0.2, 0.8, (3, 5)))
        rays = random_rays(3, seed=8)
        ss = to_world_samples(rays, t_hat)
        ad.backward(ad.reduce_sum(ss.t))
        # dt/dt_hat = far - near = 4 for every entry, sort notwithstanding.
        np.testing.assert_allclose(t_hat.grad, np.full((3, 5), 4.0), rtol=1e-15)

    def test_gaps_respect_far_bound(self, rng):
        rays = random_rays(4, seed=10)
        ss = to_world_samples(rays, rng.uniform(0.01, 0.99, (4, 6)))
        gaps = ss.gaps()
        assert np.all(gaps >= 0)
        np.testing.assert_allclose(gaps[:, -1],
                                   rays.far - ss.depths[:, -1], rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=64), st.integers(min_value=0, max_value=2**31 - 1))
def test_stratified_sorted_for_any_count(n, seed):
    rays = random_rays(3, seed=seed % 1000)
    ss = stratified_sample(rays, n, np.random.default_rng(seed))
    assert ss.depths.shape == (3, n)
    assert np.all(np.diff(ss.depths, axis=1) >= 0)
    assert np.all((ss.depths >= rays.near[:, None]) & (ss.depths <= rays.far[:, None]))
