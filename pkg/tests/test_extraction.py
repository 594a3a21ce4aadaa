"""Sample-field extraction: head mapping, depth boost, fine-tuning."""

import numpy as np
import pytest

from neusample.extraction import (ExtractionPlan, depth_boost,
                                  extract_head_indices, extract_pipeline,
                                  extract_sample_field, finetune,
                                  predict_ray_depth)
from neusample.pipeline import NeuSamplePipeline, render_rays_chunked
from neusample.sampling import SampleSet
from neusample.render import composite
from neusample.scene import toy_preset

from conftest import random_rays, tiny_radiance_field, tiny_sample_field


def params_bytes(field):
    return b"".join(v.data.tobytes() for _, v in field.named_params())


class TestHeadMapping:
    def test_centered_stride_192_to_64(self):
        idx = extract_head_indices(192, 64)
        np.testing.assert_array_equal(idx, np.arange(1, 192, 3))

    def test_identity_when_counts_match(self):
        np.testing.assert_array_equal(extract_head_indices(8, 8), np.arange(8))

    def test_upward_extraction_rejected(self):
        with pytest.raises(ValueError, match="cannot extract"):
            extract_head_indices(8, 16)

    def test_indivisible_counts_still_valid(self):
        idx = extract_head_indices(10, 3)
        assert len(idx) == 3 and np.all((idx >= 0) & (idx < 10))
        assert np.all(np.diff(idx) > 0)


class TestExtractSampleField:
    def test_trunk_copied_bit_exact(self):
        regular = tiny_sample_field(n_outputs=12, seed=3)
        extracted = extract_sample_field(regular, 4)
        for dst, src in zip(extracted.trunk, regular.trunk):
            np.testing.assert_array_equal(dst.w.data, src.w.data)
            np.testing.assert_array_equal(dst.b.data, src.b.data)

    def test_head_rows_selected(self):
        regular = tiny_sample_field(n_outputs=12, seed=3)
        extracted = extract_sample_field(regular, 4)
        idx = extract_head_indices(12, 4)
        np.testing.assert_array_equal(extracted.head.w.data,
                                      regular.head.w.data[:, idx])
        np.testing.assert_array_equal(extracted.head.b.data,
                                      regular.head.b.data[idx])

    def test_outputs_are_subsequence_before_finetune(self):
        # Hidden activations are identical (trunk copied verbatim), so the
        # extracted outputs equal the selected channels of the regular field
        # up to BLAS summation order in the differently shaped head matmul.
        regular = tiny_sample_field(n_outputs=12, seed=4)
        extracted = extract_sample_field(regular, 4)
        rays = random_rays(6, seed=9)
        full = regular.forward(rays.origins, rays.dirs).data
        sub = extracted.forward(rays.origins, rays.dirs).data
        np.testing.assert_allclose(sub, full[:, extract_head_indices(12, 4)],
                                   rtol=1e-12, atol=1e-15)

    def test_identity_extraction_is_bit_exact(self):
        regular = tiny_sample_field(n_outputs=6, seed=5)
        extracted = extract_sample_field(regular, 6)
        rays = random_rays(4, seed=2)
        np.testing.assert_array_equal(
            regular.forward(rays.origins, rays.dirs).data,
            extracted.forward(rays.origins, rays.dirs).data)


def small_scene(preset="occluder", views=8, resolution=16):
    scene = toy_preset(preset, views=views, resolution=resolution)
    scene.ring.test_every = 4
    return scene.build_dataset()


def small_pipeline(n=8, seed=0):
    sf = tiny_sample_field(n_outputs=n, hidden=16, num_layers=2, seed=seed)
    rf = tiny_radiance_field(hidden=16, num_layers=2, dir_hidden=8,
                             seed=seed + 1)
    return NeuSamplePipeline(sf, rf)


class TestPredictRayDepth:
    def test_empty_scene_depth_is_zero(self):
        pipe = small_pipeline()
        pipe.radiance_field.density_head.w.data[:] = 0.0
        pipe.radiance_field.density_head.b.data[:] = -100.0
        rays = random_rays(5, seed=1)
        np.testing.assert_array_equal(predict_ray_depth(pipe, rays), np.zeros(5))

    def test_opaque_point_depth(self):
        # A single sample with huge density pins the expected depth there.
        from neusample.sampling import Rays

        rays = Rays.single([0, 0, 0], [0, 0, 1.0], 2.0, 6.0)
        ss = SampleSet(rays, np.array([[3.0]]))
        out = composite(ss, np.array([[1e6]]), np.array([[[0.5, 0.5, 0.5]]]))
        assert out.depth[0] == pytest.approx(3.0, abs=1e-9)

    def test_slab_depth_close_to_dense_quadrature(self):
        # Covered in detail by the renderer tests; here: detached output.
        pipe = small_pipeline()
        rays = random_rays(3, seed=5)
        d = predict_ray_depth(pipe, rays)
        assert d.shape == (3,) and np.all(np.isfinite(d))


class TestDepthBoost:
    def test_disabled_plan_is_noop(self):
        ds = small_scene()
        regular = small_pipeline(n=8)
        extracted = extract_pipeline(regular, 4)
        before = params_bytes(extracted.sample_field)
        log = depth_boost(extracted, regular, ds,
                          ExtractionPlan(4, depth_boost=False))
        assert log == []
        assert params_bytes(extracted.sample_field) == before

    def test_depth_complex_scene_enables_boost_by_default(self):
        ds = small_scene("occluder")
        assert ExtractionPlan(4).resolve_boost(ds) is True
        assert ExtractionPlan(4).resolve_boost(small_scene("spheres")) is False

    def test_boost_moves_only_extracted_sample_field(self):
        ds = small_scene()
        regular = small_pipeline(n=8, seed=3)
        extracted = extract_pipeline(regular, 4)
        frozen = (params_bytes(regular.sample_field),
                  params_bytes(regular.radiance_field),
                  params_bytes(extracted.radiance_field))
        before_sf = params_bytes(extracted.sample_field)
        plan = ExtractionPlan(4, depth_boost=True, boost_pose_count=4,
                              boost_rays_per_iter=256, boost_epochs=1)
        log = depth_boost(extracted, regular, ds, plan)
        assert len(log) >= 1
        assert (params_bytes(regular.sample_field),
                params_bytes(regular.radiance_field),
                params_bytes(extracted.radiance_field)) == frozen
        assert params_bytes(extracted.sample_field) != before_sf

    def test_constant_target_convergence(self):
        # With the regular pipeline rigged to predict the same depth for
        # every ray, boosting must pull the extracted mean depth onto it
        # for every ray of the boost pose distribution.
        from neusample.scene import camera_rays, spiral_poses

        ds = small_scene("spheres", views=8, resolution=12)
        regular = small_pipeline(n=8, seed=11)
        const_depth = 3.7

        class ConstantDepth:
            def render_rays(self, rays, background=None, **kw):
                class Out:
                    depth = np.full(len(rays), const_depth)
                return Out(), None

        extracted = extract_pipeline(regular, 4)
        plan = ExtractionPlan(4, depth_boost=True, boost_pose_count=6,
                              boost_rays_per_iter=432, boost_epochs=240,
                              boost_lr=5e-3, boost_lr_final=1e-5)
        depth_boost(extracted, ConstantDepth(), ds, plan)
        probe = camera_rays(spiral_poses(ds, plan.boost_pose_count)[2],
                            ds.near, ds.far)
        t_hat = extracted.sample_field.forward(probe.origins, probe.dirs).data
        depths = 2.0 + t_hat * 4.0
        assert np.abs(depths.mean(axis=1) - const_depth).max() < 1e-2


class TestFinetuneAndIdentity:
    def test_zero_iters_leaves_parameters_unchanged(self):
        ds = small_scene("spheres")
        pipe = small_pipeline()
        before = params_bytes(pipe.sample_field) + params_bytes(pipe.radiance_field)
        assert finetune(pipe, ds, ExtractionPlan(4, finetune_iters=0)) == []
        after = params_bytes(pipe.sample_field) + params_bytes(pipe.radiance_field)
        assert before == after

    def test_identity_extraction_renders_bit_identical(self):
        ds = small_scene("spheres", views=8, resolution=12)
        regular = small_pipeline(n=6, seed=21)
        extracted = extract_pipeline(regular, 6)
        rays = random_rays(40, seed=3, near=ds.near, far=ds.far)
        a = render_rays_chunked(regular, rays, background=ds.background)[0]
        b = render_rays_chunked(extracted, rays, background=ds.background)[0]
        np.testing.assert_array_equal(a, b)
