"""Dataset loading, the toy-scene oracle, cameras, and checkpoints."""

import json

import numpy as np
import pytest

from neusample.checkpoint import load_checkpoint, save_checkpoint
from neusample.errors import ConfigError, DataError
from neusample.optim import AdamState, PolynomialSchedule
from neusample.pipeline import build_pipeline, pipeline_from_checkpoint
from neusample.sampling import Rays
from neusample.scene import (Camera, ToyScene, camera_rays, downscale_image,
                             generate_toy_scene, load_blender_scene, load_image,
                             load_scene, look_at_pose, ray_for_pixel,
                             save_image, spiral_path, spiral_poses, toy_preset)

from conftest import random_rays


def write_blender_fixture(root, width=9, height=7, angle=0.8, frames=2):
    """Minimal two-split fixture with gradient PNGs and known poses."""
    rng = np.random.default_rng(0)
    for split, count in (("train", frames), ("test", 1)):
        entries = []
        for i in range(count):
            img = rng.uniform(0, 1, (height, width, 3))
            name = f"{split}_{i}"
            save_image(root / f"{name}.png", img)
            pose = np.eye(4)
            pose[:3, 3] = [0.0, 0.0, float(i)]
            entries.append({"file_path": name,
                            "transform_matrix": pose.tolist()})
        (root / f"transforms_{split}.json").write_text(json.dumps(
            {"camera_angle_x": angle, "frames": entries}))
    return root


class TestCameraRays:
    def test_identity_pose_principal_pixel_looks_down_z(self):
        cam = Camera(np.eye(4), focal=10.0, width=9, height=9)
        rays = ray_for_pixel(cam, 4, 4, (2.0, 6.0))
        np.testing.assert_allclose(rays.dirs[0], [0.0, 0.0, -1.0], atol=1e-15)

    def test_all_rays_share_the_camera_center(self):
        pose = look_at_pose([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        cam = Camera(pose, focal=20.0, width=8, height=6)
        rays = camera_rays(cam, 2.0, 6.0)
        np.testing.assert_array_equal(rays.origins,
                                      np.tile([1.0, 2.0, 3.0], (48, 1)))

    def test_directions_unit_norm(self, rng):
        pose = look_at_pose([2.0, -1.0, 1.5], [0.0, 0.0, 0.0])
        cam = Camera(pose, focal=30.0, width=100, height=100)
        px = rng.integers(0, 100, 10_000)
        py = rng.integers(0, 100, 10_000)
        d = cam.pixel_directions(px, py)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-9)

    def test_out_of_bounds_pixel_rejected(self):
        cam = Camera(np.eye(4), focal=10.0, width=4, height=4)
        with pytest.raises(DataError):
            ray_for_pixel(cam, 4, 0, (2.0, 6.0))

    def test_non_orthonormal_rotation_rejected(self):
        pose = np.eye(4)
        pose[0, 0] = 2.0
        with pytest.raises(DataError, match="orthonormal"):
            Camera(pose, focal=10.0, width=4, height=4)


class TestBlenderLoader:
    def test_pinhole_focal_from_camera_angle(self, tmp_path):
        ds = load_blender_scene(write_blender_fixture(tmp_path, width=9, angle=0.8))
        expected = 0.5 * 9 / np.tan(0.4)
        assert ds.cameras[0].focal == pytest.approx(expected, rel=1e-12)
        # The standard full-size synthetic metadata maps to ~1111.11 px.
        assert 0.5 * 800 / np.tan(0.5 * 0.6911112079) == pytest.approx(1111.11, abs=0.01)

    def test_counts_match_frames(self, tmp_path):
        ds = load_blender_scene(write_blender_fixture(tmp_path, frames=3))
        assert len(ds.train_ids) == 3 and len(ds.test_ids) == 1

    def test_corner_pixel_rays_hand_computed(self, tmp_path):
        ds = load_blender_scene(write_blender_fixture(tmp_path, width=9, height=7))
        cam = ds.cameras[0]
        f = cam.focal
        for px, py in ((0, 0), (8, 0), (0, 6), (8, 6)):
            rays = ray_for_pixel(cam, px, py, (2.0, 6.0))
            hand = np.array([(px + 0.5 - 4.5) / f, -(py + 0.5 - 3.5) / f, -1.0])
            hand /= np.linalg.norm(hand)
            assert np.abs(rays.dirs[0] - hand).max() < 1e-9
            assert np.abs(rays.origins[0] - cam.center).max() < 1e-9

    def test_downscale_halves_focal_and_size(self, tmp_path):
        root = write_blender_fixture(tmp_path, width=8, height=8)
        full = load_blender_scene(root)
        half = load_blender_scene(root, downscale=2)
        assert (half.cameras[0].width, half.cameras[0].height) == (4, 4)
        assert half.cameras[0].focal == pytest.approx(full.cameras[0].focal / 2)
        block = full.images[0][:2, :2].mean(axis=(0, 1))
        np.testing.assert_allclose(half.images[0][0, 0], block, rtol=1e-12)

    def test_missing_camera_angle_named(self, tmp_path):
        write_blender_fixture(tmp_path)
        meta = json.loads((tmp_path / "transforms_train.json").read_text())
        del meta["camera_angle_x"]
        (tmp_path / "transforms_train.json").write_text(json.dumps(meta))
        with pytest.raises(DataError, match="camera_angle_x"):
            load_blender_scene(tmp_path)

    def test_missing_file_rejected(self, tmp_path):
        write_blender_fixture(tmp_path)
        (tmp_path / "train_0.png").unlink()
        with pytest.raises(DataError, match="not found"):
            load_blender_scene(tmp_path)

    def test_alpha_composites_onto_white(self, tmp_path):
        from PIL import Image
        rgba = np.zeros((4, 4, 4), dtype=np.uint8)
        rgba[:, :, 0] = 255
        rgba[:, :, 3] = 128
        Image.fromarray(rgba).save(tmp_path / "a.png")
        img = load_image(tmp_path / "a.png")
        a = 128 / 255
        np.testing.assert_allclose(img[0, 0], [a + (1 - a), 1 - a, 1 - a],
                                   rtol=1e-12)

    def test_indivisible_downscale_rejected(self):
        with pytest.raises(DataError, match="downscale"):
            downscale_image(np.zeros((9, 9, 3)), 2)


class TestToyOracle:
    def test_empty_scene_renders_background(self):
        scene = toy_preset("spheres", views=4, resolution=8)
        scene.shapes = []
        scene.ring.test_every = 2
        ds = scene.build_dataset()
        assert all(np.array_equal(img, np.ones((8, 8, 3))) for img in ds.images)

    def test_opaque_sphere_center_pixel_and_silhouette(self):
        scene = toy_preset("spheres", views=4, resolution=33)
        scene.shapes = [type(scene.shapes[0])((0.0, 0.0, 0.0), 0.8, 500.0,
                                              (0.2, 0.5, 0.7))]
        scene.ring.test_every = 2
        scene.ring.elevation_deg = 0.0
        ds = scene.build_dataset()
        center = ds.images[0][16, 16]
        np.testing.assert_allclose(center, [0.2, 0.5, 0.7], atol=1e-3)

    def test_oracle_alpha_spans_silhouette(self):
        scene = toy_preset("fog", views=4, resolution=16)
        scene.ring.test_every = 2
        ds = scene.build_dataset()
        rays = camera_rays(ds.cameras[0], ds.near, ds.far)
        _, alpha, _ = ds.toy.oracle_render(rays)
        assert alpha.min() == 0.0 and 0.0 < alpha.max() < 1.0

    def test_oracle_bit_identical_across_calls(self):
        scene = toy_preset("occluder", views=4, resolution=12)
        rays = camera_rays(scene.cameras()[0], scene.near, scene.far)
        a = scene.oracle_render(rays)
        b = scene.oracle_render(rays)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_split_disjoint_and_covering(self):
        ds = toy_preset("spheres", views=25, resolution=8).build_dataset()
        assert len(ds.train_ids) == 20 and len(ds.test_ids) == 5
        assert not (set(ds.train_ids) & set(ds.test_ids))
        assert sorted(ds.train_ids + ds.test_ids) == list(range(25))

    def test_camera_inside_shape_rejected(self):
        scene = toy_preset("spheres", views=4, resolution=8)
        scene.shapes = [type(scene.shapes[0])((0.0, 0.0, 0.0), 5.0, 1.0,
                                              (1.0, 0.0, 0.0))]
        with pytest.raises(DataError, match="inside"):
            scene.build_dataset()

    def test_negative_sigma_rejected(self):
        spec = toy_preset("fog").to_dict()
        spec["shapes"][0]["sigma"] = -1.0
        with pytest.raises(DataError, match="sigma"):
            ToyScene.from_dict(spec)

    def test_spec_round_trip(self, tmp_path):
        scene = toy_preset("occluder", views=9, resolution=16)
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(scene.to_dict()))
        again = ToyScene.from_file(path)
        assert again.to_dict() == scene.to_dict()

    def test_box_shapes_render(self):
        spec = {
            "near": 2.0, "far": 6.0, "background": [1, 1, 1],
            "shapes": [{"kind": "box", "center": [0, 0, 0],
                        "size": [1.0, 1.0, 1.0], "sigma": 200.0,
                        "rgb": [0.8, 0.1, 0.1]}],
            "cameras": {"count": 4, "radius": 4.0, "elevation_deg": 0.0,
                        "fov_deg": 40.0, "width": 17, "height": 17,
                        "test_every": 2},
        }
        ds = generate_toy_scene(spec)
        np.testing.assert_allclose(ds.images[0][8, 8], [0.8, 0.1, 0.1], atol=1e-3)

    def test_overlap_resolved_by_list_order(self):
        scene = toy_preset("fog", views=4, resolution=8)
        s0 = scene.shapes[0]
        scene.shapes = [type(s0)((0.0, 0.0, 0.0), 0.5, 3.0, (1.0, 0.0, 0.0)),
                        type(s0)((0.0, 0.0, 0.0), 0.5, 9.0, (0.0, 1.0, 0.0))]
        sigma, rgb = scene.density_rgb(np.zeros((1, 3)))
        assert sigma[0] == 3.0
        np.testing.assert_array_equal(rgb[0], [1.0, 0.0, 0.0])


class TestSpiralPoses:
    def test_centers_on_spiral_and_looking_at_focus(self):
        ds = toy_preset("spheres", views=16, resolution=8).build_dataset()
        poses = spiral_poses(ds, 40)
        focus = ds.focus_point()
        centers = np.stack([c.center for c in ds.cameras[i]] if False else
                           [cam.center for cam in poses])
        train_centers = np.stack([ds.cameras[i].center for i in ds.train_ids])
        rho = np.linalg.norm(train_centers[:, :2] - focus[:2], axis=1)
        expected = spiral_path(np.arange(40) / 40, focus,
                               (rho.min(), rho.max()),
                               (train_centers[:, 2].min(), train_centers[:, 2].max()))
        assert np.abs(centers - expected).max() < 1e-9
        for cam in poses:
            look = -cam.pose[:3, 2]
            to_focus = focus - cam.center
            to_focus /= np.linalg.norm(to_focus)
            assert np.abs(look - to_focus).max() < 1e-9


class TestCheckpoints:
    def _pipeline(self):
        arch = {"pipeline": "neusample", "n_samples": 4, "hidden": 8,
                "sample_layers": 2, "radiance_layers": 2, "dir_hidden": 4,
                "freq_origin": 2, "freq_ray_dir": 2, "freq_pos": 2,
                "freq_view_dir": 1}
        return arch, build_pipeline(arch, seed=5)

    def test_round_trip_bit_exact(self, tmp_path):
        arch, pipe = self._pipeline()
        state = AdamState.init(pipe.named_params(),
                               PolynomialSchedule(5e-4, 5e-6, 100))
        state.m["sample_field.head.w"][:] = 0.25
        save_checkpoint(tmp_path / "ck", arch, pipe.named_params(),
                        train_step=7,
                        optimizer={"step": 3, "beta1": 0.9, "beta2": 0.999,
                                   "eps": 1e-8,
                                   "schedule": {"lr_initial": 5e-4,
                                                "lr_final": 5e-6,
                                                "total_steps": 100,
                                                "power": 1.0},
                                   "m": state.m, "v": state.v})
        ck = load_checkpoint(tmp_path / "ck")
        assert ck.train_step == 7 and ck.arch == arch
        for name, p in pipe.named_params():
            np.testing.assert_array_equal(ck.params[name], p.data)
        np.testing.assert_array_equal(ck.optimizer["m"]["sample_field.head.w"],
                                      state.m["sample_field.head.w"])

    def test_truncated_blob_rejected_without_partial_load(self, tmp_path):
        arch, pipe = self._pipeline()
        save_checkpoint(tmp_path / "ck", arch, pipe.named_params())
        blob = (tmp_path / "ck.blob").read_bytes()
        (tmp_path / "ck.blob").write_bytes(blob[:-16])
        with pytest.raises(DataError, match="refusing partial load"):
            load_checkpoint(tmp_path / "ck")

    def test_corrupted_blob_rejected(self, tmp_path):
        arch, pipe = self._pipeline()
        save_checkpoint(tmp_path / "ck", arch, pipe.named_params())
        blob = bytearray((tmp_path / "ck.blob").read_bytes())
        blob[40] ^= 0xFF
        (tmp_path / "ck.blob").write_bytes(bytes(blob))
        with pytest.raises(DataError, match="hash mismatch"):
            load_checkpoint(tmp_path / "ck")

    def test_unknown_version_rejected(self, tmp_path):
        arch, pipe = self._pipeline()
        save_checkpoint(tmp_path / "ck", arch, pipe.named_params())
        manifest = json.loads((tmp_path / "ck.manifest").read_text())
        manifest["format_version"] = 99
        (tmp_path / "ck.manifest").write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="version"):
            load_checkpoint(tmp_path / "ck")

    def test_sample_count_slot_guard(self, tmp_path):
        arch, pipe = self._pipeline()
        save_checkpoint(tmp_path / "ck", arch, pipe.named_params())
        ck = load_checkpoint(tmp_path / "ck")
        wanted = dict(arch, n_samples=2)
        with pytest.raises(ConfigError, match="extraction"):
            pipeline_from_checkpoint(ck, expect_arch=wanted)


class TestLoadSceneDispatch:
    def test_toy_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(toy_preset("fog", views=4, resolution=8).to_dict()))
        spec = json.loads(path.read_text())
        spec["cameras"]["test_every"] = 2
        path.write_text(json.dumps(spec))
        ds = load_scene(path)
        assert ds.name == "fog"

    def test_unknown_source_rejected(self, tmp_path):
        bad = tmp_path / "scene.txt"
        bad.write_text("?")
        with pytest.raises(DataError, match="kind of scene"):
            load_scene(bad)
