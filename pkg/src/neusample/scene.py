"""Datasets: posed cameras plus reference images.

Two sources are supported.  The Blender-style synthetic format reads
``transforms_{train,test}.json`` plus PNGs and composites alpha onto a
white background.  Procedural toy scenes are lists of constant-density
emissive shapes (spheres and axis-aligned boxes) whose images come from a
closed-form, sampling-free transmittance integral; the same oracle answers
per-ray color, accumulated opacity, and expected depth exactly, which is
what the quadrature tests compare against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .sampling import Rays

BLENDER_NEAR, BLENDER_FAR = 2.0, 6.0


@dataclass
class Camera:
    """Pinhole camera: right-handed camera-to-world pose looking along -z."""

    pose: np.ndarray  # (4, 4)
    focal: float      # pixels
    width: int
    height: int

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4) or not np.all(np.isfinite(self.pose)):
            raise DataError("camera pose must be a finite 4x4 matrix")
        r = self.pose[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise DataError("camera rotation block is not orthonormal")

    @property
    def center(self):
        return self.pose[:3, 3]

    def pixel_directions(self, px, py):
        """World-space unit directions through the centers of pixels
        (px, py); px/py may be arrays."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        cam = np.stack([
            (px + 0.5 - 0.5 * self.width) / self.focal,
            -(py + 0.5 - 0.5 * self.height) / self.focal,
            -np.ones_like(px),
        ], axis=-1)
        world = cam @ self.pose[:3, :3].T
        return world / np.linalg.norm(world, axis=-1, keepdims=True)


def ray_for_pixel(camera, px, py, bounds):
    """Single ray through pixel center (px, py)."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise DataError(f"pixel ({px}, {py}) outside image "
                        f"{camera.width}x{camera.height}")
    d = camera.pixel_directions(px, py)
    return Rays.single(camera.center, d, bounds[0], bounds[1])


def camera_rays(camera, near, far):
    """All H*W pixel rays of one camera in row-major order."""
    px, py = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
    dirs = camera.pixel_directions(px.ravel(), py.ravel())
    origins = np.broadcast_to(camera.center, dirs.shape)
    return Rays(origins, dirs, np.full(len(dirs), near), np.full(len(dirs), far))


@dataclass
class SceneDataset:
    cameras: list
    images: list            # (H, W, 3) float arrays in [0, 1]
    train_ids: list
    test_ids: list
    near: float
    far: float
    background: np.ndarray | None
    name: str = "scene"
    depth_complex: bool = False
    toy: "ToyScene | None" = None

    def __post_init__(self):
        for cam, img in zip(self.cameras, self.images):
            if img.shape[:2] != (cam.height, cam.width):
                raise DataError(
                    f"image size {img.shape[:2]} does not match camera "
                    f"{cam.height}x{cam.width}")
        if not self.train_ids or not self.test_ids:
            raise DataError("dataset needs at least one train and one test view")
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise DataError(f"train/test splits overlap: {sorted(overlap)}")

    def split(self, name):
        return self.train_ids if name == "train" else self.test_ids

    def ray_pool(self, split="train"):
        """Flattened rays + target colors over all views of a split."""
        origins, dirs, colors = [], [], []
        for i in self.split(split):
            rays = camera_rays(self.cameras[i], self.near, self.far)
            origins.append(rays.origins)
            dirs.append(rays.dirs)
            colors.append(self.images[i].reshape(-1, 3))
        o = np.concatenate(origins)
        return (Rays(o, np.concatenate(dirs), np.full(len(o), self.near),
                     np.full(len(o), self.far)),
                np.concatenate(colors))

    def focus_point(self):
        if self.toy is not None:
            return self.toy.bbox_center()
        return np.zeros(3)


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------


def load_image(path):
    """PNG -> (H, W, 3) float in [0, 1]; RGBA is composited onto white."""
    arr = np.asarray(Image.open(path), dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] == 4:
        alpha = arr[:, :, 3:4]
        arr = arr[:, :, :3] * alpha + (1.0 - alpha)
    return arr[:, :, :3]


def save_image(path, img):
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def downscale_image(img, factor):
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise DataError(f"downscale factor {factor} does not divide {w}x{h}")
    return img.reshape(h // factor, factor, w // factor, factor, 3).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# Blender-style synthetic scenes
# ---------------------------------------------------------------------------


def _load_transforms(scene_dir, split):
    path = scene_dir / f"transforms_{split}.json"
    if not path.exists():
        raise DataError(f"missing {path.name} in {scene_dir}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path.name}: invalid JSON ({e})") from None
    for key in ("camera_angle_x", "frames"):
        if key not in meta:
            raise DataError(f"{path.name}: missing field {key!r}")
    return meta


def _frame_image_path(scene_dir, file_path):
    p = scene_dir / file_path
    if p.suffix == "" and not p.exists():
        p = p.with_suffix(".png")
    if not p.exists():
        raise DataError(f"image file not found: {p}")
    return p


def load_blender_scene(scene_dir, downscale=1):
    """Load a transforms_{train,test}.json scene, composited onto white.

    Intrinsics come from camera_angle_x via the pinhole relation
    focal = 0.5 * width / tan(0.5 * angle); integer downscaling uses area
    averaging and scales the focal length accordingly.
    """
    scene_dir = Path(scene_dir)
    cameras, images, train_ids, test_ids = [], [], [], []
    for split, ids in (("train", train_ids), ("test", test_ids)):
        meta = _load_transforms(scene_dir, split)
        angle = float(meta["camera_angle_x"])
        for frame in meta["frames"]:
            for key in ("file_path", "transform_matrix"):
                if key not in frame:
                    raise DataError(
                        f"transforms_{split}.json: frame missing field {key!r}")
            img = load_image(_frame_image_path(scene_dir, frame["file_path"]))
            if downscale > 1:
                img = downscale_image(img, downscale)
            h, w = img.shape[:2]
            focal = 0.5 * (w * downscale) / np.tan(0.5 * angle) / downscale
            cameras.append(Camera(np.asarray(frame["transform_matrix"],
                                             dtype=np.float64), focal, w, h))
            images.append(img)
            ids.append(len(images) - 1)
    return SceneDataset(cameras, images, train_ids, test_ids,
                        BLENDER_NEAR, BLENDER_FAR, np.ones(3),
                        name=scene_dir.name)


# ---------------------------------------------------------------------------
# procedural toy scenes with an analytic oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    sigma: float
    rgb: tuple

    def intersect(self, origins, dirs):
        oc = origins - np.asarray(self.center)
        b = np.einsum("rk,rk->r", oc, dirs)
        c = np.einsum("rk,rk->r", oc, oc) - self.radius**2
        disc = b * b - c
        hit = disc > 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t_in = np.where(hit, -b - root, np.inf)
        t_out = np.where(hit, -b + root, np.inf)
        return t_in, t_out

    def contains(self, points):
        d = points - np.asarray(self.center)
        return np.einsum("rk,rk->r", d, d) < self.radius**2


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple
    sigma: float
    rgb: tuple

    def intersect(self, origins, dirs):
        half = 0.5 * np.asarray(self.size)
        lo = np.asarray(self.center) - half
        hi = np.asarray(self.center) + half
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (lo - origins) / dirs
            t1 = (hi - origins) / dirs
        near = np.nanmax(np.minimum(t0, t1), axis=1)
        far = np.nanmin(np.maximum(t0, t1), axis=1)
        hit = near < far
        return (np.where(hit, near, np.inf), np.where(hit, far, np.inf))

    def contains(self, points):
        half = 0.5 * np.asarray(self.size)
        return np.all(np.abs(points - np.asarray(self.center)) < half, axis=1)


_SHAPE_KINDS = {"sphere": Sphere, "box": Box}


@dataclass
class RingConfig:
    count: int = 25
    radius: float = 4.0
    elevation_deg: float = 20.0
    fov_deg: float = 50.0
    width: int = 64
    height: int = 64
    test_every: int = 5


@dataclass
class ToyScene:
    """Shape list + camera ring; earlier shapes win where shapes overlap."""

    shapes: list
    near: float
    far: float
    background: np.ndarray | None
    ring: RingConfig
    name: str = "toy"
    depth_complex: bool = False

    @classmethod
    def from_dict(cls, spec):
        def need(d, key, where):
            if key not in d:
                raise DataError(f"toy scene spec: {where} missing field {key!r}")
            return d[key]

        shapes = []
        for i, sd in enumerate(need(spec, "shapes", "top level")):
            kind = need(sd, "kind", f"shape {i}")
            if kind not in _SHAPE_KINDS:
                raise DataError(f"toy scene spec: unknown shape kind {kind!r}")
            sigma = float(need(sd, "sigma", f"shape {i}"))
            if sigma < 0:
                raise DataError(f"toy scene spec: shape {i} has negative sigma")
            rgb = tuple(need(sd, "rgb", f"shape {i}"))
            if kind == "sphere":
                shapes.append(Sphere(tuple(need(sd, "center", f"shape {i}")),
                                     float(need(sd, "radius", f"shape {i}")),
                                     sigma, rgb))
            else:
                shapes.append(Box(tuple(need(sd, "center", f"shape {i}")),
                                  tuple(need(sd, "size", f"shape {i}")),
                                  sigma, rgb))
        ring = RingConfig(**need(spec, "cameras", "top level"))
        bg = spec.get("background")
        return cls(shapes=shapes,
                   near=float(need(spec, "near", "top level")),
                   far=float(need(spec, "far", "top level")),
                   background=None if bg is None else np.asarray(bg, dtype=np.float64),
                   ring=ring,
                   name=spec.get("name", "toy"),
                   depth_complex=bool(spec.get("depth_complex", False)))

    @classmethod
    def from_file(cls, path):
        try:
            spec = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(spec)

    def to_dict(self):
        shapes = []
        for s in self.shapes:
            d = {"kind": "sphere" if isinstance(s, Sphere) else "box",
                 "center": list(s.center), "sigma": s.sigma, "rgb": list(s.rgb)}
            if isinstance(s, Sphere):
                d["radius"] = s.radius
            else:
                d["size"] = list(s.size)
            shapes.append(d)
        return {"name": self.name, "near": self.near, "far": self.far,
                "background": None if self.background is None else list(self.background),
                "depth_complex": self.depth_complex, "shapes": shapes,
                "cameras": vars(self.ring).copy()}

    def bbox_center(self):
        los, his = [], []
        for s in self.shapes:
            c = np.asarray(s.center)
            half = (np.full(3, s.radius) if isinstance(s, Sphere)
                    else 0.5 * np.asarray(s.size))
            los.append(c - half)
            his.append(c + half)
        if not los:
            return np.zeros(3)
        return 0.5 * (np.min(los, axis=0) + np.max(his, axis=0))

    def contains(self, points):
        inside = np.zeros(len(points), dtype=bool)
        for s in self.shapes:
            inside |= s.contains(points)
        return inside

    def density_rgb(self, points):
        """Constant per-shape density/color at world points; first shape in
        the list wins in overlaps."""
        sigma = np.zeros(len(points))
        rgb = np.zeros((len(points), 3))
        assigned = np.zeros(len(points), dtype=bool)
        for s in self.shapes:
            m = s.contains(points) & ~assigned
            sigma[m] = s.sigma
            rgb[m] = s.rgb
            assigned |= m
        return sigma, rgb

    def oracle_render(self, rays):
        """Exact color/opacity/depth per ray from the piecewise-constant
        transmittance integral.  Sampling-free and bit-stable across calls.

        Returns (rgb (R, 3), alpha (R,), depth (R,)), where depth is the
        transmittance-weighted mean sum over segments of
        integral sigma T(t) t dt, matching the quadrature renderer's
        expected-depth definition.
        """
        r = len(rays)
        cuts = [np.full(r, self.near), np.full(r, self.far)]
        for s in self.shapes:
            t_in, t_out = s.intersect(rays.origins, rays.dirs)
            cuts.append(np.clip(t_in, rays.near, rays.far))
            cuts.append(np.clip(t_out, rays.near, rays.far))
        bp = np.sort(np.stack(cuts, axis=1), axis=1)
        lens = bp[:, 1:] - bp[:, :-1]
        mids = 0.5 * (bp[:, 1:] + bp[:, :-1])
        k = lens.shape[1]
        pts = (rays.origins[:, None, :] + mids[:, :, None] * rays.dirs[:, None, :])
        sigma, rgb = self.density_rgb(pts.reshape(-1, 3))
        sigma = sigma.reshape(r, k)
        rgb = rgb.reshape(r, k, 3)

        tau = sigma * lens
        t_start = np.exp(-np.concatenate(
            [np.zeros((r, 1)), np.cumsum(tau[:, :-1], axis=1)], axis=1))
        absorb = 1.0 - np.exp(-tau)
        color = np.einsum("rk,rkc->rc", t_start * absorb, rgb)
        t_end = t_start[:, -1] * np.exp(-tau[:, -1])
        alpha = 1.0 - t_end
        if self.background is not None:
            color = color + t_end[:, None] * self.background

        with np.errstate(divide="ignore", invalid="ignore"):
            inv_sigma = np.where(sigma > 0, 1.0 / np.where(sigma > 0, sigma, 1.0), 0.0)
        seg_depth = np.where(
            sigma > 0,
            bp[:, :-1] * absorb + absorb * inv_sigma - lens * np.exp(-tau),
            0.0)
        depth = (t_start * seg_depth).sum(axis=1)
        return color, alpha, depth

    def cameras(self):
        ring = self.ring
        focus = self.bbox_center()
        focal = 0.5 * ring.width / np.tan(0.5 * np.deg2rad(ring.fov_deg))
        phi = np.deg2rad(ring.elevation_deg)
        cams = []
        for i in range(ring.count):
            theta = 2.0 * np.pi * i / ring.count
            center = focus + ring.radius * np.array(
                [np.cos(theta) * np.cos(phi),
                 np.sin(theta) * np.cos(phi),
                 np.sin(phi)])
            cams.append(Camera(look_at_pose(center, focus), focal,
                               ring.width, ring.height))
        return cams

    def build_dataset(self):
        cams = self.cameras()
        for i, cam in enumerate(cams):
            if self.contains(cam.center[None, :])[0]:
                raise DataError(f"camera {i} is inside a scene shape")
        images = []
        for cam in cams:
            rays = camera_rays(cam, self.near, self.far)
            color, _, _ = self.oracle_render(rays)
            images.append(color.reshape(cam.height, cam.width, 3))
        step = self.ring.test_every
        test_ids = list(range(step - 1, len(cams), step))
        train_ids = [i for i in range(len(cams)) if i not in set(test_ids)]
        return SceneDataset(cams, images, train_ids, test_ids, self.near,
                            self.far, self.background, name=self.name,
                            depth_complex=self.depth_complex, toy=self)


def look_at_pose(center, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world pose at ``center`` looking toward ``target``."""
    z = np.asarray(center, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    z = z / np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        x = np.cross([0.0, 1.0, 0.0], z)
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = x, y, z, center
    return pose


def generate_toy_scene(spec, downscale=1):
    """Build the dataset (and keep the oracle) for a toy spec dict/file."""
    toy = spec if isinstance(spec, ToyScene) else (
        ToyScene.from_dict(spec) if isinstance(spec, dict) else ToyScene.from_file(spec))
    ds = toy.build_dataset()
    if downscale > 1:
        raise DataError("toy scenes configure their resolution directly; "
                        "downscale applies to image datasets")
    return ds


# ---------------------------------------------------------------------------
# toy presets
# ---------------------------------------------------------------------------


def toy_preset(name, views=25, resolution=64):
    """Built-in toy scenes.

    ``spheres``: three solid colored spheres, the standard training scene.
    ``occluder``: small floating spheres in front of a large central one;
    flagged depth-complex so extraction enables the depth boost.
    ``fog``: low-density translucent spheres inside tight bounds, sized so
    quadrature error stays below image precision; used to validate the
    renderer against the analytic oracle.
    """
    ring = RingConfig(count=views, width=resolution, height=resolution)
    white = np.ones(3)
    if name == "spheres":
        return ToyScene(
            shapes=[
                Sphere((0.6, 0.0, 0.1), 0.55, 30.0, (0.85, 0.25, 0.2)),
                Sphere((-0.5, 0.45, -0.15), 0.45, 30.0, (0.2, 0.5, 0.85)),
                Sphere((-0.1, -0.55, 0.3), 0.4, 30.0, (0.95, 0.8, 0.25)),
            ],
            near=2.0, far=6.0, background=white, ring=ring, name="spheres")
    if name == "occluder":
        return ToyScene(
            shapes=[
                Sphere((1.6, 0.0, 0.25), 0.28, 30.0, (0.9, 0.3, 0.2)),
                Sphere((-0.8, 1.39, -0.2), 0.25, 30.0, (0.25, 0.35, 0.9)),
                Sphere((-0.8, -1.39, 0.1), 0.22, 30.0, (0.95, 0.85, 0.3)),
                Sphere((0.0, 0.0, 0.0), 0.9, 30.0, (0.3, 0.7, 0.4)),
            ],
            near=2.0, far=6.0, background=white, ring=ring, name="occluder",
            depth_complex=True)
    if name == "fog":
        return ToyScene(
            shapes=[
                Sphere((0.3, 0.0, 0.0), 0.7, 0.25, (0.9, 0.2, 0.1)),
                Sphere((-0.45, 0.2, 0.1), 0.5, 0.25, (0.1, 0.3, 0.8)),
            ],
            near=3.0, far=5.0, background=white, ring=ring, name="fog")
    raise DataError(f"unknown toy preset {name!r} "
                    f"(available: spheres, occluder, fog)")


def load_scene(path, downscale=1):
    """Dispatch on the scene source: a directory with transforms JSON is a
    Blender-style dataset, a .json file is a toy spec."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"scene source not found: {p}")
    if p.is_dir():
        return load_blender_scene(p, downscale=downscale)
    if p.suffix == ".json":
        return generate_toy_scene(p, downscale=downscale)
    raise DataError(f"cannot tell what kind of scene {path!r} is "
                    f"(expected a dataset directory or a toy .json spec)")


# ---------------------------------------------------------------------------
# spiral pose sampler (used by depth boost)
# ---------------------------------------------------------------------------


def spiral_path(s, focus, rho_range, z_range, turns=2):
    """Camera centers of the spiral at parameters s in [0, 1).

    Azimuth winds ``turns`` times; the cylindrical radius sweeps the
    [rho_min, rho_max] envelope once (cosine) while the height sweeps
    [z_min, z_max] once (sine).
    """
    s = np.asarray(s, dtype=np.float64)
    theta = 2.0 * np.pi * turns * s
    rho = 0.5 * (rho_range[0] + rho_range[1]) + 0.5 * (rho_range[1] - rho_range[0]) * np.cos(2 * np.pi * s)
    z = 0.5 * (z_range[0] + z_range[1]) + 0.5 * (z_range[1] - z_range[0]) * np.sin(2 * np.pi * s)
    return np.stack([focus[0] + rho * np.cos(theta),
                     focus[1] + rho * np.sin(theta),
                     z], axis=-1)


def spiral_poses(dataset, count, turns=2):
    """Cameras on a spiral spanning the training cameras' radius and height
    envelopes, all looking at the scene's focus point."""
    focus = dataset.focus_point()
    train_cams = [dataset.cameras[i] for i in dataset.train_ids]
    centers = np.stack([c.center for c in train_cams])
    rho = np.linalg.norm(centers[:, :2] - focus[:2], axis=1)
    ref = train_cams[0]
    s = np.arange(count) / count
    path = spiral_path(s, focus, (rho.min(), rho.max()),
                       (centers[:, 2].min(), centers[:, 2].max()), turns)
    return [Camera(look_at_pose(c, focus), ref.focal, ref.width, ref.height)
            for c in path]
